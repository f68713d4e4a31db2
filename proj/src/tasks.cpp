#include "dopr/tasks.hpp"

#include <algorithm>
#include <sstream>

#include "dopr/error.hpp"
#include "dopr/rng.hpp"
#include "dopr/textio.hpp"

namespace dopr {

namespace {
constexpr const char* kDatasetHeader = "dopr-dataset v1";
}

void TaskSpec::validate() const {
  std::ostringstream err;
  if (num_instances < 1) err << "num_instances must be >= 1 (got " << num_instances << "); ";
  if (vocab_size < 2) err << "vocab_size must be >= 2 (got " << vocab_size << "); ";
  if (min_len < 1) err << "min_len must be >= 1 (got " << min_len << "); ";
  if (max_len < min_len)
    err << "min_len must be <= max_len (got min_len=" << min_len << ", max_len=" << max_len << "); ";
  auto msg = err.str();
  if (!msg.empty()) throw ConfigError("invalid task spec: " + msg.substr(0, msg.size() - 2));
}

Dataset generate_dataset(const TaskSpec& spec) {
  spec.validate();
  Dataset ds{spec, {}};
  ds.instances.reserve(static_cast<std::size_t>(spec.num_instances));
  Rng rng(derive_seed(spec.seed, 0x7a5c));
  const auto span = static_cast<std::uint64_t>(spec.max_len - spec.min_len + 1);
  for (std::int64_t id = 0; id < spec.num_instances; ++id) {
    const auto len = spec.min_len + static_cast<std::int32_t>(rng.below(span));
    Instance inst{id, std::vector<Token>(static_cast<std::size_t>(len))};
    for (auto& tok : inst.target)
      tok = static_cast<Token>(rng.below(static_cast<std::uint64_t>(spec.vocab_size)));
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

namespace {

// Length of the body before the first EOS, or -1 if no EOS within budget.
std::ptrdiff_t terminated_body(const TaskSpec& spec, std::span<const Token> response) {
  const auto budget = std::min<std::size_t>(response.size(), static_cast<std::size_t>(spec.max_response()));
  for (std::size_t i = 0; i < budget; ++i)
    if (response[i] == spec.eos()) return static_cast<std::ptrdiff_t>(i);
  return -1;
}

}  // namespace

double verify(const TaskSpec& spec, const Instance& instance, std::span<const Token> response) {
  const auto body = terminated_body(spec, response);
  if (body < 0 || static_cast<std::size_t>(body) != instance.target.size()) return 0.0;
  return std::equal(instance.target.begin(), instance.target.end(), response.begin()) ? 1.0 : 0.0;
}

double verify_partial(const TaskSpec& spec, const Instance& instance,
                      std::span<const Token> response) {
  if (verify(spec, instance, response) == 1.0) return 1.0;
  auto body = terminated_body(spec, response);
  // No terminator: only the first T_max+1 tokens count, and the missing EOS is
  // itself a mismatch.
  const bool terminated = body >= 0;
  if (!terminated)
    body = static_cast<std::ptrdiff_t>(std::min<std::size_t>(response.size(),
                                                             static_cast<std::size_t>(spec.max_response())));
  const auto n = static_cast<std::size_t>(body);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(n, instance.target.size()); ++i)
    if (response[i] == instance.target[i]) ++hits;
  // The terminator counts as one more aligned position.
  if (terminated && n == instance.target.size()) ++hits;
  const auto denom = std::max(n, instance.target.size()) + 1;
  return static_cast<double>(hits) / static_cast<double>(denom);
}

std::string format_dataset(const Dataset& dataset) {
  std::ostringstream out;
  const auto& s = dataset.spec;
  out << kDatasetHeader << '\n';
  out << "# spec num_instances=" << s.num_instances << " vocab_size=" << s.vocab_size
      << " min_len=" << s.min_len << " max_len=" << s.max_len << " seed=" << s.seed << '\n';
  for (const auto& inst : dataset.instances) {
    out << inst.id;
    for (auto t : inst.target) out << ' ' << t;
    out << '\n';
  }
  return out.str();
}

namespace {

TaskSpec parse_spec_line(const std::string& line, const std::string& ctx) {
  auto fields = textio::split_ws(line);
  if (fields.size() < 2 || fields[0] != "#" || fields[1] != "spec")
    throw FormatError(ctx + ": expected '# spec ...' line");
  TaskSpec spec;
  bool seen[5] = {};
  for (std::size_t i = 2; i < fields.size(); ++i) {
    auto eq = fields[i].find('=');
    if (eq == std::string::npos) throw FormatError(ctx + ": malformed spec field '" + fields[i] + "'");
    auto key = fields[i].substr(0, eq);
    auto val = std::string_view(fields[i]).substr(eq + 1);
    auto fctx = ctx + ", field " + key;
    if (key == "num_instances") {
      spec.num_instances = textio::parse_int(val, fctx);
      seen[0] = true;
    } else if (key == "vocab_size") {
      spec.vocab_size = static_cast<std::int32_t>(textio::parse_int(val, fctx));
      seen[1] = true;
    } else if (key == "min_len") {
      spec.min_len = static_cast<std::int32_t>(textio::parse_int(val, fctx));
      seen[2] = true;
    } else if (key == "max_len") {
      spec.max_len = static_cast<std::int32_t>(textio::parse_int(val, fctx));
      seen[3] = true;
    } else if (key == "seed") {
      spec.seed = textio::parse_u64(val, fctx);
      seen[4] = true;
    } else {
      throw FormatError(ctx + ": unknown spec field '" + key + "'");
    }
  }
  if (!std::all_of(std::begin(seen), std::end(seen), [](bool b) { return b; }))
    throw FormatError(ctx + ": spec line is missing fields");
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw FormatError(ctx + ": " + e.what());
  }
  return spec;
}

}  // namespace

Dataset parse_dataset(const std::string& text, const std::string& origin) {
  auto lines = textio::split_lines(text);
  if (lines.empty()) throw FormatError(origin + ": empty dataset file");
  if (lines[0] != kDatasetHeader)
    throw FormatError(origin + ":1: expected header '" + kDatasetHeader + "'");
  if (lines.size() < 2) throw FormatError(origin + ":2: missing spec line");
  Dataset ds;
  ds.spec = parse_spec_line(lines[1], origin + ":2");
  for (std::size_t ln = 2; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto ctx = origin + ":" + std::to_string(ln + 1);
    auto fields = textio::split_ws(lines[ln]);
    Instance inst;
    inst.id = textio::parse_int(fields[0], ctx + ", field id");
    if (inst.id != static_cast<std::int64_t>(ds.instances.size()))
      throw FormatError(ctx + ": expected id " + std::to_string(ds.instances.size()) + ", got " +
                        std::to_string(inst.id));
    for (std::size_t f = 1; f < fields.size(); ++f) {
      auto tok = textio::parse_int(fields[f], ctx + ", token " + std::to_string(f - 1));
      if (tok < 0 || tok >= ds.spec.vocab_size)
        throw FormatError(ctx + ", token " + std::to_string(f - 1) + ": id " + std::to_string(tok) +
                          " outside [0, " + std::to_string(ds.spec.vocab_size) + ")");
      inst.target.push_back(static_cast<Token>(tok));
    }
    const auto len = static_cast<std::int32_t>(inst.target.size());
    if (len < ds.spec.min_len || len > ds.spec.max_len)
      throw FormatError(ctx + ": target length " + std::to_string(len) + " outside [" +
                        std::to_string(ds.spec.min_len) + ", " + std::to_string(ds.spec.max_len) + "]");
    ds.instances.push_back(std::move(inst));
  }
  if (static_cast<std::int64_t>(ds.instances.size()) != ds.spec.num_instances)
    throw FormatError(origin + ": spec declares " + std::to_string(ds.spec.num_instances) +
                      " instances, file has " + std::to_string(ds.instances.size()));
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  textio::write_atomic(path, format_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(textio::read_file(path), path.string());
}

}  // namespace dopr
