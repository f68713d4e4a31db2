#include "dopr/policy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dopr/error.hpp"
#include "dopr/textio.hpp"

namespace dopr {

namespace {

constexpr const char* kCheckpointHeader = "dopr-checkpoint v1";

double max_of(std::span<const double> xs) { return *std::max_element(xs.begin(), xs.end()); }

void check_sequence(const PolicyDims& dims, std::int64_t id, std::span<const Token> tokens) {
  if (id < 0 || id >= dims.num_instances)
    throw std::invalid_argument("instance id " + std::to_string(id) + " out of range");
  if (tokens.size() > static_cast<std::size_t>(dims.positions))
    throw std::invalid_argument("sequence length " + std::to_string(tokens.size()) +
                                " exceeds " + std::to_string(dims.positions) + " positions");
  for (std::size_t t = 0; t < tokens.size(); ++t)
    if (tokens[t] < 0 || tokens[t] >= dims.symbols)
      throw std::invalid_argument("token id " + std::to_string(tokens[t]) + " at position " +
                                  std::to_string(t) + " outside [0, " +
                                  std::to_string(dims.symbols) + ")");
}

}  // namespace

bool PolicyParams::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::vector<double> softmax(std::span<const double> logits) {
  const double m = max_of(logits);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t v = 0; v < logits.size(); ++v) {
    p[v] = std::exp(logits[v] - m);
    z += p[v];
  }
  for (auto& x : p) x /= z;
  return p;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double m = max_of(logits);
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  const double lse = m + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t v = 0; v < logits.size(); ++v) out[v] = logits[v] - lse;
  return out;
}

double entropy(std::span<const double> logits) {
  const auto p = softmax(logits);
  const auto lp = log_softmax(logits);
  double h = 0.0;
  for (std::size_t v = 0; v < p.size(); ++v)
    if (p[v] > 0.0) h -= p[v] * lp[v];
  return std::max(h, 0.0);
}

RolloutRecord sample(const PolicyParams& params, std::int64_t instance_id, Rng& rng) {
  const auto& dims = params.dims();
  if (instance_id < 0 || instance_id >= dims.num_instances)
    throw std::invalid_argument("instance id " + std::to_string(instance_id) + " out of range");
  RolloutRecord rec;
  rec.instance_id = instance_id;
  for (std::int32_t pos = 0; pos < dims.positions; ++pos) {
    const auto row = params.row(instance_id, pos);
    const auto p = softmax(row);
    const double u = rng.uniform();
    // Inverse CDF; falls back to the last symbol with nonzero mass on rounding.
    Token pick = dims.symbols - 1;
    double cum = 0.0;
    for (Token v = 0; v < dims.symbols; ++v) {
      cum += p[static_cast<std::size_t>(v)];
      if (u < cum) {
        pick = v;
        break;
      }
    }
    while (p[static_cast<std::size_t>(pick)] == 0.0 && pick > 0) --pick;
    rec.tokens.push_back(pick);
    rec.logprobs.push_back(log_softmax(row)[static_cast<std::size_t>(pick)]);
    if (pick == dims.eos()) break;
  }
  return rec;
}

std::vector<double> logprob(const PolicyParams& params, std::int64_t instance_id,
                            std::span<const Token> tokens) {
  check_sequence(params.dims(), instance_id, tokens);
  std::vector<double> out(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t)
    out[t] = log_softmax(params.row(instance_id, static_cast<std::int32_t>(t)))
        [static_cast<std::size_t>(tokens[t])];
  return out;
}

double mean_entropy(const PolicyParams& params, std::int64_t instance_id, std::int32_t length) {
  const auto& dims = params.dims();
  if (length < 1 || length > dims.positions)
    throw std::invalid_argument("entropy length " + std::to_string(length) + " outside [1, " +
                                std::to_string(dims.positions) + "]");
  if (instance_id < 0 || instance_id >= dims.num_instances)
    throw std::invalid_argument("instance id " + std::to_string(instance_id) + " out of range");
  double sum = 0.0;
  for (std::int32_t pos = 0; pos < length; ++pos) sum += entropy(params.row(instance_id, pos));
  return sum / static_cast<double>(length);
}

void accumulate_grad_logprob(PolicyParams& out, const PolicyParams& params, std::int64_t instance_id,
                             std::span<const Token> tokens, std::span<const double> weights) {
  check_sequence(params.dims(), instance_id, tokens);
  if (weights.size() != tokens.size())
    throw std::invalid_argument("weights/tokens length mismatch");
  if (!(out.dims() == params.dims())) throw std::invalid_argument("gradient shape mismatch");
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto pos = static_cast<std::int32_t>(t);
    const auto p = softmax(params.row(instance_id, pos));
    auto g = out.row(instance_id, pos);
    const double w = weights[t];
    for (std::size_t v = 0; v < p.size(); ++v) g[v] -= w * p[v];
    g[static_cast<std::size_t>(tokens[t])] += w;
  }
}

PolicyParams grad_logprob(const PolicyParams& params, std::int64_t instance_id,
                          std::span<const Token> tokens) {
  PolicyParams g(params.dims());
  const std::vector<double> ones(tokens.size(), 1.0);
  accumulate_grad_logprob(g, params, instance_id, tokens, ones);
  return g;
}

std::vector<Token> greedy_decode(const PolicyParams& params, std::int64_t instance_id) {
  const auto& dims = params.dims();
  std::vector<Token> out;
  for (std::int32_t pos = 0; pos < dims.positions; ++pos) {
    const auto row = params.row(instance_id, pos);
    const auto best = static_cast<Token>(std::max_element(row.begin(), row.end()) - row.begin());
    out.push_back(best);
    if (best == dims.eos()) break;
  }
  return out;
}

PolicyParams warm_start(const Dataset& dataset, double prior, double noise, std::uint64_t seed) {
  PolicyParams params(PolicyDims::for_task(dataset.spec));
  Rng rng(derive_seed(seed, 0x1417));
  const Token eos = dataset.spec.eos();
  for (const auto& inst : dataset.instances) {
    const auto len = static_cast<std::int32_t>(inst.target.size());
    for (std::int32_t pos = 0; pos < params.dims().positions; ++pos) {
      auto row = params.row(inst.id, pos);
      const Token want = pos < len ? inst.target[static_cast<std::size_t>(pos)] : pos == len ? eos : Token{-1};
      for (std::size_t v = 0; v < row.size(); ++v) {
        // Draw for every cell so the stream does not depend on the targets.
        const double z = rng.normal();
        row[v] = static_cast<Token>(v) == want ? prior : noise * z;
      }
    }
  }
  return params;
}

std::string format_checkpoint(const PolicyParams& params) {
  const auto& d = params.dims();
  std::ostringstream out;
  out << kCheckpointHeader << '\n';
  out << "# dims num_instances=" << d.num_instances << " positions=" << d.positions
      << " symbols=" << d.symbols << '\n';
  for (std::int64_t id = 0; id < d.num_instances; ++id)
    for (std::int32_t pos = 0; pos < d.positions; ++pos) {
      out << id << ' ' << pos;
      for (double x : params.row(id, pos)) out << ' ' << textio::format_real(x);
      out << '\n';
    }
  return out.str();
}

PolicyParams parse_checkpoint(const std::string& text, const std::string& origin) {
  auto lines = textio::split_lines(text);
  if (lines.empty()) throw FormatError(origin + ": empty checkpoint file");
  if (lines[0] != kCheckpointHeader)
    throw FormatError(origin + ":1: expected header '" + kCheckpointHeader + "'");
  if (lines.size() < 2) throw FormatError(origin + ":2: missing dims line");
  auto fields = textio::split_ws(lines[1]);
  if (fields.size() != 5 || fields[0] != "#" || fields[1] != "dims")
    throw FormatError(origin + ":2: expected '# dims num_instances=.. positions=.. symbols=..'");
  PolicyDims dims;
  const char* keys[] = {"num_instances=", "positions=", "symbols="};
  for (int k = 0; k < 3; ++k) {
    const auto& f = fields[static_cast<std::size_t>(k + 2)];
    if (f.rfind(keys[k], 0) != 0) throw FormatError(origin + ":2: expected field " + keys[k]);
    auto v = textio::parse_int(std::string_view(f).substr(std::char_traits<char>::length(keys[k])),
                               origin + ":2");
    if (v < 1) throw FormatError(origin + ":2: dimension must be positive");
    if (k == 0) dims.num_instances = v;
    if (k == 1) dims.positions = static_cast<std::int32_t>(v);
    if (k == 2) dims.symbols = static_cast<std::int32_t>(v);
  }
  PolicyParams params(dims);
  const auto rows = static_cast<std::size_t>(dims.num_instances) * static_cast<std::size_t>(dims.positions);
  std::size_t row = 0;
  for (std::size_t ln = 2; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto ctx = origin + ":" + std::to_string(ln + 1);
    auto f = textio::split_ws(lines[ln]);
    if (row >= rows) throw FormatError(ctx + ": more rows than dims allow");
    if (f.size() != static_cast<std::size_t>(dims.symbols) + 2)
      throw FormatError(ctx + ": expected " + std::to_string(dims.symbols + 2) + " fields, got " +
                        std::to_string(f.size()));
    const auto id = static_cast<std::int64_t>(row / static_cast<std::size_t>(dims.positions));
    const auto pos = static_cast<std::int32_t>(row % static_cast<std::size_t>(dims.positions));
    if (textio::parse_int(f[0], ctx + ", field id") != id ||
        textio::parse_int(f[1], ctx + ", field pos") != pos)
      throw FormatError(ctx + ": rows out of order, expected " + std::to_string(id) + " " +
                        std::to_string(pos));
    auto dst = params.row(id, pos);
    for (std::size_t v = 0; v < dst.size(); ++v) {
      dst[v] = textio::parse_real(f[v + 2], ctx + ", symbol " + std::to_string(v));
      if (!std::isfinite(dst[v])) throw FormatError(ctx + ": non-finite logit");
    }
    ++row;
  }
  if (row != rows)
    throw FormatError(origin + ": expected " + std::to_string(rows) + " rows, got " + std::to_string(row));
  return params;
}

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path) {
  textio::write_atomic(path, format_checkpoint(params));
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(textio::read_file(path), path.string());
}

}  // namespace dopr
