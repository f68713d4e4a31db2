#include "dopr/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "dopr/textio.hpp"

namespace dopr {

using nlohmann::json;
using nlohmann::ordered_json;

ValidationError::ValidationError(std::vector<std::string> issues)
    : ConfigError([&] {
        std::string msg = "invalid configuration:";
        for (const auto& i : issues) msg += "\n  " + i;
        return msg;
      }()),
      issues_(std::move(issues)) {}

namespace {

constexpr std::pair<ExperimentKind, std::string_view> kKinds[] = {
    {ExperimentKind::SingleRun, "single_run"},       {ExperimentKind::DataScaleSweep, "data_scale_sweep"},
    {ExperimentKind::BudgetSweep, "budget_sweep"},   {ExperimentKind::Ablation, "ablation"},
    {ExperimentKind::Theory, "theory"},
};

constexpr std::pair<SelectorVariant, std::string_view> kVariants[] = {
    {SelectorVariant::EmUcb, "EM_UCB"},
    {SelectorVariant::PlainUcb, "PLAIN_UCB"},
    {SelectorVariant::VarianceOnly, "VARIANCE_ONLY"},
    {SelectorVariant::Random, "RANDOM"},
};

// Reads typed fields out of one JSON object, collecting problems instead of
// stopping at the first.
class FieldReader {
 public:
  FieldReader(const json& obj, std::string path, std::vector<std::string>& issues)
      : obj_(obj), path_(std::move(path)), issues_(issues) {
    if (!obj_.is_object()) issue(path_, "expected an object");
  }

  ~FieldReader() {
    if (!obj_.is_object()) return;
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) issue(join(it.key()), "unknown field");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.is_object() && obj_.contains(key) && !obj_.at(key).is_null();
  }
  const json& raw(const std::string& key) { return obj_.at(key); }
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  void issue(const std::string& where, const std::string& what) { issues_.push_back(where + ": " + what); }

  template <typename T>
  void integer(const std::string& key, T& out, long long lo, long long hi = LLONG_MAX) {
    if (!has(key)) return;
    const auto& v = raw(key);
    if (!v.is_number_integer()) return issue(join(key), "expected an integer");
    const auto x = v.get<long long>();
    if (x < lo || x > hi) return issue(join(key), "value " + std::to_string(x) + " out of range");
    out = static_cast<T>(x);
  }

  template <typename T>
  void optional_integer(const std::string& key, std::optional<T>& out, long long lo) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return;
    if (obj_.at(key).is_null()) {
      out.reset();
      return;
    }
    T tmp{};
    integer(key, tmp, lo);
    if (obj_.at(key).is_number_integer() && obj_.at(key).get<long long>() >= lo) out = tmp;
  }

  void u64(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    const auto& v = raw(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      return issue(join(key), "expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }

  void real(const std::string& key, double& out) {
    if (!has(key)) return;
    const auto& v = raw(key);
    if (!v.is_number()) return issue(join(key), "expected a number");
    out = v.get<double>();
  }

  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    const auto& v = raw(key);
    if (!v.is_boolean()) return issue(join(key), "expected true/false");
    out = v.get<bool>();
  }

  std::optional<std::string> string(const std::string& key) {
    if (!has(key)) return std::nullopt;
    const auto& v = raw(key);
    if (!v.is_string()) {
      issue(join(key), "expected a string");
      return std::nullopt;
    }
    return v.get<std::string>();
  }

 private:
  const json& obj_;
  std::string path_;
  std::vector<std::string>& issues_;
  std::set<std::string> seen_;
};

template <typename Enum, std::size_t N>
std::string choices(const std::pair<Enum, std::string_view> (&table)[N]) {
  std::string out;
  for (const auto& [e, n] : table) out += (out.empty() ? "" : ", ") + std::string(n);
  return out;
}

std::string algo_choices() { return "DOPR, GRPO, ONE_SHOT, DOPR_UCB, DOPR_NONE, DOPR_RANDOM"; }

void read_task(FieldReader& r, TaskSpec& t) {
  r.integer("num_instances", t.num_instances, 1);
  r.integer("vocab_size", t.vocab_size, 2, 1 << 20);
  r.integer("min_len", t.min_len, 1, 1 << 16);
  r.integer("max_len", t.max_len, 1, 1 << 16);
  r.u64("seed", t.seed);
}

void read_train(FieldReader& r, TrainConfig& t, std::vector<std::string>& issues) {
  if (auto algo = r.string("algo")) {
    if (auto a = parse_algo(*algo))
      t.algo = *a;
    else
      r.issue(r.join("algo"), "unknown value '" + *algo + "' (expected one of " + algo_choices() + ")");
  }
  r.integer("batch_size", t.batch_size, 1, 1 << 20);
  r.integer("group_size", t.grpo.group_size, 2, 1 << 20);
  r.integer("total_steps", t.total_steps, 1);
  r.optional_integer("rollout_budget", t.rollout_budget, 0);
  r.optional_integer("subset_size", t.subset_size, 1);
  r.u64("seed", t.seed);
  r.integer("eval_every", t.eval_every, 1);
  r.integer("checkpoint_every", t.checkpoint_every, 0);
  r.real("init_prior", t.init_prior);
  r.real("init_noise", t.init_noise);
  if (auto reward = r.string("reward")) {
    if (*reward == "binary")
      t.reward = RewardMode::Binary;
    else if (*reward == "partial")
      t.reward = RewardMode::Partial;
    else
      r.issue(r.join("reward"), "unknown value '" + *reward + "' (expected binary, partial)");
  }
  r.optional_integer("one_shot_instance", t.one_shot_instance, 0);
  bool parallel = t.exec == Execution::Parallel;
  r.boolean("parallel", parallel);
  t.exec = parallel ? Execution::Parallel : Execution::Serial;

  if (r.has("grpo")) {
    FieldReader g(r.raw("grpo"), r.join("grpo"), issues);
    g.real("clip_eps", t.grpo.clip_eps);
    g.real("kl_beta", t.grpo.kl_beta);
    g.real("learning_rate", t.grpo.learning_rate);
    g.integer("inner_epochs", t.grpo.inner_epochs, 1, 1000);
    g.real("std_floor", t.grpo.std_floor);
    g.real("grad_clip", t.grpo.grad_clip);
  }
  if (r.has("selector")) {
    FieldReader s(r.raw("selector"), r.join("selector"), issues);
    s.real("rho1", t.selector.rho1);
    s.real("rho2", t.selector.rho2);
    s.real("lambda", t.selector.lambda);
    s.real("sigmoid_eps", t.selector.sigmoid_eps);
    if (auto norm = s.string("entropy_norm")) {
      if (*norm == "batch")
        t.selector.entropy_norm = EntropyNorm::Batch;
      else if (*norm == "ema")
        t.selector.entropy_norm = EntropyNorm::Ema;
      else
        s.issue(s.join("entropy_norm"), "unknown value '" + *norm + "' (expected batch, ema)");
    }
    s.real("entropy_ema_rate", t.selector.entropy_ema_rate);
  }
}

void read_sweep(FieldReader& r, SweepConfig& s) {
  if (r.has("subset_sizes")) {
    const auto& v = r.raw("subset_sizes");
    if (!v.is_array()) {
      r.issue(r.join("subset_sizes"), "expected an array");
    } else {
      s.subset_sizes.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        const auto where = r.join("subset_sizes") + "[" + std::to_string(i) + "]";
        if (v[i].is_string() && v[i].get<std::string>() == "full")
          s.subset_sizes.push_back(std::nullopt);
        else if (v[i].is_number_integer() && v[i].get<long long>() >= 1)
          s.subset_sizes.push_back(v[i].get<long long>());
        else
          r.issue(where, "expected a positive integer or \"full\"");
      }
    }
  }
  if (r.has("budgets")) {
    const auto& v = r.raw("budgets");
    if (!v.is_array()) {
      r.issue(r.join("budgets"), "expected an array");
    } else {
      s.budgets.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i].is_number_integer() && v[i].get<long long>() >= 0)
          s.budgets.push_back(v[i].get<long long>());
        else
          r.issue(r.join("budgets") + "[" + std::to_string(i) + "]", "expected a non-negative integer");
      }
    }
  }
  if (r.has("algorithms")) {
    const auto& v = r.raw("algorithms");
    if (!v.is_array()) {
      r.issue(r.join("algorithms"), "expected an array");
    } else {
      s.algorithms.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        const auto where = r.join("algorithms") + "[" + std::to_string(i) + "]";
        auto a = v[i].is_string() ? parse_algo(v[i].get<std::string>()) : std::nullopt;
        if (a)
          s.algorithms.push_back(*a);
        else
          r.issue(where, "unknown algorithm (expected one of " + algo_choices() + ")");
      }
    }
  }
  if (r.has("variants")) {
    const auto& v = r.raw("variants");
    if (!v.is_array()) {
      r.issue(r.join("variants"), "expected an array");
    } else {
      s.variants.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        const auto where = r.join("variants") + "[" + std::to_string(i) + "]";
        auto x = v[i].is_string() ? parse_variant(v[i].get<std::string>()) : std::nullopt;
        if (x)
          s.variants.push_back(*x);
        else
          r.issue(where, "unknown variant (expected one of " + choices(kVariants) + ")");
      }
    }
  }
  r.integer("ablation_budget", s.ablation_budget, 0);
}

void read_theory(FieldReader& r, TheoryConfig& t) {
  r.integer("dim", t.dim, 1, 1 << 20);
  r.real("curvature", t.curvature);
  r.real("epsilon", t.epsilon);
  r.real("epsilon_prime", t.epsilon_prime);
  r.real("alpha", t.alpha);
  r.integer("steps", t.steps, 1);
  r.integer("repeats", t.repeats, 1);
  r.integer("pl_samples", t.pl_samples, 1);
  r.u64("seed", t.seed);
  if (r.has("sweep_epsilon_primes")) {
    const auto& v = r.raw("sweep_epsilon_primes");
    if (!v.is_array()) return r.issue(r.join("sweep_epsilon_primes"), "expected an array");
    t.sweep_epsilon_primes.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i].is_number() && v[i].get<double>() > 0.0)
        t.sweep_epsilon_primes.push_back(v[i].get<double>());
      else
        r.issue(r.join("sweep_epsilon_primes") + "[" + std::to_string(i) + "]", "expected a positive number");
    }
  }
}

// Splits "invalid xxx config: a; b; c" into separate issues. Nested grpo and
// selector messages land under train.grpo / train.selector, and a leading
// field name becomes part of the path.
void absorb(std::vector<std::string>& issues, const std::string& path, const std::string& what) {
  auto colon = what.find(": ");
  auto body = colon == std::string::npos ? what : what.substr(colon + 2);
  auto prefix = path;
  for (auto& part : textio::split_char(body, ';')) {
    auto trimmed = part;
    while (!trimmed.empty() && trimmed.front() == ' ') trimmed.erase(trimmed.begin());
    if (trimmed.empty()) continue;
    if (trimmed.rfind("invalid ", 0) == 0) {
      if (trimmed.rfind("invalid grpo config", 0) == 0) prefix = path + ".grpo";
      if (trimmed.rfind("invalid selector config", 0) == 0) prefix = path + ".selector";
      auto c = trimmed.find(": ");
      if (c != std::string::npos) trimmed = trimmed.substr(c + 2);
    }
    const auto word = trimmed.find(' ');
    const bool ident = word != std::string::npos && word > 0 &&
                       std::all_of(trimmed.begin(), trimmed.begin() + static_cast<std::ptrdiff_t>(word), [](char ch) {
                         return std::islower(static_cast<unsigned char>(ch)) || std::isdigit(static_cast<unsigned char>(ch)) ||
                                ch == '_';
                       });
    const auto rest = ident ? trimmed.substr(word + 1) : std::string();
    if (ident && (rest.rfind("must", 0) == 0 || rest.rfind("exceeds", 0) == 0 || rest.rfind("out of", 0) == 0))
      issues.push_back(prefix + "." + trimmed.substr(0, word) + ": " + rest);
    else
      issues.push_back(prefix + ": " + trimmed);
  }
}

}  // namespace

std::string_view experiment_name(ExperimentKind kind) {
  for (auto [k, n] : kKinds)
    if (k == kind) return n;
  return "?";
}

std::string_view variant_name(SelectorVariant variant) {
  for (auto [v, n] : kVariants)
    if (v == variant) return n;
  return "?";
}

std::optional<SelectorVariant> parse_variant(std::string_view name) {
  for (auto [v, n] : kVariants)
    if (n == name) return v;
  return std::nullopt;
}

Algo algo_for_variant(SelectorVariant variant) {
  switch (variant) {
    case SelectorVariant::PlainUcb:
      return Algo::DoprUcb;
    case SelectorVariant::VarianceOnly:
      return Algo::DoprNone;
    case SelectorVariant::Random:
      return Algo::DoprRandom;
    case SelectorVariant::EmUcb:
      break;
  }
  return Algo::Dopr;
}

ExperimentConfig parse_experiment(const json& doc) {
  std::vector<std::string> issues;
  ExperimentConfig cfg;
  {
    FieldReader top(doc, "", issues);
    if (auto kind = top.string("experiment")) {
      bool found = false;
      for (auto [k, n] : kKinds)
        if (n == *kind) {
          cfg.kind = k;
          found = true;
        }
      if (!found)
        top.issue("experiment", "unknown value '" + *kind + "' (expected one of " + choices(kKinds) + ")");
    }
    if (auto out = top.string("output_dir")) cfg.output_dir = *out;
    if (top.has("task")) {
      FieldReader r(top.raw("task"), "task", issues);
      read_task(r, cfg.task);
    }
    if (top.has("train")) {
      FieldReader r(top.raw("train"), "train", issues);
      read_train(r, cfg.train, issues);
    }
    if (top.has("sweep")) {
      FieldReader r(top.raw("sweep"), "sweep", issues);
      read_sweep(r, cfg.sweep);
    }
    if (top.has("theory")) {
      FieldReader r(top.raw("theory"), "theory", issues);
      read_theory(r, cfg.theory);
    }
  }

  try {
    cfg.task.validate();
  } catch (const ConfigError& e) {
    absorb(issues, "task", e.what());
  }
  if (cfg.kind != ExperimentKind::Theory) {
    try {
      cfg.train.validate(cfg.task.num_instances);
    } catch (const ConfigError& e) {
      absorb(issues, "train", e.what());
    }
  }
  switch (cfg.kind) {
    case ExperimentKind::DataScaleSweep:
      if (cfg.sweep.subset_sizes.empty()) issues.push_back("sweep.subset_sizes: must be non-empty");
      for (std::size_t i = 0; i < cfg.sweep.subset_sizes.size(); ++i)
        if (cfg.sweep.subset_sizes[i] && *cfg.sweep.subset_sizes[i] > cfg.task.num_instances)
          issues.push_back("sweep.subset_sizes[" + std::to_string(i) + "]: exceeds task.num_instances");
      break;
    case ExperimentKind::BudgetSweep:
      if (cfg.sweep.budgets.empty()) issues.push_back("sweep.budgets: must be non-empty");
      if (cfg.sweep.algorithms.empty()) issues.push_back("sweep.algorithms: must be non-empty");
      break;
    case ExperimentKind::Ablation:
      if (cfg.sweep.variants.empty()) issues.push_back("sweep.variants: must be non-empty");
      break;
    case ExperimentKind::Theory: {
      const auto& t = cfg.theory;
      if (!(t.curvature > 0.0)) issues.push_back("theory.curvature: must be > 0");
      if (!(t.epsilon > t.epsilon_prime && t.epsilon_prime > 0.0))
        issues.push_back("theory.epsilon: require epsilon > epsilon_prime > 0");
      const double eta = t.alpha * t.curvature / 2.0;
      if (!(eta > 0.0 && eta < 1.0)) issues.push_back("theory.alpha: contraction rate alpha*c/2 must be in (0, 1)");
      break;
    }
    case ExperimentKind::SingleRun:
      break;
  }
  if (cfg.output_dir.empty()) issues.push_back("output_dir: must be non-empty");
  if (!issues.empty()) throw ValidationError(std::move(issues));
  return cfg;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw ValidationError({path.string() + ": config file not found"});
  json doc;
  try {
    doc = json::parse(textio::read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError({path.string() + ": " + e.what()});
  }
  return parse_experiment(doc);
}

ordered_json to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["experiment"] = experiment_name(cfg.kind);
  j["output_dir"] = cfg.output_dir;
  j["task"] = {{"num_instances", cfg.task.num_instances}, {"vocab_size", cfg.task.vocab_size},
               {"min_len", cfg.task.min_len},             {"max_len", cfg.task.max_len},
               {"seed", cfg.task.seed}};
  const auto& t = cfg.train;
  auto opt = [](const auto& o) -> ordered_json { return o ? ordered_json(*o) : ordered_json(nullptr); };
  ordered_json train;
  train["algo"] = algo_name(t.algo);
  train["batch_size"] = t.batch_size;
  train["group_size"] = t.grpo.group_size;
  train["total_steps"] = t.total_steps;
  train["rollout_budget"] = opt(t.rollout_budget);
  train["subset_size"] = opt(t.subset_size);
  train["seed"] = t.seed;
  train["eval_every"] = t.eval_every;
  train["checkpoint_every"] = t.checkpoint_every;
  train["init_prior"] = t.init_prior;
  train["init_noise"] = t.init_noise;
  train["reward"] = t.reward == RewardMode::Binary ? "binary" : "partial";
  train["one_shot_instance"] = opt(t.one_shot_instance);
  train["parallel"] = t.exec == Execution::Parallel;
  train["grpo"] = {{"clip_eps", t.grpo.clip_eps},         {"kl_beta", t.grpo.kl_beta},
                   {"learning_rate", t.grpo.learning_rate}, {"inner_epochs", t.grpo.inner_epochs},
                   {"std_floor", t.grpo.std_floor},       {"grad_clip", t.grpo.grad_clip}};
  train["selector"] = {{"rho1", t.selector.rho1},
                       {"rho2", t.selector.rho2},
                       {"lambda", t.selector.lambda},
                       {"sigmoid_eps", t.selector.sigmoid_eps},
                       {"entropy_norm", t.selector.entropy_norm == EntropyNorm::Batch ? "batch" : "ema"},
                       {"entropy_ema_rate", t.selector.entropy_ema_rate}};
  j["train"] = train;
  ordered_json sweep;
  sweep["subset_sizes"] = ordered_json::array();
  for (const auto& s : cfg.sweep.subset_sizes) sweep["subset_sizes"].push_back(s ? ordered_json(*s) : ordered_json("full"));
  sweep["budgets"] = cfg.sweep.budgets;
  sweep["algorithms"] = ordered_json::array();
  for (auto a : cfg.sweep.algorithms) sweep["algorithms"].push_back(algo_name(a));
  sweep["variants"] = ordered_json::array();
  for (auto v : cfg.sweep.variants) sweep["variants"].push_back(variant_name(v));
  sweep["ablation_budget"] = cfg.sweep.ablation_budget;
  j["sweep"] = sweep;
  const auto& th = cfg.theory;
  j["theory"] = {{"dim", th.dim},
                 {"curvature", th.curvature},
                 {"epsilon", th.epsilon},
                 {"epsilon_prime", th.epsilon_prime},
                 {"alpha", th.alpha},
                 {"steps", th.steps},
                 {"repeats", th.repeats},
                 {"sweep_epsilon_primes", th.sweep_epsilon_primes},
                 {"pl_samples", th.pl_samples},
                 {"seed", th.seed}};
  return j;
}

void prepare_output_dir(const std::filesystem::path& dir, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("output path " + dir.string() + " is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw ConfigError("output directory " + dir.string() + " is not empty (use --force to overwrite)");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

// ---- summary table ---------------------------------------------------------

std::string format_summary(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    auto status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    out << r.experiment << ',' << r.leg << ',' << r.algo << ',' << r.subset_size << ',' << r.budget << ','
        << r.variant << ',' << r.steps << ',' << r.cumulative_rollouts << ','
        << textio::format_real(r.final_eval_accuracy) << ',' << textio::format_real(r.final_full_accuracy)
        << ',' << status << '\n';
  }
  return out.str();
}

std::vector<SummaryRow> parse_summary(const std::string& text, const std::string& origin) {
  auto lines = textio::split_lines(text);
  if (lines.empty() || lines[0] != kSummaryHeader) throw FormatError(origin + ":1: unexpected summary header");
  std::vector<SummaryRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto ctx = origin + ":" + std::to_string(i + 1);
    auto f = textio::split_char(lines[i], ',');
    if (f.size() != 11) throw FormatError(ctx + ": expected 11 columns");
    SummaryRow r{f[0], f[1], f[2], f[3], f[4], f[5], textio::parse_int(f[6], ctx + ", column steps"),
                 textio::parse_int(f[7], ctx + ", column cumulative_rollouts"),
                 textio::parse_real(f[8], ctx + ", column final_eval_accuracy"),
                 textio::parse_real(f[9], ctx + ", column final_full_accuracy"), f[10]};
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---- runs ------------------------------------------------------------------

RunResult run_single(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  const auto dataset = generate_dataset(cfg.task);
  save_dataset(dataset, dir / "dataset.txt");
  textio::write_atomic(dir / "config.resolved.json", to_json(cfg).dump(2) + "\n");
  return run(cfg.train, dataset, dir);
}

namespace {

SummaryRow run_leg(const ExperimentConfig& leg_cfg, const std::filesystem::path& leg_dir, SummaryRow row) {
  try {
    prepare_output_dir(leg_dir, true);
    const auto res = run_single(leg_cfg, leg_dir);
    row.steps = res.state.step;
    row.cumulative_rollouts = res.state.ledger.total();
    row.final_eval_accuracy = res.final_eval_accuracy;
    row.final_full_accuracy = res.final_full_accuracy;
  } catch (const std::exception& e) {
    row.status = std::string("failed: ") + e.what();
    std::cerr << "warning: leg " << row.leg << " failed: " << e.what() << '\n';
  }
  return row;
}

std::string size_label(const std::optional<std::int64_t>& n) { return n ? std::to_string(*n) : "full"; }

void finish_sweep(const ExperimentConfig& cfg, const std::filesystem::path& dir, const SweepResult& res) {
  textio::write_atomic(dir / "config.resolved.json", to_json(cfg).dump(2) + "\n");
  textio::write_atomic(dir / "summary.csv", format_summary(res.rows));
}

}  // namespace

SweepResult run_data_scale_sweep(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  SweepResult res;
  std::vector<std::optional<std::int64_t>> sizes;
  for (const auto& s : cfg.sweep.subset_sizes) {
    // "full" and an explicit size equal to the dataset are the same leg.
    const auto norm = (s && *s >= cfg.task.num_instances) ? std::nullopt : s;
    if (std::find(sizes.begin(), sizes.end(), norm) != sizes.end()) {
      res.warnings.push_back("duplicate subset size " + size_label(s) + " ignored");
      continue;
    }
    sizes.push_back(norm);
  }
  for (const auto& s : sizes) {
    auto leg = cfg;
    leg.kind = ExperimentKind::SingleRun;
    leg.train.subset_size = s;
    // Batches are drawn without replacement, so K cannot exceed the subset.
    if (s && leg.train.algo != Algo::OneShot && leg.train.batch_size > *s) {
      res.warnings.push_back("subset_" + size_label(s) + ": batch_size capped at " + std::to_string(*s));
      leg.train.batch_size = static_cast<std::int32_t>(*s);
    }
    SummaryRow row;
    row.experiment = "data_scale_sweep";
    row.leg = "subset_" + size_label(s);
    row.algo = algo_name(cfg.train.algo);
    row.subset_size = size_label(s);
    if (cfg.train.rollout_budget) row.budget = std::to_string(*cfg.train.rollout_budget);
    res.rows.push_back(run_leg(leg, dir / row.leg, row));
  }
  finish_sweep(cfg, dir, res);
  return res;
}

SweepResult run_budget_sweep(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  SweepResult res;
  for (auto algo : cfg.sweep.algorithms)
    for (auto budget : cfg.sweep.budgets) {
      auto leg = cfg;
      leg.kind = ExperimentKind::SingleRun;
      leg.train.algo = algo;
      leg.train.rollout_budget = budget;
      // The budget, not the step count, ends these runs.
      leg.train.total_steps = std::max<std::int64_t>(cfg.train.total_steps, budget);
      SummaryRow row;
      row.experiment = "budget_sweep";
      row.leg = std::string(algo_name(algo)) + "_b" + std::to_string(budget);
      row.algo = algo_name(algo);
      row.subset_size = size_label(cfg.train.subset_size);
      row.budget = std::to_string(budget);
      res.rows.push_back(run_leg(leg, dir / row.leg, row));
    }
  finish_sweep(cfg, dir, res);
  return res;
}

SweepResult run_ablation(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  SweepResult res;
  for (auto variant : cfg.sweep.variants) {
    for (bool constrained : {true, false}) {
      auto leg = cfg;
      leg.kind = ExperimentKind::SingleRun;
      leg.train.algo = algo_for_variant(variant);
      if (constrained) {
        leg.train.rollout_budget = cfg.sweep.ablation_budget;
        leg.train.total_steps = std::max<std::int64_t>(cfg.train.total_steps, cfg.sweep.ablation_budget);
      } else {
        leg.train.rollout_budget.reset();
      }
      SummaryRow row;
      row.experiment = "ablation";
      row.leg = std::string(variant_name(variant)) + (constrained ? "_budget" : "_converged");
      row.algo = algo_name(leg.train.algo);
      row.subset_size = size_label(cfg.train.subset_size);
      if (constrained) row.budget = std::to_string(cfg.sweep.ablation_budget);
      row.variant = variant_name(variant);
      res.rows.push_back(run_leg(leg, dir / row.leg, row));
    }
  }
  finish_sweep(cfg, dir, res);
  return res;
}

// ---- theory ----------------------------------------------------------------

TheoryOutcome run_theory(const TheoryConfig& cfg) {
  using namespace theory;
  TheoryOutcome out;
  const auto dim = static_cast<std::size_t>(cfg.dim);

  auto clean = ToyObjective::quadratic(dim, cfg.curvature, 0.0);
  out.noiseless = bound_report(clean, cfg.epsilon, cfg.epsilon_prime, cfg.alpha, cfg.steps, 1, cfg.seed);
  if (!out.noiseless.recurrence.passed) out.failures.push_back("noiseless: recurrence bound violated");
  if (!out.noiseless.steps_observed)
    out.failures.push_back("noiseless: gap target not reached within the step limit");
  else if (*out.noiseless.steps_observed > out.noiseless.steps_predicted)
    out.failures.push_back("noiseless: N_obs exceeds N_pred");

  auto noisy = clean;
  noisy.noise_std = boundary_noise_std(clean, cfg.alpha, cfg.epsilon_prime);
  out.boundary_noise =
      bound_report(noisy, cfg.epsilon, cfg.epsilon_prime, cfg.alpha, cfg.steps, cfg.repeats, cfg.seed + 1);
  if (!out.boundary_noise.recurrence.noise_condition_ok)
    out.failures.push_back("boundary noise: noise condition not satisfied");
  else if (!out.boundary_noise.recurrence.passed)
    out.failures.push_back("boundary noise: recurrence bound violated");
  if (out.boundary_noise.steps_observed &&
      *out.boundary_noise.steps_observed > out.boundary_noise.steps_predicted)
    out.failures.push_back("boundary noise: N_obs exceeds N_pred");

  try {
    out.scaling = log_scaling(clean, cfg.epsilon, cfg.alpha, cfg.sweep_epsilon_primes);
    if (out.scaling.r_squared < 0.95) out.failures.push_back("scaling: R^2 below 0.95");
    if (!(out.scaling.slope > 0.0)) out.failures.push_back("scaling: slope is not positive");
    if (!out.scaling.dominated) out.failures.push_back("scaling: N_obs exceeds N_pred on the grid");
  } catch (const ConfigError& e) {
    out.failures.push_back(std::string("scaling: ") + e.what());
  }

  out.pl_smooth = verify_pl_and_smooth(clean, cfg.pl_samples, 2.0 * std::sqrt(4.0 * cfg.epsilon / cfg.curvature),
                                       cfg.seed + 2);
  if (!out.pl_smooth.passed()) out.failures.push_back("pl/smoothness: inequality violations found");
  if (out.pl_smooth.max_pl_identity_error > 1e-12) out.failures.push_back("pl/smoothness: PL identity error above 1e-12");
  return out;
}

std::string format_theory(const TheoryOutcome& o) {
  using textio::format_real;
  std::ostringstream out;
  out << "dopr-bound-report v1\n";
  out << "[noiseless]\n" << theory::format_report(o.noiseless);
  out << "[boundary_noise]\n" << theory::format_report(o.boundary_noise);
  out << "[log_scaling]\n";
  out << "slope: " << format_real(o.scaling.slope) << '\n'
      << "intercept: " << format_real(o.scaling.intercept) << '\n'
      << "r_squared: " << format_real(o.scaling.r_squared) << '\n'
      << "dominated: " << (o.scaling.dominated ? "yes" : "no") << '\n'
      << "points: ln_ratio steps\n";
  for (std::size_t i = 0; i < o.scaling.steps.size(); ++i)
    out << "  " << format_real(o.scaling.log_ratios[i]) << ' ' << o.scaling.steps[i] << '\n';
  out << "[pl_smoothness]\n"
      << "smooth_violations: " << o.pl_smooth.smooth_violations << '\n'
      << "pl_violations: " << o.pl_smooth.pl_violations << '\n'
      << "max_pl_identity_error: " << format_real(o.pl_smooth.max_pl_identity_error) << '\n';
  out << "[verdict]\n" << "status: " << (o.passed() ? "pass" : "fail") << '\n';
  for (const auto& f : o.failures) out << "failure: " << f << '\n';
  return out.str();
}

// ---- report ----------------------------------------------------------------

namespace {

std::string pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", x);
  return buf;
}

void render_metrics(std::ostringstream& out, const std::filesystem::path& path) {
  const auto rows = parse_metrics_csv(textio::read_file(path), path.string());
  if (rows.empty()) return;
  const auto& last = rows.back();
  std::optional<double> last_eval;
  for (const auto& r : rows)
    if (r.eval_accuracy) last_eval = r.eval_accuracy;
  double total_time = 0.0;
  for (const auto& r : rows) total_time += r.update_wall_time_s;
  out << "| steps | cumulative rollouts | initial eval | final eval | mean update time (s) |\n"
      << "|---|---|---|---|---|\n"
      << "| " << last.step << " | " << last.cumulative_rollouts << " | "
      << (rows.front().eval_accuracy ? pct(*rows.front().eval_accuracy) : "-") << " | "
      << (last_eval ? pct(*last_eval) : "-") << " | "
      << (last.step > 0 ? pct(total_time / static_cast<double>(last.step)) : "-") << " |\n\n";
}

}  // namespace

std::string render_report(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::ostringstream out;
  out << "# Experiment report: " << dir.string() << "\n\n";
  bool any = false;

  if (fs::exists(dir / "summary.csv")) {
    any = true;
    const auto rows = parse_summary(textio::read_file(dir / "summary.csv"), (dir / "summary.csv").string());
    std::set<std::string> kinds;
    out << "| leg | algo | subset | budget | variant | steps | rollouts | eval (train subset) | eval (all) | status |\n"
        << "|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
      kinds.insert(r.experiment);
      out << "| " << r.leg << " | " << r.algo << " | " << r.subset_size << " | " << (r.budget.empty() ? "-" : r.budget)
          << " | " << (r.variant.empty() ? "-" : r.variant) << " | " << r.steps << " | " << r.cumulative_rollouts
          << " | " << pct(r.final_eval_accuracy) << " | " << pct(r.final_full_accuracy) << " | " << r.status
          << " |\n";
    }
    out << "\n## Published reference figures (LLM scale; shown for comparison, not reproduced)\n\n";
    if (kinds.count("data_scale_sweep"))
      out << "- Data scale, MATH Pass@1: GRPO with 16 samples 69.8 vs full dataset 71.8.\n";
    if (kinds.count("budget_sweep"))
      out << "- Equal budget, 10k rollouts, average Pass@1: GRPO 35.2 vs DoPR 46.1.\n";
    if (kinds.count("ablation"))
      out << "- Ablation, 10k rollout budget, average Pass@1: DoPR 45.7 vs DoPR-None 41.6.\n";
    out << '\n';
  }
  if (fs::exists(dir / "metrics.csv")) {
    any = true;
    out << "## Single run\n\n";
    render_metrics(out, dir / "metrics.csv");
  }
  if (fs::exists(dir / "bound_report.txt")) {
    any = true;
    const auto text = textio::read_file(dir / "bound_report.txt");
    out << "## Convergence bound check\n\n";
    for (const auto& line : textio::split_lines(text))
      if (line.rfind("steps_", 0) == 0 || line.rfind("status:", 0) == 0 || line.rfind("r_squared:", 0) == 0 ||
          line.rfind("failure:", 0) == 0 || line.rfind("recurrence_bound:", 0) == 0 || line.rfind('[', 0) == 0)
        out << "    " << line << '\n';
    out << '\n';
  }
  if (!any) throw IoError("no summary.csv, metrics.csv or bound_report.txt in " + dir.string());
  return out.str();
}

}  // namespace dopr
