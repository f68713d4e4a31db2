#include "dopr/trainers.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dopr/error.hpp"
#include "dopr/textio.hpp"

namespace dopr {

namespace {

// Stream tags for derive_seed; each random decision in a step has its own.
enum : std::uint64_t {
  kSubsetStream = 1,
  kInitStream,
  kBatchStream,
  kProbeStream,
  kSelectStream,
  kGroupStream,
};

constexpr std::pair<Algo, std::string_view> kAlgoNames[] = {
    {Algo::Dopr, "DOPR"},         {Algo::Grpo, "GRPO"},          {Algo::OneShot, "ONE_SHOT"},
    {Algo::DoprUcb, "DOPR_UCB"},  {Algo::DoprNone, "DOPR_NONE"}, {Algo::DoprRandom, "DOPR_RANDOM"},
};

}  // namespace

std::string_view algo_name(Algo algo) {
  for (auto [a, n] : kAlgoNames)
    if (a == algo) return n;
  return "?";
}

std::optional<Algo> parse_algo(std::string_view name) {
  for (auto [a, n] : kAlgoNames)
    if (n == name) return a;
  return std::nullopt;
}

bool is_dopr_family(Algo algo) { return algo != Algo::Grpo && algo != Algo::OneShot; }

SelectorVariant variant_for(Algo algo) {
  switch (algo) {
    case Algo::DoprUcb:
      return SelectorVariant::PlainUcb;
    case Algo::DoprNone:
      return SelectorVariant::VarianceOnly;
    case Algo::DoprRandom:
      return SelectorVariant::Random;
    default:
      return SelectorVariant::EmUcb;
  }
}

std::int64_t TrainConfig::rollouts_per_step() const {
  const std::int64_t g = group_size();
  const std::int64_t k = batch_size;
  if (algo == Algo::Grpo) return k * g;
  if (algo == Algo::OneShot) return g;
  return g + (k - 1);
}

void TrainConfig::validate(std::int64_t dataset_size) const {
  std::ostringstream err;
  const auto train_size = subset_size.value_or(dataset_size);
  if (batch_size < 1) err << "batch_size must be >= 1; ";
  if (total_steps < 1) err << "total_steps must be >= 1; ";
  if (rollout_budget && *rollout_budget < 0) err << "rollout_budget must be >= 0; ";
  if (subset_size && (*subset_size < 1 || *subset_size > dataset_size))
    err << "subset_size must be in [1, " << dataset_size << "]; ";
  if (algo != Algo::OneShot && batch_size > train_size)
    err << "batch_size exceeds the training subset (" << train_size << "); ";
  if (eval_every < 1) err << "eval_every must be >= 1; ";
  if (checkpoint_every < 0) err << "checkpoint_every must be >= 0; ";
  if (!(init_noise >= 0.0)) err << "init_noise must be >= 0; ";
  if (one_shot_instance && (*one_shot_instance < 0 || *one_shot_instance >= dataset_size))
    err << "one_shot_instance out of range; ";
  auto msg = err.str();
  try {
    grpo.validate();
  } catch (const ConfigError& e) {
    msg += std::string(e.what()) + "; ";
  }
  try {
    selector.validate();
  } catch (const ConfigError& e) {
    msg += std::string(e.what()) + "; ";
  }
  if (!msg.empty()) throw ConfigError("invalid train config: " + msg.substr(0, msg.size() - 2));
}

// ---- metrics CSV -----------------------------------------------------------

namespace {

template <typename T>
std::string opt_field(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_floating_point_v<T>)
    return textio::format_real(*v);
  else
    return std::to_string(*v);
}

}  // namespace

std::string format_metrics_row(const MetricsRow& row) {
  std::ostringstream out;
  out << row.step << ',' << row.cumulative_rollouts << ',' << opt_field(row.train_mean_reward) << ','
      << opt_field(row.eval_accuracy) << ',' << opt_field(row.mean_response_length) << ','
      << textio::format_real(row.update_wall_time_s) << ',' << opt_field(row.selected_id);
  return out.str();
}

MetricsRow parse_metrics_row(const std::string& line, const std::string& context) {
  auto f = textio::split_char(line, ',');
  if (f.size() != 7) throw FormatError(context + ": expected 7 columns, got " + std::to_string(f.size()));
  auto real = [&](std::size_t i, const char* name) -> std::optional<double> {
    if (f[i].empty()) return std::nullopt;
    return textio::parse_real(f[i], context + ", column " + name);
  };
  MetricsRow row;
  row.step = textio::parse_int(f[0], context + ", column step");
  row.cumulative_rollouts = textio::parse_int(f[1], context + ", column cumulative_rollouts");
  row.train_mean_reward = real(2, "train_mean_reward");
  row.eval_accuracy = real(3, "eval_accuracy");
  row.mean_response_length = real(4, "mean_response_length");
  row.update_wall_time_s = textio::parse_real(f[5], context + ", column update_wall_time_s");
  if (!f[6].empty()) row.selected_id = textio::parse_int(f[6], context + ", column selected_id");
  return row;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text, const std::string& origin) {
  auto lines = textio::split_lines(text);
  if (lines.empty()) throw FormatError(origin + ": empty metrics file");
  if (lines[0] != kMetricsHeader) throw FormatError(origin + ":1: unexpected metrics header");
  std::vector<MetricsRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i)
    if (!lines[i].empty()) rows.push_back(parse_metrics_row(lines[i], origin + ":" + std::to_string(i + 1)));
  return rows;
}

// ---- state -----------------------------------------------------------------

std::vector<std::int64_t> choose_subset(std::int64_t dataset_size, std::optional<std::int64_t> n,
                                        std::uint64_t seed) {
  std::vector<std::int64_t> ids(static_cast<std::size_t>(dataset_size));
  std::iota(ids.begin(), ids.end(), 0);
  if (!n || *n >= dataset_size) return ids;
  Rng rng(derive_seed(seed, kSubsetStream));
  for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
    const auto j = i + rng.below(ids.size() - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(static_cast<std::size_t>(*n));
  std::sort(ids.begin(), ids.end());
  return ids;
}

TrainState init_state(const TrainConfig& cfg, const Dataset& dataset) {
  const auto n = static_cast<std::int64_t>(dataset.size());
  cfg.validate(n);
  auto selector_cfg = cfg.selector;
  if (is_dopr_family(cfg.algo)) selector_cfg.variant = variant_for(cfg.algo);
  auto params = warm_start(dataset, cfg.init_prior, cfg.init_noise, derive_seed(cfg.seed, kInitStream));
  TrainState st{params, params, Selector(n, selector_cfg), RolloutLedger(n), 0, {}, 0, {}, {}};
  st.subset = choose_subset(n, cfg.subset_size, cfg.seed);
  st.one_shot_id = cfg.one_shot_instance.value_or(st.subset.front());
  return st;
}

std::vector<std::int64_t> draw_batch(const std::vector<std::int64_t>& subset, std::int32_t k,
                                     std::uint64_t seed) {
  if (k < 1 || static_cast<std::size_t>(k) > subset.size())
    throw std::invalid_argument("batch size outside [1, subset size]");
  auto pool = subset;
  Rng rng(seed);
  for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
    const auto j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

double eval_accuracy(const PolicyParams& params, const Dataset& dataset,
                     const std::vector<std::int64_t>& ids, Execution exec) {
  if (ids.empty()) return 0.0;
  const auto correct = kernels::count_greedy_correct(exec, params, dataset, ids);
  return static_cast<double>(correct) / static_cast<double>(ids.size());
}

// ---- steps -----------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

std::vector<std::uint64_t> stream_seeds(std::uint64_t seed, std::int64_t step, std::uint64_t tag,
                                        std::size_t n) {
  std::vector<std::uint64_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = derive_seed(seed, step, tag, i);
  return out;
}

// Runs the inner epochs of the clipped update against the pre-step snapshot.
void update_policy(TrainState& st, const TrainConfig& cfg, std::span<const GroupBatch> groups) {
  const PolicyParams old = st.params;
  for (std::int32_t e = 0; e < cfg.grpo.inner_epochs; ++e) {
    auto lg = grpo_loss_and_grad(st.params, old, st.ref, groups, cfg.grpo, cfg.exec);
    apply_update(st.params, lg.grad, cfg.grpo);
  }
}

MetricsRow finish_row(TrainState& st, const TrainConfig& cfg, const Dataset& dataset,
                      std::int64_t cost, Clock::time_point t0, std::optional<std::int64_t> selected) {
  MetricsRow row;
  row.update_wall_time_s = std::chrono::duration<double>(Clock::now() - t0).count();
  st.ledger.record_step(cost);
  row.step = st.step;
  row.cumulative_rollouts = st.ledger.total();
  double reward = 0.0;
  double length = 0.0;
  for (const auto& r : st.last_rollouts) {
    reward += r.reward;
    length += r.length();
  }
  const auto n = static_cast<double>(st.last_rollouts.size());
  row.train_mean_reward = reward / n;
  row.mean_response_length = length / n;
  row.selected_id = selected;
  if (st.step % cfg.eval_every == 0)
    row.eval_accuracy = eval_accuracy(st.params, dataset, st.subset, cfg.exec);
  return row;
}

}  // namespace

MetricsRow dopr_step(TrainState& st, const TrainConfig& cfg, const Dataset& dataset) {
  const auto t0 = Clock::now();
  const std::int64_t t = ++st.step;
  const auto g = static_cast<std::size_t>(cfg.group_size());

  const auto batch = draw_batch(st.subset, cfg.batch_size, derive_seed(cfg.seed, t, kBatchStream));
  auto probes = kernels::sample_rollouts(cfg.exec, st.params, dataset, batch,
                                         stream_seeds(cfg.seed, t, kProbeStream, batch.size()),
                                         cfg.reward);
  for (std::size_t k = 0; k < batch.size(); ++k)
    st.selector.observe(batch[k], probes[k].reward,
                        mean_entropy(st.params, batch[k], probes[k].length()));

  Rng select_rng(derive_seed(cfg.seed, t, kSelectStream));
  const auto sel = st.selector.select(batch, t, select_rng);
  st.ledger.record_selection(sel.instance_id);

  // The selected instance's probe is the first member of its group.
  const std::vector<std::int64_t> extra_ids(g - 1, sel.instance_id);
  auto extras = kernels::sample_rollouts(cfg.exec, st.params, dataset, extra_ids,
                                         stream_seeds(cfg.seed, t, kGroupStream, g - 1), cfg.reward);
  GroupBatch group{sel.instance_id, {}};
  group.rollouts.push_back(probes[sel.position]);
  group.rollouts.insert(group.rollouts.end(), extras.begin(), extras.end());

  update_policy(st, cfg, std::span(&group, 1));

  st.last_rollouts = std::move(probes);
  st.last_rollouts.insert(st.last_rollouts.end(), extras.begin(), extras.end());
  st.last_group = group.rollouts;
  const auto cost = static_cast<std::int64_t>(batch.size() + extras.size());
  return finish_row(st, cfg, dataset, cost, t0, sel.instance_id);
}

MetricsRow grpo_step(TrainState& st, const TrainConfig& cfg, const Dataset& dataset) {
  const auto t0 = Clock::now();
  const std::int64_t t = ++st.step;
  const auto g = static_cast<std::size_t>(cfg.group_size());

  const auto batch = draw_batch(st.subset, cfg.batch_size, derive_seed(cfg.seed, t, kBatchStream));
  std::vector<std::int64_t> ids;
  for (auto id : batch) ids.insert(ids.end(), g, id);
  auto rollouts = kernels::sample_rollouts(cfg.exec, st.params, dataset, ids,
                                           stream_seeds(cfg.seed, t, kGroupStream, ids.size()), cfg.reward);

  std::vector<GroupBatch> groups(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    groups[k].instance_id = batch[k];
    groups[k].rollouts.assign(rollouts.begin() + static_cast<std::ptrdiff_t>(k * g),
                              rollouts.begin() + static_cast<std::ptrdiff_t>((k + 1) * g));
  }
  update_policy(st, cfg, groups);

  st.last_rollouts = std::move(rollouts);
  st.last_group = groups.front().rollouts;
  return finish_row(st, cfg, dataset, static_cast<std::int64_t>(ids.size()), t0, std::nullopt);
}

MetricsRow one_shot_step(TrainState& st, const TrainConfig& cfg, const Dataset& dataset) {
  const auto t0 = Clock::now();
  const std::int64_t t = ++st.step;
  const auto g = static_cast<std::size_t>(cfg.group_size());

  const std::vector<std::int64_t> ids(g, st.one_shot_id);
  GroupBatch group{st.one_shot_id,
                   kernels::sample_rollouts(cfg.exec, st.params, dataset, ids,
                                            stream_seeds(cfg.seed, t, kGroupStream, g), cfg.reward)};
  st.ledger.record_selection(st.one_shot_id);
  update_policy(st, cfg, std::span(&group, 1));

  st.last_rollouts = group.rollouts;
  st.last_group = group.rollouts;
  return finish_row(st, cfg, dataset, static_cast<std::int64_t>(g), t0, st.one_shot_id);
}

MetricsRow train_step(TrainState& state, const TrainConfig& cfg, const Dataset& dataset) {
  if (cfg.algo == Algo::Grpo) return grpo_step(state, cfg, dataset);
  if (cfg.algo == Algo::OneShot) return one_shot_step(state, cfg, dataset);
  return dopr_step(state, cfg, dataset);
}

// ---- run -------------------------------------------------------------------

namespace {

class MetricsSink {
 public:
  explicit MetricsSink(const std::optional<std::filesystem::path>& dir) {
    if (!dir) return;
    out_.open(*dir / "metrics.csv", std::ios::trunc);
    if (!out_) throw IoError("cannot open " + (*dir / "metrics.csv").string());
    out_ << kMetricsHeader << '\n';
  }
  void write(const MetricsRow& row) {
    if (!out_.is_open()) return;
    out_ << format_metrics_row(row) << '\n';
    out_.flush();
    if (!out_) throw IoError("metrics write failed");
  }

 private:
  std::ofstream out_;
};

void write_checkpoint(const TrainState& st, const std::filesystem::path& dir) {
  save_checkpoint(st.params, dir / "checkpoint.txt");
  st.selector.save_table(dir / "stats.txt");
}

}  // namespace

RunResult run(const TrainConfig& cfg, const Dataset& dataset,
              const std::optional<std::filesystem::path>& output_dir) {
  RunResult res{{}, init_state(cfg, dataset), 0.0, 0.0, false};
  auto& st = res.state;
  MetricsSink sink(output_dir);

  MetricsRow initial;
  initial.eval_accuracy = eval_accuracy(st.params, dataset, st.subset, cfg.exec);
  res.rows.push_back(initial);
  sink.write(initial);

  const auto cost = cfg.rollouts_per_step();
  while (st.step < cfg.total_steps) {
    if (cfg.rollout_budget && st.ledger.total() + cost > *cfg.rollout_budget) {
      res.budget_exhausted = true;
      break;
    }
    auto row = train_step(st, cfg, dataset);
    const bool last = st.step == cfg.total_steps ||
                      (cfg.rollout_budget && st.ledger.total() + cost > *cfg.rollout_budget);
    if (last && !row.eval_accuracy) row.eval_accuracy = eval_accuracy(st.params, dataset, st.subset, cfg.exec);
    res.rows.push_back(row);
    sink.write(row);
    if (output_dir && cfg.checkpoint_every > 0 && st.step % cfg.checkpoint_every == 0)
      write_checkpoint(st, *output_dir);
  }

  res.final_eval_accuracy = eval_accuracy(st.params, dataset, st.subset, cfg.exec);
  std::vector<std::int64_t> all(dataset.size());
  std::iota(all.begin(), all.end(), 0);
  res.final_full_accuracy = eval_accuracy(st.params, dataset, all, cfg.exec);
  if (output_dir) write_checkpoint(st, *output_dir);
  return res;
}

}  // namespace dopr
