#pragma once

// Per-sample reward statistics and the entropy-modulated UCB acquisition rule
// used to pick one instance out of each probed mini-batch.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dopr/rng.hpp"

namespace dopr {

enum class SelectorVariant {
  EmUcb,         ///< sigma + lambda * sigmoid-gated UCB
  PlainUcb,      ///< gate fixed at 1
  VarianceOnly,  ///< sigma alone
  Random,        ///< uniform scores (diagnostic)
};

/// Where the entropy standardization statistics come from.
enum class EntropyNorm {
  Batch,  ///< mean / population std of the current batch
  Ema,    ///< exponential moving average of batch moments across steps
};

struct SelectorConfig {
  double rho1 = 0.3;
  double rho2 = 0.3;
  double lambda = 1.0;
  double sigmoid_eps = 1e-6;
  SelectorVariant variant = SelectorVariant::EmUcb;
  EntropyNorm entropy_norm = EntropyNorm::Batch;
  double entropy_ema_rate = 0.1;  ///< Only read with EntropyNorm::Ema.

  void validate() const;
};

struct SampleStats {
  double mu = 0.0;
  double var = 0.0;
  std::int64_t count = 0;
  double last_entropy = 0.0;

  bool operator==(const SampleStats&) const = default;
};

/// mu' = rho1 r + (1 - rho1) mu, then var' = rho2 (r - mu')^2 + (1 - rho2) var.
SampleStats update_stats(const SampleStats& stats, double reward, const SelectorConfig& cfg);

struct EntropyMoments {
  double mean = 0.0;
  double sd = 0.0;  ///< Population standard deviation.
};

EntropyMoments batch_moments(std::span<const double> entropies);

/// logistic((h - mean) / (sd + eps)).
double entropy_gate(double entropy, const EntropyMoments& moments, double sigmoid_eps);
double entropy_gate(double entropy, std::span<const double> batch_entropies, double sigmoid_eps);

/// gate * sqrt(ln(step + 1) / (count + 1)); the gate is forced to 1 for
/// PlainUcb and the whole term to 0 for VarianceOnly / Random.
double ucb_term(const SampleStats& stats, double gate, std::int64_t step, const SelectorConfig& cfg);

/// sqrt(var) + lambda * ucb for the UCB variants, sqrt(var) for VarianceOnly.
/// Random draws from `rng` instead.
double acquisition_score(const SampleStats& stats, double ucb, const SelectorConfig& cfg, Rng& rng);

/// First index of the maximum.
std::size_t argmax_first(std::span<const double> scores);

struct Selection {
  std::size_t position = 0;  ///< Index into the batch.
  std::int64_t instance_id = 0;
  std::vector<double> gates;
  std::vector<double> ucb;
  std::vector<double> scores;
};

/// Owns the per-instance statistics table.
class Selector {
 public:
  Selector() = default;
  Selector(std::int64_t num_instances, SelectorConfig cfg);

  /// Records a probe: folds the reward into the EMA statistics and stores the
  /// probe's mean entropy.
  void observe(std::int64_t id, double reward, double entropy);

  /// Scores the batch at `step`, picks the argmax and increments its count.
  /// Throws std::invalid_argument on an empty batch.
  Selection select(std::span<const std::int64_t> batch_ids, std::int64_t step, Rng& rng);

  const SampleStats& stats(std::int64_t id) const { return table_.at(static_cast<std::size_t>(id)); }
  std::span<const SampleStats> table() const { return table_; }
  const SelectorConfig& config() const { return cfg_; }

  std::string format_table() const;
  void save_table(const std::filesystem::path& path) const;
  /// Replaces the table from text produced by format_table.
  void parse_table(const std::string& text, const std::string& origin = "<memory>");

 private:
  SelectorConfig cfg_;
  std::vector<SampleStats> table_;
  bool have_running_ = false;
  EntropyMoments running_{};
};

}  // namespace dopr
