#pragma once

// Tabular autoregressive categorical policy.
//
// Logits are indexed [instance][position][symbol]. The symbol alphabet is the
// task vocabulary plus the end-of-sequence marker (the last symbol), and a
// response is at most `positions` symbols long. The distribution at a position
// does not depend on the sampled prefix, only on (instance, position).

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dopr/rng.hpp"
#include "dopr/tasks.hpp"

namespace dopr {

struct PolicyDims {
  std::int64_t num_instances = 0;
  std::int32_t positions = 0;  ///< T_max + 1
  std::int32_t symbols = 0;    ///< V + 1

  static PolicyDims for_task(const TaskSpec& spec) {
    return {spec.num_instances, spec.max_response(), spec.num_symbols()};
  }
  Token eos() const { return symbols - 1; }
  std::size_t size() const {
    return static_cast<std::size_t>(num_instances) * static_cast<std::size_t>(positions) *
           static_cast<std::size_t>(symbols);
  }
  bool operator==(const PolicyDims&) const = default;
};

/// Dense logit tensor. Also used as the gradient tensor (same shape).
class PolicyParams {
 public:
  PolicyParams() = default;
  explicit PolicyParams(PolicyDims dims) : dims_(dims), data_(dims.size(), 0.0) {}

  const PolicyDims& dims() const { return dims_; }

  std::span<double> row(std::int64_t id, std::int32_t pos) {
    return {data_.data() + offset(id, pos), static_cast<std::size_t>(dims_.symbols)};
  }
  std::span<const double> row(std::int64_t id, std::int32_t pos) const {
    return {data_.data() + offset(id, pos), static_cast<std::size_t>(dims_.symbols)};
  }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  void fill(double value) { std::fill(data_.begin(), data_.end(), value); }
  bool all_finite() const;

  bool operator==(const PolicyParams&) const = default;

 private:
  std::size_t offset(std::int64_t id, std::int32_t pos) const {
    return (static_cast<std::size_t>(id) * static_cast<std::size_t>(dims_.positions) +
            static_cast<std::size_t>(pos)) *
           static_cast<std::size_t>(dims_.symbols);
  }

  PolicyDims dims_{};
  std::vector<double> data_;
};

struct RolloutRecord {
  std::int64_t instance_id = 0;
  std::vector<Token> tokens;
  std::vector<double> logprobs;  ///< Under the sampling-time parameters.
  double reward = 0.0;

  /// Emitted tokens, including the end-of-sequence marker when present.
  std::int32_t length() const { return static_cast<std::int32_t>(tokens.size()); }
  bool operator==(const RolloutRecord&) const = default;
};

/// Max-subtracted softmax of one logit row.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);
/// Categorical entropy of softmax(logits); p = 0 terms contribute 0.
double entropy(std::span<const double> logits);

/// Draws one response. Stops at EOS or after `positions` symbols.
RolloutRecord sample(const PolicyParams& params, std::int64_t instance_id, Rng& rng);

/// Per-token log-probabilities. Throws std::invalid_argument on out-of-range
/// tokens or over-long sequences.
std::vector<double> logprob(const PolicyParams& params, std::int64_t instance_id,
                            std::span<const Token> tokens);

/// Mean per-position entropy over the first `length` positions.
double mean_entropy(const PolicyParams& params, std::int64_t instance_id, std::int32_t length);

/// d/dlogits of the summed token log-probability.
PolicyParams grad_logprob(const PolicyParams& params, std::int64_t instance_id,
                          std::span<const Token> tokens);

/// out += sum_t weights[t] * d logprob(token_t) / d logits. Only touches the
/// rows visited by `tokens`.
void accumulate_grad_logprob(PolicyParams& out, const PolicyParams& params, std::int64_t instance_id,
                             std::span<const Token> tokens, std::span<const double> weights);

/// Argmax decoding (lowest symbol wins ties).
std::vector<Token> greedy_decode(const PolicyParams& params, std::int64_t instance_id);

/// Pretrained-policy stand-in: each instance's target symbols (then EOS) sit at
/// logit `prior`, every other logit is N(0, noise^2). Positions past EOS are
/// pure noise. prior = noise = 0 gives the uniform policy.
PolicyParams warm_start(const Dataset& dataset, double prior, double noise, std::uint64_t seed);

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_checkpoint(const std::filesystem::path& path);
std::string format_checkpoint(const PolicyParams& params);
PolicyParams parse_checkpoint(const std::string& text, const std::string& origin = "<memory>");

}  // namespace dopr
