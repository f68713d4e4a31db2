#pragma once

// Synthetic exact-match tasks with a binary verifier.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dopr {

using Token = std::int32_t;

struct TaskSpec {
  std::int64_t num_instances = 64;
  std::int32_t vocab_size = 8;  ///< V; the end-of-sequence id is V itself.
  std::int32_t max_len = 5;
  std::int32_t min_len = 2;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;

  Token eos() const { return vocab_size; }
  /// Symbols the policy samples from: V tokens plus end-of-sequence.
  std::int32_t num_symbols() const { return vocab_size + 1; }
  /// Longest response the sampler may emit (T_max + 1).
  std::int32_t max_response() const { return max_len + 1; }

  bool operator==(const TaskSpec&) const = default;
};

struct Instance {
  std::int64_t id = 0;
  std::vector<Token> target;

  bool operator==(const Instance&) const = default;
};

struct Dataset {
  TaskSpec spec;
  std::vector<Instance> instances;

  std::size_t size() const { return instances.size(); }
  const Instance& at(std::int64_t id) const { return instances.at(static_cast<std::size_t>(id)); }

  bool operator==(const Dataset&) const = default;
};

Dataset generate_dataset(const TaskSpec& spec);

/// Reward is 1 iff the tokens before the first EOS equal the target and the
/// EOS appears within T_max+1 emitted tokens.
double verify(const TaskSpec& spec, const Instance& instance, std::span<const Token> response);

/// Partial-credit variant: fraction of aligned positions that match, divided
/// by the longer of target and decoded body. Equals verify() on exact matches
/// and is strictly below 1 otherwise.
double verify_partial(const TaskSpec& spec, const Instance& instance,
                      std::span<const Token> response);

enum class RewardMode { Binary, Partial };

inline double score(const TaskSpec& spec, const Instance& instance, std::span<const Token> response,
                    RewardMode mode) {
  return mode == RewardMode::Binary ? verify(spec, instance, response)
                                    : verify_partial(spec, instance, response);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

std::string format_dataset(const Dataset& dataset);
Dataset parse_dataset(const std::string& text, const std::string& origin = "<memory>");

}  // namespace dopr
