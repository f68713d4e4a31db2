#include "dopr/selector.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dopr/error.hpp"
#include "dopr/textio.hpp"

namespace dopr {

void SelectorConfig::validate() const {
  std::ostringstream err;
  if (!(rho1 > 0.0 && rho1 <= 1.0)) err << "rho1 must be in (0, 1]; ";
  if (!(rho2 > 0.0 && rho2 <= 1.0)) err << "rho2 must be in (0, 1]; ";
  if (!(lambda >= 0.0)) err << "lambda must be >= 0; ";
  if (!(sigmoid_eps > 0.0)) err << "sigmoid_eps must be > 0; ";
  if (!(entropy_ema_rate > 0.0 && entropy_ema_rate <= 1.0)) err << "entropy_ema_rate must be in (0, 1]; ";
  auto msg = err.str();
  if (!msg.empty()) throw ConfigError("invalid selector config: " + msg.substr(0, msg.size() - 2));
}

SampleStats update_stats(const SampleStats& stats, double reward, const SelectorConfig& cfg) {
  SampleStats out = stats;
  out.mu = cfg.rho1 * reward + (1.0 - cfg.rho1) * stats.mu;
  const double dev = reward - out.mu;
  out.var = cfg.rho2 * dev * dev + (1.0 - cfg.rho2) * stats.var;
  return out;
}

EntropyMoments batch_moments(std::span<const double> entropies) {
  if (entropies.empty()) throw std::invalid_argument("entropy batch is empty");
  // Exact zero spread for a constant batch, whatever the rounding of the sum.
  if (std::all_of(entropies.begin(), entropies.end(), [&](double h) { return h == entropies[0]; }))
    return {entropies[0], 0.0};
  const auto n = static_cast<double>(entropies.size());
  double mean = 0.0;
  for (double h : entropies) mean += h;
  mean /= n;
  double var = 0.0;
  for (double h : entropies) var += (h - mean) * (h - mean);
  return {mean, std::sqrt(var / n)};
}

double entropy_gate(double entropy, const EntropyMoments& moments, double sigmoid_eps) {
  const double z = (entropy - moments.mean) / (moments.sd + sigmoid_eps);
  return 1.0 / (1.0 + std::exp(-z));
}

double entropy_gate(double entropy, std::span<const double> batch_entropies, double sigmoid_eps) {
  return entropy_gate(entropy, batch_moments(batch_entropies), sigmoid_eps);
}

double ucb_term(const SampleStats& stats, double gate, std::int64_t step, const SelectorConfig& cfg) {
  if (step < 0) throw std::invalid_argument("step must be >= 0");
  switch (cfg.variant) {
    case SelectorVariant::VarianceOnly:
    case SelectorVariant::Random:
      return 0.0;
    case SelectorVariant::PlainUcb:
      gate = 1.0;
      break;
    case SelectorVariant::EmUcb:
      break;
  }
  const double bonus = std::sqrt(std::log(static_cast<double>(step) + 1.0) /
                                 (static_cast<double>(stats.count) + 1.0));
  return gate * bonus;
}

double acquisition_score(const SampleStats& stats, double ucb, const SelectorConfig& cfg, Rng& rng) {
  switch (cfg.variant) {
    case SelectorVariant::Random:
      return rng.uniform();
    case SelectorVariant::VarianceOnly:
      return std::sqrt(stats.var);
    case SelectorVariant::EmUcb:
    case SelectorVariant::PlainUcb:
      break;
  }
  return std::sqrt(stats.var) + cfg.lambda * ucb;
}

std::size_t argmax_first(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("argmax of empty batch");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

Selector::Selector(std::int64_t num_instances, SelectorConfig cfg)
    : cfg_(cfg), table_(static_cast<std::size_t>(num_instances)) {
  cfg_.validate();
}

void Selector::observe(std::int64_t id, double reward, double entropy) {
  auto& s = table_.at(static_cast<std::size_t>(id));
  s = update_stats(s, reward, cfg_);
  s.last_entropy = entropy;
}

Selection Selector::select(std::span<const std::int64_t> batch_ids, std::int64_t step, Rng& rng) {
  if (batch_ids.empty()) throw std::invalid_argument("cannot select from an empty batch");
  std::vector<double> entropies;
  entropies.reserve(batch_ids.size());
  for (auto id : batch_ids) entropies.push_back(stats(id).last_entropy);

  EntropyMoments moments = batch_moments(entropies);
  if (cfg_.entropy_norm == EntropyNorm::Ema) {
    if (!have_running_) {
      running_ = moments;
      have_running_ = true;
    } else {
      const double a = cfg_.entropy_ema_rate;
      running_.mean = a * moments.mean + (1.0 - a) * running_.mean;
      running_.sd = a * moments.sd + (1.0 - a) * running_.sd;
    }
    moments = running_;
  }

  Selection sel;
  for (std::size_t k = 0; k < batch_ids.size(); ++k) {
    const auto& s = stats(batch_ids[k]);
    const double gate = entropy_gate(entropies[k], moments, cfg_.sigmoid_eps);
    const double u = ucb_term(s, gate, step, cfg_);
    sel.gates.push_back(gate);
    sel.ucb.push_back(u);
    sel.scores.push_back(acquisition_score(s, u, cfg_, rng));
  }
  sel.position = argmax_first(sel.scores);
  sel.instance_id = batch_ids[sel.position];
  ++table_[static_cast<std::size_t>(sel.instance_id)].count;
  return sel;
}

std::string Selector::format_table() const {
  std::ostringstream out;
  out << "dopr-stats v1\n# dims num_instances=" << table_.size() << '\n';
  for (std::size_t i = 0; i < table_.size(); ++i) {
    const auto& s = table_[i];
    out << i << ' ' << textio::format_real(s.mu) << ' ' << textio::format_real(s.var) << ' '
        << s.count << ' ' << textio::format_real(s.last_entropy) << '\n';
  }
  return out.str();
}

void Selector::save_table(const std::filesystem::path& path) const {
  textio::write_atomic(path, format_table());
}

void Selector::parse_table(const std::string& text, const std::string& origin) {
  auto lines = textio::split_lines(text);
  if (lines.empty() || lines[0] != "dopr-stats v1")
    throw FormatError(origin + ":1: expected header 'dopr-stats v1'");
  if (lines.size() < 2 || lines[1] != "# dims num_instances=" + std::to_string(table_.size()))
    throw FormatError(origin + ":2: dims line does not match " + std::to_string(table_.size()) +
                      " instances");
  std::vector<SampleStats> parsed;
  for (std::size_t ln = 2; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto ctx = origin + ":" + std::to_string(ln + 1);
    auto f = textio::split_ws(lines[ln]);
    if (f.size() != 5) throw FormatError(ctx + ": expected 5 fields (id mu var n H)");
    if (textio::parse_int(f[0], ctx + ", field id") != static_cast<long long>(parsed.size()))
      throw FormatError(ctx + ": rows out of order");
    SampleStats s;
    s.mu = textio::parse_real(f[1], ctx + ", field mu");
    s.var = textio::parse_real(f[2], ctx + ", field var");
    s.count = textio::parse_int(f[3], ctx + ", field n");
    s.last_entropy = textio::parse_real(f[4], ctx + ", field H");
    if (s.var < 0.0 || s.count < 0) throw FormatError(ctx + ": negative variance or count");
    parsed.push_back(s);
  }
  if (parsed.size() != table_.size())
    throw FormatError(origin + ": expected " + std::to_string(table_.size()) + " rows");
  table_ = std::move(parsed);
}

}  // namespace dopr
