#pragma once

// Empirical check of the linear-convergence bound for noisy gradient ascent on
// smooth objectives satisfying the Polyak-Lojasiewicz inequality.
//
// The toy family is the concave quadratic
//     J(theta) = J* - (c/4) |theta - theta*|^2,
// for which |grad J|^2 = c (J* - J) holds with equality and J is (c/2)-smooth.
// With step alpha and eta = alpha c / 2 the expected gap obeys
//     E[gap_t] <= (1 - eta)^t gap_0 + eps'/2
// whenever L alpha^2 delta^2 / 2 <= eta eps' / 2, so reaching eps' takes at most
//     ceil((ln(eps'/2) - ln eps) / ln(1 - eta))
// steps.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dopr/kernels.hpp"

namespace dopr::theory {

struct ToyObjective {
  std::vector<double> theta_star;
  double curvature = 2.0;   ///< c in J = J* - (c/4)|theta - theta*|^2
  double smoothness = 1.0;  ///< Declared L (true value is c/2).
  double pl_constant = 2.0; ///< Declared PL constant (true value is c).
  double noise_std = 0.0;   ///< delta: total std of the gradient noise.
  double j_star = 1.0;

  /// Quadratic with declared constants equal to the true ones.
  static ToyObjective quadratic(std::size_t dim, double c, double noise_std);

  std::size_t dim() const { return theta_star.size(); }
  double value(std::span<const double> theta) const;
  std::vector<double> gradient(std::span<const double> theta) const;
  /// (c/4)|theta - theta*|^2, computed directly rather than as J* - J.
  double gap(std::span<const double> theta) const;
};

/// Point at distance sqrt(4 gap / c) from the optimum along the first axis.
std::vector<double> point_with_gap(const ToyObjective& obj, double gap);

double contraction_rate(double alpha, double pl_constant);  ///< eta = alpha c / 2

struct Trajectory {
  std::vector<double> mean_gap;  ///< E[gap_t] over repeats, t = 0..steps
  std::vector<double> std_err;   ///< Standard error of each mean (0 for one repeat).
  std::int64_t repeats = 0;
};

/// theta_{t+1} = theta_t + alpha (grad J(theta_t) + noise), noise isotropic
/// Gaussian with total variance delta^2. Throws ConfigError when
/// 1 - L alpha / 2 < 1/2.
Trajectory sgd_trajectory(const ToyObjective& obj, std::span<const double> theta0, double alpha,
                          std::int64_t steps, std::int64_t repeats, std::uint64_t seed,
                          Execution exec = Execution::Parallel);

struct RecurrenceCheck {
  bool noise_condition_ok = false;  ///< When false the check is vacuous.
  bool passed = false;
  double eta = 0.0;
  std::vector<double> bound;  ///< (1 - eta)^t gap_0 + eps'/2
  /// max_t (mean_gap_t - 3 se_t - bound_t); <= 0 when the bound holds.
  double worst_excess = 0.0;
};

bool noise_condition_holds(const ToyObjective& obj, double alpha, double epsilon_prime);
/// Largest delta satisfying the noise condition.
double boundary_noise_std(const ToyObjective& obj, double alpha, double epsilon_prime);

RecurrenceCheck verify_recurrence(const ToyObjective& obj, double alpha, const Trajectory& traj,
                                  double epsilon_prime);

/// First t with mean_gap_t <= eps', or nullopt if never reached.
std::optional<std::int64_t> steps_to_gap(const Trajectory& traj, double epsilon_prime);
std::int64_t predicted_steps(double epsilon, double epsilon_prime, double eta);

struct ScalingFit {
  std::vector<double> log_ratios;  ///< ln(eps / eps')
  std::vector<double> steps;       ///< N_obs
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  bool dominated = true;  ///< N_obs <= N_pred at every grid point
};

/// Noiseless sweep of eps' over `epsilon_primes` starting from gap `epsilon`.
ScalingFit log_scaling(const ToyObjective& obj, double epsilon, double alpha,
                       std::span<const double> epsilon_primes);

struct PlSmoothCheck {
  std::int64_t smooth_violations = 0;
  std::int64_t pl_violations = 0;
  double max_pl_identity_error = 0.0;  ///< max | |grad|^2 - c gap | / max(1, c gap)
  bool passed() const { return smooth_violations == 0 && pl_violations == 0; }
};

/// Samples pairs uniformly in a ball of `radius` around theta* and checks the
/// smoothness lower bound and the PL inequality with the declared constants.
PlSmoothCheck verify_pl_and_smooth(const ToyObjective& obj, std::int64_t samples, double radius,
                                   std::uint64_t seed);

struct BoundReport {
  double epsilon = 0.0;
  double epsilon_prime = 0.0;
  double alpha = 0.0;
  double eta = 0.0;
  double noise_std = 0.0;
  std::optional<std::int64_t> steps_observed;
  std::int64_t steps_predicted = 0;
  Trajectory trajectory;
  RecurrenceCheck recurrence;
};

BoundReport bound_report(const ToyObjective& obj, double epsilon, double epsilon_prime, double alpha,
                         std::int64_t steps, std::int64_t repeats, std::uint64_t seed,
                         Execution exec = Execution::Parallel);

/// "key: value" lines; the trajectory is one `t mean se bound` line per step.
std::string format_report(const BoundReport& report);

}  // namespace dopr::theory
