#include "dopr/theory.hpp"

#include <cmath>
#include <sstream>

#include "dopr/error.hpp"
#include "dopr/rng.hpp"
#include "dopr/textio.hpp"

namespace dopr::theory {

ToyObjective ToyObjective::quadratic(std::size_t dim, double c, double noise_std) {
  ToyObjective obj;
  obj.theta_star.assign(dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) obj.theta_star[i] = 0.5 * static_cast<double>(i);
  obj.curvature = c;
  obj.smoothness = c / 2.0;
  obj.pl_constant = c;
  obj.noise_std = noise_std;
  return obj;
}

double ToyObjective::gap(std::span<const double> theta) const {
  double sq = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double d = theta[i] - theta_star[i];
    sq += d * d;
  }
  return 0.25 * curvature * sq;
}

double ToyObjective::value(std::span<const double> theta) const { return j_star - gap(theta); }

std::vector<double> ToyObjective::gradient(std::span<const double> theta) const {
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) g[i] = -0.5 * curvature * (theta[i] - theta_star[i]);
  return g;
}

std::vector<double> point_with_gap(const ToyObjective& obj, double gap) {
  auto theta = obj.theta_star;
  theta[0] += std::sqrt(4.0 * gap / obj.curvature);
  return theta;
}

double contraction_rate(double alpha, double pl_constant) { return alpha * pl_constant / 2.0; }

namespace {

// One repeat's gap sequence, t = 0..steps.
void run_repeat(const ToyObjective& obj, std::span<const double> theta0, double alpha,
                std::int64_t steps, std::uint64_t seed, double* gaps) {
  std::vector<double> theta(theta0.begin(), theta0.end());
  Rng rng(seed);
  const double coord_std = obj.dim() ? obj.noise_std / std::sqrt(static_cast<double>(obj.dim())) : 0.0;
  for (std::int64_t t = 0; t <= steps; ++t) {
    gaps[t] = obj.gap(theta);
    if (t == steps) break;
    const auto g = obj.gradient(theta);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double noise = coord_std > 0.0 ? coord_std * rng.normal() : 0.0;
      theta[i] += alpha * (g[i] + noise);
    }
  }
}

}  // namespace

Trajectory sgd_trajectory(const ToyObjective& obj, std::span<const double> theta0, double alpha,
                          std::int64_t steps, std::int64_t repeats, std::uint64_t seed,
                          Execution exec) {
  if (!(1.0 - obj.smoothness * alpha / 2.0 >= 0.5)) {
    std::ostringstream msg;
    msg << "step size violates 1 - L*alpha/2 >= 1/2 (L=" << obj.smoothness << ", alpha=" << alpha
        << ", 1 - L*alpha/2 = " << 1.0 - obj.smoothness * alpha / 2.0 << ")";
    throw ConfigError(msg.str());
  }
  if (steps < 0 || repeats < 1) throw ConfigError("steps must be >= 0 and repeats >= 1");
  if (theta0.size() != obj.dim()) throw ConfigError("theta0 dimension mismatch");

  const auto width = static_cast<std::size_t>(steps + 1);
  std::vector<double> gaps(static_cast<std::size_t>(repeats) * width);
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < repeats; ++r)
      run_repeat(obj, theta0, alpha, steps, derive_seed(seed, r),
                 gaps.data() + static_cast<std::size_t>(r) * width);
  } else {
    for (std::int64_t r = 0; r < repeats; ++r)
      run_repeat(obj, theta0, alpha, steps, derive_seed(seed, r),
                 gaps.data() + static_cast<std::size_t>(r) * width);
  }

  Trajectory traj;
  traj.repeats = repeats;
  traj.mean_gap.assign(width, 0.0);
  traj.std_err.assign(width, 0.0);
  const auto n = static_cast<double>(repeats);
  for (std::size_t t = 0; t < width; ++t) {
    double sum = 0.0;
    for (std::int64_t r = 0; r < repeats; ++r) sum += gaps[static_cast<std::size_t>(r) * width + t];
    const double mean = sum / n;
    double ss = 0.0;
    for (std::int64_t r = 0; r < repeats; ++r) {
      const double d = gaps[static_cast<std::size_t>(r) * width + t] - mean;
      ss += d * d;
    }
    traj.mean_gap[t] = mean;
    traj.std_err[t] = repeats > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  }
  return traj;
}

bool noise_condition_holds(const ToyObjective& obj, double alpha, double epsilon_prime) {
  const double eta = contraction_rate(alpha, obj.pl_constant);
  const double lhs = obj.smoothness * alpha * alpha * obj.noise_std * obj.noise_std / 2.0;
  const double rhs = eta * epsilon_prime / 2.0;
  // Relative slack so that boundary_noise_std() itself qualifies after rounding.
  return lhs <= rhs * (1.0 + 1e-12);
}

double boundary_noise_std(const ToyObjective& obj, double alpha, double epsilon_prime) {
  const double eta = contraction_rate(alpha, obj.pl_constant);
  return std::sqrt(eta * epsilon_prime / (obj.smoothness * alpha * alpha));
}

RecurrenceCheck verify_recurrence(const ToyObjective& obj, double alpha, const Trajectory& traj,
                                  double epsilon_prime) {
  RecurrenceCheck check;
  check.eta = contraction_rate(alpha, obj.pl_constant);
  check.noise_condition_ok = noise_condition_holds(obj, alpha, epsilon_prime);
  const double gap0 = traj.mean_gap.front();
  check.worst_excess = -INFINITY;
  for (std::size_t t = 0; t < traj.mean_gap.size(); ++t) {
    const double bound = std::pow(1.0 - check.eta, static_cast<double>(t)) * gap0 + epsilon_prime / 2.0;
    check.bound.push_back(bound);
    check.worst_excess = std::max(check.worst_excess, traj.mean_gap[t] - 3.0 * traj.std_err[t] - bound);
  }
  check.passed = check.noise_condition_ok && check.worst_excess <= 0.0;
  return check;
}

std::optional<std::int64_t> steps_to_gap(const Trajectory& traj, double epsilon_prime) {
  for (std::size_t t = 0; t < traj.mean_gap.size(); ++t)
    if (traj.mean_gap[t] <= epsilon_prime) return static_cast<std::int64_t>(t);
  return std::nullopt;
}

std::int64_t predicted_steps(double epsilon, double epsilon_prime, double eta) {
  if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("eta must be in (0, 1)");
  const double n = (std::log(epsilon_prime / 2.0) - std::log(epsilon)) / std::log(1.0 - eta);
  return n <= 0.0 ? 0 : static_cast<std::int64_t>(std::ceil(n));
}

ScalingFit log_scaling(const ToyObjective& obj, double epsilon, double alpha,
                       std::span<const double> epsilon_primes) {
  auto noiseless = obj;
  noiseless.noise_std = 0.0;
  const double eta = contraction_rate(alpha, obj.pl_constant);
  ScalingFit fit;
  std::int64_t horizon = 0;
  for (double e : epsilon_primes) horizon = std::max(horizon, predicted_steps(epsilon, e, eta));
  const auto theta0 = point_with_gap(noiseless, epsilon);
  const auto traj = sgd_trajectory(noiseless, theta0, alpha, horizon + 1, 1, 0, Execution::Serial);
  for (double e : epsilon_primes) {
    const auto n_obs = steps_to_gap(traj, e);
    if (!n_obs) throw ConfigError("trajectory did not reach eps'; sweep is inconclusive");
    fit.log_ratios.push_back(std::log(epsilon / e));
    fit.steps.push_back(static_cast<double>(*n_obs));
    if (*n_obs > predicted_steps(epsilon, e, eta)) fit.dominated = false;
  }
  const auto n = static_cast<double>(fit.steps.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < fit.steps.size(); ++i) {
    mx += fit.log_ratios[i];
    my += fit.steps[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < fit.steps.size(); ++i) {
    const double dx = fit.log_ratios[i] - mx;
    const double dy = fit.steps[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = (sxx > 0.0 && syy > 0.0) ? (sxy * sxy) / (sxx * syy) : 0.0;
  return fit;
}

PlSmoothCheck verify_pl_and_smooth(const ToyObjective& obj, std::int64_t samples, double radius,
                                   std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x91));
  const auto d = obj.dim();
  auto ball_point = [&] {
    std::vector<double> dir(d);
    double norm = 0.0;
    for (auto& x : dir) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
    for (std::size_t i = 0; i < d; ++i) dir[i] = obj.theta_star[i] + r * dir[i] / norm;
    return dir;
  };

  PlSmoothCheck check;
  for (std::int64_t s = 0; s < samples; ++s) {
    const auto a = ball_point();
    const auto b = ball_point();
    const auto ga = obj.gradient(a);
    double inner = 0.0, dist2 = 0.0, grad2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      inner += ga[i] * (b[i] - a[i]);
      dist2 += (b[i] - a[i]) * (b[i] - a[i]);
      grad2 += ga[i] * ga[i];
    }
    const double ja = obj.value(a);
    const double jb = obj.value(b);
    // Equality holds for the quadratic with the true L, so allow rounding.
    const double rhs = ja + inner - 0.5 * obj.smoothness * dist2;
    const double tol = 1e-12 * (1.0 + std::abs(ja) + std::abs(inner) + dist2);
    if (jb < rhs - tol) ++check.smooth_violations;

    const double gap = obj.j_star - ja;
    const double pl_rhs = obj.pl_constant * gap;
    if (grad2 < pl_rhs - 1e-12 * (1.0 + pl_rhs)) ++check.pl_violations;
    check.max_pl_identity_error =
        std::max(check.max_pl_identity_error, std::abs(grad2 - pl_rhs) / std::max(1.0, pl_rhs));
  }
  return check;
}

BoundReport bound_report(const ToyObjective& obj, double epsilon, double epsilon_prime, double alpha,
                         std::int64_t steps, std::int64_t repeats, std::uint64_t seed,
                         Execution exec) {
  BoundReport rep;
  rep.epsilon = epsilon;
  rep.epsilon_prime = epsilon_prime;
  rep.alpha = alpha;
  rep.eta = contraction_rate(alpha, obj.pl_constant);
  rep.noise_std = obj.noise_std;
  const auto theta0 = point_with_gap(obj, epsilon);
  rep.trajectory = sgd_trajectory(obj, theta0, alpha, steps, repeats, seed, exec);
  rep.recurrence = verify_recurrence(obj, alpha, rep.trajectory, epsilon_prime);
  rep.steps_observed = steps_to_gap(rep.trajectory, epsilon_prime);
  rep.steps_predicted = predicted_steps(epsilon, epsilon_prime, rep.eta);
  return rep;
}

std::string format_report(const BoundReport& r) {
  using textio::format_real;
  std::ostringstream out;
  out << "epsilon: " << format_real(r.epsilon) << '\n'
      << "epsilon_prime: " << format_real(r.epsilon_prime) << '\n'
      << "alpha: " << format_real(r.alpha) << '\n'
      << "eta: " << format_real(r.eta) << '\n'
      << "noise_std: " << format_real(r.noise_std) << '\n'
      << "repeats: " << r.trajectory.repeats << '\n'
      << "steps_observed: " << (r.steps_observed ? std::to_string(*r.steps_observed) : "inconclusive") << '\n'
      << "steps_predicted: " << r.steps_predicted << '\n'
      << "noise_condition: " << (r.recurrence.noise_condition_ok ? "ok" : "violated") << '\n'
      << "recurrence_bound: " << (r.recurrence.passed ? "pass" : "fail") << '\n'
      << "worst_excess: " << format_real(r.recurrence.worst_excess) << '\n'
      << "trajectory: t mean_gap std_err bound\n";
  for (std::size_t t = 0; t < r.trajectory.mean_gap.size(); ++t)
    out << "  " << t << ' ' << format_real(r.trajectory.mean_gap[t]) << ' '
        << format_real(r.trajectory.std_err[t]) << ' ' << format_real(r.recurrence.bound[t]) << '\n';
  return out.str();
}

}  // namespace dopr::theory
