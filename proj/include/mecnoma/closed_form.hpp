#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "mecnoma/types.hpp"

namespace mecnoma::closed_form {

/// Coefficients of the per-user ratio objective a (1 - beta)^3 + b beta on
/// the interval [beta_floor, min(r_cap, 1)].
struct RatioCoefficients {
  double a = 1.0;           // eta C^3 L^3 / T^2
  double b = 0.0;           // tr(S) L / R, +inf on a dead link
  double r_cap = 1.0;       // R T / L
  double beta_floor = 0.0;  // smallest ratio keeping f <= f_max

  void validate() const {
    if (!(a > 0.0) || !(b >= 0.0) || !(r_cap >= 0.0) || !(beta_floor >= 0.0 && beta_floor <= 1.0)) {
      throw Error(ErrorKind::invalid_value, "ratio coefficients out of range");
    }
  }
};

struct RatioResult {
  double beta = 0.0;
  bool no_offload_link = false;
};

inline double omega(const RatioCoefficients& co, double beta) {
  const double r = 1.0 - beta;
  return co.a * r * r * r + co.b * beta;
}

/// Smallest offloading ratio for which the deadline-tight local frequency
/// stays within f_max.
inline double beta_floor(const TaskSpec& task, double f_max) {
  return std::max(0.0, 1.0 - f_max * task.deadline_s / task.cycles());
}

/// Local CPU frequency that finishes the local share exactly at the deadline.
inline double optimal_frequency(double beta, const TaskSpec& task, double f_max) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorKind::invalid_value, "ratio outside [0,1]");
  if (beta == 1.0) return 0.0;
  const double f = (1.0 - beta) * task.cycles() / task.deadline_s;
  if (f > f_max) {
    throw Error(ErrorKind::frequency_cap_exceeded, "required local frequency exceeds f_max", std::nullopt,
                beta_floor(task, f_max));
  }
  return f;
}

/// Builds ratio coefficients from the current rate and transmit power.
inline RatioCoefficients ratio_coefficients(const TaskSpec& task, double eta, double f_max, double power_w,
                                            double rate_bps) {
  RatioCoefficients co;
  const double cl = task.cycles();
  co.a = eta * cl * cl * cl / (task.deadline_s * task.deadline_s);
  co.b = rate_bps > 0.0 ? power_w * task.data_bits / rate_bps : std::numeric_limits<double>::infinity();
  co.r_cap = std::max(0.0, rate_bps * task.deadline_s / task.data_bits);
  co.beta_floor = beta_floor(task, f_max);
  return co;
}

/// Minimizer of the convex ratio objective over the feasible interval.
/// The stationary point 1 - sqrt(b / 3a) is clamped into
/// [beta_floor, min(r_cap, 1)].
inline RatioResult optimal_ratio(const RatioCoefficients& co) {
  co.validate();
  const double hi = std::min(co.r_cap, 1.0);
  if (co.beta_floor > hi) {
    throw Error(ErrorKind::instance_infeasible, "ratio interval is empty (deadline needs more offloading than the link supports)");
  }
  if (!std::isfinite(co.b)) return {co.beta_floor, true};
  const double stationary = 1.0 - std::sqrt(co.b / (3.0 * co.a));
  return {std::clamp(stationary, co.beta_floor, hi), false};
}

}  // namespace mecnoma::closed_form
