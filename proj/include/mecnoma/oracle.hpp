#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mecnoma/closed_form.hpp"
#include "mecnoma/convex_core.hpp"
#include "mecnoma/linalg.hpp"
#include "mecnoma/model.hpp"
#include "mecnoma/types.hpp"

// Brute-force grid minimizers used as ground truth by the tests. Every grid
// is uniform over its box; `zoom_levels` > 0 re-grids a window of +-10
// spacings around the incumbent that many times.
namespace mecnoma::oracle {

inline constexpr double kMaxGridPoints = 1e8;

struct GridResult {
  double minimum = std::numeric_limits<double>::infinity();
  std::vector<double> argmin;
  double points = 0.0;  // points evaluated, across all zoom levels

  bool found() const { return std::isfinite(minimum); }
};

inline void check_grid_size(double points) {
  if (!(points <= kMaxGridPoints)) {
    throw Error(ErrorKind::invalid_value, "grid of " + std::to_string(points) + " points exceeds the 1e8 limit");
  }
}

/// Minimizes f over the box [lo, hi] (any dimension) on a uniform grid with
/// `res` points per axis; f returns +inf outside the feasible set.
template <typename F>
GridResult grid_minimize(F&& f, std::vector<double> lo, std::vector<double> hi, int res, int zoom_levels = 0) {
  const std::size_t dim = lo.size();
  if (res < 2) throw Error(ErrorKind::invalid_value, "grid resolution must be >= 2");
  check_grid_size(std::pow(static_cast<double>(res), static_cast<double>(dim)) * (zoom_levels + 1));
  GridResult out;
  std::vector<double> x(dim);
  std::vector<int> idx(dim);
  for (int level = 0; level <= zoom_levels; ++level) {
    std::vector<double> step(dim);
    for (std::size_t d = 0; d < dim; ++d) step[d] = (hi[d] - lo[d]) / (res - 1);
    std::fill(idx.begin(), idx.end(), 0);
    for (;;) {
      for (std::size_t d = 0; d < dim; ++d) x[d] = lo[d] + step[d] * idx[d];
      const double v = f(x);
      out.points += 1.0;
      if (v < out.minimum) {
        out.minimum = v;
        out.argmin = x;
      }
      std::size_t d = 0;
      while (d < dim && ++idx[d] == res) idx[d++] = 0;
      if (d == dim) break;
    }
    if (!out.found()) break;
    for (std::size_t d = 0; d < dim; ++d) {
      const double w = 10.0 * step[d];
      const double new_lo = std::max(lo[d], out.argmin[d] - w);
      const double new_hi = std::min(hi[d], out.argmin[d] + w);
      lo[d] = new_lo;
      hi[d] = new_hi;
    }
  }
  return out;
}

/// Omega(beta) over the admissible interval [floor, min(r_cap, 1)].
inline GridResult ratio_grid(const closed_form::RatioCoefficients& co, int points, int zoom_levels = 0) {
  const double hi = std::min(co.r_cap, 1.0);
  if (co.beta_floor > hi) throw Error(ErrorKind::instance_infeasible, "empty ratio interval");
  if (hi == co.beta_floor) {
    GridResult r;
    r.minimum = closed_form::omega(co, hi);
    r.argmin = {hi};
    r.points = 1;
    return r;
  }
  return grid_minimize([&](const std::vector<double>& b) { return closed_form::omega(co, b[0]); }, {co.beta_floor},
                       {hi}, points, zoom_levels);
}

/// The whitened first-user problem over the mode powers lambda:
/// minimize coeff * sum(lambda) / rate(lambda) subject to sum(lambda) <= p_max
/// and rate(lambda) >= r_min, rate in bits/s/Hz.
inline GridResult p61_grid(const std::vector<double>& sigma_sq, double coeff, double r_min, double p_max, int res,
                           int zoom_levels = 0) {
  const std::size_t n = sigma_sq.size();
  auto f = [&](const std::vector<double>& lam) {
    double total = 0.0;
    for (double l : lam) total += l;
    if (total > p_max) return std::numeric_limits<double>::infinity();
    const double rate = convex_core::mode_rate(sigma_sq, lam);
    if (rate < r_min || !(rate > 0.0)) return std::numeric_limits<double>::infinity();
    return coeff * total / rate;
  };
  return grid_minimize(f, std::vector<double>(n, 0.0), std::vector<double>(n, p_max), res, zoom_levels);
}

/// Grid version of the feasibility question: is there a lambda with
/// coeff * sum(lambda) - delta * rate(lambda) <= 0, rate >= r_min and
/// sum(lambda) <= p_max?
inline bool p81_grid_feasible(const std::vector<double>& sigma_sq, double delta, double coeff, double r_min,
                              double p_max, int res) {
  const std::size_t n = sigma_sq.size();
  check_grid_size(std::pow(static_cast<double>(res), static_cast<double>(n)));
  std::vector<int> idx(n, 0);
  std::vector<double> lam(n);
  const double step = p_max / (res - 1);
  for (;;) {
    double total = 0.0;
    for (std::size_t d = 0; d < n; ++d) {
      lam[d] = step * idx[d];
      total += lam[d];
    }
    if (total <= p_max) {
      const double rate = convex_core::mode_rate(sigma_sq, lam);
      if (rate >= r_min && coeff * total - delta * rate <= 0.0) return true;
    }
    std::size_t d = 0;
    while (d < n && ++idx[d] == res) idx[d++] = 0;
    if (d == n) break;
  }
  return false;
}

/// True P5 objective restricted to user j's covariance being s * I (n_tx = 1
/// gives the general scalar case): the offload energies of j and of every
/// user decoded before j, with all deadline rates enforced.
///
/// The surrogate's auxiliaries enter only through their optimal values
/// (delta = e xi^2 / R and xi^2 = S at zero penalty), so the grid over
/// (S, delta, xi) reduces exactly to this grid over S.
inline double p52_objective(std::size_t j, double s, const ChannelSet& ch, const PrecoderSet& pc,
                            const std::vector<double>& ratios, const std::vector<TaskSpec>& tasks,
                            const SystemParams& params) {
  const Eigen::Index n = ch.channels[j].cols();
  PrecoderSet work = pc;
  work.covariances[j] = (s / static_cast<double>(n)) * CMatrix::Identity(n, n);
  const auto pos = ch.positions();
  double acc = 0.0;
  for (std::size_t k = 0; k < ch.size(); ++k) {
    if (pos[k] > pos[j] || !(ratios[k] > 0.0)) continue;
    const double rate = model::achievable_rate(k, ch, work, params);
    const double need = ratios[k] * tasks[k].data_bits / tasks[k].deadline_s;
    if (!(rate > 0.0) || rate < need) return std::numeric_limits<double>::infinity();
    acc += ratios[k] * tasks[k].data_bits * linalg::trace_real(work.covariances[k]) / rate;
  }
  return acc;
}

inline GridResult scalar_p52_grid(std::size_t j, const ChannelSet& ch, const PrecoderSet& pc,
                                  const std::vector<double>& ratios, const std::vector<TaskSpec>& tasks,
                                  const SystemParams& params, int res, int zoom_levels = 0) {
  auto f = [&](const std::vector<double>& s) { return p52_objective(j, s[0], ch, pc, ratios, tasks, params); };
  return grid_minimize(f, {0.0}, {params.p_max_w}, res, zoom_levels);
}

/// Single user, single transmit antenna: total energy over (beta, power) with
/// the deadline-tight frequency.
inline double joint_n1_objective(double beta, double power, const CMatrix& h, const TaskSpec& task,
                                 const SystemParams& params) {
  if (beta < closed_form::beta_floor(task, params.f_max_hz) || beta > 1.0) return std::numeric_limits<double>::infinity();
  const double cl = task.cycles();
  double e = params.eta * cl * cl * cl * std::pow(1.0 - beta, 3) / (task.deadline_s * task.deadline_s);
  if (beta > 0.0) {
    const double gain = h.squaredNorm();
    const double rate = params.bandwidth_hz * std::log2(1.0 + gain * power / params.noise_power());
    if (!(rate > 0.0) || beta * task.data_bits / rate > task.deadline_s) return std::numeric_limits<double>::infinity();
    e += beta * task.data_bits * power / rate;
  }
  return e;
}

inline GridResult joint_n1_grid(const CMatrix& h, const TaskSpec& task, const SystemParams& params, int res,
                                int zoom_levels = 0) {
  if (h.cols() != 1) throw Error(ErrorKind::structural, "joint_n1_grid needs a single transmit antenna");
  auto f = [&](const std::vector<double>& x) { return joint_n1_objective(x[0], x[1], h, task, params); };
  return grid_minimize(f, {closed_form::beta_floor(task, params.f_max_hz), 0.0}, {1.0, params.p_max_w}, res,
                       zoom_levels);
}

}  // namespace mecnoma::oracle
