#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/SVD>

#include "mecnoma/linalg.hpp"
#include "mecnoma/types.hpp"

namespace mecnoma::convex_core {

/// Whitening factor A with A^H A = Q^{-1}, taken as the inverse Cholesky
/// factor of Q.
inline CMatrix whiten(const CMatrix& q) {
  if (q.rows() != q.cols()) throw Error(ErrorKind::structural, "whiten: matrix is not square");
  if ((q - q.adjoint()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, q.cwiseAbs().maxCoeff())) {
    throw Error(ErrorKind::factorization, "whiten: matrix is not Hermitian");
  }
  Eigen::LLT<CMatrix> llt(0.5 * (q + q.adjoint()));
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::factorization, "whiten: matrix is not positive definite");
  CMatrix l = llt.matrixL();
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i).real() > 0.0)) throw Error(ErrorKind::factorization, "whiten: singular matrix");
  }
  CMatrix eye = CMatrix::Identity(q.rows(), q.cols());
  return l.triangularView<Eigen::Lower>().solve(eye);
}

struct EigenChannel {
  std::vector<double> singular_values_sq;  // descending, length n_tx
  CMatrix right_vectors;                   // n_tx x n_tx unitary
};

/// SVD of the whitened channel A H. Squared singular values are padded with
/// zeros up to n_tx when n_rx < n_tx.
inline EigenChannel eigen_decompose(const CMatrix& whitener, const CMatrix& channel) {
  if (whitener.cols() != channel.rows()) throw Error(ErrorKind::structural, "eigen_decompose: shape mismatch");
  const CMatrix ah = whitener * channel;
  Eigen::JacobiSVD<CMatrix> svd(ah, Eigen::ComputeFullV);
  EigenChannel out;
  const auto n_tx = static_cast<std::size_t>(channel.cols());
  out.singular_values_sq.assign(n_tx, 0.0);
  const auto& sv = svd.singularValues();
  for (Eigen::Index i = 0; i < sv.size(); ++i) out.singular_values_sq[static_cast<std::size_t>(i)] = sv(i) * sv(i);
  out.right_vectors = svd.matrixV();
  return out;
}

/// sum_i log2(1 + lambda_i sigma_i^2)
inline double mode_rate(const std::vector<double>& sigma_sq, const std::vector<double>& lambda) {
  double acc = 0.0;
  for (std::size_t i = 0; i < sigma_sq.size(); ++i) acc += std::log1p(lambda[i] * sigma_sq[i]);
  return acc / linalg::kLn2;
}

struct WaterFill {
  std::vector<double> lambda;
  double water_level = 0.0;
  double rate = 0.0;  // bits/s/Hz
};

/// Rate-maximizing power split over parallel modes with total power p_total.
inline WaterFill waterfill_max_rate(const std::vector<double>& sigma_sq, double p_total) {
  if (p_total < 0.0) throw Error(ErrorKind::invalid_value, "waterfill: negative power");
  WaterFill out;
  out.lambda.assign(sigma_sq.size(), 0.0);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < sigma_sq.size(); ++i) {
    if (sigma_sq[i] > 0.0) idx.push_back(i);
  }
  if (idx.empty() || p_total == 0.0) {
    out.water_level = idx.empty() ? 0.0 : 1.0 / *std::max_element(sigma_sq.begin(), sigma_sq.end());
    return out;
  }
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return sigma_sq[a] > sigma_sq[b]; });
  double inv_sum = 0.0;
  double level = 0.0;
  std::size_t active = 0;
  for (std::size_t m = 0; m < idx.size(); ++m) {
    const double inv = 1.0 / sigma_sq[idx[m]];
    const double candidate = (p_total + inv_sum + inv) / static_cast<double>(m + 1);
    if (m > 0 && candidate <= inv) break;
    inv_sum += inv;
    level = candidate;
    active = m + 1;
  }
  for (std::size_t m = 0; m < active; ++m) {
    out.lambda[idx[m]] = std::max(0.0, level - 1.0 / sigma_sq[idx[m]]);
  }
  out.water_level = level;
  out.rate = mode_rate(sigma_sq, out.lambda);
  return out;
}

struct FeasibilityResult {
  bool feasible = false;
  std::vector<double> lambda;  // witness when feasible
};

/// Level-set test for the fractional power-allocation problem: is there a
/// lambda >= 0 with sum(lambda) <= p_max, rate >= r_min and
/// (coeff / delta) sum(lambda) <= rate? Reduced to a 1-D search over the
/// total power p of the concave gap R*(p) - max(r_min, coeff p / delta).
inline FeasibilityResult p81_feasible(const std::vector<double>& sigma_sq, double delta, double coeff, double r_min,
                                      double p_max) {
  if (!(delta > 0.0)) throw Error(ErrorKind::invalid_value, "p81_feasible: delta must be > 0");
  const double slope = coeff / delta;
  auto gap = [&](double p) { return waterfill_max_rate(sigma_sq, p).rate - std::max(r_min, slope * p); };

  double best_p = 0.0;
  double best_gap = gap(0.0);
  const double g_top = gap(p_max);
  if (best_gap < 0.0 && g_top > best_gap) {
    best_gap = g_top;
    best_p = p_max;
  }
  if (best_gap < 0.0) {
    constexpr double kInvPhi = 0.6180339887498949;
    double lo = 0.0;
    double hi = p_max;
    double x1 = hi - kInvPhi * (hi - lo);
    double x2 = lo + kInvPhi * (hi - lo);
    double g1 = gap(x1);
    double g2 = gap(x2);
    for (int it = 0; it < 400 && (hi - lo) > 1e-10 * std::max(std::min(x1, x2), 1e-300); ++it) {
      if (g1 >= 0.0 || g2 >= 0.0) break;
      if (g1 < g2) {
        lo = x1;
        x1 = x2;
        g1 = g2;
        x2 = lo + kInvPhi * (hi - lo);
        g2 = gap(x2);
      } else {
        hi = x2;
        x2 = x1;
        g2 = g1;
        x1 = hi - kInvPhi * (hi - lo);
        g1 = gap(x1);
      }
    }
    if (g1 > best_gap) {
      best_gap = g1;
      best_p = x1;
    }
    if (g2 > best_gap) {
      best_gap = g2;
      best_p = x2;
    }
  }
  FeasibilityResult out;
  out.feasible = best_gap >= 0.0;
  if (out.feasible) out.lambda = waterfill_max_rate(sigma_sq, best_p).lambda;
  return out;
}

struct FractionalSolution {
  std::vector<double> lambda;
  double delta = 0.0;  // energy level, coeff * sum(lambda) / rate
  int iterations = 0;
};

inline constexpr double kDeltaBracketGrowth = 1152921504606846976.0;  // 2^60

/// Minimizes coeff * sum(lambda) / rate subject to the power budget and the
/// rate floor, by bisection on the level delta with p81_feasible as oracle.
inline FractionalSolution bisect_p61(const std::vector<double>& sigma_sq, double coeff, double r_min, double p_max,
                                     double tol = 1e-6) {
  FractionalSolution out;
  out.lambda.assign(sigma_sq.size(), 0.0);
  if (coeff == 0.0 && r_min <= 0.0) return out;

  const double ceiling = waterfill_max_rate(sigma_sq, p_max).rate;
  if (!(ceiling > 0.0) || r_min > ceiling) {
    throw Error(ErrorKind::rate_constraint_infeasible, "deadline rate unreachable at maximum power");
  }
  if (coeff == 0.0) {
    // Rate floor only, no energy weight: least power meeting r_min.
    double lo = 0.0, hi = p_max;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (waterfill_max_rate(sigma_sq, mid).rate >= r_min ? hi : lo) = mid;
    }
    out.lambda = waterfill_max_rate(sigma_sq, hi).lambda;
    return out;
  }

  const double initial_hi = coeff * p_max / std::max(r_min, 1e-12);
  double hi = initial_hi;
  FeasibilityResult at_hi = p81_feasible(sigma_sq, hi, coeff, r_min, p_max);
  while (!at_hi.feasible) {
    hi *= 2.0;
    if (hi > initial_hi * kDeltaBracketGrowth) {
      throw Error(ErrorKind::rate_constraint_infeasible, "no feasible energy level below bracket cap");
    }
    at_hi = p81_feasible(sigma_sq, hi, coeff, r_min, p_max);
  }
  double lo = 0.0;
  int it = 0;
  while (hi - lo > tol * hi && it < 400) {
    const double mid = 0.5 * (lo + hi);
    FeasibilityResult r = p81_feasible(sigma_sq, mid, coeff, r_min, p_max);
    if (r.feasible) {
      hi = mid;
      at_hi = std::move(r);
    } else {
      lo = mid;
    }
    ++it;
  }
  out.lambda = at_hi.lambda;
  out.delta = hi;
  out.iterations = it;
  return out;
}

}  // namespace mecnoma::convex_core
