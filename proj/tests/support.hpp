#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mecnoma/mecnoma.hpp"

namespace testing_support {

using namespace mecnoma;

inline SystemParams reference_params(std::size_t n_tx = 2, std::size_t n_rx = 4) {
  SystemParams p;
  p.n_users = 2;
  p.n_tx = n_tx;
  p.n_rx = n_rx;
  p.bandwidth_hz = 25e6;
  p.noise_density_w_per_hz = std::pow(10.0, -17.4) / 1000.0;
  p.p_max_w = 1.0;
  p.f_max_hz = 2e9;
  p.eta = 1e-32;
  return p;
}

inline TaskSpec reference_task(double deadline_s = 0.5) {
  TaskSpec t;
  t.data_bits = 4e7;
  t.cycles_per_bit = 200.0;
  t.deadline_s = deadline_s;
  return t;
}

inline constexpr double kReferenceVariance = 1e-5;

/// Two-user scenario with seeded Rayleigh channels, identity decoding order.
inline optimizer::Scenario reference_scenario(std::uint64_t seed, std::size_t trial, double deadline_s = 0.5,
                                          std::size_t n_tx = 2, std::size_t n_rx = 4) {
  optimizer::Scenario sc;
  sc.params = reference_params(n_tx, n_rx);
  sc.tasks = {reference_task(deadline_s), reference_task(deadline_s)};
  sc.channels = harness::generate_channels(harness::child_seed(seed, trial), kReferenceVariance, 2, n_rx, n_tx);
  return sc;
}

inline CMatrix random_complex(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale / std::sqrt(2.0));
  CMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = Complex(g(rng), g(rng));
  }
  return m;
}

/// Random Hermitian positive definite matrix with eigenvalues in [lo, hi].
inline CMatrix random_pd(std::mt19937_64& rng, Eigen::Index n, double lo = 0.1, double hi = 2.0) {
  Eigen::HouseholderQR<CMatrix> qr(random_complex(rng, n, n));
  const CMatrix u = qr.householderQ();
  std::uniform_real_distribution<double> ev(lo, hi);
  RVector d(n);
  for (Eigen::Index i = 0; i < n; ++i) d(i) = ev(rng);
  CMatrix m = u * d.cast<Complex>().asDiagonal() * u.adjoint();
  return 0.5 * (m + m.adjoint());
}

/// Random PSD matrix with the given trace.
inline CMatrix random_psd_trace(std::mt19937_64& rng, Eigen::Index n, double trace) {
  CMatrix m = random_pd(rng, n, 0.01, 1.0);
  return m * (trace / m.trace().real());
}

/// Nearest PSD matrix: Hermitian part with negative eigenvalues set to zero.
inline CMatrix project_psd(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (m + m.adjoint()));
  const RVector ev = es.eigenvalues().cwiseMax(0.0);
  CMatrix p = es.eigenvectors() * ev.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
  return 0.5 * (p + p.adjoint());
}

/// Independent log2 det for Hermitian PD matrices via eigenvalues.
inline double log2det_eig(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) acc += std::log2(es.eigenvalues()(i));
  return acc;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace testing_support
