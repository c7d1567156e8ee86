#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "mecnoma/types.hpp"

namespace mecnoma::linalg {

inline constexpr double kLn2 = std::numbers::ln2;

/// Natural log-determinant of a Hermitian positive definite matrix.
inline double logdet_hpd(const CMatrix& m) {
  Eigen::LLT<CMatrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::factorization, "matrix is not positive definite");
  }
  double acc = 0.0;
  const auto& l = llt.matrixLLT();
  for (Eigen::Index i = 0; i < m.rows(); ++i) acc += std::log(l(i, i).real());
  return 2.0 * acc;
}

inline double log2det_hpd(const CMatrix& m) { return logdet_hpd(m) / kLn2; }

/// F with F F^H = H S H^H, for PSD S (eigenvalues clamped at zero).
inline CMatrix gram_factor(const CMatrix& h, const CMatrix& s) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (s + s.adjoint()));
  const RVector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return h * es.eigenvectors() * root.cast<Complex>().asDiagonal();
}

/// Natural log det(eps2 I_n + F F^H) from the singular values of F / sqrt(eps2),
/// which keeps the noise-level eigenvalues exact when F F^H is much larger.
inline double logdet_noise_gram(double eps2, Eigen::Index n, const CMatrix& f) {
  double acc = static_cast<double>(n) * std::log(eps2);
  if (f.cols() == 0) return acc;
  const RVector sv = Eigen::JacobiSVD<CMatrix>(f / std::sqrt(eps2)).singularValues();
  for (Eigen::Index i = 0; i < sv.size(); ++i) acc += std::log1p(sv(i) * sv(i));
  return acc;
}

inline double trace_real(const CMatrix& m) { return m.trace().real(); }

/// Replaces `s` by its Hermitian part and clamps eigenvalues in [-kPsdTol, 0)
/// to zero. Anything more negative is rejected.
inline CMatrix hermitize_psd(const CMatrix& s) {
  CMatrix h = 0.5 * (s + s.adjoint());
  if (h.size() == 0) return h;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
  const double min_ev = es.eigenvalues().minCoeff();
  if (min_ev < -kPsdTol) {
    throw Error(ErrorKind::numerical_failure, "covariance update has a negative eigenvalue");
  }
  if (min_ev < 0.0) {
    RVector ev = es.eigenvalues().cwiseMax(0.0);
    h = es.eigenvectors() * ev.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
    h = 0.5 * (h + h.adjoint());
  }
  return h;
}

inline double min_eigenvalue(const CMatrix& h) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Real coordinates of an n x n Hermitian matrix: n diagonal entries followed
/// by (Re, Im) of each strictly-upper entry in row-major order. n^2 in total.
inline Eigen::Index hermitian_dim(Eigen::Index n) { return n * n; }

inline RVector hermitian_to_real(const CMatrix& h) {
  const Eigen::Index n = h.rows();
  RVector x(n * n);
  Eigen::Index idx = 0;
  for (Eigen::Index i = 0; i < n; ++i) x(idx++) = h(i, i).real();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      x(idx++) = h(i, j).real();
      x(idx++) = h(i, j).imag();
    }
  }
  return x;
}

inline CMatrix real_to_hermitian(const Eigen::Ref<const RVector>& x, Eigen::Index n) {
  CMatrix h = CMatrix::Zero(n, n);
  Eigen::Index idx = 0;
  for (Eigen::Index i = 0; i < n; ++i) h(i, i) = x(idx++);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Complex v(x(idx), x(idx + 1));
      idx += 2;
      h(i, j) = v;
      h(j, i) = std::conj(v);
    }
  }
  return h;
}

/// Basis matrix E_a of the real parametrization above.
inline CMatrix hermitian_basis(Eigen::Index a, Eigen::Index n) {
  RVector e = RVector::Zero(n * n);
  e(a) = 1.0;
  return real_to_hermitian(e, n);
}

/// Gradient of X -> Re tr(W X) in real coordinates, for Hermitian W.
inline RVector trace_gradient(const CMatrix& w) {
  const Eigen::Index n = w.rows();
  RVector g(n * n);
  Eigen::Index idx = 0;
  for (Eigen::Index i = 0; i < n; ++i) g(idx++) = w(i, i).real();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      g(idx++) = 2.0 * w(i, j).real();
      g(idx++) = 2.0 * w(i, j).imag();
    }
  }
  return g;
}

/// Matrix with entries Re tr(W E_a W E_b). This is the (negated) Hessian of
/// ln det(M + G X G^H) in real coordinates when W = G^H (M + G X G^H)^{-1} G.
inline RMatrix trace_quadratic(const CMatrix& w) {
  const Eigen::Index n = w.rows();
  const Eigen::Index m = n * n;
  std::vector<CMatrix> we(static_cast<std::size_t>(m));
  for (Eigen::Index a = 0; a < m; ++a) we[static_cast<std::size_t>(a)] = w * hermitian_basis(a, n);
  RMatrix out(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = a; b < m; ++b) {
      const CMatrix& pa = we[static_cast<std::size_t>(a)];
      const CMatrix& pb = we[static_cast<std::size_t>(b)];
      const double v = (pa.array() * pb.transpose().array()).sum().real();
      out(a, b) = v;
      out(b, a) = v;
    }
  }
  return out;
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
inline CMatrix inverse_hpd(const CMatrix& m) {
  Eigen::LLT<CMatrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::factorization, "matrix is not positive definite");
  }
  CMatrix inv = llt.solve(CMatrix::Identity(m.rows(), m.cols()));
  return 0.5 * (inv + inv.adjoint());
}

}  // namespace mecnoma::linalg
