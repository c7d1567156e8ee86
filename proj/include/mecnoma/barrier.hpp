#pragma once

#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include <Eigen/Cholesky>

#include "mecnoma/types.hpp"

namespace mecnoma::barrier {

/// One convex inequality f(x) <= 0 evaluated at a point.
struct ConstraintValue {
  double value = 0.0;
  RVector grad;
  RMatrix hess;
};

/// Everything the barrier method needs at a point. `domain_*` is a
/// self-concordant barrier for the problem's cone (e.g. -ln det X) that is
/// never relaxed, with `domain_weight` its barrier parameter.
struct Evaluation {
  std::vector<ConstraintValue> constraints;
  double domain_value = 0.0;
  RVector domain_grad;
  RMatrix domain_hess;
  double domain_weight = 0.0;
};

/// A small dense convex program: minimize cost^T x subject to the evaluated
/// constraints, over the open domain where evaluate() returns a value.
template <typename P>
concept ConvexProgram = requires(const P& p, const RVector& x, bool derivatives) {
  { p.dim() } -> std::convertible_to<Eigen::Index>;
  { p.cost() } -> std::convertible_to<RVector>;
  { p.evaluate(x, derivatives) } -> std::same_as<std::optional<Evaluation>>;
};

struct Options {
  double gap_tol = 1e-9;         // relative duality-gap target
  double gap_abs_floor = 1e-14;  // absolute floor for the relative test
  double t_init = 1.0;
  double t_growth = 10.0;
  double newton_tol = 1e-11;     // half squared Newton decrement
  int max_newton = 200;
  int max_outer = 40;
};

struct Result {
  RVector x;
  double objective = 0.0;
  double gap = 0.0;
  int newton_steps = 0;
  bool converged = false;
};

namespace detail {

inline std::string dump(const RVector& x) {
  std::ostringstream os;
  os.precision(17);
  os << "[";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
  os << "]";
  return os.str();
}

/// Barrier objective t c^T x - sum ln(-f_i) + domain term; nullopt outside
/// the strict interior.
inline std::optional<double> barrier_value(const RVector& cost, double t, const RVector& x,
                                           const std::optional<Evaluation>& ev) {
  if (!ev) return std::nullopt;
  double acc = t * cost.dot(x) + ev->domain_value;
  for (const auto& c : ev->constraints) {
    if (!(c.value < 0.0)) return std::nullopt;
    acc -= std::log(-c.value);
  }
  if (!std::isfinite(acc)) return std::nullopt;
  return acc;
}

inline std::size_t barrier_count(const Evaluation& ev) { return ev.constraints.size(); }

template <ConvexProgram P>
int center(const P& prob, double t, RVector& x, const Options& opt) {
  const RVector cost = prob.cost();
  const Eigen::Index n = x.size();
  int steps = 0;
  for (; steps < opt.max_newton; ++steps) {
    auto ev = prob.evaluate(x, true);
    const auto f0 = barrier_value(cost, t, x, ev);
    if (!f0) throw Error(ErrorKind::numerical_failure, "barrier iterate left the interior: " + dump(x));
    RVector grad = t * cost + ev->domain_grad;
    RMatrix hess = ev->domain_hess;
    for (const auto& c : ev->constraints) {
      const double inv = -1.0 / c.value;
      grad.noalias() += inv * c.grad;
      hess.noalias() += (inv * inv) * c.grad * c.grad.transpose() + inv * c.hess;
    }
    Eigen::LDLT<RMatrix> ldlt(hess);
    RVector dx = ldlt.solve(-grad);
    if (ldlt.info() != Eigen::Success || !dx.allFinite() || grad.dot(dx) >= 0.0) {
      // Fall back to a diagonally regularized system.
      const double reg = 1e-12 * std::max(1.0, hess.diagonal().cwiseAbs().maxCoeff());
      Eigen::LLT<RMatrix> llt(hess + reg * RMatrix::Identity(n, n));
      dx = llt.solve(-grad);
      if (llt.info() != Eigen::Success || !dx.allFinite() || grad.dot(dx) >= 0.0) {
        throw Error(ErrorKind::numerical_failure, "Newton system is not positive definite at " + dump(x));
      }
    }
    const double decrement_sq = -grad.dot(dx);
    if (0.5 * decrement_sq <= opt.newton_tol) break;
    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      RVector trial = x + step * dx;
      const auto ft = barrier_value(cost, t, trial, prob.evaluate(trial, false));
      if (ft && *ft <= *f0 - 0.01 * step * decrement_sq) {
        x = std::move(trial);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    // Stop when the decrease is below the rounding level of the barrier value.
    if (!accepted || step * decrement_sq <= 1e-13 * std::max(1.0, std::abs(*f0))) break;
  }
  return steps;
}

}  // namespace detail

/// Log-barrier interior-point method from a strictly feasible start.
template <ConvexProgram P>
Result solve(const P& prob, RVector x, const Options& opt = {}) {
  auto ev = prob.evaluate(x, false);
  if (!detail::barrier_value(prob.cost(), 0.0, x, ev)) {
    throw Error(ErrorKind::surrogate_infeasible, "barrier start is not strictly feasible");
  }
  const double m = static_cast<double>(detail::barrier_count(*ev)) + ev->domain_weight;
  Result res;
  double t = opt.t_init;
  for (int outer = 0; outer < opt.max_outer; ++outer) {
    res.newton_steps += detail::center(prob, t, x, opt);
    const double obj = prob.cost().dot(x);
    res.gap = m / t;
    if (res.gap <= opt.gap_tol * std::max(std::abs(obj), opt.gap_abs_floor)) {
      res.converged = true;
      break;
    }
    t *= opt.t_growth;
  }
  res.objective = prob.cost().dot(x);
  res.x = std::move(x);
  return res;
}

/// Phase-I wrapper: minimize s subject to f_i(x) <= s, extra coordinate s
/// appended at the end.
template <ConvexProgram P>
class PhaseOne {
 public:
  explicit PhaseOne(const P& inner) : inner_(inner) {}

  Eigen::Index dim() const { return inner_.dim() + 1; }

  RVector cost() const {
    RVector c = RVector::Zero(dim());
    c(dim() - 1) = 1.0;
    return c;
  }

  std::optional<Evaluation> evaluate(const RVector& z, bool derivatives) const {
    const Eigen::Index n = inner_.dim();
    auto ev = inner_.evaluate(z.head(n), derivatives);
    if (!ev) return std::nullopt;
    const double s = z(n);
    Evaluation out;
    out.domain_value = ev->domain_value;
    out.domain_weight = ev->domain_weight;
    if (derivatives) {
      out.domain_grad = RVector::Zero(n + 1);
      out.domain_grad.head(n) = ev->domain_grad;
      out.domain_hess = RMatrix::Zero(n + 1, n + 1);
      out.domain_hess.topLeftCorner(n, n) = ev->domain_hess;
    }
    out.constraints.reserve(ev->constraints.size());
    for (auto& c : ev->constraints) {
      ConstraintValue cv;
      cv.value = c.value - s;
      if (derivatives) {
        cv.grad = RVector::Zero(n + 1);
        cv.grad.head(n) = c.grad;
        cv.grad(n) = -1.0;
        cv.hess = RMatrix::Zero(n + 1, n + 1);
        cv.hess.topLeftCorner(n, n) = c.hess;
      }
      out.constraints.push_back(std::move(cv));
    }
    return out;
  }

 private:
  const P& inner_;
};

/// Finds a strictly feasible point of `prob` starting from any point in its
/// domain. Returns nullopt when the problem has no strict interior.
template <ConvexProgram P>
std::optional<RVector> find_strictly_feasible(const P& prob, const RVector& x0, const Options& opt = {}) {
  auto ev = prob.evaluate(x0, false);
  if (!ev) return std::nullopt;
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& c : ev->constraints) worst = std::max(worst, c.value);
  if (worst < 0.0) return x0;

  PhaseOne<P> phase(prob);
  RVector z(x0.size() + 1);
  z.head(x0.size()) = x0;
  z(x0.size()) = worst + std::max(1.0, std::abs(worst));
  const double m = static_cast<double>(ev->constraints.size()) + ev->domain_weight;
  double t = opt.t_init;
  for (int outer = 0; outer < opt.max_outer; ++outer) {
    detail::center(phase, t, z, opt);
    const double s = z(x0.size());
    if (s < 0.0) return RVector(z.head(x0.size()));
    if (s - m / t > 0.0) return std::nullopt;  // lower bound on optimal s is positive
    if (m / t < 1e-12) break;
    t *= opt.t_growth;
  }
  return std::nullopt;
}

}  // namespace mecnoma::barrier
