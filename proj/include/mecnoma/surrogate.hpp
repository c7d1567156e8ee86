#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "mecnoma/barrier.hpp"
#include "mecnoma/convex_core.hpp"
#include "mecnoma/linalg.hpp"
#include "mecnoma/model.hpp"
#include "mecnoma/types.hpp"

namespace mecnoma::convex_core {

/// ln det(I + G X G^H) for a fixed gain G, evaluated through the thin SVD
/// G = U diag(sqrt(gamma)) P^H so that large gains do not cancel:
///   ln det(I + G X G^H) = sum ln gamma + ln det(diag(1/gamma) + P^H X P)
///   G^H (I + G X G^H)^{-1} G = P (diag(1/gamma) + P^H X P)^{-1} P^H.
class GainLogDet {
 public:
  GainLogDet() = default;

  explicit GainLogDet(const CMatrix& g) {
    n_ = g.cols();
    Eigen::JacobiSVD<CMatrix> svd(g, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double top = sv.size() > 0 ? sv(0) : 0.0;
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv(rank) > top * 1e-12 && sv(rank) > 0.0) ++rank;
    basis_ = svd.matrixV().leftCols(rank);
    inv_gain_ = RVector(rank);
    log_gain_ = 0.0;
    for (Eigen::Index i = 0; i < rank; ++i) {
      inv_gain_(i) = 1.0 / (sv(i) * sv(i));
      log_gain_ += 2.0 * std::log(sv(i));
    }
  }

  Eigen::Index rank() const { return basis_.cols(); }

  /// Natural log det(I + G X G^H) for PSD X.
  double logdet(const CMatrix& x) const {
    if (rank() == 0) return 0.0;
    return log_gain_ + linalg::logdet_hpd(core(x));
  }

  /// G^H (I + G X G^H)^{-1} G.
  CMatrix weight(const CMatrix& x) const {
    if (rank() == 0) return CMatrix::Zero(n_, n_);
    CMatrix w = basis_ * linalg::inverse_hpd(core(x)) * basis_.adjoint();
    return 0.5 * (w + w.adjoint());
  }

 private:
  CMatrix core(const CMatrix& x) const {
    CMatrix c = basis_.adjoint() * x * basis_;
    c.diagonal() += inv_gain_.cast<Complex>();
    return 0.5 * (c + c.adjoint());
  }

  Eigen::Index n_ = 0;
  CMatrix basis_;
  RVector inv_gain_;
  double log_gain_ = 0.0;
};

/// Tangent majorant of g_{k,2}(S_j) = log2|Q_{k,-j} + H_j S_j H_j^H| at an
/// anchor: value(S) = value_at_anchor + Re tr(gradient (S - anchor)).
struct AffineMajorant {
  double value_at_anchor = 0.0;  // log2 det at the anchor
  CMatrix gradient;              // H_j^H (H_j anchor H_j^H + Q_{k,-j})^{-1} H_j / ln 2
  CMatrix anchor;

  double operator()(const CMatrix& s) const {
    return value_at_anchor + (gradient * (s - anchor)).trace().real();
  }
};

inline AffineMajorant linearize_logdet(const CMatrix& h_j, const CMatrix& anchor, const CMatrix& q_minus_j) {
  const GainLogDet gain(whiten(q_minus_j) * h_j);
  AffineMajorant out;
  out.value_at_anchor = linalg::log2det_hpd(q_minus_j) + gain.logdet(anchor) / linalg::kLn2;
  out.gradient = gain.weight(anchor) / linalg::kLn2;
  out.anchor = anchor;
  return out;
}

/// Data of one upstream user k (decoded before j) whose rate depends on S_j.
struct UpstreamTerm {
  std::size_t user = 0;
  double energy_coeff = 0.0;  // beta_k L_k tr(S_k) / B; zero drops the epigraph term
  double rate_floor = 0.0;    // beta_k L_k / (T_k B)
  CMatrix signal_plus_rest;   // H_k S_k H_k^H + Q_{k,-j}
  CMatrix rest;               // Q_{k,-j}
};

/// One convexified P5-2 subproblem for user j at a linearization point.
struct SurrogateProblem {
  std::size_t user = 0;
  CMatrix channel;             // H_j
  CMatrix own_interference;    // Q_j
  double energy_coeff = 0.0;   // beta_j L_j / B
  double rate_floor = 0.0;     // beta_j L_j / (T_j B)
  double p_max = 0.0;
  std::vector<std::size_t> upstream_set;  // every user decoded before j
  std::vector<UpstreamTerm> upstream;     // the ones with beta_k > 0
  CMatrix anchor;                         // S_j^[n]
  double xi_anchor = 0.0;
  double penalty = 0.0;                   // J per W
  double power_scale = 1.0;
  double energy_scale = 1.0;

  void validate() const {
    if (upstream_set.empty()) {
      throw Error(ErrorKind::invalid_value, "surrogate requires at least one user decoded before j", user);
    }
    if (!(penalty > 0.0)) throw Error(ErrorKind::invalid_value, "penalty must be > 0", user);
    if (linalg::trace_real(anchor) > p_max * (1.0 + 1e-9)) {
      throw Error(ErrorKind::invalid_value, "linearization point violates the power budget", user);
    }
    if (!(power_scale > 0.0) || !(energy_scale > 0.0)) {
      throw Error(ErrorKind::invalid_value, "surrogate scales must be > 0", user);
    }
  }
};

/// Builds the surrogate for user j from the current precoders.
inline SurrogateProblem make_surrogate(std::size_t j, const ChannelSet& ch, const PrecoderSet& pc,
                                       const std::vector<double>& ratios, const std::vector<TaskSpec>& tasks,
                                       const SystemParams& params, const CMatrix& anchor, double xi_anchor,
                                       double penalty, double power_scale, double energy_scale) {
  SurrogateProblem sp;
  sp.user = j;
  sp.channel = ch.channels[j];
  const double eps2 = params.noise_power();
  sp.own_interference = model::interference_covariance(j, ch, pc, eps2);
  sp.energy_coeff = ratios[j] * tasks[j].data_bits / params.bandwidth_hz;
  sp.rate_floor = ratios[j] * tasks[j].data_bits / (tasks[j].deadline_s * params.bandwidth_hz);
  sp.p_max = params.p_max_w;
  sp.anchor = anchor;
  sp.xi_anchor = xi_anchor;
  sp.penalty = penalty;
  sp.power_scale = power_scale;
  sp.energy_scale = energy_scale;

  const auto pos = ch.positions();
  const Eigen::Index n_rx = ch.channels[j].rows();
  for (std::size_t p = 0; p < pos[j]; ++p) {
    const std::size_t k = ch.decoding_order[p];
    sp.upstream_set.push_back(k);
    if (!(ratios[k] > 0.0)) continue;
    UpstreamTerm term;
    term.user = k;
    term.energy_coeff = ratios[k] * tasks[k].data_bits * linalg::trace_real(pc.covariances[k]) / params.bandwidth_hz;
    term.rate_floor = ratios[k] * tasks[k].data_bits / (tasks[k].deadline_s * params.bandwidth_hz);
    CMatrix rest = eps2 * CMatrix::Identity(n_rx, n_rx);
    for (std::size_t q = p + 1; q < ch.decoding_order.size(); ++q) {
      const std::size_t i = ch.decoding_order[q];
      if (i == j) continue;
      rest.noalias() += ch.channels[i] * pc.covariances[i] * ch.channels[i].adjoint();
    }
    term.rest = 0.5 * (rest + rest.adjoint());
    CMatrix sig = term.rest + ch.channels[k] * pc.covariances[k] * ch.channels[k].adjoint();
    term.signal_plus_rest = 0.5 * (sig + sig.adjoint());
    sp.upstream.push_back(std::move(term));
  }
  return sp;
}

struct SurrogateSolution {
  CMatrix covariance;          // S_j
  double delta = 0.0;          // J
  double xi = 0.0;             // sqrt(W)
  std::vector<double> epigraph;  // t_k in J, aligned with SurrogateProblem::upstream
  double objective = 0.0;      // surrogate objective in J, including the penalty constant
  double gap = 0.0;
  int newton_steps = 0;
};

namespace detail {

/// log2 det(I + G X G^H) and, optionally, its real-coordinate derivatives.
struct LogDetTerm {
  GainLogDet gain;

  double value(const CMatrix& x) const { return gain.logdet(x) / linalg::kLn2; }

  void derivatives(const CMatrix& x, RVector& grad, RMatrix& hess) const {
    const CMatrix w = gain.weight(x);
    grad = linalg::trace_gradient(w) / linalg::kLn2;
    hess = -linalg::trace_quadratic(w) / linalg::kLn2;
  }
};

}  // namespace detail

/// The surrogate in normalized real coordinates
/// z = [X (n^2), d, xi, tau_1..tau_m] with S = power_scale X,
/// delta = energy_scale d, xi_real = sqrt(power_scale) xi and
/// t_k = energy_scale tau_k.
class SurrogateProgram {
 public:
  explicit SurrogateProgram(const SurrogateProblem& sp) : sp_(sp) {
    n_ = sp.channel.cols();
    const double root_p = std::sqrt(sp.power_scale);
    own_.gain = GainLogDet(whiten(sp.own_interference) * sp.channel * root_p);
    own_epi_ = sp.energy_coeff * sp.power_scale / sp.energy_scale;
    own_floor_ = sp.rate_floor;
    penalty_ = sp.penalty * sp.power_scale / sp.energy_scale;
    xi0_ = std::max(sp.xi_anchor / root_p, 1e-6);
    p_cap_ = sp.p_max / sp.power_scale;
    for (const auto& u : sp.upstream) {
      Up up;
      up.signal.gain = GainLogDet(whiten(u.signal_plus_rest) * sp.channel * root_p);
      const AffineMajorant maj = linearize_logdet(sp.channel, sp.anchor, u.rest);
      up.lin_grad = linalg::trace_gradient(maj.gradient) * sp.power_scale;
      up.constant = linalg::log2det_hpd(u.signal_plus_rest) - maj.value_at_anchor +
                    (maj.gradient * sp.anchor).trace().real();
      up.epi = u.energy_coeff / sp.energy_scale;
      up.floor = u.rate_floor;
      up.tau_index = -1;
      if (up.epi > 0.0) up.tau_index = static_cast<int>(n_tau_++);
      ups_.push_back(std::move(up));
    }
  }

  Eigen::Index dim() const { return n_ * n_ + 2 + static_cast<Eigen::Index>(n_tau_); }
  Eigen::Index d_index() const { return n_ * n_; }
  Eigen::Index xi_index() const { return n_ * n_ + 1; }
  Eigen::Index tau_index(std::size_t t) const { return n_ * n_ + 2 + static_cast<Eigen::Index>(t); }

  RVector cost() const {
    RVector c = RVector::Zero(dim());
    for (Eigen::Index i = 0; i < n_; ++i) c(i) = penalty_;
    c(d_index()) = 1.0;
    c(xi_index()) = -2.0 * penalty_ * xi0_;
    for (std::size_t t = 0; t < n_tau_; ++t) c(tau_index(t)) = 1.0;
    return c;
  }

  /// Surrogate objective in normalized units, including the constant term.
  double objective(const RVector& z) const { return cost().dot(z) + penalty_ * xi0_ * xi0_; }

  CMatrix covariance(const RVector& z) const { return linalg::real_to_hermitian(z.head(n_ * n_), n_); }

  double upstream_rate(std::size_t u, const CMatrix& x) const {
    return ups_[u].signal.value(x) - ups_[u].lin_grad.dot(linalg::hermitian_to_real(x)) + ups_[u].constant;
  }

  std::optional<barrier::Evaluation> evaluate(const RVector& z, bool derivatives) const {
    const Eigen::Index nn = n_ * n_;
    const Eigen::Index dim_z = dim();
    const CMatrix x = covariance(z);
    const double d = z(d_index());
    const double xi = z(xi_index());
    if (!(d > 0.0) || !z.allFinite()) return std::nullopt;
    for (std::size_t t = 0; t < n_tau_; ++t) {
      if (!(z(tau_index(t)) > 0.0)) return std::nullopt;
    }
    Eigen::LLT<CMatrix> llt_x(x);
    if (llt_x.info() != Eigen::Success) return std::nullopt;

    barrier::Evaluation ev;
    double logdet_x = 0.0;
    for (Eigen::Index i = 0; i < n_; ++i) logdet_x += std::log(llt_x.matrixLLT()(i, i).real());
    ev.domain_value = -2.0 * logdet_x;
    ev.domain_weight = static_cast<double>(n_);

    auto make = [&](double value) {
      barrier::ConstraintValue c;
      c.value = value;
      if (derivatives) {
        c.grad = RVector::Zero(dim_z);
        c.hess = RMatrix::Zero(dim_z, dim_z);
      }
      return c;
    };

    const double tr = x.trace().real();
    RVector tr_grad = RVector::Zero(nn);
    tr_grad.head(n_).setOnes();

    // Own rate and its derivatives.
    double own_rate = 0.0;
    RVector own_g;
    RMatrix own_h;
    try {
      own_rate = own_.value(x);
      if (derivatives) own_.derivatives(x, own_g, own_h);
    } catch (const Error&) {
      return std::nullopt;
    }

    // Power budget.
    {
      auto c = make(tr - p_cap_);
      if (derivatives) c.grad.head(nn) = tr_grad;
      ev.constraints.push_back(std::move(c));
    }
    // Own deadline.
    if (own_floor_ > 0.0) {
      auto c = make(own_floor_ - own_rate);
      if (derivatives) {
        c.grad.head(nn) = -own_g;
        c.hess.topLeftCorner(nn, nn) = -own_h;
      }
      ev.constraints.push_back(std::move(c));
    }
    // Own energy epigraph: e xi^2 / d <= rate.
    {
      auto c = make(own_epi_ * xi * xi / d - own_rate);
      if (derivatives) {
        c.grad.head(nn) = -own_g;
        c.hess.topLeftCorner(nn, nn) = -own_h;
        const Eigen::Index id = d_index();
        const Eigen::Index ix = xi_index();
        c.grad(ix) = 2.0 * own_epi_ * xi / d;
        c.grad(id) = -own_epi_ * xi * xi / (d * d);
        c.hess(ix, ix) = 2.0 * own_epi_ / d;
        c.hess(ix, id) = c.hess(id, ix) = -2.0 * own_epi_ * xi / (d * d);
        c.hess(id, id) = 2.0 * own_epi_ * xi * xi / (d * d * d);
      }
      ev.constraints.push_back(std::move(c));
    }
    // Upstream users.
    const RVector xr = linalg::hermitian_to_real(x);
    for (const auto& up : ups_) {
      double rate = 0.0;
      RVector g;
      RMatrix h;
      try {
        rate = up.signal.value(x) - up.lin_grad.dot(xr) + up.constant;
        if (derivatives) {
          up.signal.derivatives(x, g, h);
          g -= up.lin_grad;
        }
      } catch (const Error&) {
        return std::nullopt;
      }
      if (up.floor > 0.0) {
        auto c = make(up.floor - rate);
        if (derivatives) {
          c.grad.head(nn) = -g;
          c.hess.topLeftCorner(nn, nn) = -h;
        }
        ev.constraints.push_back(std::move(c));
      }
      if (up.tau_index >= 0) {
        const Eigen::Index it = tau_index(static_cast<std::size_t>(up.tau_index));
        const double tau = z(it);
        auto c = make(up.epi / tau - rate);
        if (derivatives) {
          c.grad.head(nn) = -g;
          c.hess.topLeftCorner(nn, nn) = -h;
          c.grad(it) = -up.epi / (tau * tau);
          c.hess(it, it) = 2.0 * up.epi / (tau * tau * tau);
        }
        ev.constraints.push_back(std::move(c));
      }
    }
    // xi^2 <= tr X.
    {
      auto c = make(xi * xi - tr);
      if (derivatives) {
        c.grad.head(nn) = -tr_grad;
        c.grad(xi_index()) = 2.0 * xi;
        c.hess(xi_index(), xi_index()) = 2.0;
      }
      ev.constraints.push_back(std::move(c));
    }
    if (derivatives) {
      const CMatrix xinv = linalg::inverse_hpd(x);
      ev.domain_grad = RVector::Zero(dim_z);
      ev.domain_hess = RMatrix::Zero(dim_z, dim_z);
      ev.domain_grad.head(nn) = -linalg::trace_gradient(xinv);
      ev.domain_hess.topLeftCorner(nn, nn) = linalg::trace_quadratic(xinv);
    }
    return ev;
  }

  /// A start point in the domain built from a candidate covariance (in real
  /// units). Epigraph variables are set with a 2x margin where possible.
  RVector start_point(const CMatrix& s) const {
    RVector z = RVector::Zero(dim());
    const CMatrix x = s / sp_.power_scale;
    z.head(n_ * n_) = linalg::hermitian_to_real(x);
    const double tr = x.trace().real();
    const double xi = std::sqrt(std::max(tr, 0.0)) * 0.99;
    z(xi_index()) = xi;
    double own_rate = 0.0;
    try {
      own_rate = own_.value(x);
    } catch (const Error&) {
    }
    z(d_index()) = own_rate > 0.0 ? std::max(2.0 * own_epi_ * xi * xi / own_rate, 1e-12) : 1.0;
    for (std::size_t u = 0; u < ups_.size(); ++u) {
      if (ups_[u].tau_index < 0) continue;
      double rate = 0.0;
      try {
        rate = upstream_rate(u, x);
      } catch (const Error&) {
      }
      z(tau_index(static_cast<std::size_t>(ups_[u].tau_index))) = rate > 0.0 ? 2.0 * ups_[u].epi / rate : 1.0;
    }
    return z;
  }

  bool strictly_feasible(const RVector& z) const {
    auto ev = evaluate(z, false);
    if (!ev) return false;
    for (const auto& c : ev->constraints) {
      if (!(c.value < 0.0)) return false;
    }
    return true;
  }

  std::size_t tau_count() const { return n_tau_; }
  int upstream_tau(std::size_t u) const { return ups_[u].tau_index; }

 private:
  struct Up {
    detail::LogDetTerm signal;
    RVector lin_grad;
    double constant = 0.0;
    double epi = 0.0;
    double floor = 0.0;
    int tau_index = -1;
  };

  const SurrogateProblem& sp_;
  Eigen::Index n_ = 0;
  detail::LogDetTerm own_;
  double own_epi_ = 0.0;
  double own_floor_ = 0.0;
  double penalty_ = 0.0;
  double xi0_ = 0.0;
  double p_cap_ = 0.0;
  std::vector<Up> ups_;
  std::size_t n_tau_ = 0;
};

/// Solves the convex surrogate by a log-barrier interior-point method over the
/// real parametrization of S_j, with a relative duality-gap target `tol`.
inline SurrogateSolution solve_surrogate(const SurrogateProblem& sp, double tol = 1e-9) {
  sp.validate();
  SurrogateProgram prog(sp);
  const Eigen::Index n = sp.channel.cols();

  // Strictly feasible start: the anchor nudged into the PD cone, then the
  // shrinking scaled-identity sequence, then a phase-I search.
  std::optional<RVector> start;
  const double anchor_tr = linalg::trace_real(sp.anchor);
  const CMatrix eye = CMatrix::Identity(n, n);
  const CMatrix nudged = 0.999 * sp.anchor + 0.001 * (std::max(anchor_tr, 1e-300) / static_cast<double>(n)) * eye;
  RVector z0 = prog.start_point(nudged);
  if (prog.strictly_feasible(z0)) start = z0;
  // An anchor on a binding rate floor becomes interior when scaled up slightly.
  for (double grow : {1e-4, 1e-3, 1e-2}) {
    if (start || linalg::trace_real(nudged) * (1.0 + grow) >= sp.p_max) break;
    RVector z = prog.start_point((1.0 + grow) * nudged);
    if (prog.strictly_feasible(z)) start = z;
  }
  if (!start) {
    double scale = sp.p_max / (2.0 * static_cast<double>(n));
    for (int i = 0; i < 80 && !start; ++i, scale *= 0.5) {
      RVector z = prog.start_point(scale * eye);
      if (prog.strictly_feasible(z)) start = z;
    }
  }
  if (!start && prog.evaluate(z0, false)) start = barrier::find_strictly_feasible(prog, z0);
  if (!start) throw Error(ErrorKind::surrogate_infeasible, "no strictly feasible surrogate point", sp.user);

  barrier::Options opt;
  opt.gap_tol = tol;
  const barrier::Result res = barrier::solve(prog, *start, opt);

  SurrogateSolution out;
  out.covariance = linalg::hermitize_psd(sp.power_scale * prog.covariance(res.x));
  out.delta = sp.energy_scale * res.x(prog.d_index());
  out.xi = std::sqrt(sp.power_scale) * res.x(prog.xi_index());
  out.epigraph.assign(sp.upstream.size(), 0.0);
  for (std::size_t u = 0; u < sp.upstream.size(); ++u) {
    const int t = prog.upstream_tau(u);
    if (t >= 0) out.epigraph[u] = sp.energy_scale * res.x(prog.tau_index(static_cast<std::size_t>(t)));
  }
  out.objective = sp.energy_scale * prog.objective(res.x);
  out.gap = res.gap;
  out.newton_steps = res.newton_steps;
  return out;
}

}  // namespace mecnoma::convex_core
