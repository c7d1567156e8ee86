#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mecnoma/convex_core.hpp"
#include "mecnoma/linalg.hpp"
#include "mecnoma/model.hpp"
#include "mecnoma/surrogate.hpp"
#include "mecnoma/types.hpp"

namespace mecnoma::precoding {

struct Options {
  double outer_tol = 1e-4;   // relative objective decrease ending the sweeps
  int max_sweeps = 20;
  double sca_tol = 1e-4;
  int max_sca_iters = 30;
  double bisection_tol = 1e-6;
  double penalty_init = 10.0;  // in units of incoming energy per incoming power
  double penalty_growth = 5.0;
  int max_penalty_escalations = 6;
  double penalty_closure_tol = 1e-4;  // (tr S - xi^2) / tr S
  double kkt_tol = 1e-9;
  double feasibility_tol = 1e-9;      // relative, for accepting an update
};

/// Fixed inputs of the precoding subproblem.
struct Problem {
  const ChannelSet& channels;
  const std::vector<TaskSpec>& tasks;
  const SystemParams& params;
  std::vector<double> ratios;
};

struct PrecodingState {
  PrecoderSet covariances;
  std::vector<double> ratios;
  double objective = 0.0;  // sum of offload energies
  int sweep_count = 0;
  std::vector<double> trace;
  std::vector<std::string> warnings;
};

/// Sum over users of beta_k L_k tr(S_k) / R_k. Infinite when a user offloads
/// over a dead link.
inline double offload_objective(const Problem& pb, const PrecoderSet& pc) {
  double acc = 0.0;
  for (std::size_t k = 0; k < pb.channels.size(); ++k) {
    const double beta = pb.ratios[k];
    if (beta == 0.0) continue;
    const double rate = model::achievable_rate(k, pb.channels, pc, pb.params);
    if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
    acc += beta * pb.tasks[k].data_bits * linalg::trace_real(pc.covariances[k]) / rate;
  }
  return acc;
}

inline double rate_floor_bps(const Problem& pb, std::size_t k) {
  return pb.ratios[k] * pb.tasks[k].data_bits / pb.tasks[k].deadline_s;
}

/// Power budget and deadline rate for every user, with relative tolerance.
inline bool precoders_feasible(const Problem& pb, const PrecoderSet& pc, double tol) {
  for (std::size_t k = 0; k < pb.channels.size(); ++k) {
    if (linalg::trace_real(pc.covariances[k]) > pb.params.p_max_w * (1.0 + tol) + kPowerTol) return false;
    const double need = rate_floor_bps(pb, k);
    if (need > 0.0 && model::achievable_rate(k, pb.channels, pc, pb.params) < need * (1.0 - tol)) return false;
  }
  return true;
}

/// First-decoded user: whiten the interference, diagonalize and solve the
/// fractional power allocation over the eigenmodes by bisection.
struct P51Result {
  CMatrix covariance;
  double energy = 0.0;          // lambda-domain objective
  std::vector<double> lambda;
  std::vector<double> sigma_sq;
};

inline P51Result solve_p51_raw(std::size_t user, const Problem& pb, const PrecoderSet& pc, double bisection_tol) {
  const auto& task = pb.tasks[user];
  const double beta = pb.ratios[user];
  const Eigen::Index n = pb.channels.channels[user].cols();
  P51Result out;
  out.covariance = CMatrix::Zero(n, n);
  if (beta == 0.0) return out;
  const CMatrix q = model::interference_covariance(user, pb.channels, pc, pb.params.noise_power());
  const CMatrix a = convex_core::whiten(q);
  const convex_core::EigenChannel eig = convex_core::eigen_decompose(a, pb.channels.channels[user]);
  const double coeff = beta * task.data_bits / pb.params.bandwidth_hz;
  const double r_min = beta * task.data_bits / (task.deadline_s * pb.params.bandwidth_hz);
  convex_core::FractionalSolution sol;
  try {
    sol = convex_core::bisect_p61(eig.singular_values_sq, coeff, r_min, pb.params.p_max_w, bisection_tol);
  } catch (const Error& e) {
    throw Error(e.kind(), e.what(), user);
  }
  RVector lam(static_cast<Eigen::Index>(sol.lambda.size()));
  for (std::size_t i = 0; i < sol.lambda.size(); ++i) lam(static_cast<Eigen::Index>(i)) = sol.lambda[i];
  out.covariance = linalg::hermitize_psd(eig.right_vectors * lam.cast<Complex>().asDiagonal() * eig.right_vectors.adjoint());
  const double rate = convex_core::mode_rate(eig.singular_values_sq, sol.lambda);
  out.energy = rate > 0.0 ? coeff * lam.sum() / rate : 0.0;
  out.lambda = sol.lambda;
  out.sigma_sq = eig.singular_values_sq;
  return out;
}

/// Updates the covariance of `user` (which must have no users decoded before
/// it) and keeps the incoming one if the update does not help.
inline CMatrix solve_p51(std::size_t user, const Problem& pb, const PrecoderSet& pc, const Options& opt = {}) {
  P51Result r = solve_p51_raw(user, pb, pc, opt.bisection_tol);
  PrecoderSet cand = pc;
  cand.covariances[user] = r.covariance;
  const bool in_ok = precoders_feasible(pb, pc, opt.feasibility_tol);
  if (in_ok && offload_objective(pb, cand) > offload_objective(pb, pc)) return pc.covariances[user];
  return r.covariance;
}

/// g_{k,2}(S_j) = log2 det Q_k with S_j substituted.
inline double g2_exact(std::size_t j, std::size_t k, const CMatrix& s_j, const ChannelSet& ch, const PrecoderSet& pc,
                       double eps2) {
  PrecoderSet tmp = pc;
  tmp.covariances[j] = s_j;
  return model::interference_log2det(k, ch, tmp, eps2);
}

/// Tangent majorant of g_{k,2} in S_j, see convex_core::linearize_logdet.
inline convex_core::AffineMajorant linearize_g2(std::size_t j, std::size_t k, const CMatrix& anchor,
                                                const ChannelSet& ch, const PrecoderSet& pc, double eps2) {
  const auto pos = ch.positions();
  if (!(pos[k] < pos[j])) throw Error(ErrorKind::invalid_value, "linearize_g2: k must be decoded before j", k);
  const Eigen::Index n_rx = ch.channels[j].rows();
  CMatrix rest = eps2 * CMatrix::Identity(n_rx, n_rx);
  for (std::size_t q = pos[k] + 1; q < ch.decoding_order.size(); ++q) {
    const std::size_t i = ch.decoding_order[q];
    if (i == j) continue;
    rest.noalias() += ch.channels[i] * pc.covariances[i] * ch.channels[i].adjoint();
  }
  auto maj = convex_core::linearize_logdet(ch.channels[j], anchor, 0.5 * (rest + rest.adjoint()));
  maj.value_at_anchor = g2_exact(j, k, anchor, ch, pc, eps2);
  return maj;
}

struct P52Result {
  CMatrix covariance;
  int sca_iterations = 0;
  int escalations = 0;
  double closure = 0.0;  // (tr S - xi^2) / tr S at the last SCA exit
  bool accepted = false;
  std::vector<double> surrogate_trace;
};

/// Penalty-SCA update of user j (decoded after at least one other user).
inline P52Result solve_p52_detail(std::size_t j, const Problem& pb, const PrecoderSet& pc, const Options& opt = {}) {
  const auto pos = pb.channels.positions();
  if (pos[j] == 0) throw Error(ErrorKind::invalid_value, "P5-2 update needs a user decoded before j", j);
  P52Result out;
  const Eigen::Index n = pb.channels.channels[j].cols();
  if (pb.ratios[j] == 0.0) {
    out.covariance = CMatrix::Zero(n, n);
    out.accepted = true;
    return out;
  }

  const double in_objective = offload_objective(pb, pc);
  const bool in_feasible = precoders_feasible(pb, pc, opt.feasibility_tol) && std::isfinite(in_objective);

  CMatrix anchor = pc.covariances[j];
  if (!(linalg::trace_real(anchor) > 0.0)) {
    anchor = (pb.params.p_max_w / (2.0 * static_cast<double>(n))) * CMatrix::Identity(n, n);
  }
  // Best known point, kept if the SCA cannot start or does not improve on it.
  CMatrix best = pc.covariances[j];
  bool best_feasible = in_feasible;
  double best_objective = in_objective;

  // Start point: the user's own energy-optimal covariance under its current
  // interference, when it is feasible for everyone and lowers the objective.
  // The tangent majorant of the upstream rates is loose far from its anchor, so
  // the SCA alone moves the power only slowly across decades.
  try {
    PrecoderSet cand = pc;
    cand.covariances[j] = solve_p51_raw(j, pb, pc, opt.bisection_tol).covariance;
    const double obj = offload_objective(pb, cand);
    if (precoders_feasible(pb, cand, opt.feasibility_tol) && (!best_feasible || obj < best_objective) &&
        linalg::trace_real(cand.covariances[j]) > 0.0) {
      best = cand.covariances[j];
      best_feasible = true;
      best_objective = obj;
      anchor = best;
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::numerical_failure) throw;
  }
  // Real-units penalty: penalty_init x (start-point energy / start-point power).
  double energy_ref = best_objective;
  if (!(std::isfinite(energy_ref) && energy_ref > 0.0)) energy_ref = pb.tasks[j].deadline_s * pb.params.p_max_w;
  const double start_power = linalg::trace_real(anchor);
  const double power_ref = start_power > 0.0 ? start_power : pb.params.p_max_w;
  double penalty = opt.penalty_init * energy_ref / power_ref;

  double xi = std::sqrt(linalg::trace_real(anchor));
  PrecoderSet work = pc;
  double energy_scale = energy_ref;

  for (int level = 0; level <= opt.max_penalty_escalations; ++level) {
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opt.max_sca_iters; ++it) {
      const double power_scale = linalg::trace_real(anchor);
      work.covariances[j] = anchor;
      const double cur = offload_objective(pb, work);
      if (std::isfinite(cur) && cur > 0.0) energy_scale = cur;
      const double xi_anchor = std::max(xi, 1e-6 * std::sqrt(power_scale));
      auto sp = convex_core::make_surrogate(j, pb.channels, work, pb.ratios, pb.tasks, pb.params, anchor, xi_anchor,
                                            penalty, power_scale, energy_scale);
      convex_core::SurrogateSolution sol;
      try {
        sol = convex_core::solve_surrogate(sp, opt.kkt_tol);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::surrogate_infeasible) {
          if (best_feasible) {
            out.covariance = best;
            out.accepted = best_objective < in_objective || !in_feasible;
            return out;
          }
          throw Error(ErrorKind::deadline_unreachable, "no feasible covariance for user", j);
        }
        throw;
      }
      ++out.sca_iterations;
      out.surrogate_trace.push_back(sol.objective);
      anchor = sol.covariance;
      xi = sol.xi;
      if (!(linalg::trace_real(anchor) > 0.0)) break;
      const double change = std::abs(prev - sol.objective) / std::max(std::abs(sol.objective), 1e-300);
      prev = sol.objective;
      if (change <= opt.sca_tol) break;
    }
    const double tr = linalg::trace_real(anchor);
    out.closure = tr > 0.0 ? (tr - xi * xi) / tr : 0.0;
    if (out.closure <= opt.penalty_closure_tol || level == opt.max_penalty_escalations) break;
    penalty *= opt.penalty_growth;
    ++out.escalations;
  }

  PrecoderSet cand = pc;
  cand.covariances[j] = anchor;
  const bool cand_ok = precoders_feasible(pb, cand, opt.feasibility_tol);
  const double cand_obj = offload_objective(pb, cand);
  if (cand_ok && (!best_feasible || cand_obj <= best_objective)) {
    out.covariance = anchor;
    out.accepted = true;
  } else if (best_feasible) {
    out.covariance = best;
    out.accepted = best_objective < in_objective || !in_feasible;
  } else {
    throw Error(ErrorKind::deadline_unreachable, "SCA did not reach a feasible covariance", j);
  }
  return out;
}

inline CMatrix solve_p52(std::size_t j, const Problem& pb, const PrecoderSet& pc, const Options& opt = {}) {
  return solve_p52_detail(j, pb, pc, opt).covariance;
}

/// Alternating sweeps over users in decoding order until the offload energy
/// stops decreasing.
inline PrecodingState solve_p5(const Problem& pb, const PrecoderSet& initial, const Options& opt = {}) {
  PrecodingState st;
  st.covariances = initial;
  st.ratios = pb.ratios;
  const auto& order = pb.channels.decoding_order;
  double prev = offload_objective(pb, st.covariances);
  if (!precoders_feasible(pb, st.covariances, opt.feasibility_tol)) prev = std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    for (std::size_t p = 0; p < order.size(); ++p) {
      const std::size_t u = order[p];
      if (p == 0) {
        st.covariances.covariances[u] = solve_p51(u, pb, st.covariances, opt);
      } else {
        const P52Result r = solve_p52_detail(u, pb, st.covariances, opt);
        st.covariances.covariances[u] = r.covariance;
        if (!r.accepted && r.sca_iterations >= opt.max_sca_iters) {
          st.warnings.push_back("user " + std::to_string(u) + ": SCA update rejected by the descent safeguard");
        }
      }
    }
    ++st.sweep_count;
    const double obj = offload_objective(pb, st.covariances);
    st.trace.push_back(obj);
    const double rel = std::isfinite(prev) ? (prev - obj) / std::max(std::abs(prev), 1e-300) : 1.0;
    prev = obj;
    if (rel <= opt.outer_tol) break;
  }
  if (!precoders_feasible(pb, st.covariances, opt.feasibility_tol)) {
    for (std::size_t k = 0; k < pb.channels.size(); ++k) {
      const double need = rate_floor_bps(pb, k);
      if (need > 0.0 && model::achievable_rate(k, pb.channels, st.covariances, pb.params) < need * (1.0 - opt.feasibility_tol)) {
        throw Error(ErrorKind::deadline_unreachable, "deadline rate not met after precoding sweeps", k);
      }
    }
  }
  st.objective = prev;
  return st;
}

}  // namespace mecnoma::precoding
