#pragma once

#include <limits>
#include <string>
#include <vector>

#include "mecnoma/linalg.hpp"
#include "mecnoma/types.hpp"

namespace mecnoma::model {

namespace detail {
inline void check_pairing(std::size_t k, const ChannelSet& ch, const PrecoderSet& pc) {
  if (ch.size() != pc.size() || ch.decoding_order.size() != ch.size()) {
    throw Error(ErrorKind::structural, "channel and covariance counts differ");
  }
  if (k >= ch.size()) throw Error(ErrorKind::structural, "user index out of range", k);
  for (std::size_t i = 0; i < ch.size(); ++i) {
    if (ch.channels[i].cols() != pc.covariances[i].rows() || pc.covariances[i].rows() != pc.covariances[i].cols()) {
      throw Error(ErrorKind::structural, "channel/covariance dimension mismatch", i);
    }
  }
}
}  // namespace detail

/// Q_k = eps2 I + sum of H_i S_i H_i^H over users decoded after k.
inline CMatrix interference_covariance(std::size_t k, const ChannelSet& ch, const PrecoderSet& pc, double eps2) {
  detail::check_pairing(k, ch, pc);
  const Eigen::Index n_rx = ch.channels[k].rows();
  CMatrix q = eps2 * CMatrix::Identity(n_rx, n_rx);
  const auto pos = ch.positions();
  for (std::size_t p = pos[k] + 1; p < ch.decoding_order.size(); ++p) {
    const std::size_t i = ch.decoding_order[p];
    q.noalias() += ch.channels[i] * pc.covariances[i] * ch.channels[i].adjoint();
  }
  return 0.5 * (q + q.adjoint());
}

/// log2 det Q_k evaluated through linalg::logdet_noise_gram.
inline double interference_log2det(std::size_t k, const ChannelSet& ch, const PrecoderSet& pc, double eps2) {
  detail::check_pairing(k, ch, pc);
  const Eigen::Index n_rx = ch.channels[k].rows();
  const auto pos = ch.positions();
  std::vector<CMatrix> parts;
  Eigen::Index cols = 0;
  for (std::size_t p = pos[k] + 1; p < ch.decoding_order.size(); ++p) {
    const std::size_t i = ch.decoding_order[p];
    parts.push_back(linalg::gram_factor(ch.channels[i], pc.covariances[i]));
    cols += parts.back().cols();
  }
  CMatrix f(n_rx, cols);
  Eigen::Index at = 0;
  for (const auto& part : parts) {
    f.middleCols(at, part.cols()) = part;
    at += part.cols();
  }
  return linalg::logdet_noise_gram(eps2, n_rx, f) / linalg::kLn2;
}

/// Spectral efficiency log2|I + H S H^H Q^{-1}| in bits/s/Hz, evaluated as
/// log2|Q + H S H^H| - log2|Q|.
inline double spectral_efficiency(const CMatrix& h, const CMatrix& s, const CMatrix& q) {
  if (s.size() == 0 || s.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  CMatrix signal = q + h * s * h.adjoint();
  signal = 0.5 * (signal + signal.adjoint());
  const double se = linalg::log2det_hpd(signal) - linalg::log2det_hpd(q);
  return se > 0.0 ? se : 0.0;
}

/// MMSE-SIC achievable rate of user k in bits/s.
inline double achievable_rate(std::size_t k, const ChannelSet& ch, const PrecoderSet& pc, const SystemParams& params) {
  const CMatrix q = interference_covariance(k, ch, pc, params.noise_power());
  return params.bandwidth_hz * spectral_efficiency(ch.channels[k], pc.covariances[k], q);
}

inline std::vector<double> achievable_rates(const ChannelSet& ch, const PrecoderSet& pc, const SystemParams& params) {
  std::vector<double> rates(ch.size());
  for (std::size_t k = 0; k < ch.size(); ++k) rates[k] = achievable_rate(k, ch, pc, params);
  return rates;
}

/// Offload time beta L / R, taken as zero when nothing is offloaded.
inline double offload_time(double beta, double data_bits, double rate_bps, std::size_t user) {
  if (beta == 0.0) return 0.0;
  if (!(rate_bps > 0.0)) throw Error(ErrorKind::offload_rate_zero, "offloading over a zero-rate link", user);
  return beta * data_bits / rate_bps;
}

inline double local_time(double beta, const TaskSpec& task, double freq, std::size_t user) {
  if (beta == 1.0) return 0.0;
  if (!(freq > 0.0)) throw Error(ErrorKind::frequency_zero, "local work with zero CPU frequency", user);
  return (1.0 - beta) * task.cycles() / freq;
}

inline double local_energy(double beta, const TaskSpec& task, double freq, double eta) {
  return eta * (1.0 - beta) * task.cycles() * freq * freq;
}

/// Per-user times and energies plus the total energy objective.
inline EnergyBreakdown evaluate(const ChannelSet& ch, const PrecoderSet& pc, const OffloadDecision& dec,
                                const std::vector<TaskSpec>& tasks, const SystemParams& params) {
  if (tasks.size() != ch.size() || dec.ratios.size() != ch.size() || dec.frequencies.size() != ch.size()) {
    throw Error(ErrorKind::structural, "input lengths differ");
  }
  EnergyBreakdown out;
  out.users.resize(ch.size());
  double total = 0.0;
  for (std::size_t k = 0; k < ch.size(); ++k) {
    UserEnergy& u = out.users[k];
    const double beta = dec.ratios[k];
    u.rate_bps = achievable_rate(k, ch, pc, params);
    u.offload_time_s = offload_time(beta, tasks[k].data_bits, u.rate_bps, k);
    u.offload_energy_j = u.offload_time_s * linalg::trace_real(pc.covariances[k]);
    u.local_time_s = local_time(beta, tasks[k], dec.frequencies[k], k);
    u.local_energy_j = local_energy(beta, tasks[k], dec.frequencies[k], params.eta);
    total += u.offload_energy_j + u.local_energy_j;
  }
  out.total_energy_j = total;
  return out;
}

struct ConstraintCheck {
  std::string name;
  std::size_t user = 0;
  double value = 0.0;
  double bound = 0.0;
  double slack = 0.0;  // bound - value (lower bounds: value - bound)
  bool pass = false;
};

struct FeasibilityReport {
  std::vector<ConstraintCheck> checks;

  bool feasible() const {
    for (const auto& c : checks) {
      if (!c.pass) return false;
    }
    return true;
  }

  const ConstraintCheck* find(const std::string& name, std::size_t user) const {
    for (const auto& c : checks) {
      if (c.name == name && c.user == user) return &c;
    }
    return nullptr;
  }
};

/// Evaluates every constraint of the joint problem for each user. A check
/// passes when the violation is at most tol relative to the bound's scale.
inline FeasibilityReport check_constraints(const ChannelSet& ch, const PrecoderSet& pc, const OffloadDecision& dec,
                                           const std::vector<TaskSpec>& tasks, const SystemParams& params,
                                           double tol) {
  FeasibilityReport rep;
  const double inf = std::numeric_limits<double>::infinity();
  auto upper = [&](const char* name, std::size_t k, double value, double bound) {
    const double slack = bound - value;
    const double scale = std::max(std::abs(bound), 1e-300);
    rep.checks.push_back({name, k, value, bound, slack, slack >= -tol * scale});
  };
  auto lower = [&](const char* name, std::size_t k, double value, double bound) {
    const double slack = value - bound;
    rep.checks.push_back({name, k, value, bound, slack, slack >= -tol});
  };
  for (std::size_t k = 0; k < ch.size(); ++k) {
    const double beta = dec.ratios[k];
    const double f = dec.frequencies[k];
    lower("frequency_nonneg", k, f, 0.0);
    upper("frequency_max", k, f, params.f_max_hz);
    lower("ratio_min", k, beta, 0.0);
    upper("ratio_max", k, beta, 1.0);
    const CMatrix& s = pc.covariances[k];
    upper("power", k, linalg::trace_real(s), params.p_max_w);
    const double rate = achievable_rate(k, ch, pc, params);
    const double t_off = beta == 0.0 ? 0.0 : (rate > 0.0 ? beta * tasks[k].data_bits / rate : inf);
    upper("offload_time", k, t_off, tasks[k].deadline_s);
    const double t_loc = beta == 1.0 ? 0.0 : (f > 0.0 ? (1.0 - beta) * tasks[k].cycles() / f : inf);
    upper("local_time", k, t_loc, tasks[k].deadline_s);
  }
  return rep;
}

/// Sum over users of log2 of the SIC rate chain, used by the telescoping check.
inline double sum_spectral_efficiency(const ChannelSet& ch, const PrecoderSet& pc, double eps2) {
  double acc = 0.0;
  for (std::size_t k = 0; k < ch.size(); ++k) {
    acc += spectral_efficiency(ch.channels[k], pc.covariances[k], interference_covariance(k, ch, pc, eps2));
  }
  return acc;
}

}  // namespace mecnoma::model
