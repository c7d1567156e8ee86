#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mecnoma/closed_form.hpp"
#include "mecnoma/model.hpp"
#include "mecnoma/precoding.hpp"
#include "mecnoma/types.hpp"

namespace mecnoma::optimizer {

struct SolverKnobs {
  double outer_tol = 1e-4;
  int max_outer_iters = 30;
  double sca_tol = 1e-4;
  int max_sca_iters = 30;
  double bisection_tol = 1e-6;
  double penalty_delta_init = 10.0;
  double p5_tol = 1e-4;
  int max_sweeps = 20;

  precoding::Options precoding_options() const {
    precoding::Options o;
    o.outer_tol = p5_tol;
    o.max_sweeps = max_sweeps;
    o.sca_tol = sca_tol;
    o.max_sca_iters = max_sca_iters;
    o.bisection_tol = bisection_tol;
    o.penalty_init = penalty_delta_init;
    return o;
  }
};

struct Scenario {
  SystemParams params;
  std::vector<TaskSpec> tasks;
  ChannelSet channels;
  SolverKnobs knobs;

  void validate() const {
    params.validate();
    if (tasks.size() != params.n_users) throw Error(ErrorKind::structural, "task count does not match n_users");
    for (const auto& t : tasks) t.validate();
    channels.validate(params);
  }
};

enum class Status { converged, max_iters, infeasible };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::converged: return "converged";
    case Status::max_iters: return "max-iters";
    case Status::infeasible: return "infeasible";
  }
  return "unknown";
}

struct Solution {
  OffloadDecision decision;
  PrecoderSet precoders;
  EnergyBreakdown breakdown;
  std::vector<double> trace;  // total energy after each outer iteration
  Status status = Status::infeasible;
  std::optional<std::size_t> infeasible_user;
  std::string message;
  std::vector<std::string> warnings;

  bool feasible() const { return status != Status::infeasible; }
};

namespace detail {

inline Solution infeasible(const Error& e) {
  Solution s;
  s.status = Status::infeasible;
  s.infeasible_user = e.user();
  s.message = e.what();
  return s;
}

inline OffloadDecision decision_from_ratios(const Scenario& sc, const std::vector<double>& ratios) {
  OffloadDecision dec;
  dec.ratios = ratios;
  dec.frequencies.resize(ratios.size());
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    try {
      dec.frequencies[k] = closed_form::optimal_frequency(ratios[k], sc.tasks[k], sc.params.f_max_hz);
    } catch (const Error& e) {
      // The ratio sits on the floor up to rounding: step it up by ulps until
      // the deadline-tight frequency fits under the cap.
      if (e.kind() != ErrorKind::frequency_cap_exceeded || ratios[k] < e.value() - 1e-12) {
        throw Error(e.kind(), e.what(), k, e.value());
      }
      const auto& t = sc.tasks[k];
      double beta = std::max(ratios[k], e.value());
      while (beta < 1.0 && (1.0 - beta) * t.cycles() / t.deadline_s > sc.params.f_max_hz) {
        beta = std::nextafter(beta, 2.0);
      }
      dec.ratios[k] = beta;
      dec.frequencies[k] = closed_form::optimal_frequency(beta, t, sc.params.f_max_hz);
    }
  }
  return dec;
}

/// Offload plus local energy with the deadline-tight frequency.
inline double reduced_objective(const Scenario& sc, const std::vector<double>& ratios, const PrecoderSet& pc) {
  double acc = 0.0;
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    const auto& t = sc.tasks[k];
    const double beta = ratios[k];
    const double cl = t.cycles();
    acc += sc.params.eta * cl * cl * cl * std::pow(1.0 - beta, 3) / (t.deadline_s * t.deadline_s);
    if (beta > 0.0) {
      const double rate = model::achievable_rate(k, sc.channels, pc, sc.params);
      if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
      acc += beta * t.data_bits * linalg::trace_real(pc.covariances[k]) / rate;
    }
  }
  return acc;
}

/// Scaled identities starting at (P_max / n_tx) I. While some offloading user
/// misses its deadline rate strictly, the users decoded after it (its
/// interferers) are halved. Returns the last attempt when nothing works.
inline PrecoderSet initial_precoders(const Scenario& sc, const std::vector<double>& ratios) {
  const std::size_t n = ratios.size();
  const auto& order = sc.channels.decoding_order;
  std::vector<int> halvings(n, 0);
  PrecoderSet pc = PrecoderSet::scaled_identity(sc.params, sc.params.p_max_w);
  auto rebuild = [&] {
    for (std::size_t k = 0; k < n; ++k) {
      pc.covariances[k] = PrecoderSet::scaled_identity(sc.params, std::ldexp(sc.params.p_max_w, -halvings[k])).covariances[k];
    }
  };
  for (int iter = 0; iter < 60 * static_cast<int>(n); ++iter) {
    std::optional<std::size_t> failing;
    for (std::size_t p = 0; p < n && !failing; ++p) {
      const std::size_t k = order[p];
      const double need = ratios[k] * sc.tasks[k].data_bits / sc.tasks[k].deadline_s;
      if (need > 0.0 && !(model::achievable_rate(k, sc.channels, pc, sc.params) > need)) failing = p;
    }
    if (!failing || *failing + 1 == n) break;
    bool changed = false;
    for (std::size_t q = *failing + 1; q < n; ++q) {
      if (halvings[order[q]] < 60) {
        ++halvings[order[q]];
        changed = true;
      }
    }
    if (!changed) break;
    rebuild();
  }
  return pc;
}

/// Per-user golden-section search over beta_k on [floor_k, 1], with S_k
/// re-solved by the first-decoded-user path under the current interference
/// and every deadline checked. After a precoding sweep the deadline rate is
/// tight, so the closed-form ratio step cannot raise beta_k (its cap is the
/// current beta_k); this lets the ratio move against the precoder response.
/// Only strict improvements of the reduced objective are kept.
inline void refine_ratios(const Scenario& sc, std::vector<double>& ratios, PrecoderSet& pc,
                          const precoding::Options& opt) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  auto value = [&](const std::vector<double>& r, const PrecoderSet& p) {
    precoding::Problem pb{sc.channels, sc.tasks, sc.params, r};
    if (!precoding::precoders_feasible(pb, p, opt.feasibility_tol)) return kInf;
    return reduced_objective(sc, r, p);
  };
  double best = value(ratios, pc);
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    std::vector<double> best_r;
    PrecoderSet best_pc;
    auto eval = [&](double beta) {
      std::vector<double> r = ratios;
      r[k] = beta;
      PrecoderSet cand = pc;
      try {
        cand.covariances[k] = precoding::solve_p51_raw(k, {sc.channels, sc.tasks, sc.params, r}, pc, opt.bisection_tol).covariance;
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::numerical_failure) throw;
        return kInf;
      }
      const double v = value(r, cand);
      if (v < best * (1.0 - 1e-12)) {
        best = v;
        best_r = std::move(r);
        best_pc = std::move(cand);
      }
      return v;
    };
    constexpr double kInvPhi = 0.6180339887498949;
    double lo = closed_form::beta_floor(sc.tasks[k], sc.params.f_max_hz);
    double hi = 1.0;
    double x1 = hi - kInvPhi * (hi - lo);
    double x2 = lo + kInvPhi * (hi - lo);
    double f1 = eval(x1);
    double f2 = eval(x2);
    while (hi - lo > 1e-10) {
      if (f1 <= f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - kInvPhi * (hi - lo);
        f1 = eval(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + kInvPhi * (hi - lo);
        f2 = eval(x2);
      }
    }
    if (!best_r.empty()) {
      ratios = std::move(best_r);
      pc = std::move(best_pc);
    }
  }
}

inline Solution finalize(const Scenario& sc, const std::vector<double>& ratios, const PrecoderSet& pc,
                         std::vector<double> trace, Status status) {
  Solution s;
  s.decision = decision_from_ratios(sc, ratios);
  s.precoders = pc;
  s.breakdown = model::evaluate(sc.channels, pc, s.decision, sc.tasks, sc.params);
  s.trace = std::move(trace);
  s.status = status;
  const auto rep = model::check_constraints(sc.channels, pc, s.decision, sc.tasks, sc.params, 1e-6);
  if (!rep.feasible()) {
    for (const auto& c : rep.checks) {
      if (!c.pass) {
        s.status = Status::infeasible;
        s.infeasible_user = c.user;
        s.message = "constraint " + c.name + " violated";
        break;
      }
    }
  }
  return s;
}

}  // namespace detail

/// Offloading with beta = 1 for everyone and precoders from the alternating
/// precoding sweeps.
inline Solution solve_full_offload(const Scenario& sc) {
  sc.validate();
  try {
    const std::vector<double> ratios(sc.params.n_users, 1.0);
    precoding::Problem pb{sc.channels, sc.tasks, sc.params, ratios};
    auto st = precoding::solve_p5(pb, detail::initial_precoders(sc, ratios), sc.knobs.precoding_options());
    std::vector<double> trace;
    for (double v : st.trace) trace.push_back(v);
    auto sol = detail::finalize(sc, ratios, st.covariances, trace, Status::converged);
    sol.warnings = st.warnings;
    return sol;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::numerical_failure) throw;
    return detail::infeasible(e);
  }
}

/// Everything computed locally at the deadline-tight frequency.
inline Solution solve_local(const Scenario& sc) {
  sc.validate();
  for (std::size_t k = 0; k < sc.params.n_users; ++k) {
    if (closed_form::beta_floor(sc.tasks[k], sc.params.f_max_hz) > 0.0) {
      return detail::infeasible(Error(ErrorKind::instance_infeasible, "local computing exceeds f_max", k));
    }
  }
  const std::vector<double> ratios(sc.params.n_users, 0.0);
  const auto pc = PrecoderSet::zeros(sc.params);
  const double e = detail::reduced_objective(sc, ratios, pc);
  return detail::finalize(sc, ratios, pc, {e}, Status::converged);
}

/// Alternates closed-form offloading ratios and precoding sweeps.
///
/// The precoders start from the full-offloading solution when it exists
/// (else from the halved scaled identity that meets the least offloading
/// each user needs), so the first ratio update already sees the rates of a
/// tuned precoder.
inline Solution solve_joint(const Scenario& sc) {
  sc.validate();
  const auto popt = sc.knobs.precoding_options();
  const std::size_t n = sc.params.n_users;
  try {
    PrecoderSet pc;
    {
      const std::vector<double> ones(n, 1.0);
      precoding::Problem pb{sc.channels, sc.tasks, sc.params, ones};
      try {
        pc = precoding::solve_p5(pb, detail::initial_precoders(sc, ones), popt).covariances;
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::numerical_failure) throw;
        std::vector<double> least(n);
        for (std::size_t k = 0; k < n; ++k) least[k] = closed_form::beta_floor(sc.tasks[k], sc.params.f_max_hz);
        pc = detail::initial_precoders(sc, least);
      }
    }

    std::vector<double> ratios(n, 0.0);
    std::vector<double> trace;
    std::vector<std::string> warnings;
    Status status = Status::max_iters;
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < sc.knobs.max_outer_iters; ++it) {
      // Ratios from current rates.
      for (std::size_t k = 0; k < n; ++k) {
        const double rate = model::achievable_rate(k, sc.channels, pc, sc.params);
        const double power = linalg::trace_real(pc.covariances[k]);
        const auto co =
            closed_form::ratio_coefficients(sc.tasks[k], sc.params.eta, sc.params.f_max_hz, power, rate);
        try {
          const auto r = closed_form::optimal_ratio(co);
          ratios[k] = r.beta;
        } catch (const Error& e) {
          throw Error(e.kind(), e.what(), k);
        }
      }
      detail::refine_ratios(sc, ratios, pc, popt);
      // Precoders for those ratios.
      precoding::Problem pb{sc.channels, sc.tasks, sc.params, ratios};
      auto st = precoding::solve_p5(pb, pc, popt);
      pc = st.covariances;
      warnings.insert(warnings.end(), st.warnings.begin(), st.warnings.end());
      const double obj = detail::reduced_objective(sc, ratios, pc);
      trace.push_back(obj);
      const double rel = std::isfinite(prev) ? (prev - obj) / std::max(std::abs(prev), 1e-300) : 1.0;
      prev = obj;
      if (rel <= sc.knobs.outer_tol) {
        status = Status::converged;
        break;
      }
    }
    auto sol = detail::finalize(sc, ratios, pc, trace, status);
    sol.warnings = std::move(warnings);
    return sol;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::numerical_failure) throw;
    return detail::infeasible(e);
  }
}

/// Equal-bandwidth FDMA: each user solved alone on B/N with noise N0 B/N.
inline Solution solve_fdma(const Scenario& sc) {
  sc.validate();
  const std::size_t n = sc.params.n_users;
  Solution total;
  total.decision.ratios.resize(n);
  total.decision.frequencies.resize(n);
  total.precoders = PrecoderSet::zeros(sc.params);
  total.breakdown.users.resize(n);
  total.status = Status::converged;
  std::vector<std::vector<double>> traces;
  for (std::size_t k = 0; k < n; ++k) {
    Scenario single;
    single.params = sc.params;
    single.params.n_users = 1;
    single.params.bandwidth_hz = sc.params.bandwidth_hz / static_cast<double>(n);
    single.tasks = {sc.tasks[k]};
    single.channels.channels = {sc.channels.channels[k]};
    single.channels.decoding_order = {0};
    single.knobs = sc.knobs;
    Solution s = solve_joint(single);
    if (!s.feasible()) {
      Solution bad = s;
      bad.infeasible_user = k;
      return bad;
    }
    total.decision.ratios[k] = s.decision.ratios[0];
    total.decision.frequencies[k] = s.decision.frequencies[0];
    total.precoders.covariances[k] = s.precoders.covariances[0];
    total.breakdown.users[k] = s.breakdown.users[0];
    total.breakdown.total_energy_j += s.breakdown.total_energy_j;
    if (s.status == Status::max_iters) total.status = Status::max_iters;
    total.warnings.insert(total.warnings.end(), s.warnings.begin(), s.warnings.end());
    traces.push_back(s.trace);
  }
  std::size_t len = 0;
  for (const auto& t : traces) len = std::max(len, t.size());
  total.trace.assign(len, 0.0);
  for (const auto& t : traces) {
    for (std::size_t i = 0; i < len; ++i) total.trace[i] += t.empty() ? 0.0 : t[std::min(i, t.size() - 1)];
  }
  return total;
}

}  // namespace mecnoma::optimizer
