#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "mecnoma/channels.hpp"
#include "mecnoma/config.hpp"
#include "mecnoma/optimizer.hpp"

namespace mecnoma::harness {

struct UserRecord {
  double beta = 0.0;
  double f_hz = 0.0;
  double rate_bps = 0.0;
  double offload_time_s = 0.0;
  double deadline_s = 0.0;
};

/// One (trial, algorithm, deadline) outcome.
struct TrialRecord {
  std::size_t trial = 0;
  std::uint64_t seed = 0;  // per-trial child seed
  std::uint64_t channel_checksum = 0;
  std::string algorithm;
  double deadline_s = 0.0;  // swept deadline, or the first user's deadline
  std::string status;       // converged, max-iters, infeasible, numerical-failure
  std::string message;
  double total_energy_j = 0.0;
  std::vector<UserRecord> users;  // empty unless the solve returned a solution
  std::vector<double> trace;
  std::size_t iters = 0;

  bool has_solution() const { return !users.empty(); }
};

struct RunResult {
  std::vector<TrialRecord> records;
  bool numerical_failure = false;
};

inline optimizer::Solution solve_algorithm(const std::string& name, const optimizer::Scenario& sc) {
  if (name == "proposed") return optimizer::solve_joint(sc);
  if (name == "local") return optimizer::solve_local(sc);
  if (name == "full") return optimizer::solve_full_offload(sc);
  if (name == "fdma") return optimizer::solve_fdma(sc);
  throw Error(ErrorKind::config, "unknown algorithm '" + name + "'");
}

inline TrialRecord make_record(const optimizer::Scenario& sc, const std::string& algorithm) {
  TrialRecord rec;
  rec.algorithm = algorithm;
  try {
    const optimizer::Solution sol = solve_algorithm(algorithm, sc);
    rec.status = optimizer::to_string(sol.status);
    rec.message = sol.message;
    rec.trace = sol.trace;
    rec.iters = sol.trace.size();
    if (sol.feasible()) {
      rec.total_energy_j = sol.breakdown.total_energy_j;
      for (std::size_t k = 0; k < sc.params.n_users; ++k) {
        UserRecord u;
        u.beta = sol.decision.ratios[k];
        u.f_hz = sol.decision.frequencies[k];
        u.rate_bps = sol.breakdown.users[k].rate_bps;
        u.offload_time_s = sol.breakdown.users[k].offload_time_s;
        u.deadline_s = sc.tasks[k].deadline_s;
        rec.users.push_back(u);
      }
    }
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::numerical_failure) throw;
    rec.status = "numerical-failure";
    rec.message = e.what();
  }
  return rec;
}

/// Records of one trial: channels drawn once from the child seed, every
/// algorithm run on the same channels, and each swept deadline applied to all
/// users.
inline std::vector<TrialRecord> run_trial(const ExperimentConfig& cfg, std::size_t trial) {
  const std::uint64_t seed = child_seed(cfg.seed, trial);
  optimizer::Scenario base;
  base.params = cfg.params;
  base.tasks = cfg.tasks;
  base.knobs = cfg.knobs;
  base.channels = generate_channels(seed, cfg.channel_variance, cfg.params.n_users, cfg.params.n_rx, cfg.params.n_tx);
  base.channels.decoding_order = cfg.decoding_order;
  const std::uint64_t checksum = channel_checksum(base.channels);

  std::vector<double> deadlines = cfg.deadline_sweep_s;
  const bool sweep = !deadlines.empty();
  if (!sweep) deadlines = {cfg.tasks.front().deadline_s};

  std::vector<TrialRecord> out;
  for (double t : deadlines) {
    optimizer::Scenario sc = base;
    if (sweep) {
      for (auto& task : sc.tasks) task.deadline_s = t;
    }
    for (const auto& alg : cfg.algorithms) {
      TrialRecord rec = make_record(sc, alg);
      rec.trial = trial;
      rec.seed = seed;
      rec.channel_checksum = checksum;
      rec.deadline_s = t;
      out.push_back(std::move(rec));
    }
  }
  return out;
}

/// Runs every trial. Trials may be computed on `workers` threads; records are
/// always returned in trial order.
inline RunResult run(const ExperimentConfig& cfg, unsigned workers = 1,
                     const std::function<void(std::size_t)>& on_trial_done = {}) {
  cfg.validate();
  const std::size_t n = static_cast<std::size_t>(cfg.trials);
  std::vector<std::vector<TrialRecord>> per_trial(n);
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));

  if (workers == 1) {
    for (std::size_t t = 0; t < n; ++t) {
      per_trial[t] = run_trial(cfg, t);
      if (on_trial_done) on_trial_done(t);
    }
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::exception_ptr error;
    auto work = [&] {
      for (;;) {
        std::size_t t;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (next >= n || error) return;
          t = next++;
        }
        try {
          auto recs = run_trial(cfg, t);
          std::lock_guard<std::mutex> lock(mu);
          per_trial[t] = std::move(recs);
          if (on_trial_done) on_trial_done(t);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  }

  RunResult res;
  for (auto& recs : per_trial) {
    for (auto& r : recs) {
      res.numerical_failure = res.numerical_failure || r.status == "numerical-failure";
      res.records.push_back(std::move(r));
    }
  }
  return res;
}

inline constexpr const char* kCsvHeader =
    "trial,seed,algorithm,deadline_s,status,total_energy_j,user,beta,f_hz,rate_bps,offload_time_s,iters";
inline constexpr const char* kTraceHeader = "trial,algorithm,iter,objective_j";

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// One row per user; users are numbered from 1. Rows without a solution
/// leave the numeric solution fields empty.
inline void write_csv(std::ostream& os, const std::vector<TrialRecord>& records) {
  os << kCsvHeader << '\n';
  for (const auto& r : records) {
    const std::size_t rows = r.has_solution() ? r.users.size() : 1;
    for (std::size_t k = 0; k < rows; ++k) {
      os << r.trial << ',' << r.seed << ',' << r.algorithm << ',' << format_double(r.deadline_s) << ',' << r.status
         << ',';
      if (r.has_solution()) {
        const auto& u = r.users[k];
        os << format_double(r.total_energy_j) << ',' << (k + 1) << ',' << format_double(u.beta) << ','
           << format_double(u.f_hz) << ',' << format_double(u.rate_bps) << ',' << format_double(u.offload_time_s);
      } else {
        os << ",,,,,";
      }
      os << ',' << r.iters << '\n';
    }
  }
}

/// Per-iteration energies; with a deadline sweep the blocks of one trial and
/// algorithm follow the sweep order, each restarting at iter 1.
inline void write_trace(std::ostream& os, const std::vector<TrialRecord>& records) {
  os << kTraceHeader << '\n';
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
      os << r.trial << ',' << r.algorithm << ',' << (i + 1) << ',' << format_double(r.trace[i]) << '\n';
    }
  }
}

inline void write_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::config, "output: cannot open '" + path + "' for writing");
  body(out);
  out.flush();
  if (!out) throw Error(ErrorKind::config, "output: write to '" + path + "' failed");
}

}  // namespace mecnoma::harness
