#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mecnoma/optimizer.hpp"
#include "mecnoma/types.hpp"

namespace mecnoma::harness {

// Experiment configuration (JSON). Every physical quantity carries its unit
// in the key name; where two spellings exist exactly one may be given.
//
// {
//   "system": {
//     "n_users": 2, "n_tx": 2, "n_rx": 4,
//     "bandwidth_mhz": 25            | "bandwidth_hz": 25e6,
//     "n0_dbm_per_hz": -174          | "n0_w_per_hz": 3.98e-21,
//     "p_max_w": 1                   | "p_max_dbm": 30,
//     "f_max_ghz": 2                 | "f_max_hz": 2e9,
//     "eta": 1e-32
//   },
//   "task":  { "data": "5 MB" | "data_bits": 4e7 | "data_mb": 5,
//              "cycles_per_bit": 200, "deadline_s": 0.5 },
//   "tasks": [ {...}, ... ],        // per user, instead of "task"
//   "decoding_order": [1, 2],       // 1-based user indices, optional
//   "solver": { "outer_tol", "max_outer_iters", "sca_tol", "max_sca_iters",
//               "bisection_tol", "penalty_delta_init", "p5_tol", "max_sweeps" },
//   "channel": { "variance": 1e-5, "seed": 42 },
//   "run": { "trials": 50, "algorithms": ["proposed", "local", "full", "fdma"],
//            "deadline_sweep_s": [0.1, 0.2] },
//   "output": { "csv": "results.csv", "trace": "traces.csv" }
// }
//
// Data sizes given as strings accept bit, kbit, Mbit, Gbit, B, kB, MB, GB
// with decimal prefixes and 1 byte = 8 bits (so 1 MB = 8e6 bits).

using json = nlohmann::json;

inline constexpr const char* kAlgorithms[] = {"proposed", "local", "full", "fdma"};

struct ExperimentConfig {
  SystemParams params;
  std::vector<TaskSpec> tasks;
  std::vector<std::size_t> decoding_order;  // 0-based
  optimizer::SolverKnobs knobs;
  double channel_variance = 1e-5;
  std::uint64_t seed = 0;
  int trials = 50;
  std::vector<std::string> algorithms{"proposed", "local", "full", "fdma"};
  std::vector<double> deadline_sweep_s;  // empty: use the task deadlines
  std::string csv_path;
  std::string trace_path;

  void validate() const {
    params.validate();
    if (tasks.size() != params.n_users) throw Error(ErrorKind::config, "tasks: expected one task per user");
    for (const auto& t : tasks) t.validate();
    if (decoding_order.size() != params.n_users) throw Error(ErrorKind::config, "decoding_order: wrong length");
    if (!(channel_variance > 0.0)) throw Error(ErrorKind::config, "channel.variance: must be > 0");
    if (trials < 1) throw Error(ErrorKind::config, "run.trials: must be >= 1");
    if (algorithms.empty()) throw Error(ErrorKind::config, "run.algorithms: must be nonempty");
    for (double t : deadline_sweep_s) {
      if (!(t > 0.0) || !std::isfinite(t)) throw Error(ErrorKind::config, "run.deadline_sweep_s: values must be > 0");
    }
  }
};

namespace detail {

[[noreturn]] inline void fail(const std::string& field, const std::string& msg) {
  throw Error(ErrorKind::config, field + ": " + msg);
}

inline double number(const json& j, const std::string& field) {
  if (!j.is_number()) fail(field, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(field, "must be finite");
  return v;
}

inline double positive(const json& j, const std::string& field) {
  const double v = number(j, field);
  if (!(v > 0.0)) fail(field, "must be > 0");
  return v;
}

inline std::size_t count(const json& j, const std::string& field) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) fail(field, "expected a positive integer");
  const auto v = j.get<long long>();
  if (v < 1) fail(field, "must be >= 1");
  return static_cast<std::size_t>(v);
}

inline void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(where, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) fail(where.empty() ? it.key() : where + "." + it.key(), "unknown key");
  }
}

/// Value of exactly one of two alternative keys, converted to the base unit.
template <typename F1, typename F2>
double one_of(const json& obj, const std::string& where, const char* k1, F1 conv1, const char* k2, F2 conv2,
              bool required = true, double fallback = 0.0) {
  const bool has1 = obj.contains(k1);
  const bool has2 = obj.contains(k2);
  if (has1 && has2) fail(where + "." + k1, std::string("conflicts with ") + k2);
  if (has1) return conv1(obj.at(k1), where + "." + k1);
  if (has2) return conv2(obj.at(k2), where + "." + k2);
  if (required) fail(where + "." + k1, std::string("missing (or give ") + k2 + ")");
  return fallback;
}

/// "5 MB", "4e7 bit", "12.5 kB" -> bits.
inline double parse_data_size(const std::string& text, const std::string& field) {
  static const std::regex re(R"(^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([A-Za-z]+)\s*$)");
  std::smatch m;
  if (!std::regex_match(text, m, re)) fail(field, "expected '<number> <unit>', e.g. \"5 MB\"");
  const double value = std::stod(m[1].str());
  const std::string unit = m[2].str();
  double bits_per_unit = 0.0;
  if (unit == "bit" || unit == "bits") bits_per_unit = 1.0;
  else if (unit == "kbit") bits_per_unit = 1e3;
  else if (unit == "Mbit") bits_per_unit = 1e6;
  else if (unit == "Gbit") bits_per_unit = 1e9;
  else if (unit == "B") bits_per_unit = 8.0;
  else if (unit == "kB") bits_per_unit = 8e3;
  else if (unit == "MB") bits_per_unit = 8e6;
  else if (unit == "GB") bits_per_unit = 8e9;
  else fail(field, "unknown data unit '" + unit + "' (use bit, kbit, Mbit, Gbit, B, kB, MB, GB)");
  if (!(value > 0.0)) fail(field, "must be > 0");
  return value * bits_per_unit;
}

inline TaskSpec parse_task(const json& j, const std::string& where) {
  check_keys(j, where, {"data", "data_bits", "data_mb", "cycles_per_bit", "deadline_s"});
  TaskSpec t;
  const int given = int(j.contains("data")) + int(j.contains("data_bits")) + int(j.contains("data_mb"));
  if (given == 0) fail(where + ".data_bits", "missing (or give data / data_mb)");
  if (given > 1) fail(where + ".data_bits", "give only one of data, data_bits, data_mb");
  if (j.contains("data")) {
    if (!j.at("data").is_string()) fail(where + ".data", "expected a string such as \"5 MB\"");
    t.data_bits = parse_data_size(j.at("data").get<std::string>(), where + ".data");
  } else if (j.contains("data_bits")) {
    t.data_bits = positive(j.at("data_bits"), where + ".data_bits");
  } else {
    t.data_bits = positive(j.at("data_mb"), where + ".data_mb") * 8e6;
  }
  if (!j.contains("cycles_per_bit")) fail(where + ".cycles_per_bit", "missing");
  t.cycles_per_bit = positive(j.at("cycles_per_bit"), where + ".cycles_per_bit");
  if (!j.contains("deadline_s")) fail(where + ".deadline_s", "missing");
  t.deadline_s = positive(j.at("deadline_s"), where + ".deadline_s");
  return t;
}

inline std::uint64_t parse_seed(const json& j, const std::string& field) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) {
    const auto v = j.get<long long>();
    if (v < 0) fail(field, "must be >= 0");
    return static_cast<std::uint64_t>(v);
  }
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(s, &pos, 0);
      if (pos != s.size()) fail(field, "not an unsigned 64-bit integer");
      return v;
    } catch (const std::logic_error&) {
      fail(field, "not an unsigned 64-bit integer");
    }
  }
  fail(field, "expected an unsigned 64-bit integer");
}

}  // namespace detail

/// Parses a config document; throws Error(config) naming the offending field.
inline ExperimentConfig parse_config(const json& root) {
  using namespace detail;
  check_keys(root, "", {"system", "task", "tasks", "decoding_order", "solver", "channel", "run", "output"});
  ExperimentConfig cfg;

  if (!root.contains("system")) fail("system", "missing");
  const json& sys = root.at("system");
  check_keys(sys, "system",
             {"n_users", "n_tx", "n_rx", "bandwidth_hz", "bandwidth_mhz", "n0_dbm_per_hz", "n0_w_per_hz", "p_max_w",
              "p_max_dbm", "f_max_hz", "f_max_ghz", "eta"});
  for (const char* k : {"n_users", "n_tx", "n_rx", "eta"}) {
    if (!sys.contains(k)) fail(std::string("system.") + k, "missing");
  }
  auto& p = cfg.params;
  p.n_users = count(sys.at("n_users"), "system.n_users");
  p.n_tx = count(sys.at("n_tx"), "system.n_tx");
  p.n_rx = count(sys.at("n_rx"), "system.n_rx");
  p.eta = positive(sys.at("eta"), "system.eta");
  p.bandwidth_hz = one_of(
      sys, "system", "bandwidth_hz", positive, "bandwidth_mhz",
      [](const json& j, const std::string& f) { return positive(j, f) * 1e6; });
  p.noise_density_w_per_hz = one_of(
      sys, "system", "n0_dbm_per_hz", [](const json& j, const std::string& f) { return std::pow(10.0, number(j, f) / 10.0) * 1e-3; },
      "n0_w_per_hz", positive);
  p.p_max_w = one_of(
      sys, "system", "p_max_w", positive, "p_max_dbm",
      [](const json& j, const std::string& f) { return std::pow(10.0, number(j, f) / 10.0) * 1e-3; });
  p.f_max_hz = one_of(
      sys, "system", "f_max_hz", positive, "f_max_ghz",
      [](const json& j, const std::string& f) { return positive(j, f) * 1e9; });

  if (root.contains("task") == root.contains("tasks")) fail("task", "give exactly one of task, tasks");
  if (root.contains("task")) {
    cfg.tasks.assign(p.n_users, parse_task(root.at("task"), "task"));
  } else {
    const json& ts = root.at("tasks");
    if (!ts.is_array()) fail("tasks", "expected an array");
    if (ts.size() != p.n_users) fail("tasks", "expected " + std::to_string(p.n_users) + " entries (system.n_users)");
    for (std::size_t i = 0; i < ts.size(); ++i) cfg.tasks.push_back(parse_task(ts[i], "tasks[" + std::to_string(i) + "]"));
  }

  cfg.decoding_order = ChannelSet::identity_order(p.n_users);
  if (root.contains("decoding_order")) {
    const json& d = root.at("decoding_order");
    if (!d.is_array() || d.size() != p.n_users) fail("decoding_order", "expected " + std::to_string(p.n_users) + " user indices");
    std::vector<bool> seen(p.n_users, false);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const std::string f = "decoding_order[" + std::to_string(i) + "]";
      const std::size_t u = count(d[i], f);
      if (u > p.n_users) fail(f, "user index out of range 1.." + std::to_string(p.n_users));
      if (seen[u - 1]) fail(f, "duplicate user index");
      seen[u - 1] = true;
      cfg.decoding_order[i] = u - 1;
    }
  }

  if (root.contains("solver")) {
    const json& s = root.at("solver");
    check_keys(s, "solver",
               {"outer_tol", "max_outer_iters", "sca_tol", "max_sca_iters", "bisection_tol", "penalty_delta_init",
                "p5_tol", "max_sweeps"});
    auto& k = cfg.knobs;
    if (s.contains("outer_tol")) k.outer_tol = positive(s.at("outer_tol"), "solver.outer_tol");
    if (s.contains("max_outer_iters")) k.max_outer_iters = static_cast<int>(count(s.at("max_outer_iters"), "solver.max_outer_iters"));
    if (s.contains("sca_tol")) k.sca_tol = positive(s.at("sca_tol"), "solver.sca_tol");
    if (s.contains("max_sca_iters")) k.max_sca_iters = static_cast<int>(count(s.at("max_sca_iters"), "solver.max_sca_iters"));
    if (s.contains("bisection_tol")) k.bisection_tol = positive(s.at("bisection_tol"), "solver.bisection_tol");
    if (s.contains("penalty_delta_init")) k.penalty_delta_init = positive(s.at("penalty_delta_init"), "solver.penalty_delta_init");
    if (s.contains("p5_tol")) k.p5_tol = positive(s.at("p5_tol"), "solver.p5_tol");
    if (s.contains("max_sweeps")) k.max_sweeps = static_cast<int>(count(s.at("max_sweeps"), "solver.max_sweeps"));
  }

  if (root.contains("channel")) {
    const json& c = root.at("channel");
    check_keys(c, "channel", {"variance", "seed"});
    if (c.contains("variance")) cfg.channel_variance = positive(c.at("variance"), "channel.variance");
    if (c.contains("seed")) cfg.seed = parse_seed(c.at("seed"), "channel.seed");
  }

  if (root.contains("run")) {
    const json& r = root.at("run");
    check_keys(r, "run", {"trials", "algorithms", "deadline_sweep_s"});
    if (r.contains("trials")) cfg.trials = static_cast<int>(count(r.at("trials"), "run.trials"));
    if (r.contains("algorithms")) {
      const json& a = r.at("algorithms");
      if (!a.is_array() || a.empty()) fail("run.algorithms", "expected a nonempty array");
      cfg.algorithms.clear();
      for (std::size_t i = 0; i < a.size(); ++i) {
        const std::string f = "run.algorithms[" + std::to_string(i) + "]";
        if (!a[i].is_string()) fail(f, "expected a string");
        const std::string name = a[i].get<std::string>();
        bool known = false;
        for (const char* k : kAlgorithms) known = known || name == k;
        if (!known) fail(f, "unknown algorithm '" + name + "' (use proposed, local, full, fdma)");
        for (const auto& prev : cfg.algorithms) {
          if (prev == name) fail(f, "duplicate algorithm '" + name + "'");
        }
        cfg.algorithms.push_back(name);
      }
    }
    if (r.contains("deadline_sweep_s")) {
      const json& sw = r.at("deadline_sweep_s");
      if (!sw.is_array()) fail("run.deadline_sweep_s", "expected an array");
      for (std::size_t i = 0; i < sw.size(); ++i) {
        cfg.deadline_sweep_s.push_back(positive(sw[i], "run.deadline_sweep_s[" + std::to_string(i) + "]"));
      }
    }
  }

  if (root.contains("output")) {
    const json& o = root.at("output");
    check_keys(o, "output", {"csv", "trace"});
    for (const char* k : {"csv", "trace"}) {
      if (!o.contains(k)) continue;
      if (!o.at(k).is_string()) fail(std::string("output.") + k, "expected a path string");
      (std::string(k) == "csv" ? cfg.csv_path : cfg.trace_path) = o.at(k).get<std::string>();
    }
  }

  try {
    cfg.validate();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config) throw;
    throw Error(ErrorKind::config, std::string("system: ") + e.what());
  }
  return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::config, std::string("config: invalid JSON: ") + e.what());
  }
  return parse_config(root);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace mecnoma::harness
