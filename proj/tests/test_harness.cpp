#include <gtest/gtest.h>

#include <sys/wait.h>

#include <unistd.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "support.hpp"

using namespace mecnoma;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

const char* kSmallConfig = R"({
  "system": {"n_users": 2, "n_tx": 2, "n_rx": 4, "bandwidth_mhz": 25, "n0_dbm_per_hz": -174,
             "p_max_w": 1, "f_max_ghz": 2, "eta": 1e-32},
  "task": {"data": "5 MB", "cycles_per_bit": 200, "deadline_s": 0.5},
  "channel": {"variance": 1e-5, "seed": 99},
  "run": {"trials": 3, "algorithms": ["proposed", "local", "full", "fdma"]}
})";

harness::json small_json() { return harness::json::parse(kSmallConfig); }

std::string config_error(const harness::json& j) {
  try {
    harness::parse_config(j);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    return e.what();
  }
  ADD_FAILURE() << "config accepted";
  return {};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / ("mecnoma_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MECOPT_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Channels, SplitMixStreamMatchesReferenceValues) {
  // First outputs of the reference SplitMix64 generator seeded with 0.
  EXPECT_EQ(harness::splitmix_word(0, 0), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(harness::splitmix_word(0, 1), 0x6E789E6AA1B965F4ULL);
}

TEST(Channels, EntriesFollowDocumentedBoxMuller) {
  const std::uint64_t seed = 12345;
  const double var = 2.5;
  const auto ch = harness::generate_channels(seed, var, 2, 3, 2);
  std::size_t e = 0;
  for (std::size_t k = 0; k < 2; ++k) {
    for (Eigen::Index r = 0; r < 3; ++r) {
      for (Eigen::Index c = 0; c < 2; ++c, ++e) {
        const double u0 = harness::unit_open(harness::splitmix_word(seed, 2 * e));
        const double u1 = harness::unit_open(harness::splitmix_word(seed, 2 * e + 1));
        const double rad = std::sqrt(var) * std::sqrt(-std::log(u0));
        const double phi = 2.0 * std::numbers::pi * u1;
        EXPECT_NEAR(ch.channels[k](r, c).real(), rad * std::cos(phi), 1e-14);
        EXPECT_NEAR(ch.channels[k](r, c).imag(), rad * std::sin(phi), 1e-14);
      }
    }
  }
}

TEST(Channels, SameSeedIsBitIdentical) {
  const auto a = harness::generate_channels(42, 1e-5, 2, 4, 2);
  const auto b = harness::generate_channels(42, 1e-5, 2, 4, 2);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(std::memcmp(a.channels[k].data(), b.channels[k].data(), sizeof(Complex) * 8), 0);
  }
  EXPECT_EQ(harness::channel_checksum(a), harness::channel_checksum(b));
  const auto c = harness::generate_channels(43, 1e-5, 2, 4, 2);
  EXPECT_NE(harness::channel_checksum(a), harness::channel_checksum(c));
}

TEST(Channels, SampleVarianceMatches) {
  for (double var : {1.0, 1e-5}) {
    const auto ch = harness::generate_channels(7, var, 1, 400, 250);  // 1e5 entries
    const CMatrix& h = ch.channels[0];
    const double mean_sq = h.cwiseAbs2().sum() / static_cast<double>(h.size());
    EXPECT_LE(rel_err(mean_sq, var), 0.03);
    EXPECT_LE(std::abs(h.mean()) / std::sqrt(var), 0.03);
    const double re = h.real().cwiseAbs2().sum() / static_cast<double>(h.size());
    EXPECT_LE(rel_err(re, var / 2), 0.03);
  }
}

TEST(Channels, ChildSeedsDiffer) {
  EXPECT_NE(harness::child_seed(1, 0), harness::child_seed(1, 1));
  EXPECT_EQ(harness::child_seed(1, 5), 1ULL ^ harness::mix64(6));
}

TEST(Config, ParsesPhysicalUnits) {
  const auto cfg = harness::parse_config(small_json());
  EXPECT_EQ(cfg.params.n_users, 2u);
  EXPECT_DOUBLE_EQ(cfg.params.bandwidth_hz, 25e6);
  EXPECT_LE(rel_err(cfg.params.noise_density_w_per_hz, std::pow(10.0, -17.4) / 1000.0), 1e-14);
  EXPECT_DOUBLE_EQ(cfg.params.f_max_hz, 2e9);
  EXPECT_DOUBLE_EQ(cfg.tasks[1].data_bits, 4e7);
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_EQ(cfg.trials, 3);
  EXPECT_EQ(cfg.decoding_order, (std::vector<std::size_t>{0, 1}));
}

TEST(Config, DataSizeUnits) {
  EXPECT_DOUBLE_EQ(harness::detail::parse_data_size("5 MB", "x"), 4e7);
  EXPECT_DOUBLE_EQ(harness::detail::parse_data_size("12.5kB", "x"), 1e5);
  EXPECT_DOUBLE_EQ(harness::detail::parse_data_size("4e7 bit", "x"), 4e7);
  EXPECT_THROW(harness::detail::parse_data_size("5 parsecs", "x"), Error);
}

TEST(Config, AlternativeKeysAndOverrides) {
  auto j = small_json();
  j["system"].erase("bandwidth_mhz");
  j["system"]["bandwidth_hz"] = 1e6;
  j["system"].erase("p_max_w");
  j["system"]["p_max_dbm"] = 30;
  j["tasks"] = harness::json::array({{{"data_bits", 1e6}, {"cycles_per_bit", 10}, {"deadline_s", 1}},
                                     {{"data_mb", 2}, {"cycles_per_bit", 20}, {"deadline_s", 2}}});
  j.erase("task");
  j["decoding_order"] = {2, 1};
  j["channel"]["seed"] = "0xffffffffffffffff";
  j["solver"] = {{"outer_tol", 1e-5}, {"max_sweeps", 7}};
  j["run"]["deadline_sweep_s"] = {0.2, 0.4};
  const auto cfg = harness::parse_config(j);
  EXPECT_DOUBLE_EQ(cfg.params.bandwidth_hz, 1e6);
  EXPECT_NEAR(cfg.params.p_max_w, 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(cfg.tasks[1].data_bits, 1.6e7);
  EXPECT_EQ(cfg.decoding_order, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(cfg.seed, ~0ULL);
  EXPECT_DOUBLE_EQ(cfg.knobs.outer_tol, 1e-5);
  EXPECT_EQ(cfg.knobs.max_sweeps, 7);
  EXPECT_EQ(cfg.deadline_sweep_s.size(), 2u);
}

TEST(Config, ErrorsNameTheField) {
  auto j = small_json();
  j["system"]["n_tx"] = 0;
  EXPECT_NE(config_error(j).find("system.n_tx"), std::string::npos);

  j = small_json();
  j["system"]["colour"] = "blue";
  EXPECT_NE(config_error(j).find("system.colour"), std::string::npos);

  j = small_json();
  j["run"]["algorithms"] = {"proposed", "greedy"};
  EXPECT_NE(config_error(j).find("run.algorithms[1]"), std::string::npos);

  j = small_json();
  j["run"]["trials"] = 0;
  EXPECT_NE(config_error(j).find("run.trials"), std::string::npos);

  j = small_json();
  j["run"]["deadline_sweep_s"] = {0.1, -2};
  EXPECT_NE(config_error(j).find("run.deadline_sweep_s[1]"), std::string::npos);

  j = small_json();
  j["task"]["data"] = "lots";
  EXPECT_NE(config_error(j).find("task.data"), std::string::npos);

  j = small_json();
  j["system"]["bandwidth_hz"] = 1e6;
  EXPECT_NE(config_error(j).find("bandwidth"), std::string::npos);

  j = small_json();
  j["decoding_order"] = {1, 1};
  EXPECT_NE(config_error(j).find("decoding_order[1]"), std::string::npos);

  EXPECT_THROW(harness::parse_config_text("{not json"), Error);
  EXPECT_THROW(harness::load_config("/nonexistent/config.json"), Error);
}

TEST(Csv, HeaderIsStable) {
  std::ostringstream os;
  harness::write_csv(os, {});
  EXPECT_EQ(os.str(),
            "trial,seed,algorithm,deadline_s,status,total_energy_j,user,beta,f_hz,rate_bps,offload_time_s,iters\n");
  std::ostringstream tr;
  harness::write_trace(tr, {});
  EXPECT_EQ(tr.str(), "trial,algorithm,iter,objective_j\n");
}

TEST(Runner, SingleUserLocalRunGivesOneRow) {
  auto j = small_json();
  j["system"]["n_users"] = 1;
  j["task"]["deadline_s"] = 8;
  j["run"] = {{"trials", 1}, {"algorithms", {"local"}}};
  const auto res = harness::run(harness::parse_config(j));
  ASSERT_EQ(res.records.size(), 1u);
  EXPECT_EQ(res.records[0].status, "converged");
  std::ostringstream os;
  harness::write_csv(os, res.records);
  std::istringstream lines(os.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) ++count;
  EXPECT_EQ(count, 2);  // header + one row
}

TEST(Runner, AlgorithmsShareTrialChannels) {
  const auto cfg = harness::parse_config(small_json());
  const auto res = harness::run(cfg);
  ASSERT_EQ(res.records.size(), 3u * 4u);
  for (std::size_t t = 0; t < 3; ++t) {
    const auto& first = res.records[4 * t];
    const auto expected = harness::generate_channels(harness::child_seed(cfg.seed, t), 1e-5, 2, 4, 2);
    EXPECT_EQ(first.channel_checksum, harness::channel_checksum(expected));
    for (std::size_t a = 0; a < 4; ++a) {
      const auto& r = res.records[4 * t + a];
      EXPECT_EQ(r.trial, t);
      EXPECT_EQ(r.algorithm, cfg.algorithms[a]);
      EXPECT_EQ(r.channel_checksum, first.channel_checksum);
    }
    EXPECT_EQ(res.records[4 * t + 1].status, "infeasible");  // local at the reference deadline
  }
}

TEST(Runner, SweepReusesChannelsAndAppliesDeadlines) {
  auto j = small_json();
  j["run"] = {{"trials", 2}, {"algorithms", {"proposed"}}, {"deadline_sweep_s", {0.3, 0.5}}};
  const auto res = harness::run(harness::parse_config(j));
  ASSERT_EQ(res.records.size(), 4u);
  EXPECT_EQ(res.records[0].channel_checksum, res.records[1].channel_checksum);
  EXPECT_DOUBLE_EQ(res.records[0].deadline_s, 0.3);
  EXPECT_DOUBLE_EQ(res.records[1].deadline_s, 0.5);
  for (const auto& r : res.records) {
    ASSERT_TRUE(r.has_solution());
    for (const auto& u : r.users) EXPECT_DOUBLE_EQ(u.deadline_s, r.deadline_s);
  }
}

TEST(Runner, OutputIndependentOfWorkerCount) {
  const auto cfg = harness::parse_config(small_json());
  std::ostringstream a, b, ta, tb;
  const auto r1 = harness::run(cfg, 1);
  const auto r3 = harness::run(cfg, 3);
  harness::write_csv(a, r1.records);
  harness::write_csv(b, r3.records);
  harness::write_trace(ta, r1.records);
  harness::write_trace(tb, r3.records);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(ta.str(), tb.str());
}

TEST(Runner, UnwritableOutputIsConfigError) {
  try {
    harness::write_file("/nonexistent/dir/out.csv", [](std::ostream& os) { os << "x"; });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(Oracle, RatioGridFindsTwoThirds) {
  closed_form::RatioCoefficients co;
  co.a = 3;
  co.b = 1;
  co.r_cap = 2;
  const auto g = oracle::ratio_grid(co, 1000000);
  EXPECT_NEAR(g.argmin[0], 2.0 / 3.0, 1e-6);
}

TEST(Oracle, SingleModeP61MatchesBisection) {
  const std::vector<double> s = {3.0};
  const auto g = oracle::p61_grid(s, 1.5, 0.7, 1.0, 100000, 2);
  const auto b = convex_core::bisect_p61(s, 1.5, 0.7, 1.0, 1e-10);
  EXPECT_LE(rel_err(g.minimum, b.delta), 1e-5);
}

TEST(Oracle, ZeroWorkloadHasZeroMinimumAtOrigin) {
  auto sc = reference_scenario(1, 0, 0.5, 1, 2);
  const std::vector<double> ratios = {0.0, 0.0};
  const auto pc = PrecoderSet::scaled_identity(sc.params, 0.5);
  const auto g = oracle::scalar_p52_grid(1, sc.channels, pc, ratios, sc.tasks, sc.params, 101);
  EXPECT_EQ(g.minimum, 0.0);
  EXPECT_EQ(g.argmin[0], 0.0);
}

TEST(Oracle, RefusesHugeGrids) {
  EXPECT_THROW(oracle::grid_minimize([](const std::vector<double>&) { return 0.0; }, {0, 0, 0}, {1, 1, 1}, 1000),
               Error);
  EXPECT_THROW(oracle::p81_grid_feasible({1, 1, 1}, 1.0, 1.0, 0.0, 1.0, 1000), Error);
}

TEST(Cli, RunsConfigAndWritesCsv) {
  const fs::path dir = scratch_dir();
  const fs::path cfg = dir / "cfg.json";
  std::ofstream(cfg) << kSmallConfig;
  const fs::path out = dir / "out.csv";
  const fs::path trace = dir / "trace.csv";
  ASSERT_EQ(run_cli("run --config " + cfg.string() + " --out " + out.string() + " --trace " + trace.string() +
                    " --trials 2 --quiet"),
            0);
  const std::string csv = slurp(out);
  EXPECT_EQ(csv.rfind("trial,seed,algorithm,", 0), 0u);
  EXPECT_NE(csv.find(",proposed,"), std::string::npos);
  EXPECT_EQ(slurp(trace).rfind("trial,algorithm,iter,objective_j\n", 0), 0u);

  const fs::path again = dir / "again.csv";
  ASSERT_EQ(run_cli("run --config " + cfg.string() + " --out " + again.string() + " --trials 2 --quiet --workers 2"),
            0);
  EXPECT_EQ(slurp(again), csv);
  fs::remove_all(dir);
}

TEST(Cli, ConfigErrorsExitWithTwo) {
  const fs::path dir = scratch_dir();
  const fs::path bad = dir / "bad.json";
  std::ofstream(bad) << R"({"system": {"n_users": 2}})";
  EXPECT_EQ(run_cli("run --config " + bad.string()), 2);
  EXPECT_EQ(run_cli("run --config " + (dir / "missing.json").string()), 2);
  const fs::path good = dir / "good.json";
  std::ofstream(good) << kSmallConfig;
  EXPECT_EQ(run_cli("run --config " + good.string() + " --algorithms proposed,greedy"), 2);
  EXPECT_EQ(run_cli("run --config " + good.string() + " --out /nonexistent/dir/x.csv --trials 1 --quiet"), 2);
  EXPECT_EQ(run_cli("run"), 2);
  fs::remove_all(dir);
}

TEST(Cli, ShippedConfigsParse) {
  for (const char* name : {"reference.json", "latency_sweep.json"}) {
    EXPECT_NO_THROW(harness::load_config(std::string(CONFIG_DIR) + "/" + name)) << name;
  }
}
