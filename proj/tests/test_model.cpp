#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "support.hpp"

using namespace mecnoma;
using namespace testing_support;

namespace {

SystemParams unit_params(std::size_t n_users, std::size_t n_tx, std::size_t n_rx, double eps2) {
  SystemParams p;
  p.n_users = n_users;
  p.n_tx = n_tx;
  p.n_rx = n_rx;
  p.bandwidth_hz = 1.0;
  p.noise_density_w_per_hz = eps2;
  p.p_max_w = 10.0;
  p.f_max_hz = 1e12;
  p.eta = 1e-28;
  return p;
}

struct RandomSystem {
  ChannelSet ch;
  PrecoderSet pc;
};

RandomSystem random_system(std::mt19937_64& rng, std::size_t n, Eigen::Index n_tx, Eigen::Index n_rx, double pmax) {
  RandomSystem rs;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  rs.ch.decoding_order = order;
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    rs.ch.channels.push_back(random_complex(rng, n_rx, n_tx));
    rs.pc.covariances.push_back(random_psd_trace(rng, n_tx, pmax * u(rng)));
  }
  return rs;
}

}  // namespace

TEST(InterferenceCovariance, LastDecodedUserSeesOnlyNoise) {
  std::mt19937_64 rng(1);
  auto rs = random_system(rng, 3, 2, 4, 1.0);
  const std::size_t last = rs.ch.decoding_order.back();
  const CMatrix q = model::interference_covariance(last, rs.ch, rs.pc, 0.25);
  EXPECT_EQ(q, CMatrix(0.25 * CMatrix::Identity(4, 4)));
}

TEST(InterferenceCovariance, ZeroCovariancesGiveNoiseForEveryUser) {
  std::mt19937_64 rng(2);
  auto rs = random_system(rng, 3, 2, 3, 1.0);
  for (auto& s : rs.pc.covariances) s.setZero();
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(model::interference_covariance(k, rs.ch, rs.pc, 0.1), CMatrix(0.1 * CMatrix::Identity(3, 3)));
  }
}

TEST(InterferenceCovariance, ScalarTwoUserHandValue) {
  ChannelSet ch;
  ch.channels = {CMatrix::Constant(1, 1, Complex(0.7, -0.2)), CMatrix::Constant(1, 1, Complex(1.0, 0.0))};
  ch.decoding_order = {0, 1};
  PrecoderSet pc;
  pc.covariances = {CMatrix::Constant(1, 1, 0.3), CMatrix::Constant(1, 1, 0.5)};
  const CMatrix q = model::interference_covariance(0, ch, pc, 0.1);
  EXPECT_NEAR(q(0, 0).real(), 0.6, 1e-15);
  EXPECT_NEAR(q(0, 0).imag(), 0.0, 1e-15);
}

TEST(InterferenceCovariance, DimensionMismatchIsStructural) {
  ChannelSet ch;
  ch.channels = {CMatrix::Ones(3, 2), CMatrix::Ones(3, 2)};
  ch.decoding_order = {0, 1};
  PrecoderSet pc;
  pc.covariances = {CMatrix::Identity(2, 2), CMatrix::Identity(3, 3)};
  try {
    model::interference_covariance(0, ch, pc, 1.0);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::structural);
  }
}

TEST(AchievableRate, ZeroCovarianceGivesZero) {
  std::mt19937_64 rng(3);
  auto rs = random_system(rng, 2, 2, 4, 1.0);
  rs.pc.covariances[0].setZero();
  const auto p = unit_params(2, 2, 4, 0.1);
  EXPECT_EQ(model::achievable_rate(0, rs.ch, rs.pc, p), 0.0);
}

TEST(AchievableRate, ScalarSingleUserMatchesShannon) {
  const Complex h(0.3, 0.8);
  const double power = 0.7, eps2 = 0.05, bw = 2e6;
  ChannelSet ch;
  ch.channels = {CMatrix::Constant(1, 1, h)};
  ch.decoding_order = {0};
  PrecoderSet pc;
  pc.covariances = {CMatrix::Constant(1, 1, power)};
  auto p = unit_params(1, 1, 1, eps2 / bw);
  p.bandwidth_hz = bw;
  const double expected = bw * std::log2(1.0 + std::norm(h) * power / eps2);
  EXPECT_LE(rel_err(model::achievable_rate(0, ch, pc, p), expected), 1e-12);
}

TEST(AchievableRate, MatchesChainDifferenceOfLogDets) {
  // R_1 / B = log2|eps2 I + H1 S1 H1^H + H2 S2 H2^H| - log2|eps2 I + H2 S2 H2^H|.
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto rs = random_system(rng, 2, 2, 4, 1.0);
    rs.ch.decoding_order = {0, 1};
    const double eps2 = 0.01;
    const auto p = unit_params(2, 2, 4, eps2);
    const CMatrix& h1 = rs.ch.channels[0];
    const CMatrix& h2 = rs.ch.channels[1];
    const CMatrix base = eps2 * CMatrix::Identity(4, 4) + h2 * rs.pc.covariances[1] * h2.adjoint();
    const double g11 = log2det_eig(base + h1 * rs.pc.covariances[0] * h1.adjoint());
    const double g12 = log2det_eig(base);
    EXPECT_LE(rel_err(model::achievable_rate(0, rs.ch, rs.pc, p), g11 - g12), 1e-9);
  }
}

TEST(AchievableRate, NonnegativeAndMonotoneInPower) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> alpha(1.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto rs = random_system(rng, 3, 2, 3, 1.0);
    const auto p = unit_params(3, 2, 3, 1e-3);
    for (std::size_t k = 0; k < 3; ++k) {
      const double r0 = model::achievable_rate(k, rs.ch, rs.pc, p);
      EXPECT_GE(r0, 0.0);
      PrecoderSet scaled = rs.pc;
      scaled.covariances[k] *= alpha(rng);
      EXPECT_GE(model::achievable_rate(k, rs.ch, scaled, p), r0 - 1e-12 * std::max(1.0, r0));
    }
  }
}

TEST(AchievableRate, SumRateTelescopesForAnyOrder) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    auto rs = random_system(rng, 3, 2, 4, 1.0);
    const double eps2 = 0.02;
    const auto p = unit_params(3, 2, 4, eps2);
    CMatrix all = eps2 * CMatrix::Identity(4, 4);
    for (std::size_t k = 0; k < 3; ++k) {
      all += rs.ch.channels[k] * rs.pc.covariances[k] * rs.ch.channels[k].adjoint();
    }
    const double expected = log2det_eig(all) - 4.0 * std::log2(eps2);
    double sum = 0.0;
    for (double r : model::achievable_rates(rs.ch, rs.pc, p)) sum += r;
    EXPECT_NEAR(sum, expected, 1e-8);
  }
}

TEST(AchievableRate, RelabelingUsersWithOrderLeavesRatesUnchanged) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto rs = random_system(rng, 3, 2, 4, 1.0);
    const auto p = unit_params(3, 2, 4, 0.01);
    std::vector<std::size_t> perm = {0, 1, 2};  // new label of old user k is perm[k]
    std::shuffle(perm.begin(), perm.end(), rng);
    RandomSystem relabeled = rs;
    for (std::size_t k = 0; k < 3; ++k) {
      relabeled.ch.channels[perm[k]] = rs.ch.channels[k];
      relabeled.pc.covariances[perm[k]] = rs.pc.covariances[k];
    }
    for (std::size_t pos = 0; pos < 3; ++pos) relabeled.ch.decoding_order[pos] = perm[rs.ch.decoding_order[pos]];
    const auto r0 = model::achievable_rates(rs.ch, rs.pc, p);
    const auto r1 = model::achievable_rates(relabeled.ch, relabeled.pc, p);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_LE(rel_err(r1[perm[k]], r0[k]), 1e-12);

    const std::vector<TaskSpec> tasks(3, TaskSpec{1e3, 10.0, 1.0});
    OffloadDecision dec{{0.3, 0.6, 0.9}, {5e3, 3e3, 1e3}};
    OffloadDecision dec1 = dec;
    for (std::size_t k = 0; k < 3; ++k) {
      dec1.ratios[perm[k]] = dec.ratios[k];
      dec1.frequencies[perm[k]] = dec.frequencies[k];
    }
    const double e0 = model::evaluate(rs.ch, rs.pc, dec, tasks, p).total_energy_j;
    const double e1 = model::evaluate(relabeled.ch, relabeled.pc, dec1, tasks, p).total_energy_j;
    EXPECT_LE(rel_err(e1, e0), 1e-12);
  }
}

TEST(TimesAndEnergies, NoOffloadingAtDeadlineTightFrequency) {
  const TaskSpec t = reference_task(8.0);
  const double f = t.cycles() / t.deadline_s;
  EXPECT_EQ(model::offload_time(0.0, t.data_bits, 0.0, 0), 0.0);
  EXPECT_DOUBLE_EQ(model::local_time(0.0, t, f, 0), t.deadline_s);
}

TEST(TimesAndEnergies, FullOffloadingHasNoLocalCost) {
  const TaskSpec t = reference_task();
  EXPECT_EQ(model::local_time(1.0, t, 0.0, 0), 0.0);
  EXPECT_EQ(model::local_energy(1.0, t, 3e9, 1e-32), 0.0);
}

TEST(TimesAndEnergies, LocalEnergyHandValue) {
  // 1e-32 * 0.1 * 8e9 * (1.6e9)^2
  const TaskSpec t = reference_task();
  EXPECT_LE(rel_err(model::local_energy(0.9, t, 1.6e9, 1e-32), 2.048e-5), 1e-12);
}

TEST(TimesAndEnergies, ErrorsOnDeadLinkAndZeroFrequency) {
  const TaskSpec t = reference_task();
  try {
    model::offload_time(0.5, t.data_bits, 0.0, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::offload_rate_zero);
    EXPECT_EQ(e.user(), std::optional<std::size_t>(1));
  }
  try {
    model::local_time(0.5, t, 0.0, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::frequency_zero);
  }
}

TEST(Evaluate, TotalsMatchTermByTermReconstruction) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto rs = random_system(rng, 2, 2, 4, 1.0);
    const auto p = unit_params(2, 2, 4, 0.01);
    const std::vector<TaskSpec> tasks = {TaskSpec{2e3, 30.0, 0.5}, TaskSpec{1e3, 50.0, 0.7}};
    OffloadDecision dec{{u(rng), u(rng)}, {1e5 * (1 + u(rng)), 1e5 * (1 + u(rng))}};
    const auto bd = model::evaluate(rs.ch, rs.pc, dec, tasks, p);
    double expected = 0.0;
    for (std::size_t k = 0; k < 2; ++k) {
      const double r = model::achievable_rate(k, rs.ch, rs.pc, p);
      const double b = dec.ratios[k], f = dec.frequencies[k];
      const double cl = tasks[k].cycles();
      expected += b * tasks[k].data_bits / r * rs.pc.covariances[k].trace().real() + p.eta * (1 - b) * cl * f * f;
      EXPECT_DOUBLE_EQ(bd.users[k].rate_bps, r);
      EXPECT_LE(rel_err(bd.users[k].local_time_s, (1 - b) * cl / f), 1e-14);
    }
    double sum = 0.0;
    for (const auto& ue : bd.users) sum += ue.offload_energy_j + ue.local_energy_j;
    EXPECT_LE(rel_err(bd.total_energy_j, expected), 1e-12);
    EXPECT_LE(rel_err(bd.total_energy_j, sum), 1e-12);
  }
}

TEST(CheckConstraints, ZeroDecisionFailsOnlyLocalTime) {
  const auto p = reference_params();
  auto sc = reference_scenario(11, 0);
  OffloadDecision dec{{0.0, 0.0}, {0.0, 0.0}};
  const auto rep = model::check_constraints(sc.channels, PrecoderSet::zeros(p), dec, sc.tasks, p, 1e-9);
  for (std::size_t k = 0; k < 2; ++k) {
    for (const char* name : {"power", "ratio_min", "ratio_max", "frequency_nonneg", "frequency_max", "offload_time"}) {
      ASSERT_NE(rep.find(name, k), nullptr) << name;
      EXPECT_TRUE(rep.find(name, k)->pass) << name;
    }
    EXPECT_FALSE(rep.find("local_time", k)->pass);
  }
  EXPECT_FALSE(rep.feasible());
}

TEST(CheckConstraints, DeadlineTightFrequencyHasZeroSlack) {
  const auto p = reference_params();
  auto sc = reference_scenario(12, 0);
  const double beta = 0.9;
  const double f = closed_form::optimal_frequency(beta, sc.tasks[0], p.f_max_hz);
  OffloadDecision dec{{beta, beta}, {f, f}};
  auto pc = PrecoderSet::scaled_identity(p, 1.0);
  const auto rep = model::check_constraints(sc.channels, pc, dec, sc.tasks, p, 1e-9);
  EXPECT_LE(std::abs(rep.find("local_time", 0)->slack), 1e-12);
  EXPECT_TRUE(rep.find("local_time", 0)->pass);
}

TEST(CheckConstraints, PowerOverBudgetReportsNegativeSlack) {
  const auto p = reference_params();
  auto sc = reference_scenario(13, 0);
  auto pc = PrecoderSet::scaled_identity(p, p.p_max_w + 1e-3);
  OffloadDecision dec{{1.0, 1.0}, {0.0, 0.0}};
  const auto rep = model::check_constraints(sc.channels, pc, dec, sc.tasks, p, 1e-9);
  EXPECT_FALSE(rep.find("power", 0)->pass);
  EXPECT_NEAR(rep.find("power", 0)->slack, -1e-3, 1e-12);
}

TEST(PrecoderSetInvariants, RejectsNonHermitianIndefiniteAndOverBudget) {
  const auto p = reference_params();
  auto pc = PrecoderSet::scaled_identity(p, 0.5);
  EXPECT_NO_THROW(pc.validate(p));
  auto bad = pc;
  bad.covariances[0](0, 1) = Complex(1e-3, 0.0);
  EXPECT_THROW(bad.validate(p), Error);
  bad = pc;
  bad.covariances[1](1, 1) = -1e-6;
  EXPECT_THROW(bad.validate(p), Error);
  bad = PrecoderSet::scaled_identity(p, p.p_max_w + 1e-6);
  EXPECT_THROW(bad.validate(p), Error);
}

TEST(ChannelSetInvariants, RejectsBadShapesAndOrders) {
  const auto p = reference_params();
  auto sc = reference_scenario(14, 0);
  EXPECT_NO_THROW(sc.channels.validate(p));
  auto bad = sc.channels;
  bad.decoding_order = {0, 0};
  EXPECT_THROW(bad.validate(p), Error);
  bad = sc.channels;
  bad.channels[1] = CMatrix::Zero(3, 2);
  EXPECT_THROW(bad.validate(p), Error);
}

TEST(SystemParams, AntennaWarningOnlyWhenTxNotBelowRx) {
  EXPECT_FALSE(reference_params(2, 4).antenna_warning().has_value());
  EXPECT_TRUE(reference_params(4, 4).antenna_warning().has_value());
  EXPECT_DOUBLE_EQ(reference_params().noise_power(), std::pow(10.0, -17.4) / 1000.0 * 25e6);
}
