#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mecnoma {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

enum class ErrorKind {
  structural,
  invalid_value,
  offload_rate_zero,
  frequency_zero,
  frequency_cap_exceeded,
  instance_infeasible,
  factorization,
  rate_constraint_infeasible,
  surrogate_infeasible,
  deadline_unreachable,
  numerical_failure,
  config,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::structural: return "structural";
    case ErrorKind::invalid_value: return "invalid-value";
    case ErrorKind::offload_rate_zero: return "offload-rate-zero";
    case ErrorKind::frequency_zero: return "frequency-zero";
    case ErrorKind::frequency_cap_exceeded: return "frequency-cap-exceeded";
    case ErrorKind::instance_infeasible: return "instance-infeasible";
    case ErrorKind::factorization: return "factorization";
    case ErrorKind::rate_constraint_infeasible: return "rate-constraint-infeasible";
    case ErrorKind::surrogate_infeasible: return "surrogate-infeasible";
    case ErrorKind::deadline_unreachable: return "deadline-unreachable";
    case ErrorKind::numerical_failure: return "numerical-failure";
    case ErrorKind::config: return "config";
  }
  return "unknown";
}

/// Library-wide exception. `user` names the offending user when one exists;
/// `value` carries a kind-specific payload (e.g. the minimum feasible ratio
/// for frequency-cap-exceeded).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::optional<std::size_t> user = std::nullopt,
        double value = std::nan(""))
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), user_(user), value_(value) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> user() const noexcept { return user_; }
  double value() const noexcept { return value_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> user_;
  double value_;
};

struct SystemParams {
  std::size_t n_users = 1;
  std::size_t n_tx = 1;
  std::size_t n_rx = 1;
  double bandwidth_hz = 1.0;
  double noise_density_w_per_hz = 1.0;
  double p_max_w = 1.0;
  double f_max_hz = 1.0;
  double eta = 1.0;

  /// Receiver noise power N0 * B.
  double noise_power() const { return noise_density_w_per_hz * bandwidth_hz; }

  void validate() const {
    if (n_users < 1 || n_tx < 1 || n_rx < 1) {
      throw Error(ErrorKind::invalid_value, "n_users, n_tx and n_rx must be >= 1");
    }
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw Error(ErrorKind::invalid_value, std::string(name) + " must be finite and > 0");
      }
    };
    positive(bandwidth_hz, "bandwidth_hz");
    positive(noise_density_w_per_hz, "noise_density_w_per_hz");
    positive(p_max_w, "p_max_w");
    positive(f_max_hz, "f_max_hz");
    positive(eta, "eta");
  }

  /// The system model assumes fewer transmit than receive antennas; the math
  /// does not need it, so this is only a warning.
  std::optional<std::string> antenna_warning() const {
    if (n_tx >= n_rx) {
      std::ostringstream os;
      os << "n_tx (" << n_tx << ") >= n_rx (" << n_rx << "): receiver cannot separate all streams";
      return os.str();
    }
    return std::nullopt;
  }
};

struct TaskSpec {
  double data_bits = 1.0;
  double cycles_per_bit = 1.0;
  double deadline_s = 1.0;

  double cycles() const { return cycles_per_bit * data_bits; }

  void validate() const {
    if (!(data_bits > 0.0) || !(cycles_per_bit > 0.0) || !(deadline_s > 0.0) || !std::isfinite(data_bits) ||
        !std::isfinite(cycles_per_bit) || !std::isfinite(deadline_s)) {
      throw Error(ErrorKind::invalid_value, "task fields must be finite and > 0");
    }
  }
};

/// Per-user channels H_k (n_rx x n_tx) and the SIC decoding order.
/// decoding_order[p] is the user decoded at position p (0-based).
struct ChannelSet {
  std::vector<CMatrix> channels;
  std::vector<std::size_t> decoding_order;

  std::size_t size() const { return channels.size(); }

  /// position[k] = index of user k within decoding_order.
  std::vector<std::size_t> positions() const {
    std::vector<std::size_t> pos(decoding_order.size());
    for (std::size_t p = 0; p < decoding_order.size(); ++p) pos[decoding_order[p]] = p;
    return pos;
  }

  void validate(const SystemParams& params) const {
    if (channels.size() != params.n_users) {
      throw Error(ErrorKind::structural, "channel count does not match n_users");
    }
    for (std::size_t k = 0; k < channels.size(); ++k) {
      if (static_cast<std::size_t>(channels[k].rows()) != params.n_rx ||
          static_cast<std::size_t>(channels[k].cols()) != params.n_tx) {
        throw Error(ErrorKind::structural, "channel has wrong shape", k);
      }
    }
    if (decoding_order.size() != channels.size()) {
      throw Error(ErrorKind::structural, "decoding order length does not match channel count");
    }
    std::vector<bool> seen(channels.size(), false);
    for (std::size_t u : decoding_order) {
      if (u >= channels.size() || seen[u]) {
        throw Error(ErrorKind::structural, "decoding order is not a permutation");
      }
      seen[u] = true;
    }
  }

  static std::vector<std::size_t> identity_order(std::size_t n) {
    std::vector<std::size_t> order(n);
    for (std::size_t k = 0; k < n; ++k) order[k] = k;
    return order;
  }
};

inline constexpr double kHermitianTol = 1e-10;
inline constexpr double kPsdTol = 1e-10;
inline constexpr double kPowerTol = 1e-9;

/// Transmit covariances S_k = F_k F_k^H.
struct PrecoderSet {
  std::vector<CMatrix> covariances;

  std::size_t size() const { return covariances.size(); }

  static PrecoderSet zeros(const SystemParams& params) {
    PrecoderSet pc;
    pc.covariances.assign(params.n_users, CMatrix::Zero(params.n_tx, params.n_tx));
    return pc;
  }

  static PrecoderSet scaled_identity(const SystemParams& params, double power_per_user) {
    PrecoderSet pc;
    const double per_stream = power_per_user / static_cast<double>(params.n_tx);
    pc.covariances.assign(params.n_users, per_stream * CMatrix::Identity(params.n_tx, params.n_tx));
    return pc;
  }

  void validate(const SystemParams& params) const {
    if (covariances.size() != params.n_users) {
      throw Error(ErrorKind::structural, "covariance count does not match n_users");
    }
    for (std::size_t k = 0; k < covariances.size(); ++k) {
      const CMatrix& s = covariances[k];
      if (static_cast<std::size_t>(s.rows()) != params.n_tx || static_cast<std::size_t>(s.cols()) != params.n_tx) {
        throw Error(ErrorKind::structural, "covariance has wrong shape", k);
      }
      if ((s - s.adjoint()).cwiseAbs().maxCoeff() > kHermitianTol) {
        throw Error(ErrorKind::invalid_value, "covariance is not Hermitian", k);
      }
      Eigen::SelfAdjointEigenSolver<CMatrix> es(s, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -kPsdTol) {
        throw Error(ErrorKind::invalid_value, "covariance is not PSD", k);
      }
      if (s.trace().real() > params.p_max_w + kPowerTol) {
        throw Error(ErrorKind::invalid_value, "covariance exceeds power budget", k);
      }
    }
  }
};

struct OffloadDecision {
  std::vector<double> ratios;
  std::vector<double> frequencies;

  void validate(const SystemParams& params) const {
    if (ratios.size() != params.n_users || frequencies.size() != params.n_users) {
      throw Error(ErrorKind::structural, "decision length does not match n_users");
    }
    for (std::size_t k = 0; k < ratios.size(); ++k) {
      if (!(ratios[k] >= 0.0 && ratios[k] <= 1.0)) throw Error(ErrorKind::invalid_value, "ratio outside [0,1]", k);
      if (!(frequencies[k] >= 0.0)) throw Error(ErrorKind::invalid_value, "negative frequency", k);
    }
  }
};

struct UserEnergy {
  double offload_energy_j = 0.0;
  double local_energy_j = 0.0;
  double offload_time_s = 0.0;
  double local_time_s = 0.0;
  double rate_bps = 0.0;
};

struct EnergyBreakdown {
  std::vector<UserEnergy> users;
  double total_energy_j = 0.0;
};

}  // namespace mecnoma
