#pragma once

// Flow-level Markov structure of a cell shared by short (class 1) and long
// (class 2) video flows under discriminatory processor sharing.

#include <vector>

#include <Eigen/Dense>

namespace vqoe::markov {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct SystemConfig {
  double capacity_bps = 5e6;  // C
  int max_flows = 10;         // admission cap K
  double bitrate_bps = 980e3;
  double phi1 = 1.0;  // DPS weights
  double phi2 = 1.0;
  double lambda1 = 0.0;  // arrivals/s
  double lambda2 = 0.0;
  double theta1 = 1.0 / 94.0;  // viewing-time rates, 1/s
  double theta2 = 1.0 / 1143.0;
  double startup_threshold = 0.0;  // q_a, content-seconds
  bool pd_mode = false;
  int tagged_class = 1;

  double lambda() const { return lambda1 + lambda2; }
  double p1() const { return lambda() > 0.0 ? lambda1 / lambda() : 0.0; }
  /// Mean departure rate of a class-k flow alone in the cell: C theta_k / bitrate.
  double psi(int k) const;
  double theta(int k) const { return k == 1 ? theta1 : theta2; }
  double phi(int k) const { return k == 1 ? phi1 : phi2; }
  /// Offered load p1/psi1 + p2/psi2 times lambda.
  double offered_load() const;

  void validate() const;
};

/// Evaluation cell used throughout: C = 5 Mb/s, K = 10, 980 kb/s, equal
/// weights, p1 = 0.6 with means 94 s / 1143 s, arrivals calibrated to `rho`.
SystemConfig reference_config(double rho = 0.96);

/// Total arrival rate for the offered load rho: rho / (p1/psi1 + p2/psi2).
double calibrate_lambda(double rho, double p1, const SystemConfig& cfg);
double calibrate_lambda(double rho, const SystemConfig& cfg);
/// Copy of cfg with lambda1/lambda2 set from rho and the class-1 fraction p1.
SystemConfig with_load(SystemConfig cfg, double rho, double p1);

struct State {
  int i;  // other class-1 flows
  int j;  // other class-2 flows
  bool operator==(const State&) const = default;
};

/// Triangular lattice {(i, j) : i + j <= max_total} in the lexicographic
/// order (i major, j minor); index(i, j) + 1 is the 1-based position.
class StateSpace {
 public:
  /// Tagged-flow space S (i + j <= K - 1) or, with `extended`, the
  /// pre-arrival space used by MC1 (i + j <= K).
  explicit StateSpace(int max_flows, bool extended = false);

  int max_flows() const { return K_; }
  int max_total() const { return max_total_; }
  int size() const { return static_cast<int>(states_.size()); }
  bool extended() const { return max_total_ == K_; }

  bool contains(int i, int j) const { return i >= 0 && j >= 0 && i + j <= max_total_; }
  /// 0-based position; block i starts after all states with fewer class-1 flows.
  int index(int i, int j) const;
  const State& state(int idx) const { return states_[static_cast<std::size_t>(idx)]; }
  const std::vector<State>& states() const { return states_; }
  /// First index of the block with i class-1 flows and its length.
  int block_begin(int i) const { return index(i, 0); }
  int block_size(int i) const { return max_total_ - i + 1; }

 private:
  int K_;
  int max_total_;
  std::vector<State> states_;
};

struct BufferRates {
  Vector b;  // fill rate during startup, content-s per s
  Vector c;  // b - 1, net rate during playback
};

/// Tagged class-k download speed in content-seconds per second at each state of S.
BufferRates buffer_rates(const SystemConfig& cfg);

struct Mc1 {
  StateSpace space{1, true};
  Matrix generator;
  Vector eta1;  // departure rate of class-1 flows at each state
  Vector eta2;
};

/// Background chain before the tagged arrival. With `pd_refined`, the
/// departure rates are capped at i theta1 and j theta2.
Mc1 build_mc1(const SystemConfig& cfg, bool pd_refined = false);

/// Stationary z with z^T G = 0 and sum z = 1, one balance row replaced by
/// the normalization row. Throws NumericalError on a singular system.
Vector stationary_distribution(const Matrix& generator);

struct ArrivalDistribution {
  double p_rej = 0.0;
  Vector pi;  // over S, renormalized over admissible states
};

ArrivalDistribution arrival_distribution(const Vector& z, const StateSpace& extended_space);

struct PlaybackRates {
  Vector mu;       // other class-1 departures, (i, j) -> (i - 1, j)
  Vector nu;       // other class-2 departures, (i, j) -> (i, j - 1)
  Vector phi_abs;  // tagged-flow departure into the absorbing state
};

/// Background departure rates seen while the tagged flow (cfg.tagged_class)
/// is present, plus its own departure rate.
PlaybackRates mc2_mc3_rates(const SystemConfig& cfg);

/// Progressive-downloading caps: mu' = min(mu, i theta1),
/// nu' = min(nu, j theta2), phi' = min(phi, theta_tagged).
PlaybackRates pd_refined_rates(const PlaybackRates& rates, const SystemConfig& cfg);

/// Generator of the background population with the tagged flow present:
/// arrivals blocked on i + j = K - 1, departures mu and nu.
Matrix background_generator(const SystemConfig& cfg, const PlaybackRates& rates);

struct RateMatrices {
  StateSpace space{1};
  Mc1 mc1;
  PlaybackRates basic;
  PlaybackRates refined;
  BufferRates buffer;

  /// Rates the ODE systems use: refined under PD, basic otherwise.
  const PlaybackRates& active(const SystemConfig& cfg) const {
    return cfg.pd_mode ? refined : basic;
  }
};

/// Under PD the ODE rates are always refined; `refine_arrival_chain`
/// applies the same caps to MC1's departure rates.
RateMatrices build_rates(const SystemConfig& cfg, bool refine_arrival_chain = true);

}  // namespace vqoe::markov
