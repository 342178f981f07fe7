#pragma once

// Event-driven fluid simulator of one cell: Poisson or trace-driven video
// flows share C under DPS, prefetch q_a content-seconds, play at rate 1 and
// starve when the buffer empties before the download is complete.

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "vqoe/markov.hpp"
#include "vqoe/random.hpp"
#include "vqoe/records.hpp"
#include "vqoe/workload.hpp"

namespace vqoe::flowsim {

using markov::SystemConfig;

enum class Mode {
  basic,               // demand = viewing time; leave at download completion
  pd,                  // download runs ahead without bound; leave at watch end
  pd_finite_duration,  // leave at watch end or at full download, whichever is first
};

enum class RebufferPolicy { rebuffer_to_qa, stop_at_first };

enum class Phase { startup, playing, rebuffering, drained, departed };

const char* mode_name(Mode m);
Mode parse_mode(const std::string& s);
const char* policy_name(RebufferPolicy p);
RebufferPolicy parse_policy(const std::string& s);

/// Synthetic durations for finite-duration runs: duration = viewing / omega
/// with omega ~ Uniform(omega_min_k, 1] for class k.
struct DurationModel {
  double omega_min1 = 0.2;
  double omega_min2 = 0.05;
  double omega_min(int k) const { return k == 1 ? omega_min1 : omega_min2; }
  void validate() const;
};

struct Flow {
  std::uint64_t id = 0;
  int klass = 1;
  double weight = 1.0;
  double viewing_time = 0.0;  // content-seconds the user watches
  double video_duration = std::numeric_limits<double>::infinity();
  double demand = 0.0;        // content-seconds the player will fetch
  Phase phase = Phase::startup;
  double downloaded = 0.0;
  double played = 0.0;
  int starvations = 0;
  double admit_ts = 0.0;
  double depart_ts = 0.0;
  markov::State start_state{0, 0};            // other flows at admission
  std::optional<markov::State> startup_end;   // other flows when playback began
  int events = 0;
  bool counted = false;

  double buffer() const { return downloaded - played; }
  bool downloading() const { return downloaded < demand; }
};

struct SimConfig {
  SystemConfig system;
  Mode mode = Mode::basic;
  RebufferPolicy rebuffer_policy = RebufferPolicy::rebuffer_to_qa;
  /// Accepted flows to measure, after `warmup_flows` arrivals.
  long target_flows = 100000;
  long warmup_flows = 2000;
  /// Optional wall-clock horizon in seconds; 0 means run to target_flows.
  double horizon_s = 0.0;
  std::uint64_t seed = 1;
  /// Trace-driven arrivals; otherwise Poisson arrivals from `system`.
  std::optional<std::vector<ViewRecord>> trace;
  DurationModel durations;
  /// Keep every measured flow in the report.
  bool record_flows = false;

  void validate() const;
};

struct ClassStats {
  long accepted = 0;
  long rejected = 0;
  long starved = 0;          // flows with at least one starvation
  double dtvt_sum = 0.0;
  double dtvt_sq_sum = 0.0;
  std::vector<long> starvation_histogram;  // index = number of starvations

  long offered() const { return accepted + rejected; }
  double starvation_fraction() const;
  double mean_dtvt() const;
  /// Standard error of the starvation fraction (binomial).
  double starvation_stderr() const;
};

/// Per tagged class, indexed by the start state on S.
struct StartStateStats {
  std::vector<long> count;
  std::vector<long> starved;
  std::vector<double> dtvt_sum;
  /// startup[l][l'] counts flows admitted at l that began playback at l'.
  std::vector<std::vector<long>> startup;
};

struct SimReport {
  int max_flows = 1;
  ClassStats classes[2];
  StartStateStats by_start[2];
  /// Over the extended space (i + j <= K): seconds spent in each state and
  /// the state seen by each measured arrival, admitted or not.
  std::vector<double> occupancy_time;
  std::vector<long> arrival_states;
  double measured_time = 0.0;
  long events = 0;
  std::vector<std::string> warnings;
  std::vector<Flow> flows;  // only with record_flows

  const ClassStats& of(int k) const { return classes[k - 1]; }
  double rejection_fraction() const;
  /// Normalized occupancy and arrival histograms.
  markov::Vector occupancy() const;
  markov::Vector arrival_distribution() const;
};

/// Pooled counts; independent of the order of `reports`.
SimReport merge(const std::vector<SimReport>& reports);

/// Replica r uses seed + r.
SimReport run_replicas(const SimConfig& cfg, int replicas);
SimReport run(const SimConfig& cfg);

/// Class 1 with probability gamma(t) from the viewing-time mixture.
int assign_class(double viewing_time, const workload::HyperExpParams& params, Rng& rng);

/// Poisson arrivals over [0, horizon_s], class 1 w.p. p1, exponential
/// viewing time with the class rate from `params`. With `durations`, each
/// record also carries a synthetic video duration.
std::vector<ViewRecord> generate_workload(const workload::HyperExpParams& params, double lambda,
                                          double p1, double horizon_s, std::uint64_t seed,
                                          const std::optional<DurationModel>& durations = {});

class Simulator {
 public:
  explicit Simulator(SimConfig cfg);

  /// Processes one event; false once the run is complete.
  bool step();
  void run_to_end();

  double now() const { return now_; }
  const std::vector<Flow>& active_flows() const { return active_; }
  /// Download rate of an active flow in content-seconds per second.
  double download_rate(const Flow& f) const;
  double playback_rate(const Flow& f) const;
  bool finished() const { return finished_; }

  const SimReport& report() const { return report_; }

 private:
  struct Arrival {
    double ts;
    double viewing_time;
    double duration;
    int klass;
  };

  enum class EventKind { departure, buffer_empty, startup_complete, arrival, none };

  bool next_arrival(Arrival& out);
  void admit(const Arrival& a);
  void depart(std::size_t idx);
  void advance(double dt);
  void recompute_weights();
  markov::State others(int klass) const;

  SimConfig cfg_;
  Rng rng_;
  workload::HyperExpParams class_model_;
  double now_ = 0.0;
  std::vector<Flow> active_;
  double weight_sum_ = 0.0;
  std::optional<Arrival> pending_;
  std::size_t trace_pos_ = 0;
  bool source_exhausted_ = false;
  long arrivals_seen_ = 0;
  long measured_accepted_ = 0;
  long measured_live_ = 0;
  std::uint64_t next_id_ = 0;
  bool measuring_ = false;
  bool finished_ = false;
  markov::StateSpace ext_;
  markov::StateSpace space_;
  SimReport report_;
};

}  // namespace vqoe::flowsim
