#pragma once

// Experiment configuration (INI text with section headers) and the sweep
// runners behind the command-line tool.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vqoe/analytic.hpp"
#include "vqoe/flowsim.hpp"
#include "vqoe/inference.hpp"
#include "vqoe/report.hpp"

namespace vqoe::experiment {

enum class PdSetting { automatic, on, off };

struct ExperimentConfig {
  std::uint64_t seed = 1;

  // [system]
  double capacity_bps = 5e6;
  double bitrate_bps = 980e3;
  double p1 = 0.6;
  double mean1 = 94.0;
  double mean2 = 1143.0;
  /// Total arrival rate; 0 means calibrate from the swept rho.
  double lambda = 0.0;
  /// automatic: on for the pd and pd_finite_duration simulator modes.
  PdSetting pd_mode = PdSetting::automatic;

  // [solver]
  analytic::BoundaryRule boundary = analytic::BoundaryRule::bounded_modes;
  bool force_integration = false;
  bool pd_refine_arrival_chain = true;

  // [sim]
  flowsim::Mode mode = flowsim::Mode::basic;
  flowsim::RebufferPolicy rebuffer_policy = flowsim::RebufferPolicy::rebuffer_to_qa;
  /// Accepted flows pooled over all replicas.
  long target_flows = 100000;
  long warmup_flows = 2000;
  int replicas = 1;
  double horizon_s = 0.0;
  std::string trace;
  double omega_min1 = 0.2;
  double omega_min2 = 0.05;

  // [sweep]: cartesian product, K outermost and q_a innermost. The weight
  // ratio is phi1/phi2 with phi2 = 1.
  std::vector<int> sweep_max_flows{10};
  std::vector<double> sweep_phi_ratio{1.0};
  std::vector<double> sweep_rho{0.96};
  std::vector<double> sweep_q_a{0.0};

  // [compare]
  double tolerance = 0.03;

  // [fit]
  std::string fit_input;
  std::string doc_table_out;
  workload::MleMethod fit_method = workload::MleMethod::em;
  int cdf_points = 1000;

  // [infer]
  std::string infer_table;
  double infer_duration = 300.0;
  int infer_samples = 1;

  // [output]
  std::string out;
  enum class Format { csv, json } format = Format::csv;

  /// Sweep axes nonempty, numeric ranges sane, referenced files present.
  /// `command` limits the file checks to what that subcommand reads.
  void validate(const std::string& command = "") const;

  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig default_config();
/// Unknown sections or keys are validation errors.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);
/// Every key with its current value; parse_config(render_config(c)) == c.
std::string render_config(const ExperimentConfig& cfg);

struct SweepPoint {
  int max_flows;
  double phi_ratio;
  double rho;
  double q_a;
};

std::vector<SweepPoint> expand_sweep(const ExperimentConfig& cfg);

/// Arrivals from the point's rho unless lambda is set.
markov::SystemConfig system_at(const ExperimentConfig& cfg, const SweepPoint& pt);
analytic::SolverOptions solver_options(const ExperimentConfig& cfg);
bool pd_enabled(const ExperimentConfig& cfg);
/// Seed is derived from the root seed and the point index.
flowsim::SimConfig sim_at(const ExperimentConfig& cfg, const SweepPoint& pt, std::size_t index,
                          const std::optional<std::vector<ViewRecord>>& trace);

struct SolveRow {
  SweepPoint point;
  analytic::QoEReport report;
  bool ok = true;
  std::string error;
};

struct SimRow {
  SweepPoint point;
  flowsim::SimReport report;
};

/// Numerical failures are kept per row; everything else propagates.
std::vector<SolveRow> run_solve(const ExperimentConfig& cfg);
std::vector<SimRow> run_simulate(const ExperimentConfig& cfg);

report::CsvTable solve_table(const std::vector<SolveRow>& rows);
report::CsvTable simulate_table(const std::vector<SimRow>& rows);
/// Per point, class and metric: model, simulation, |gap| and a flag that is
/// pass, fail, or expected for the known PD growth of the class-2 gap at
/// large q_a (gap at most 0.10).
report::CsvTable compare_table(const ExperimentConfig& cfg, const std::vector<SolveRow>& model,
                               const std::vector<SimRow>& sim);

report::json solve_json(const std::vector<SolveRow>& rows);
report::json simulate_json(const std::vector<SimRow>& rows);

struct FitOutcome {
  workload::ModelSelection selection;
  long records = 0;
  /// Only when a DoC table output path is configured.
  std::optional<inference::TableFit> doc;
};

FitOutcome run_fit(const ExperimentConfig& cfg);
/// Columns: family, dof, the parameters of every family (blank where not
/// applicable), log-likelihood, adjusted R^2, rank, selected.
report::CsvTable fit_table(const workload::ModelSelection& sel);
report::json fit_json(const FitOutcome& fit);

struct InferSample {
  double duration;
  double viewing_time;
  double gamma;
};

std::vector<InferSample> run_infer(const ExperimentConfig& cfg);
report::CsvTable infer_table(const std::vector<InferSample>& samples);

}  // namespace vqoe::experiment
