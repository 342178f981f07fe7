#pragma once

// Closed-form QoE of a tagged video flow: starvation probability and mean
// downloading-time / viewing-time ratio, from the first-passage ODEs over the
// tagged-flow state space.

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vqoe/markov.hpp"

namespace vqoe::analytic {

using markov::Matrix;
using markov::RateMatrices;
using markov::StateSpace;
using markov::SystemConfig;
using markov::Vector;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

enum class OdeKind { starvation, startup, sojourn };

/// dX/dq = matrix X (+ forcing for the sojourn system). Row l is the
/// balance equation of state l divided by its buffer rate.
struct OdeSystem {
  Matrix matrix;
  Vector divisors;  // c (starvation) or b (startup, sojourn), per state
  OdeKind kind = OdeKind::starvation;
  int max_flows = 1;
};

struct SpectralForm {
  CVector eigenvalues;
  CMatrix basis;
  CMatrix inverse_basis;
  double condition_estimate = 0.0;
  double reconstruction_error = 0.0;  // ||D L D^-1 - M||_inf / ||M||_inf
  bool valid = false;
  std::string message;
};

/// Which eigen-coefficients of W(0) are forced to zero.
enum class BoundaryRule {
  /// Every mode with Re >= 0 is suppressed (W stays bounded as q grows).
  bounded_modes,
  /// Coefficient l(i, j) is suppressed for each state with c >= 0, with the
  /// eigenvalues sorted by descending real part.
  state_indexed,
};

struct SolverOptions {
  BoundaryRule boundary = BoundaryRule::bounded_modes;
  double degenerate_rate_eps = 1e-9;
  /// Relative bitrate nudge applied when some |c| < degenerate_rate_eps.
  double bitrate_nudge = 1e-7;
  /// Spectral forms above this condition estimate are not used.
  double condition_limit = 1e8;
  double imag_tol = 1e-9;
  /// Force the Riccati / integration path for W and S.
  bool force_integration = false;
  /// Under PD, also cap the pre-arrival chain's departure rates.
  bool pd_refine_arrival_chain = true;
};

/// Starvation system: row l(i,j) holds the playback balance divided by c_{i,j}.
/// Throws DomainError if some |c_{i,j}| < eps.
OdeSystem build_mw(const RateMatrices& rates, const SystemConfig& cfg, double eps = 1e-9);
/// Startup system: same stencil with b divisors and no absorption term.
OdeSystem build_mv(const RateMatrices& rates, const SystemConfig& cfg);

SpectralForm decompose(const Matrix& m, double condition_limit = 1e8);

/// W(q) on the bounded branch of the starvation ODE, evaluated lazily.
class StarvationSolution {
 public:
  StarvationSolution() = default;
  StarvationSolution(CVector rates, CMatrix modes, CVector coefficients, double imag_tol)
      : rates_(std::move(rates)), modes_(std::move(modes)), coef_(std::move(coefficients)),
        imag_tol_(imag_tol) {}

  Vector at(double q) const;
  Vector initial() const { return at(0.0); }

 private:
  CVector rates_;
  CMatrix modes_;
  CVector coef_;
  double imag_tol_ = 1e-9;
};

/// Spectral route: W(q) = D exp(L q) D^-1 W(0) with W(0) = 1 on c < 0 states
/// and the remaining entries fixed by `rule`.
StarvationSolution solve_w_spectral(const OdeSystem& system, const SpectralForm& spectral,
                                    BoundaryRule rule = BoundaryRule::bounded_modes,
                                    double imag_tol = 1e-9);

/// Independent route: the first-return matrix Psi from the c < 0 to the c > 0
/// states solves a nonsymmetric algebraic Riccati equation (Newton from 0);
/// W_-(q) is integrated with classical RK4 and W_+ = Psi W_-.
struct RiccatiSolution {
  Matrix psi;            // (#c>0) x (#c<0)
  Matrix reduced;        // M_-- + M_-+ Psi
  std::vector<int> up;   // indices with c > 0
  std::vector<int> down; // indices with c < 0
  int newton_iterations = 0;
  double residual = 0.0;

  /// RK4 with steps chosen so that h * ||reduced||_inf <= max_step_norm.
  Vector at(double q, double max_step_norm = 0.02) const;
};

RiccatiSolution solve_w_riccati(const OdeSystem& system, int max_iter = 60);

Vector solve_w(double q, const OdeSystem& system, const SpectralForm& spectral,
               const SolverOptions& opts = {});

/// Startup transition matrix V(0; q_a) = exp(-M_V q_a) by scaling and squaring
/// with a Pade approximant. Rows are distributions over end-of-startup states.
Matrix solve_v(double q_a, const OdeSystem& system_v);
/// Same matrix from the eigendecomposition; only for well-conditioned forms.
Matrix solve_v_spectral(double q_a, const SpectralForm& spectral_v, double imag_tol = 1e-9);

/// Mean downloading time S(0; q_v) from each start state for viewing time q_v,
/// spectral closed form; the zero eigenvalue contributes exactly q_v.
Vector mean_sojourn(double q_v, const OdeSystem& system_v, const SpectralForm& spectral_v,
                    double imag_tol = 1e-9);
/// Same quantity by RK4 integration of dS/du = -M_V S + 1/b from u = 0.
Vector mean_sojourn_integrated(double q_v, const OdeSystem& system_v, double max_step_norm = 0.02);

/// Same quantity from the exponential of the augmented matrix [-M_V 1/b; 0 0].
Vector mean_sojourn_expm(double q_v, const OdeSystem& system_v);

struct Diagnostics {
  double condition_w = 0.0;
  double condition_v = 0.0;
  bool w_integrated = false;
  bool v_spectral_ok = false;
  double bitrate_used = 0.0;
  std::vector<std::string> warnings;
};

struct StarvationResult {
  double probability = 0.0;
  Vector pi;        // arrival distribution over S
  Matrix startup;   // V(0; q_a)
  Vector playback;  // W(q_a)
  double p_rej = 0.0;
  Diagnostics diagnostics;
};

/// P_s(q_a) = exp(-theta_k q_a) pi V(0; q_a) W(q_a) for the tagged class in cfg.
StarvationResult starvation_probability(const SystemConfig& cfg, const SolverOptions& opts = {});

struct DtvtResult {
  double mean_ratio = 0.0;  // quadrature, primary
  double closed_form = 0.0; // pi D diag((theta/d) log(1 + d/theta)) D^-1 {1/b}
  double quadrature_error = 0.0;
  double truncation = 0.0;  // upper limit of the q_v integral
  Diagnostics diagnostics;
};

/// Mean DT/VT of the tagged class: pi int S(0;q)/q theta e^{-theta q} dq.
DtvtResult mean_dtvt(const SystemConfig& cfg, const SolverOptions& opts = {});

struct ClassQoE {
  int tagged_class = 1;
  double starvation_probability = 0.0;
  double mean_dtvt = 0.0;
  double mean_dtvt_closed_form = 0.0;
  bool ok = true;
  std::string error;
  Diagnostics diagnostics;
};

struct QoEReport {
  ClassQoE classes[2];
  double p_rej = 0.0;
  Vector occupancy;  // MC1 stationary distribution over the extended space
  double startup_threshold = 0.0;
  bool pd_mode = false;

  const ClassQoE& of(int k) const { return classes[k - 1]; }
};

/// Both tagged classes; per-class solver failures are recorded, not thrown.
QoEReport solve_qoe(const SystemConfig& cfg, const SolverOptions& opts = {});

/// Nudges the bitrate if some playback rate c is within eps of zero;
/// returns true and appends a warning when it did.
bool avoid_degenerate_rates(SystemConfig& cfg, const SolverOptions& opts,
                            std::vector<std::string>& warnings);

}  // namespace vqoe::analytic
