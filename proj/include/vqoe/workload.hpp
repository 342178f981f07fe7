#pragma once

// Viewing-time laws: the two-phase hyper-exponential mixture plus the
// exponential and generalized-Pareto alternatives it is compared against.

#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vqoe/random.hpp"

namespace vqoe::workload {

/// Two-phase mixture. Class 1 is the short-view phase, so theta1 > theta2
/// once canonicalized.
struct HyperExpParams {
  double p1 = 0.5;
  double theta1 = 1.0;  // 1/s
  double theta2 = 0.1;  // 1/s

  static HyperExpParams from_means(double p1, double mean1, double mean2) {
    return {p1, 1.0 / mean1, 1.0 / mean2};
  }

  double p2() const { return 1.0 - p1; }
  double mean() const { return p1 / theta1 + (1.0 - p1) / theta2; }

  /// Relabels the phases so that theta1 >= theta2. The pdf is unchanged.
  HyperExpParams canonical() const {
    if (theta1 >= theta2) return *this;
    return {1.0 - p1, theta2, theta1};
  }

  void validate() const;
};

struct ExpParams {
  double theta = 1.0;  // 1/s
  void validate() const;
};

struct GenParetoParams {
  double xi = 0.0;     // shape
  double sigma = 1.0;  // scale, seconds

  /// Right end of the support (infinite unless xi < 0).
  double upper_support() const;
  void validate() const;
};

using ModelParams = std::variant<HyperExpParams, ExpParams, GenParetoParams>;

enum class Family { hyperexp, genpareto, exponential };

const char* family_name(Family f);
int model_dof(Family f);
Family family_of(const ModelParams& p);

double hyperexp_pdf(double t, const HyperExpParams& p);
double hyperexp_cdf(double t, const HyperExpParams& p);
double exp_pdf(double t, const ExpParams& p);
double exp_cdf(double t, const ExpParams& p);
double genpareto_pdf(double t, const GenParetoParams& p);
double genpareto_cdf(double t, const GenParetoParams& p);

double model_pdf(double t, const ModelParams& p);
double model_cdf(double t, const ModelParams& p);

enum class MleMethod { em, newton };

struct FitOptions {
  /// Relative log-likelihood change that ends the iteration.
  double tol = 1e-8;
  int max_iter = 500;
  MleMethod method = MleMethod::em;
  /// Bound on the per-sample score norm required to report convergence.
  double grad_tol = 1e-5;
  /// Quantile points on which adjusted R^2 is evaluated.
  int cdf_points = 1000;
};

struct FitReport {
  ModelParams params;
  double loglik = 0.0;
  double adjusted_r2 = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Per-sample score norm at the returned parameters.
  double gradient_norm = 0.0;
  /// Mixture collapsed (p1 at a boundary or theta1 ~ theta2).
  bool near_degenerate = false;
  std::vector<double> loglik_trace;
  std::string message;
};

/// Spread-phase starting point: p1 = 0.5, theta1 = 2/mean, theta2 = 0.5/mean.
HyperExpParams default_init(std::span<const double> samples);

FitReport fit_hyperexp_mle(std::span<const double> samples, const HyperExpParams& init,
                           const FitOptions& opts = {});
FitReport fit_hyperexp_mle(std::span<const double> samples, const FitOptions& opts = {});
FitReport fit_exp_mle(std::span<const double> samples, const FitOptions& opts = {});
FitReport fit_genpareto_mle(std::span<const double> samples, const FitOptions& opts = {});

double hyperexp_loglik(std::span<const double> samples, const HyperExpParams& p);

struct CdfPoint {
  double t;
  double F;
};

/// Empirical CDF sampled at `n` evenly spaced quantile levels (m - 1/2)/n.
std::vector<CdfPoint> empirical_cdf_points(std::span<const double> samples, int n = 1000);

double adjusted_r_square(std::span<const CdfPoint> points,
                         const std::function<double(double)>& model_cdf, int dof_model);

struct ModelSelection {
  FitReport hyperexp;
  FitReport genpareto;
  FitReport exponential;
  /// Families ordered best first. Scores within `tie_margin` of each other
  /// are ordered by fewer parameters first.
  std::vector<Family> ranking;
  Family selected = Family::hyperexp;

  const FitReport& report(Family f) const;
};

ModelSelection compare_fits(std::span<const double> samples, const FitOptions& opts = {},
                            double tie_margin = 1e-5);

/// Class 1 w.p. p1, then an exponential draw with that class's rate.
double sample_viewing_time(const HyperExpParams& p, Rng& rng);
/// Same draw, also reporting the phase (1 or 2).
double sample_viewing_time(const HyperExpParams& p, Rng& rng, int& phase);

double sample_genpareto(const GenParetoParams& p, Rng& rng);

/// Posterior probability that a view of length t belongs to phase 1.
double class1_posterior(double t, const HyperExpParams& p);

}  // namespace vqoe::workload
