#pragma once

// Viewing-time inference from video duration: per-duration-bucket models of
// the degree of completion (omega = viewing / duration), a table look-up
// sampler and the Bayesian class posterior.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vqoe/random.hpp"
#include "vqoe/records.hpp"
#include "vqoe/workload.hpp"

namespace vqoe::inference {

/// DoC values live on (0, kDocCeiling]; larger values are clamped.
inline constexpr double kDocCeiling = 1.05;

struct Bucket {
  double lo = 0.0;  // exclusive
  double hi = std::numeric_limits<double>::infinity();  // inclusive
  bool contains(double duration) const { return duration > lo && duration <= hi; }
};

/// 0-50, 50-100, 100-300, 300-500, 500-1000, 1000-2000, 2000-3000,
/// 3000-5000 and 5000+ seconds.
std::vector<Bucket> default_buckets();

/// Piecewise CDF of omega: c w^-a on (0, 1.05 - eps], then
/// ((1 - c (1.05 - eps)^-a) / eps) w - b up to 1.05. After construction the
/// realized CDF is clamped, made monotone and rescaled to reach 1 at 1.05.
class DocModel {
 public:
  static constexpr int kGridPoints = 10000;

  DocModel() = default;
  DocModel(Bucket bucket, double epsilon, double c, double a, double b);
  /// All mass at `atom`; serialized with epsilon = 0 and c = atom.
  static DocModel point_mass(Bucket bucket, double atom);

  const Bucket& bucket() const { return bucket_; }
  double epsilon() const { return epsilon_; }
  double c() const { return c_; }
  double a() const { return a_; }
  double b() const { return b_; }
  bool is_point_mass() const { return point_mass_; }

  /// The fitted formula before repair.
  double raw_cdf(double omega) const;
  /// Repaired CDF (piecewise linear between grid points).
  double cdf(double omega) const;
  double quantile(double u) const;
  double mean() const;
  /// Grid values of the repaired CDF at 1.05 k / kGridPoints.
  const std::vector<double>& grid() const { return grid_; }

  double sample_omega(Rng& rng) const;

 private:
  void repair();

  Bucket bucket_;
  double epsilon_ = 0.0;
  double c_ = 1.0;
  double a_ = 0.0;
  double b_ = 0.0;
  bool point_mass_ = true;
  std::vector<double> grid_;
};

struct DocFitOptions {
  long min_records = 500;
  /// Empirical CDF points used in the least-squares objective.
  int cdf_points = 1000;
  double epsilon_min = 0.005;
  double epsilon_max = 1.0;
};

struct DocFit {
  DocModel model;
  double rms_residual = 0.0;  // against the empirical CDF, after repair
  long records = 0;
  long clamped = 0;  // omega values above 1.05
};

/// Least-squares fit of the piecewise form to the empirical CDF of
/// omega = viewing / duration over the records in `bucket`.
DocFit fit_doc_model(std::span<const double> omegas, const Bucket& bucket,
                     const DocFitOptions& opts = {});
DocFit fit_doc_model(const std::vector<ViewRecord>& records, const Bucket& bucket,
                     const DocFitOptions& opts = {});

class BucketTable {
 public:
  BucketTable() = default;
  /// Buckets must be contiguous and increasing, starting at 0.
  explicit BucketTable(std::vector<DocModel> models);

  const std::vector<DocModel>& models() const { return models_; }
  /// Throws DomainError if no bucket holds the duration.
  const DocModel& lookup(double duration) const;

 private:
  std::vector<DocModel> models_;
};

struct TableFit {
  BucketTable table;
  std::vector<DocFit> fits;
};

TableFit fit_bucket_table(const std::vector<ViewRecord>& records,
                          const std::vector<Bucket>& buckets = default_buckets(),
                          const DocFitOptions& opts = {});

/// One line per bucket: `lo,hi,epsilon,c,a,b` (hi may be `inf`). Lines
/// starting with '#' and blank lines are skipped when reading.
void write_bucket_table(std::ostream& out, const BucketTable& table);
void write_bucket_table(const std::string& path, const BucketTable& table);
BucketTable read_bucket_table(std::istream& in);
BucketTable read_bucket_table(const std::string& path);

/// omega drawn from the bucket's model, times duration; at most 1.05 duration.
double sample_viewing_time_from_duration(double duration, const BucketTable& table, Rng& rng);

/// gamma(t) = p1 theta1 e^{-theta1 t} / (p1 theta1 e^{-theta1 t} + p2 theta2 e^{-theta2 t}).
double class_posterior(double viewing_time_estimate, const workload::HyperExpParams& params);

/// Two-sample Kolmogorov-Smirnov statistic.
double ks_distance(std::vector<double> a, std::vector<double> b);

/// Reference constants for the 0-50 s bucket; taken literally
/// they give F > 1 inside the domain, so they are not used for sampling.
struct ReferenceDocParameters {
  double epsilon = 0.9460;
  double c = 0.2733;
  double a = 0.6383;
  double b = 6.723;
};

/// Synthetic trace with log-normal durations and, per default bucket, a known
/// DoC model whose mean omega decreases with duration. Records carry
/// durations; arrivals are Poisson at `lambda`.
struct SyntheticCorpus {
  std::vector<ViewRecord> records;
  std::vector<DocModel> truth;  // one per default bucket
};
SyntheticCorpus synthetic_doc_corpus(long n, std::uint64_t seed, double lambda = 0.01);

}  // namespace vqoe::inference
