#include "vqoe/inference.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <boost/math/tools/minima.hpp>
#include <unsupported/Eigen/LevenbergMarquardt>

#include "vqoe/error.hpp"

namespace vqoe::inference {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Pool-adjacent-violators projection onto nondecreasing sequences.
void isotonic(std::vector<double>& y) {
  std::vector<double> value;
  std::vector<std::size_t> count;
  value.reserve(y.size());
  count.reserve(y.size());
  for (double v : y) {
    value.push_back(v);
    count.push_back(1);
    while (value.size() > 1 && value[value.size() - 2] > value.back()) {
      const std::size_t n = count.back() + count[count.size() - 2];
      const double merged =
          (value.back() * static_cast<double>(count.back()) +
           value[value.size() - 2] * static_cast<double>(count[count.size() - 2])) /
          static_cast<double>(n);
      value.pop_back();
      count.pop_back();
      value.back() = merged;
      count.back() = n;
    }
  }
  std::size_t k = 0;
  for (std::size_t blk = 0; blk < value.size(); ++blk)
    for (std::size_t r = 0; r < count[blk]; ++r) y[k++] = value[blk];
}

// Residuals of the piecewise form for a fixed epsilon, parameters
// (ln c, a, b). With `fix_b`, b follows from continuity at 1.05 - eps.
struct PiecewiseResidual : Eigen::DenseFunctor<double> {
  PiecewiseResidual(const std::vector<workload::CdfPoint>& pts, double eps, bool fix_b)
      : Eigen::DenseFunctor<double>(fix_b ? 2 : 3, static_cast<int>(pts.size())),
        pts_(pts), eps_(eps), w0_(kDocCeiling - eps), fix_b_(fix_b) {}

  double continuity_b(double lc, double a) const {
    const double f0 = std::exp(lc - a * std::log(w0_));
    return kDocCeiling * (1.0 - f0) / eps_ - 1.0;
  }

  int operator()(const InputType& x, ValueType& r) const {
    const double lc = x(0), a = x(1);
    const double b = fix_b_ ? continuity_b(lc, a) : x(2);
    const double f0 = std::exp(lc - a * std::log(w0_));
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      const double w = pts_[i].t;
      const double model = w <= w0_ ? std::exp(lc - a * std::log(w)) : (1.0 - f0) / eps_ * w - b;
      r(static_cast<Eigen::Index>(i)) = model - pts_[i].F;
    }
    return 0;
  }

  int df(const InputType& x, JacobianType& j) const {
    const double lc = x(0), a = x(1);
    const double lw0 = std::log(w0_);
    const double f0 = std::exp(lc - a * lw0);
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double w = pts_[i].t;
      if (w <= w0_) {
        const double f = std::exp(lc - a * std::log(w));
        j(row, 0) = f;
        j(row, 1) = -std::log(w) * f;
        if (!fix_b_) j(row, 2) = 0.0;
      } else {
        double d_lc = -f0 / eps_ * w;
        double d_a = f0 * lw0 / eps_ * w;
        if (fix_b_) {
          // b = 1.05 (1 - f0) / eps - 1 moves with f0 too
          d_lc += kDocCeiling * f0 / eps_;
          d_a -= kDocCeiling * f0 * lw0 / eps_;
        } else {
          j(row, 2) = -1.0;
        }
        j(row, 0) = d_lc;
        j(row, 1) = d_a;
      }
    }
    return 0;
  }

  const std::vector<workload::CdfPoint>& pts_;
  double eps_, w0_;
  bool fix_b_;
};

struct EpsilonFit {
  double sse = kInf;
  double c = 0.0, a = 0.0, b = 0.0;
};

EpsilonFit fit_fixed_epsilon(const std::vector<workload::CdfPoint>& pts, double eps) {
  const double w0 = kDocCeiling - eps;
  // log-linear start on the power-law region
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n_pow = 0, n_lin = 0;
  for (const auto& p : pts) {
    if (p.t <= w0) {
      if (p.F > 0.0 && p.t > 0.0) {
        const double x = std::log(p.t), y = std::log(p.F);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n_pow;
      }
    } else {
      ++n_lin;
    }
  }
  if (n_pow < 3) return {};
  const double denom = n_pow * sxx - sx * sx;
  const double slope = std::abs(denom) > 1e-300 ? (n_pow * sxy - sx * sy) / denom : 0.0;
  const double lc0 = (sy - slope * sx) / n_pow;
  const bool fix_b = n_lin == 0;
  PiecewiseResidual f(pts, eps, fix_b);
  Eigen::VectorXd x(fix_b ? 2 : 3);
  x(0) = lc0;
  x(1) = -slope;
  if (!fix_b) x(2) = f.continuity_b(lc0, -slope);
  Eigen::LevenbergMarquardt<PiecewiseResidual> lm(f);
  lm.setMaxfev(400);
  lm.minimize(x);
  Eigen::VectorXd r(static_cast<Eigen::Index>(pts.size()));
  f(x, r);
  EpsilonFit out;
  out.sse = r.squaredNorm();
  if (!std::isfinite(out.sse)) return {};
  out.c = std::exp(x(0));
  out.a = x(1);
  out.b = fix_b ? f.continuity_b(x(0), x(1)) : x(2);
  return out;
}

double parse_field(const std::string& s, std::size_t line) {
  std::string t = s;
  t.erase(0, t.find_first_not_of(" \t"));
  t.erase(t.find_last_not_of(" \t\r") + 1);
  if (t == "inf" || t == "+inf" || t == "Inf") return kInf;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ParseError("bad number '" + t + "'", line);
  return v;
}

std::string format_number(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::vector<Bucket> default_buckets() {
  const double edges[] = {0, 50, 100, 300, 500, 1000, 2000, 3000, 5000, kInf};
  std::vector<Bucket> out;
  for (int k = 0; k < 9; ++k) out.push_back({edges[k], edges[k + 1]});
  return out;
}

DocModel::DocModel(Bucket bucket, double epsilon, double c, double a, double b)
    : bucket_(bucket), epsilon_(epsilon), c_(c), a_(a), b_(b), point_mass_(false) {
  if (!(epsilon > 0.0 && epsilon < kDocCeiling))
    throw DomainError("DoC epsilon must lie in (0, 1.05)");
  if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("DoC coefficient c must be > 0");
  if (!std::isfinite(a) || !std::isfinite(b)) throw DomainError("DoC parameters must be finite");
  repair();
}

DocModel DocModel::point_mass(Bucket bucket, double atom) {
  if (!(atom > 0.0 && atom <= kDocCeiling)) throw DomainError("point mass must lie in (0, 1.05]");
  DocModel m;
  m.bucket_ = bucket;
  m.epsilon_ = 0.0;
  m.c_ = atom;
  m.a_ = 0.0;
  m.b_ = 0.0;
  m.point_mass_ = true;
  return m;
}

double DocModel::raw_cdf(double omega) const {
  if (point_mass_) return omega >= c_ ? 1.0 : 0.0;
  if (omega <= 0.0) return 0.0;
  if (omega > kDocCeiling) return 1.0;
  const double w0 = kDocCeiling - epsilon_;
  if (omega <= w0) return c_ * std::pow(omega, -a_);
  const double f0 = c_ * std::pow(w0, -a_);
  return (1.0 - f0) / epsilon_ * omega - b_;
}

void DocModel::repair() {
  grid_.assign(kGridPoints + 1, 0.0);
  for (int k = 1; k <= kGridPoints; ++k) {
    const double w = kDocCeiling * k / kGridPoints;
    const double f = raw_cdf(w);
    grid_[static_cast<std::size_t>(k)] = std::isnan(f) ? 0.0 : std::clamp(f, 0.0, 1.0);
  }
  isotonic(grid_);
  const double top = grid_.back();
  if (!(top > 0.0)) throw DomainError("DoC model carries no probability mass on (0, 1.05]");
  for (double& g : grid_) g /= top;
  grid_.front() = 0.0;
  grid_.back() = 1.0;
  for (std::size_t k = 1; k < grid_.size(); ++k)
    if (grid_[k] < grid_[k - 1])
      throw NumericalError("DoC CDF is not monotone after repair");
}

double DocModel::cdf(double omega) const {
  if (point_mass_) return omega >= c_ ? 1.0 : 0.0;
  if (omega <= 0.0) return 0.0;
  if (omega >= kDocCeiling) return 1.0;
  const double pos = omega / kDocCeiling * kGridPoints;
  const auto k = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(k);
  return grid_[k] + frac * (grid_[k + 1] - grid_[k]);
}

double DocModel::quantile(double u) const {
  if (point_mass_) return c_;
  u = std::clamp(u, 0.0, 1.0);
  const auto it = std::lower_bound(grid_.begin() + 1, grid_.end(), u);
  const auto k = static_cast<std::size_t>(it - grid_.begin());
  const double h = kDocCeiling / kGridPoints;
  if (k >= grid_.size()) return kDocCeiling;
  const double lo = grid_[k - 1], hi = grid_[k];
  const double frac = hi > lo ? (u - lo) / (hi - lo) : 1.0;
  return (static_cast<double>(k - 1) + frac) * h;
}

double DocModel::mean() const {
  if (point_mass_) return c_;
  const double h = kDocCeiling / kGridPoints;
  double s = 0.0;
  for (std::size_t k = 1; k < grid_.size(); ++k) s += 1.0 - 0.5 * (grid_[k] + grid_[k - 1]);
  return s * h;
}

double DocModel::sample_omega(Rng& rng) const { return quantile(uniform_open(rng)); }

DocFit fit_doc_model(std::span<const double> omegas, const Bucket& bucket,
                     const DocFitOptions& opts) {
  const auto n = static_cast<long>(omegas.size());
  if (n < opts.min_records)
    throw DomainError("bucket (" + format_number(bucket.lo) + ", " + format_number(bucket.hi) +
                      "] has " + std::to_string(n) + " records, need at least " +
                      std::to_string(opts.min_records));
  DocFit out;
  out.records = n;
  std::vector<double> w;
  w.reserve(omegas.size());
  for (double x : omegas) {
    if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("DoC values must be finite and > 0");
    if (x > kDocCeiling) ++out.clamped;
    w.push_back(std::min(x, kDocCeiling));
  }
  const auto [mn, mx] = std::minmax_element(w.begin(), w.end());
  if (*mx - *mn <= 1e-12 * *mx)
    throw DomainError("degenerate DoC sample: point mass at omega = " + format_number(*mn));

  const auto pts = workload::empirical_cdf_points(w, opts.cdf_points);
  const double lo = std::log(opts.epsilon_min), hi = std::log(opts.epsilon_max);
  constexpr int kGrid = 40;
  std::vector<double> sse(kGrid + 1);
  int best = 0;
  for (int k = 0; k <= kGrid; ++k) {
    const double eps = std::exp(lo + (hi - lo) * k / kGrid);
    sse[static_cast<std::size_t>(k)] = fit_fixed_epsilon(pts, eps).sse;
    if (sse[static_cast<std::size_t>(k)] < sse[static_cast<std::size_t>(best)]) best = k;
  }
  if (!std::isfinite(sse[static_cast<std::size_t>(best)]))
    throw NumericalError("DoC fit failed for every epsilon");
  const double a_lo = lo + (hi - lo) * std::max(0, best - 1) / kGrid;
  const double a_hi = lo + (hi - lo) * std::min(kGrid, best + 1) / kGrid;
  const auto [log_eps, _] = boost::math::tools::brent_find_minima(
      [&](double le) { return fit_fixed_epsilon(pts, std::exp(le)).sse; }, a_lo, a_hi, 40);
  double eps = std::exp(log_eps);
  EpsilonFit fit = fit_fixed_epsilon(pts, eps);
  if (!(fit.sse <= sse[static_cast<std::size_t>(best)])) {
    eps = std::exp(lo + (hi - lo) * best / kGrid);
    fit = fit_fixed_epsilon(pts, eps);
  }
  out.model = DocModel(bucket, eps, fit.c, fit.a, fit.b);
  double ss = 0.0;
  for (const auto& p : pts) ss += std::pow(out.model.cdf(p.t) - p.F, 2);
  out.rms_residual = std::sqrt(ss / static_cast<double>(pts.size()));
  return out;
}

DocFit fit_doc_model(const std::vector<ViewRecord>& records, const Bucket& bucket,
                     const DocFitOptions& opts) {
  std::vector<double> w;
  for (const auto& r : records)
    if (r.duration && bucket.contains(*r.duration)) w.push_back(r.viewing_time / *r.duration);
  return fit_doc_model(w, bucket, opts);
}

BucketTable::BucketTable(std::vector<DocModel> models) : models_(std::move(models)) {
  if (models_.empty()) throw DomainError("bucket table is empty");
  if (models_.front().bucket().lo != 0.0) throw DomainError("first bucket must start at 0");
  for (std::size_t k = 0; k < models_.size(); ++k) {
    const auto& b = models_[k].bucket();
    if (!(b.hi > b.lo)) throw DomainError("bucket bounds must be increasing");
    if (k > 0 && b.lo != models_[k - 1].bucket().hi)
      throw DomainError("buckets must be contiguous");
  }
}

const DocModel& BucketTable::lookup(double duration) const {
  if (!(duration > 0.0)) throw DomainError("duration must be > 0");
  for (const auto& m : models_)
    if (m.bucket().contains(duration)) return m;
  throw DomainError("duration " + format_number(duration) + " s is outside the bucket table");
}

TableFit fit_bucket_table(const std::vector<ViewRecord>& records,
                          const std::vector<Bucket>& buckets, const DocFitOptions& opts) {
  std::vector<std::vector<double>> per(buckets.size());
  for (const auto& r : records) {
    if (!r.duration || !(*r.duration > 0.0)) continue;
    for (std::size_t k = 0; k < buckets.size(); ++k)
      if (buckets[k].contains(*r.duration)) {
        per[k].push_back(r.viewing_time / *r.duration);
        break;
      }
  }
  TableFit out;
  std::vector<DocModel> models;
  for (std::size_t k = 0; k < buckets.size(); ++k) {
    out.fits.push_back(fit_doc_model(per[k], buckets[k], opts));
    models.push_back(out.fits.back().model);
  }
  out.table = BucketTable(std::move(models));
  return out;
}

void write_bucket_table(std::ostream& out, const BucketTable& table) {
  for (const auto& m : table.models())
    out << format_number(m.bucket().lo) << ',' << format_number(m.bucket().hi) << ','
        << format_number(m.epsilon()) << ',' << format_number(m.c()) << ','
        << format_number(m.a()) << ',' << format_number(m.b()) << '\n';
}

void write_bucket_table(const std::string& path, const BucketTable& table) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  write_bucket_table(f, table);
  if (!f) throw IoError("write to '" + path + "' failed");
}

BucketTable read_bucket_table(std::istream& in) {
  std::vector<DocModel> models;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 6)
      throw ParseError("expected 6 fields lo,hi,epsilon,c,a,b, got " + std::to_string(fields.size()),
                       no);
    double v[6];
    for (int k = 0; k < 6; ++k) v[k] = parse_field(fields[static_cast<std::size_t>(k)], no);
    const Bucket b{v[0], v[1]};
    try {
      models.push_back(v[2] == 0.0 ? DocModel::point_mass(b, v[3])
                                   : DocModel(b, v[2], v[3], v[4], v[5]));
    } catch (const DomainError& e) {
      throw ParseError(e.what(), no);
    }
  }
  if (models.empty()) throw ParseError("bucket table has no rows");
  return BucketTable(std::move(models));
}

BucketTable read_bucket_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  return read_bucket_table(f);
}

double sample_viewing_time_from_duration(double duration, const BucketTable& table, Rng& rng) {
  const DocModel& m = table.lookup(duration);
  return std::min(m.sample_omega(rng) * duration, kDocCeiling * duration);
}

double class_posterior(double viewing_time_estimate, const workload::HyperExpParams& params) {
  return workload::class1_posterior(viewing_time_estimate, params);
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DomainError("KS distance needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

SyntheticCorpus synthetic_doc_corpus(long n, std::uint64_t seed, double lambda) {
  if (n < 1) throw DomainError("corpus size must be >= 1");
  if (!(lambda > 0.0)) throw DomainError("arrival rate must be > 0");
  SyntheticCorpus out;
  const auto buckets = default_buckets();
  constexpr double eps = 0.1;
  const double w0 = kDocCeiling - eps;
  for (std::size_t m = 0; m < buckets.size(); ++m) {
    const double alpha = 2.0 - 0.2 * static_cast<double>(m);
    const double f0 = 0.3 + 0.06 * static_cast<double>(m);
    const double c = f0 / std::pow(w0, alpha);
    out.truth.emplace_back(buckets[m], eps, c, -alpha, kDocCeiling * (1.0 - f0) / eps - 1.0);
  }
  Rng rng(seed);
  std::lognormal_distribution<double> dur(std::log(300.0), 1.5);
  double t = 0.0;
  out.records.reserve(static_cast<std::size_t>(n));
  for (long k = 0; k < n; ++k) {
    t += -std::log(uniform_open(rng)) / lambda;
    const double d = dur(rng);
    std::size_t m = 0;
    while (!buckets[m].contains(d)) ++m;
    const double omega = out.truth[m].sample_omega(rng);
    out.records.push_back({t, omega * d, d, std::nullopt});
  }
  return out;
}

}  // namespace vqoe::inference
