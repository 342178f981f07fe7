#include "vqoe/workload.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include "vqoe/error.hpp"

namespace vqoe::workload {

namespace {

void check_time(double t) {
  if (!(t >= 0.0)) throw DomainError("viewing time must be >= 0");
}

void check_samples(std::span<const double> samples, std::size_t min_count) {
  if (samples.size() < min_count)
    throw DomainError("at least " + std::to_string(min_count) + " samples required, got " +
                      std::to_string(samples.size()));
  for (double t : samples)
    if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("samples must be finite and > 0");
  auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  if (*lo == *hi) throw DomainError("degenerate sample: all values are equal");
}

double sample_mean(std::span<const double> s) {
  return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

// Log of each weighted phase density at t: log(p_k theta_k) - theta_k t.
struct PhaseLogs {
  double c1, c2, theta1, theta2;
  explicit PhaseLogs(const HyperExpParams& p)
      : c1(std::log(p.p1) + std::log(p.theta1)),
        c2(std::log1p(-p.p1) + std::log(p.theta2)),
        theta1(p.theta1),
        theta2(p.theta2) {}
};

double log_mix(double t, const PhaseLogs& q) {
  const double l1 = q.c1 - q.theta1 * t;
  const double l2 = q.c2 - q.theta2 * t;
  const double m = std::max(l1, l2);
  return m + std::log1p(std::exp(-std::abs(l1 - l2)));
}

struct Score {
  double loglik = 0.0;
  Eigen::Vector3d grad = Eigen::Vector3d::Zero();  // d/d(p1, theta1, theta2)
  Eigen::Matrix3d hess = Eigen::Matrix3d::Zero();
};

// Log-likelihood derivatives in the natural parameters (p1, theta1, theta2).
Score hyperexp_score(std::span<const double> samples, const HyperExpParams& p) {
  Score s;
  const PhaseLogs q(p);
  for (double t : samples) {
    const double lf = log_mix(t, q);
    s.loglik += lf;
    // g_k / f with g_k = theta_k exp(-theta_k t)
    const double r1 = std::exp(std::log(p.theta1) - p.theta1 * t - lf);
    const double r2 = std::exp(std::log(p.theta2) - p.theta2 * t - lf);
    const double d1 = 1.0 / p.theta1 - t;  // d log g1 / d theta1
    const double d2 = 1.0 / p.theta2 - t;
    Eigen::Vector3d fx(r1 - r2, p.p1 * r1 * d1, p.p2() * r2 * d2);
    Eigen::Matrix3d fxy = Eigen::Matrix3d::Zero();
    fxy(0, 1) = fxy(1, 0) = r1 * d1;
    fxy(0, 2) = fxy(2, 0) = -r2 * d2;
    fxy(1, 1) = p.p1 * r1 * (d1 * d1 - 1.0 / (p.theta1 * p.theta1));
    fxy(2, 2) = p.p2() * r2 * (d2 * d2 - 1.0 / (p.theta2 * p.theta2));
    s.grad += fx;
    s.hess += fxy - fx * fx.transpose();
  }
  return s;
}

// Per-sample score norm in scale-free coordinates (p1, log theta1, log theta2).
double scaled_gradient_norm(const Score& s, const HyperExpParams& p, std::size_t n) {
  Eigen::Vector3d g(s.grad(0), s.grad(1) * p.theta1, s.grad(2) * p.theta2);
  return g.norm() / static_cast<double>(n);
}

bool near_degenerate(const HyperExpParams& p) {
  return p.p1 < 1e-3 || p.p1 > 1.0 - 1e-3 || p.theta1 / p.theta2 < 1.05;
}

bool valid_params(const HyperExpParams& p) {
  return p.p1 > 0.0 && p.p1 < 1.0 && p.theta1 > 0.0 && p.theta2 > 0.0 &&
         std::isfinite(p.theta1) && std::isfinite(p.theta2);
}

struct EmPass {
  double loglik = 0.0;    // at the parameters the pass was run with
  HyperExpParams next;    // M-step result
};

// One sweep: the E-step responsibilities also give the log-likelihood.
EmPass em_pass(std::span<const double> samples, const HyperExpParams& p) {
  const PhaseLogs q(p);
  double ll = 0.0, w_sum = 0.0, wt_sum = 0.0, t_sum = 0.0;
  for (double t : samples) {
    const double d = (q.c2 - q.theta2 * t) - (q.c1 - q.theta1 * t);
    const double e = std::exp(-std::abs(d));
    const double w = d > 0.0 ? e / (1.0 + e) : 1.0 / (1.0 + e);
    ll += std::max(q.c1 - q.theta1 * t, q.c2 - q.theta2 * t) + std::log1p(e);
    w_sum += w;
    wt_sum += w * t;
    t_sum += t;
  }
  const double n = static_cast<double>(samples.size());
  EmPass out;
  out.loglik = ll;
  out.next.p1 = std::clamp(w_sum / n, 1e-12, 1.0 - 1e-12);
  out.next.theta1 = w_sum / wt_sum;
  out.next.theta2 = (n - w_sum) / (t_sum - wt_sum);
  return out;
}

// Damped Newton step; falls back to gradient ascent where the Hessian is not
// negative definite, and halves the step until the likelihood improves.
HyperExpParams newton_step(std::span<const double> samples, const HyperExpParams& p,
                           const Score& s) {
  Eigen::Vector3d step;
  Eigen::LDLT<Eigen::Matrix3d> ldlt(-s.hess);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
      (ldlt.vectorD().array() > 0.0).all()) {
    step = ldlt.solve(s.grad);
  } else {
    Eigen::Vector3d scale(1.0, p.theta1 * p.theta1, p.theta2 * p.theta2);
    step = scale.cwiseProduct(s.grad) / static_cast<double>(samples.size());
  }
  for (double alpha = 1.0; alpha > 1e-12; alpha *= 0.5) {
    HyperExpParams cand{p.p1 + alpha * step(0), p.theta1 + alpha * step(1),
                        p.theta2 + alpha * step(2)};
    if (!valid_params(cand)) continue;
    if (hyperexp_loglik(samples, cand) >= s.loglik) return cand;
  }
  return p;
}

double gp_profile_xi(std::span<const double> samples, double tau) {
  double acc = 0.0;
  for (double t : samples) acc += std::log1p(tau * t);
  return acc / static_cast<double>(samples.size());
}

double genpareto_loglik(std::span<const double> samples, const GenParetoParams& p) {
  double ll = 0.0;
  for (double t : samples) {
    const double f = genpareto_pdf(t, p);
    if (!(f > 0.0)) return -std::numeric_limits<double>::infinity();
    ll += std::log(f);
  }
  return ll;
}

// Per-sample score norm of the GP log-likelihood in (xi, log sigma).
double genpareto_gradient_norm(std::span<const double> samples, const GenParetoParams& p) {
  const double h = 1e-6;
  auto ll = [&](double xi, double log_sigma) {
    return genpareto_loglik(samples, {xi, std::exp(log_sigma)});
  };
  const double ls = std::log(p.sigma);
  const double gx = (ll(p.xi + h, ls) - ll(p.xi - h, ls)) / (2 * h);
  const double gs = (ll(p.xi, ls + h) - ll(p.xi, ls - h)) / (2 * h);
  return std::hypot(gx, gs) / static_cast<double>(samples.size());
}

}  // namespace

void HyperExpParams::validate() const {
  if (!(p1 > 0.0 && p1 <= 1.0)) throw DomainError("hyper-exponential p1 must lie in (0, 1]");
  if (!(theta1 > 0.0) || !(theta2 > 0.0))
    throw DomainError("hyper-exponential rates must be > 0");
}

void ExpParams::validate() const {
  if (!(theta > 0.0)) throw DomainError("exponential rate must be > 0");
}

double GenParetoParams::upper_support() const {
  return xi < 0.0 ? -sigma / xi : std::numeric_limits<double>::infinity();
}

void GenParetoParams::validate() const {
  if (!(sigma > 0.0)) throw DomainError("generalized Pareto scale must be > 0");
}

const char* family_name(Family f) {
  switch (f) {
    case Family::hyperexp: return "hyperexp";
    case Family::genpareto: return "genpareto";
    case Family::exponential: return "exponential";
  }
  return "?";
}

int model_dof(Family f) {
  switch (f) {
    case Family::hyperexp: return 3;
    case Family::genpareto: return 2;
    case Family::exponential: return 1;
  }
  return 0;
}

Family family_of(const ModelParams& p) {
  if (std::holds_alternative<HyperExpParams>(p)) return Family::hyperexp;
  if (std::holds_alternative<GenParetoParams>(p)) return Family::genpareto;
  return Family::exponential;
}

double hyperexp_pdf(double t, const HyperExpParams& p) {
  check_time(t);
  return p.p1 * p.theta1 * std::exp(-p.theta1 * t) +
         (1.0 - p.p1) * p.theta2 * std::exp(-p.theta2 * t);
}

double hyperexp_cdf(double t, const HyperExpParams& p) {
  check_time(t);
  return 1.0 - p.p1 * std::exp(-p.theta1 * t) - (1.0 - p.p1) * std::exp(-p.theta2 * t);
}

double exp_pdf(double t, const ExpParams& p) {
  check_time(t);
  return p.theta * std::exp(-p.theta * t);
}

double exp_cdf(double t, const ExpParams& p) {
  check_time(t);
  return -std::expm1(-p.theta * t);
}

double genpareto_pdf(double t, const GenParetoParams& p) {
  check_time(t);
  if (p.xi == 0.0) return std::exp(-t / p.sigma) / p.sigma;
  const double z = 1.0 + p.xi * t / p.sigma;
  if (z <= 0.0) return 0.0;
  return std::pow(z, -(1.0 + 1.0 / p.xi)) / p.sigma;
}

double genpareto_cdf(double t, const GenParetoParams& p) {
  check_time(t);
  if (p.xi == 0.0) return -std::expm1(-t / p.sigma);
  const double z = 1.0 + p.xi * t / p.sigma;
  if (z <= 0.0) return 1.0;
  return 1.0 - std::pow(z, -1.0 / p.xi);
}

double model_pdf(double t, const ModelParams& p) {
  return std::visit(
      [t](const auto& q) -> double {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, HyperExpParams>) return hyperexp_pdf(t, q);
        else if constexpr (std::is_same_v<T, ExpParams>) return exp_pdf(t, q);
        else return genpareto_pdf(t, q);
      },
      p);
}

double model_cdf(double t, const ModelParams& p) {
  return std::visit(
      [t](const auto& q) -> double {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, HyperExpParams>) return hyperexp_cdf(t, q);
        else if constexpr (std::is_same_v<T, ExpParams>) return exp_cdf(t, q);
        else return genpareto_cdf(t, q);
      },
      p);
}

double hyperexp_loglik(std::span<const double> samples, const HyperExpParams& p) {
  const PhaseLogs q(p);
  double ll = 0.0;
  for (double t : samples) ll += log_mix(t, q);
  return ll;
}

HyperExpParams default_init(std::span<const double> samples) {
  const double m = sample_mean(samples);
  return {0.5, 2.0 / m, 0.5 / m};
}

FitReport fit_hyperexp_mle(std::span<const double> samples, const FitOptions& opts) {
  check_samples(samples, 100);
  return fit_hyperexp_mle(samples, default_init(samples), opts);
}

FitReport fit_hyperexp_mle(std::span<const double> samples, const HyperExpParams& init,
                           const FitOptions& opts) {
  check_samples(samples, 100);
  if (!valid_params(init)) throw DomainError("invalid initial hyper-exponential parameters");

  FitReport rep;
  HyperExpParams p = init;
  const bool em = opts.method == MleMethod::em;
  EmPass pass;
  if (em) pass = em_pass(samples, p);
  double ll = em ? pass.loglik : hyperexp_loglik(samples, p);
  rep.loglik_trace.push_back(ll);

  for (int it = 1; it <= opts.max_iter; ++it) {
    HyperExpParams next;
    double next_ll;
    EmPass next_pass;
    if (em) {
      next = pass.next;
      next_pass = em_pass(samples, next);
      next_ll = next_pass.loglik;
    } else {
      next = newton_step(samples, p, hyperexp_score(samples, p));
      next_ll = hyperexp_loglik(samples, next);
    }
    rep.iterations = it;
    // EM is monotone up to rounding; Newton's line search enforces it.
    if (next_ll < ll) {
      if (ll - next_ll > 1e-9 * std::abs(ll)) {
        rep.message = "likelihood decreased; stopping";
        break;
      }
    } else {
      p = next;
      pass = next_pass;
    }
    const double rel = std::abs(next_ll - ll) / std::max(1.0, std::abs(ll));
    ll = std::max(ll, next_ll);
    rep.loglik_trace.push_back(ll);
    if (rel < opts.tol) {
      const Score s = hyperexp_score(samples, p);
      rep.gradient_norm = scaled_gradient_norm(s, p, samples.size());
      if (rep.gradient_norm < opts.grad_tol) {
        rep.converged = true;
        break;
      }
    }
  }
  if (!rep.converged) {
    rep.gradient_norm = scaled_gradient_norm(hyperexp_score(samples, p), p, samples.size());
    if (rep.message.empty()) rep.message = "iteration limit reached before convergence";
  }

  p = p.canonical();
  rep.params = p;
  rep.loglik = ll;
  rep.near_degenerate = near_degenerate(p);
  if (rep.near_degenerate && rep.message.empty())
    rep.message = "mixture is nearly degenerate (single phase fits the data)";
  const auto pts = empirical_cdf_points(samples, opts.cdf_points);
  rep.adjusted_r2 =
      adjusted_r_square(pts, [&](double t) { return hyperexp_cdf(t, p); }, 3);
  return rep;
}

FitReport fit_exp_mle(std::span<const double> samples, const FitOptions& opts) {
  check_samples(samples, 100);
  FitReport rep;
  const ExpParams p{1.0 / sample_mean(samples)};
  rep.params = p;
  double ll = 0.0;
  for (double t : samples) ll += std::log(p.theta) - p.theta * t;
  rep.loglik = ll;
  rep.loglik_trace.push_back(ll);
  rep.converged = true;
  rep.gradient_norm = 0.0;
  const auto pts = empirical_cdf_points(samples, opts.cdf_points);
  rep.adjusted_r2 = adjusted_r_square(pts, [&](double t) { return exp_cdf(t, p); }, 1);
  return rep;
}

FitReport fit_genpareto_mle(std::span<const double> samples, const FitOptions& opts) {
  check_samples(samples, 100);
  const double mean = sample_mean(samples);
  const double t_max = *std::max_element(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());

  // Profile likelihood in tau = xi / sigma; xi(tau) is available in closed form.
  int evaluations = 0;
  auto neg_profile = [&](double tau) {
    ++evaluations;
    if (std::abs(tau) < 1e-300) return n * (std::log(mean) + 1.0);
    const double xi = gp_profile_xi(samples, tau);
    if (!(xi / tau > 0.0)) return std::numeric_limits<double>::infinity();
    return n * (std::log(xi / tau) + xi + 1.0);
  };

  const int bits = 52;
  std::uintmax_t max_iter = static_cast<std::uintmax_t>(std::max(opts.max_iter, 1));
  double best_tau = 0.0;
  double best = neg_profile(0.0);
  bool hit_limit = false;

  {
    // tau > 0 (heavy tail), searched in log tau.
    auto f = [&](double log_tau) { return neg_profile(std::exp(log_tau)); };
    std::uintmax_t iters = max_iter;
    auto [x, fx] = boost::math::tools::brent_find_minima(f, std::log(1e-6 / mean),
                                                         std::log(1e6 / mean), bits, iters);
    hit_limit |= iters >= max_iter;
    if (fx < best) {
      best = fx;
      best_tau = std::exp(x);
    }
  }
  {
    // -1/t_max < tau < 0 (bounded support).
    std::uintmax_t iters = max_iter;
    auto [x, fx] = boost::math::tools::brent_find_minima(
        neg_profile, -(1.0 - 1e-9) / t_max, -1e-12 / t_max, bits, iters);
    hit_limit |= iters >= max_iter;
    if (fx < best && gp_profile_xi(samples, x) > -1.0) {
      best = fx;
      best_tau = x;
    }
  }

  GenParetoParams p;
  if (best_tau == 0.0) {
    p = {0.0, mean};
  } else {
    p.xi = gp_profile_xi(samples, best_tau);
    p.sigma = p.xi / best_tau;
  }

  FitReport rep;
  rep.params = p;
  rep.loglik = -best;
  rep.loglik_trace.push_back(rep.loglik);
  rep.iterations = evaluations;
  rep.gradient_norm = genpareto_gradient_norm(samples, p);
  rep.converged = !hit_limit && rep.gradient_norm < opts.grad_tol;
  if (!rep.converged) rep.message = "profile likelihood search did not reach tolerance";
  const auto pts = empirical_cdf_points(samples, opts.cdf_points);
  rep.adjusted_r2 = adjusted_r_square(pts, [&](double t) { return genpareto_cdf(t, p); }, 2);
  return rep;
}

std::vector<CdfPoint> empirical_cdf_points(std::span<const double> samples, int n) {
  if (samples.empty()) throw DomainError("empirical CDF of an empty sample");
  if (n < 1) throw DomainError("need at least one CDF point");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double N = static_cast<double>(sorted.size());
  std::vector<CdfPoint> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int m = 1; m <= n; ++m) {
    const double u = (m - 0.5) / n;
    const auto k = std::min(sorted.size() - 1, static_cast<std::size_t>(u * N));
    const double t = sorted[k];
    const auto upper = std::upper_bound(sorted.begin(), sorted.end(), t);
    pts.push_back({t, static_cast<double>(upper - sorted.begin()) / N});
  }
  return pts;
}

double adjusted_r_square(std::span<const CdfPoint> points,
                         const std::function<double(double)>& model_cdf, int dof_model) {
  const auto n = static_cast<int>(points.size());
  if (n < dof_model + 2)
    throw DomainError("adjusted R^2 needs at least dof_model + 2 points");
  double mean = 0.0;
  for (const auto& pt : points) mean += pt.F;
  mean /= n;
  double rss = 0.0, tss = 0.0;
  for (const auto& pt : points) {
    const double r = pt.F - model_cdf(pt.t);
    rss += r * r;
    tss += (pt.F - mean) * (pt.F - mean);
  }
  if (!(tss > 0.0)) throw DomainError("adjusted R^2 undefined: total sum of squares is zero");
  return 1.0 - (rss / (n - dof_model)) / (tss / (n - 1));
}

const FitReport& ModelSelection::report(Family f) const {
  switch (f) {
    case Family::hyperexp: return hyperexp;
    case Family::genpareto: return genpareto;
    case Family::exponential: return exponential;
  }
  return hyperexp;
}

ModelSelection compare_fits(std::span<const double> samples, const FitOptions& opts,
                            double tie_margin) {
  ModelSelection sel;
  sel.hyperexp = fit_hyperexp_mle(samples, opts);
  sel.genpareto = fit_genpareto_mle(samples, opts);
  sel.exponential = fit_exp_mle(samples, opts);

  std::vector<Family> ranked = {Family::hyperexp, Family::genpareto, Family::exponential};
  std::stable_sort(ranked.begin(), ranked.end(), [&](Family a, Family b) {
    return sel.report(a).adjusted_r2 > sel.report(b).adjusted_r2;
  });
  // Adjacent near-ties are ordered by fewer parameters first.
  for (int pass = 0; pass < 2; ++pass)
    for (std::size_t k = 0; k + 1 < ranked.size(); ++k) {
      const double gap = sel.report(ranked[k]).adjusted_r2 - sel.report(ranked[k + 1]).adjusted_r2;
      if (gap <= tie_margin && model_dof(ranked[k + 1]) < model_dof(ranked[k]))
        std::swap(ranked[k], ranked[k + 1]);
    }
  sel.ranking = ranked;
  sel.selected = ranked.front();
  return sel;
}

double sample_viewing_time(const HyperExpParams& p, Rng& rng, int& phase) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  phase = u(rng) < p.p1 ? 1 : 2;
  const double rate = phase == 1 ? p.theta1 : p.theta2;
  return -std::log(uniform_open(rng)) / rate;
}

double sample_viewing_time(const HyperExpParams& p, Rng& rng) {
  int phase = 0;
  return sample_viewing_time(p, rng, phase);
}

double sample_genpareto(const GenParetoParams& p, Rng& rng) {
  const double u = uniform_open(rng);
  if (p.xi == 0.0) return -p.sigma * std::log(u);
  return p.sigma / p.xi * (std::pow(u, -p.xi) - 1.0);
}

double class1_posterior(double t, const HyperExpParams& p) {
  if (t < 0.0) throw DomainError("viewing time must be >= 0");
  p.validate();
  // 1 / (1 + p2 theta2 e^{-theta2 t} / (p1 theta1 e^{-theta1 t})), in log space
  const double log_ratio = std::log(p.p2() * p.theta2) - std::log(p.p1 * p.theta1) +
                           (p.theta1 - p.theta2) * t;
  if (log_ratio > 700.0) return 0.0;
  return 1.0 / (1.0 + std::exp(log_ratio));
}

}  // namespace vqoe::workload
