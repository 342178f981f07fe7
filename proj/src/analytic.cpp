#include "vqoe/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "vqoe/error.hpp"

namespace vqoe::analytic {

namespace {

double inf_norm(const Matrix& m) {
  return m.size() ? m.cwiseAbs().rowwise().sum().maxCoeff() : 0.0;
}

double inf_norm(const CMatrix& m) {
  return m.size() ? m.cwiseAbs().rowwise().sum().maxCoeff() : 0.0;
}

Vector real_part_checked(const CVector& v, double imag_tol, const char* what) {
  const double imag = v.size() ? v.imag().cwiseAbs().maxCoeff() : 0.0;
  if (imag > imag_tol)
    throw NumericalError(std::string(what) + ": imaginary residue " + std::to_string(imag) +
                         " exceeds tolerance");
  return v.real();
}

Matrix real_part_checked(const CMatrix& m, double imag_tol, const char* what) {
  const double imag = m.size() ? m.imag().cwiseAbs().maxCoeff() : 0.0;
  if (imag > imag_tol)
    throw NumericalError(std::string(what) + ": imaginary residue " + std::to_string(imag) +
                         " exceeds tolerance");
  return m.real();
}

Matrix take(const Matrix& m, const std::vector<int>& rows, const std::vector<int>& cols) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) out(r, c) = m(rows[r], cols[c]);
  return out;
}

// Classical RK4 for y' = A y + f over [0, u].
Vector rk4_linear(const Matrix& a, const Vector& f, Vector y, double u, double max_step_norm) {
  if (u <= 0.0 || a.rows() == 0) return u <= 0.0 ? y : y + u * f;
  const double norm = std::max(inf_norm(a), 1e-300);
  const auto steps = static_cast<long>(std::ceil(u * norm / max_step_norm));
  const long n = std::max(1L, steps);
  const double h = u / static_cast<double>(n);
  for (long s = 0; s < n; ++s) {
    const Vector k1 = a * y + f;
    const Vector k2 = a * (y + 0.5 * h * k1) + f;
    const Vector k3 = a * (y + 0.5 * h * k2) + f;
    const Vector k4 = a * (y + h * k3) + f;
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

// (1 - e^{-d q}) / d with its q-limit at d -> 0.
std::complex<double> sojourn_kernel(std::complex<double> d, double q) {
  const std::complex<double> x = d * q;
  if (std::abs(x) < 1e-6) return q * (1.0 - x / 2.0 + x * x / 6.0);
  return (1.0 - std::exp(-x)) / d;
}

// int_0^inf (1 - e^{-d q}) / (d q) theta e^{-theta q} dq = (theta / d) log(1 + d / theta).
std::complex<double> dtvt_kernel(std::complex<double> d, double theta) {
  const std::complex<double> x = d / theta;
  if (std::abs(x) < 1e-6) return 1.0 - x / 2.0 + x * x / 3.0;
  return std::log(1.0 + x) / x;
}

Vector inverse(const Vector& v) { return v.cwiseInverse(); }

}  // namespace

OdeSystem build_mw(const RateMatrices& rates, const SystemConfig& cfg, double eps) {
  const auto& pr = rates.active(cfg);
  const Vector& c = rates.buffer.c;
  for (Eigen::Index l = 0; l < c.size(); ++l)
    if (std::abs(c(l)) < eps)
      throw DomainError("degenerate playback rate: |c| < " + std::to_string(eps) + " at state " +
                        std::to_string(l));
  Matrix q = markov::background_generator(cfg, pr);
  q.diagonal() -= pr.phi_abs;
  return {-(inverse(c).asDiagonal() * q), c, OdeKind::starvation, cfg.max_flows};
}

OdeSystem build_mv(const RateMatrices& rates, const SystemConfig& cfg) {
  const auto& pr = rates.active(cfg);
  const Vector& b = rates.buffer.b;
  const Matrix g = markov::background_generator(cfg, pr);
  return {-(inverse(b).asDiagonal() * g), b, OdeKind::startup, cfg.max_flows};
}

SpectralForm decompose(const Matrix& m, double condition_limit) {
  SpectralForm sf;
  Eigen::EigenSolver<Matrix> es(m, true);
  if (es.info() != Eigen::Success) {
    sf.message = "eigensolver failed";
    return sf;
  }
  sf.eigenvalues = es.eigenvalues();
  sf.basis = es.eigenvectors();
  Eigen::PartialPivLU<CMatrix> lu(sf.basis);
  sf.inverse_basis = lu.inverse();
  sf.condition_estimate = inf_norm(sf.basis) * inf_norm(sf.inverse_basis);
  const CMatrix rebuilt = sf.basis * sf.eigenvalues.asDiagonal() * sf.inverse_basis;
  const double scale = std::max(inf_norm(m), 1e-300);
  sf.reconstruction_error = inf_norm(CMatrix(rebuilt - m.cast<std::complex<double>>())) / scale;
  if (!std::isfinite(sf.condition_estimate) || sf.condition_estimate > condition_limit) {
    sf.message = "eigenbasis ill-conditioned (" + std::to_string(sf.condition_estimate) + ")";
  } else if (!(sf.reconstruction_error < 1e-8)) {
    sf.message = "decomposition does not reproduce the matrix (defective?)";
  } else {
    sf.valid = true;
  }
  return sf;
}

Vector StarvationSolution::at(double q) const {
  if (q < 0.0) throw DomainError("buffer level must be >= 0");
  const CVector growth = (rates_ * q).array().exp().matrix();
  const CVector w = modes_ * coef_.cwiseProduct(growth);
  return real_part_checked(w, imag_tol_, "starvation solution");
}

StarvationSolution solve_w_spectral(const OdeSystem& system, const SpectralForm& sf,
                                    BoundaryRule rule, double imag_tol) {
  const auto n = static_cast<int>(system.divisors.size());
  std::vector<int> down, up;
  for (int l = 0; l < n; ++l) (system.divisors(l) < 0.0 ? down : up).push_back(l);

  if (rule == BoundaryRule::bounded_modes) {
    std::vector<int> stable;
    for (int k = 0; k < n; ++k)
      if (sf.eigenvalues(k).real() < 0.0) stable.push_back(k);
    if (stable.size() != down.size())
      throw NumericalError("boundary system: " + std::to_string(stable.size()) +
                           " decaying modes for " + std::to_string(down.size()) +
                           " negative-drift states");
    const auto m = static_cast<Eigen::Index>(stable.size());
    CMatrix modes(n, m);
    CVector rates(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      modes.col(k) = sf.basis.col(stable[k]);
      rates(k) = sf.eigenvalues(stable[k]);
    }
    CVector coef = CVector::Zero(m);
    if (m > 0) {
      CMatrix a(m, m);
      for (Eigen::Index r = 0; r < m; ++r) a.row(r) = modes.row(down[r]);
      Eigen::FullPivLU<CMatrix> lu(a);
      if (!lu.isInvertible()) throw NumericalError("boundary system is singular");
      coef = lu.solve(CVector::Ones(m));
    }
    return {rates, modes, coef, imag_tol};
  }

  // State-indexed rule: eigenvalues in descending real part; the coefficient
  // at position l(i, j) vanishes for each state with c >= 0.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return sf.eigenvalues(a).real() > sf.eigenvalues(b).real();
  });
  const auto p = static_cast<Eigen::Index>(up.size());
  CVector w0 = CVector::Zero(n);
  for (int l : down) w0(l) = 1.0;
  if (p > 0) {
    CMatrix a(p, p);
    CVector rhs(p);
    for (Eigen::Index r = 0; r < p; ++r) {
      const auto row = sf.inverse_basis.row(order[up[r]]);
      for (Eigen::Index c = 0; c < p; ++c) a(r, c) = row(up[c]);
      std::complex<double> acc = 0.0;
      for (int l : down) acc += row(l);
      rhs(r) = -acc;
    }
    Eigen::FullPivLU<CMatrix> lu(a);
    if (!lu.isInvertible()) throw NumericalError("state-indexed boundary system is singular");
    const CVector x = lu.solve(rhs);
    for (Eigen::Index r = 0; r < p; ++r) w0(up[r]) = x(r);
  }
  return {sf.eigenvalues, sf.basis, sf.inverse_basis * w0, imag_tol};
}

RiccatiSolution solve_w_riccati(const OdeSystem& system, int max_iter) {
  RiccatiSolution rs;
  const auto n = static_cast<int>(system.divisors.size());
  for (int l = 0; l < n; ++l) (system.divisors(l) > 0.0 ? rs.up : rs.down).push_back(l);
  const Matrix& m = system.matrix;
  const Matrix mpp = take(m, rs.up, rs.up), mpm = take(m, rs.up, rs.down);
  const Matrix mmp = take(m, rs.down, rs.up), mmm = take(m, rs.down, rs.down);
  const auto p = mpp.rows(), q = mmm.rows();
  rs.psi = Matrix::Zero(p, q);
  if (p > 0 && q > 0) {
    const double scale = std::max({inf_norm(mpp), inf_norm(mmm), inf_norm(mpm), 1e-300});
    for (int it = 0; it < max_iter; ++it) {
      const Matrix r = rs.psi * mmp * rs.psi + rs.psi * mmm - mpp * rs.psi - mpm;
      rs.residual = inf_norm(r) / scale;
      if (rs.residual < 1e-14) break;
      rs.newton_iterations = it + 1;
      const Matrix a = mpp - rs.psi * mmp;
      const Matrix b = mmm + mmp * rs.psi;
      const Matrix kron = Eigen::kroneckerProduct(Matrix::Identity(q, q), a) -
                          Eigen::kroneckerProduct(b.transpose(), Matrix::Identity(p, p));
      const Vector vec_r = Eigen::Map<const Vector>(r.data(), r.size());
      Eigen::PartialPivLU<Matrix> lu(kron);
      const Vector h = lu.solve(vec_r);
      rs.psi += Eigen::Map<const Matrix>(h.data(), p, q);
    }
    if (rs.residual >= 1e-10)
      throw NumericalError("Riccati iteration did not converge (residual " +
                           std::to_string(rs.residual) + ")");
  }
  rs.reduced = mmm + mmp * rs.psi;
  return rs;
}

Vector RiccatiSolution::at(double q, double max_step_norm) const {
  if (q < 0.0) throw DomainError("buffer level must be >= 0");
  const auto n = static_cast<Eigen::Index>(up.size() + down.size());
  Vector w = Vector::Zero(n);
  if (down.empty()) return w;
  const Vector dn = rk4_linear(reduced, Vector::Zero(reduced.rows()),
                               Vector::Ones(reduced.rows()), q, max_step_norm);
  const Vector upv = psi * dn;
  for (std::size_t k = 0; k < down.size(); ++k) w(down[k]) = dn(static_cast<Eigen::Index>(k));
  for (std::size_t k = 0; k < up.size(); ++k) w(up[k]) = upv(static_cast<Eigen::Index>(k));
  return w;
}

Vector solve_w(double q, const OdeSystem& system, const SpectralForm& spectral,
               const SolverOptions& opts) {
  if (!opts.force_integration && spectral.valid) {
    try {
      return solve_w_spectral(system, spectral, opts.boundary, opts.imag_tol).at(q);
    } catch (const NumericalError&) {
      if (opts.boundary != BoundaryRule::bounded_modes) throw;
    }
  }
  if (opts.boundary != BoundaryRule::bounded_modes)
    throw NumericalError("state-indexed boundary rule needs a valid spectral form");
  return solve_w_riccati(system).at(q);
}

Matrix solve_v(double q_a, const OdeSystem& system_v) {
  if (q_a < 0.0) throw DomainError("startup threshold must be >= 0");
  const auto n = system_v.matrix.rows();
  if (q_a == 0.0) return Matrix::Identity(n, n);
  Matrix v = (-q_a * system_v.matrix).exp();
  return v.unaryExpr([](double x) { return x < 0.0 && x > -1e-12 ? 0.0 : x; });
}

Matrix solve_v_spectral(double q_a, const SpectralForm& sf, double imag_tol) {
  if (!sf.valid) throw NumericalError("startup spectral form is not usable: " + sf.message);
  const CVector decay = (-q_a * sf.eigenvalues).array().exp().matrix();
  const CMatrix v = sf.basis * decay.asDiagonal() * sf.inverse_basis;
  return real_part_checked(v, imag_tol, "startup matrix");
}

Vector mean_sojourn(double q_v, const OdeSystem& system_v, const SpectralForm& sf,
                    double imag_tol) {
  if (!(q_v > 0.0)) throw DomainError("viewing time must be > 0");
  if (!sf.valid) return mean_sojourn_integrated(q_v, system_v);
  const CVector coef = sf.inverse_basis * inverse(system_v.divisors).cast<std::complex<double>>();
  CVector g(coef.size());
  for (Eigen::Index k = 0; k < g.size(); ++k) g(k) = sojourn_kernel(sf.eigenvalues(k), q_v) * coef(k);
  return real_part_checked(CVector(sf.basis * g), imag_tol, "sojourn time");
}

Vector mean_sojourn_integrated(double q_v, const OdeSystem& system_v, double max_step_norm) {
  if (!(q_v > 0.0)) throw DomainError("viewing time must be > 0");
  const auto n = system_v.matrix.rows();
  return rk4_linear(-system_v.matrix, inverse(system_v.divisors), Vector::Zero(n), q_v,
                    max_step_norm);
}

Vector mean_sojourn_expm(double q_v, const OdeSystem& system_v) {
  if (!(q_v > 0.0)) throw DomainError("viewing time must be > 0");
  const auto n = system_v.matrix.rows();
  Matrix aug = Matrix::Zero(n + 1, n + 1);
  aug.topLeftCorner(n, n) = -q_v * system_v.matrix;
  aug.topRightCorner(n, 1) = q_v * inverse(system_v.divisors);
  const Matrix e = aug.exp();
  return e.topRightCorner(n, 1);
}

bool avoid_degenerate_rates(SystemConfig& cfg, const SolverOptions& opts,
                            std::vector<std::string>& warnings) {
  bool nudged = false;
  for (int attempt = 0; attempt < 8; ++attempt) {
    const auto rates = markov::buffer_rates(cfg);
    if (rates.c.cwiseAbs().minCoeff() >= opts.degenerate_rate_eps) break;
    cfg.bitrate_bps *= 1.0 + opts.bitrate_nudge;
    nudged = true;
  }
  if (nudged)
    warnings.push_back("fill rate equals playback rate at some state; bitrate nudged to " +
                       std::to_string(cfg.bitrate_bps) + " b/s");
  return nudged;
}

StarvationResult starvation_probability(const SystemConfig& input, const SolverOptions& opts) {
  SystemConfig cfg = input;
  cfg.validate();
  StarvationResult res;
  avoid_degenerate_rates(cfg, opts, res.diagnostics.warnings);
  res.diagnostics.bitrate_used = cfg.bitrate_bps;

  const RateMatrices rates = markov::build_rates(cfg, opts.pd_refine_arrival_chain);
  const Vector z = markov::stationary_distribution(rates.mc1.generator);
  const auto arrival = markov::arrival_distribution(z, rates.mc1.space);
  res.pi = arrival.pi;
  res.p_rej = arrival.p_rej;

  const double q_a = cfg.startup_threshold;
  const OdeSystem mw = build_mw(rates, cfg, opts.degenerate_rate_eps);
  const SpectralForm sw = decompose(mw.matrix, opts.condition_limit);
  res.diagnostics.condition_w = sw.condition_estimate;
  res.diagnostics.w_integrated = opts.force_integration || !sw.valid;
  if (!sw.valid) res.diagnostics.warnings.push_back("W via Riccati integration: " + sw.message);
  Vector w = solve_w(q_a, mw, sw, opts);
  const double excursion = std::max((-w).maxCoeff(), (w.array() - 1.0).maxCoeff());
  if (excursion > 1e-8)
    res.diagnostics.warnings.push_back("W(q) left [0,1] by " + std::to_string(excursion));
  res.playback = w.cwiseMax(0.0).cwiseMin(1.0);

  const OdeSystem mv = build_mv(rates, cfg);
  res.startup = solve_v(q_a, mv);
  const SpectralForm sv = decompose(mv.matrix, opts.condition_limit);
  res.diagnostics.condition_v = sv.condition_estimate;
  res.diagnostics.v_spectral_ok = sv.valid;

  const double survive = std::exp(-cfg.theta(cfg.tagged_class) * q_a);
  res.probability = survive * res.pi.dot(res.startup * res.playback);
  res.probability = std::clamp(res.probability, 0.0, 1.0);
  return res;
}

DtvtResult mean_dtvt(const SystemConfig& input, const SolverOptions& opts) {
  SystemConfig cfg = input;
  cfg.validate();
  DtvtResult res;
  res.diagnostics.bitrate_used = cfg.bitrate_bps;

  const RateMatrices rates = markov::build_rates(cfg, opts.pd_refine_arrival_chain);
  const Vector z = markov::stationary_distribution(rates.mc1.generator);
  const Vector pi = markov::arrival_distribution(z, rates.mc1.space).pi;
  const OdeSystem mv = build_mv(rates, cfg);
  const SpectralForm sv = decompose(mv.matrix, opts.condition_limit);
  res.diagnostics.condition_v = sv.condition_estimate;
  res.diagnostics.v_spectral_ok = sv.valid && !opts.force_integration;

  const double theta = cfg.theta(cfg.tagged_class);
  res.truncation = -std::log(1e-12) / theta;
  const bool spectral = res.diagnostics.v_spectral_ok;
  auto integrand = [&](double q) {
    if (q <= 0.0) return pi.dot(inverse(mv.divisors)) * theta;
    const Vector s = spectral ? mean_sojourn(q, mv, sv, opts.imag_tol)
                              : mean_sojourn_expm(q, mv);
    return pi.dot(s) / q * theta * std::exp(-theta * q);
  };
  double err = 0.0;
  res.mean_ratio = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, 0.0, res.truncation, 20, 1e-11, &err);
  res.quadrature_error = err;
  if (!(err <= 1e-7 * std::max(1.0, std::abs(res.mean_ratio))))
    throw NumericalError("DT/VT quadrature did not converge (error estimate " +
                         std::to_string(err) + ")");

  if (sv.valid) {
    const CVector coef = sv.inverse_basis * inverse(mv.divisors).cast<std::complex<double>>();
    CVector g(coef.size());
    for (Eigen::Index k = 0; k < g.size(); ++k) g(k) = dtvt_kernel(sv.eigenvalues(k), theta) * coef(k);
    const std::complex<double> cf = pi.cast<std::complex<double>>().dot(sv.basis * g);
    res.closed_form = cf.real();
  } else {
    res.closed_form = std::numeric_limits<double>::quiet_NaN();
  }
  return res;
}

QoEReport solve_qoe(const SystemConfig& cfg, const SolverOptions& opts) {
  cfg.validate();
  QoEReport rep;
  rep.startup_threshold = cfg.startup_threshold;
  rep.pd_mode = cfg.pd_mode;
  const auto mc1 = markov::build_mc1(cfg, cfg.pd_mode && opts.pd_refine_arrival_chain);
  rep.occupancy = markov::stationary_distribution(mc1.generator);
  rep.p_rej = markov::arrival_distribution(rep.occupancy, mc1.space).p_rej;
  for (int k = 1; k <= 2; ++k) {
    SystemConfig ck = cfg;
    ck.tagged_class = k;
    ClassQoE& out = rep.classes[k - 1];
    out.tagged_class = k;
    try {
      const auto sp = starvation_probability(ck, opts);
      out.starvation_probability = sp.probability;
      out.diagnostics = sp.diagnostics;
      SystemConfig cd = ck;
      cd.bitrate_bps = sp.diagnostics.bitrate_used;
      const auto dv = mean_dtvt(cd, opts);
      out.mean_dtvt = dv.mean_ratio;
      out.mean_dtvt_closed_form = dv.closed_form;
      out.diagnostics.condition_v = dv.diagnostics.condition_v;
    } catch (const Error& e) {
      out.ok = false;
      out.error = e.what();
    }
  }
  return rep;
}

}  // namespace vqoe::analytic
