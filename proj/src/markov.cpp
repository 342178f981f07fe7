#include "vqoe/markov.hpp"

#include <algorithm>
#include <cmath>

#include "vqoe/error.hpp"

namespace vqoe::markov {

double SystemConfig::psi(int k) const { return capacity_bps * theta(k) / bitrate_bps; }

double SystemConfig::offered_load() const {
  if (lambda() <= 0.0) return 0.0;
  return lambda() * (p1() / psi(1) + (1.0 - p1()) / psi(2));
}

void SystemConfig::validate() const {
  if (!(capacity_bps > 0.0)) throw DomainError("capacity must be > 0");
  if (max_flows < 1) throw DomainError("admission cap K must be >= 1");
  if (!(bitrate_bps > 0.0)) throw DomainError("bitrate must be > 0");
  if (!(phi1 > 0.0) || !(phi2 > 0.0)) throw DomainError("DPS weights must be > 0");
  if (lambda1 < 0.0 || lambda2 < 0.0) throw DomainError("arrival rates must be >= 0");
  if (!(theta1 > 0.0) || !(theta2 > 0.0)) throw DomainError("viewing-time rates must be > 0");
  if (startup_threshold < 0.0) throw DomainError("startup threshold must be >= 0");
  if (tagged_class != 1 && tagged_class != 2) throw DomainError("tagged class must be 1 or 2");
}

SystemConfig reference_config(double rho) {
  SystemConfig cfg;
  return with_load(cfg, rho, 0.6);
}

double calibrate_lambda(double rho, double p1, const SystemConfig& cfg) {
  if (rho < 0.0) throw DomainError("offered load must be >= 0");
  if (p1 < 0.0 || p1 > 1.0) throw DomainError("class-1 fraction must lie in [0, 1]");
  return rho / (p1 / cfg.psi(1) + (1.0 - p1) / cfg.psi(2));
}

double calibrate_lambda(double rho, const SystemConfig& cfg) {
  return calibrate_lambda(rho, cfg.p1(), cfg);
}

SystemConfig with_load(SystemConfig cfg, double rho, double p1) {
  const double lambda = calibrate_lambda(rho, p1, cfg);
  cfg.lambda1 = p1 * lambda;
  cfg.lambda2 = (1.0 - p1) * lambda;
  return cfg;
}

StateSpace::StateSpace(int max_flows, bool extended)
    : K_(max_flows), max_total_(extended ? max_flows : max_flows - 1) {
  if (max_flows < 1) throw DomainError("admission cap K must be >= 1");
  for (int i = 0; i <= max_total_; ++i)
    for (int j = 0; j <= max_total_ - i; ++j) states_.push_back({i, j});
}

int StateSpace::index(int i, int j) const {
  if (!contains(i, j)) throw DomainError("state outside the lattice");
  // sum_{m < i} (max_total - m + 1) + j
  const int n = max_total_ + 1;
  return i * n - i * (i - 1) / 2 + j;
}

namespace {

// Total DPS weight seen at (i, j) when the tagged class-k flow is present.
double weight_sum(const SystemConfig& cfg, int i, int j) {
  return (i + (cfg.tagged_class == 1 ? 1 : 0)) * cfg.phi1 +
         (j + (cfg.tagged_class == 2 ? 1 : 0)) * cfg.phi2;
}

double share_rate(const SystemConfig& cfg) { return cfg.capacity_bps / cfg.bitrate_bps; }

}  // namespace

BufferRates buffer_rates(const SystemConfig& cfg) {
  cfg.validate();
  const StateSpace space(cfg.max_flows);
  BufferRates r{Vector(space.size()), Vector(space.size())};
  const double phi_k = cfg.phi(cfg.tagged_class);
  for (int l = 0; l < space.size(); ++l) {
    const auto [i, j] = space.state(l);
    r.b(l) = share_rate(cfg) * phi_k / weight_sum(cfg, i, j);
    r.c(l) = r.b(l) - 1.0;
  }
  return r;
}

Mc1 build_mc1(const SystemConfig& cfg, bool pd_refined) {
  cfg.validate();
  Mc1 mc{StateSpace(cfg.max_flows, true), {}, {}, {}};
  const auto& sp = mc.space;
  const int n = sp.size();
  mc.generator = Matrix::Zero(n, n);
  mc.eta1 = Vector::Zero(n);
  mc.eta2 = Vector::Zero(n);
  const double s = share_rate(cfg);
  for (int l = 0; l < n; ++l) {
    const auto [i, j] = sp.state(l);
    const double w = i * cfg.phi1 + j * cfg.phi2;
    if (w > 0.0) {
      mc.eta1(l) = i * cfg.phi1 * cfg.theta1 * s / w;
      mc.eta2(l) = j * cfg.phi2 * cfg.theta2 * s / w;
      if (pd_refined) {
        mc.eta1(l) = std::min(mc.eta1(l), i * cfg.theta1);
        mc.eta2(l) = std::min(mc.eta2(l), j * cfg.theta2);
      }
    }
    if (i + j < cfg.max_flows) {
      mc.generator(l, sp.index(i + 1, j)) += cfg.lambda1;
      mc.generator(l, sp.index(i, j + 1)) += cfg.lambda2;
    }
    if (i > 0) mc.generator(l, sp.index(i - 1, j)) += mc.eta1(l);
    if (j > 0) mc.generator(l, sp.index(i, j - 1)) += mc.eta2(l);
    mc.generator(l, l) = -(mc.generator.row(l).sum() - mc.generator(l, l));
  }
  return mc;
}

Vector stationary_distribution(const Matrix& generator) {
  const auto n = generator.rows();
  if (n == 0 || generator.cols() != n) throw DomainError("generator must be square");
  Matrix a = generator.transpose();
  a.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs(n - 1) = 1.0;
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible()) throw NumericalError("stationary solve: generator is reducible or singular");
  Vector z = lu.solve(rhs);
  const double scale = std::max(1.0, generator.cwiseAbs().maxCoeff());
  const double resid = (z.transpose() * generator).cwiseAbs().maxCoeff();
  if (!std::isfinite(resid) || resid > 1e-9 * scale)
    throw NumericalError("stationary solve: residual " + std::to_string(resid) + " too large");
  z = z.cwiseMax(0.0);
  return z / z.sum();
}

ArrivalDistribution arrival_distribution(const Vector& z, const StateSpace& ext) {
  if (!ext.extended()) throw DomainError("arrival distribution needs the extended state space");
  if (z.size() != ext.size()) throw DomainError("stationary vector does not match state space");
  const StateSpace S(ext.max_flows());
  ArrivalDistribution out{0.0, Vector(S.size())};
  for (int l = 0; l < ext.size(); ++l) {
    const auto [i, j] = ext.state(l);
    if (i + j == ext.max_flows()) out.p_rej += z(l);
    else out.pi(S.index(i, j)) = z(l);
  }
  const double admitted = out.pi.sum();
  if (!(admitted > 0.0)) throw NumericalError("every arrival is rejected (p_rej = 1)");
  out.pi /= admitted;
  return out;
}

PlaybackRates mc2_mc3_rates(const SystemConfig& cfg) {
  cfg.validate();
  const StateSpace sp(cfg.max_flows);
  PlaybackRates r{Vector(sp.size()), Vector(sp.size()), Vector(sp.size())};
  const double s = share_rate(cfg);
  const int k = cfg.tagged_class;
  for (int l = 0; l < sp.size(); ++l) {
    const auto [i, j] = sp.state(l);
    const double w = weight_sum(cfg, i, j);
    r.mu(l) = i * cfg.phi1 * cfg.theta1 * s / w;
    r.nu(l) = j * cfg.phi2 * cfg.theta2 * s / w;
    r.phi_abs(l) = cfg.phi(k) * cfg.theta(k) * s / w;
  }
  return r;
}

PlaybackRates pd_refined_rates(const PlaybackRates& rates, const SystemConfig& cfg) {
  const StateSpace sp(cfg.max_flows);
  if (rates.mu.size() != sp.size()) throw DomainError("rate vectors do not match state space");
  PlaybackRates r = rates;
  const double theta_k = cfg.theta(cfg.tagged_class);
  for (int l = 0; l < sp.size(); ++l) {
    const auto [i, j] = sp.state(l);
    r.mu(l) = std::min(rates.mu(l), i * cfg.theta1);
    r.nu(l) = std::min(rates.nu(l), j * cfg.theta2);
    r.phi_abs(l) = std::min(rates.phi_abs(l), theta_k);
  }
  return r;
}

Matrix background_generator(const SystemConfig& cfg, const PlaybackRates& rates) {
  const StateSpace sp(cfg.max_flows);
  const int n = sp.size();
  Matrix g = Matrix::Zero(n, n);
  for (int l = 0; l < n; ++l) {
    const auto [i, j] = sp.state(l);
    if (i + j < sp.max_total()) {
      g(l, sp.index(i + 1, j)) += cfg.lambda1;
      g(l, sp.index(i, j + 1)) += cfg.lambda2;
    }
    if (i > 0) g(l, sp.index(i - 1, j)) += rates.mu(l);
    if (j > 0) g(l, sp.index(i, j - 1)) += rates.nu(l);
    g(l, l) = -(g.row(l).sum() - g(l, l));
  }
  return g;
}

RateMatrices build_rates(const SystemConfig& cfg, bool refine_arrival_chain) {
  cfg.validate();
  RateMatrices r;
  r.space = StateSpace(cfg.max_flows);
  r.mc1 = build_mc1(cfg, cfg.pd_mode && refine_arrival_chain);
  r.basic = mc2_mc3_rates(cfg);
  r.refined = pd_refined_rates(r.basic, cfg);
  r.buffer = buffer_rates(cfg);
  return r;
}

}  // namespace vqoe::markov
