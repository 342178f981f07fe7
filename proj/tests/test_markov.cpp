#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "vqoe/error.hpp"
#include "vqoe/markov.hpp"

using namespace vqoe;
using namespace vqoe::markov;

namespace vqoe::markov {
bool operator<(const State& a, const State& b) { return a.i != b.i ? a.i < b.i : a.j < b.j; }
}  // namespace vqoe::markov

namespace {

SystemConfig scaled(int K, double ratio = 1.0) {
  SystemConfig cfg = reference_config();
  cfg.max_flows = K;
  cfg.phi1 = ratio;
  cfg.phi2 = 1.0;
  return with_load(cfg, 0.96, 0.6);
}

// Hand enumeration of the arrival-chain rates, keyed by (from, to) states.
std::map<std::pair<State, State>, double> mc1_table(const SystemConfig& c) {
  std::map<std::pair<State, State>, double> out;
  auto key = [](State a, State b) { return std::make_pair(a, b); };
  const double r = c.capacity_bps / c.bitrate_bps;
  for (int i = 0; i <= c.max_flows; ++i)
    for (int j = 0; i + j <= c.max_flows; ++j) {
      if (i + j < c.max_flows) {
        out[key({i, j}, {i + 1, j})] = c.lambda1;
        out[key({i, j}, {i, j + 1})] = c.lambda2;
      }
      const double w = i * c.phi1 + j * c.phi2;
      if (i > 0) out[key({i, j}, {i - 1, j})] = i * c.phi1 * c.theta1 * r / w;
      if (j > 0) out[key({i, j}, {i, j - 1})] = j * c.phi2 * c.theta2 * r / w;
    }
  return out;
}

double tv(const Vector& a, const Vector& b) { return 0.5 * (a - b).cwiseAbs().sum(); }

}  // namespace

TEST_CASE("state index is a bijection in lexicographic order") {
  for (int K = 1; K <= 20; ++K) {
    for (bool ext : {false, true}) {
      StateSpace s(K, ext);
      const int m = ext ? K : K - 1;
      CHECK(s.size() == (m + 1) * (m + 2) / 2);
      std::set<int> seen;
      int expect = 0;
      for (int i = 0; i <= m; ++i)
        for (int j = 0; i + j <= m; ++j) {
          const int l = s.index(i, j);
          CHECK(l == expect++);
          CHECK(s.state(l) == State{i, j});
          seen.insert(l);
        }
      CHECK(static_cast<int>(seen.size()) == s.size());
    }
  }
  CHECK(StateSpace(10).size() == 55);
}

TEST_CASE("buffer rates") {
  SystemConfig cfg = reference_config();
  const auto r = buffer_rates(cfg);
  const StateSpace s(cfg.max_flows);
  CHECK(r.b(s.index(0, 0)) == doctest::Approx(5000.0 / 980.0).epsilon(1e-14));
  CHECK(r.b(s.index(0, 0)) == doctest::Approx(5.102).epsilon(1e-4));
  for (int l = 0; l < s.size(); ++l) {
    const auto st = s.state(l);
    CHECK(r.c(l) == r.b(l) - 1.0);
    CHECK(r.b(l) == doctest::Approx(5000.0 / 980.0 / (st.i + st.j + 1)).epsilon(1e-14));
  }
  SystemConfig doubled = cfg;
  doubled.phi1 = 3.0;
  doubled.phi2 = 1.5;
  SystemConfig base = cfg;
  base.phi1 = 2.0 * 0.75;
  base.phi2 = 0.75;
  CHECK((buffer_rates(doubled).b - buffer_rates(base).b).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("departure rates and calibration for the evaluation cell") {
  const SystemConfig cfg = reference_config();
  CHECK(std::abs(cfg.psi(1) - 0.054) < 5e-4);
  CHECK(std::abs(cfg.psi(2) - 0.0045) < 5e-5);
  CHECK(cfg.lambda() == doctest::Approx(0.0095).epsilon(0.005));
  CHECK(cfg.offered_load() == doctest::Approx(0.96).epsilon(1e-14));
  CHECK(calibrate_lambda(0.0, 0.6, cfg) == 0.0);
  // Direct: rho / (p1 m1 + p2 m2) * C / bitrate.
  const double oracle = 0.96 / (0.6 * 94.0 + 0.4 * 1143.0) * 5e6 / 980e3;
  CHECK(calibrate_lambda(0.96, 0.6, cfg) == doctest::Approx(oracle).epsilon(1e-14));
}

TEST_CASE("arrival chain: K = 1 birth-death") {
  SystemConfig cfg = reference_config();
  cfg.max_flows = 1;
  cfg.lambda2 = 0.0;
  cfg.lambda1 = 0.01;
  const auto m = build_mc1(cfg);
  // (0, 1) is unreachable without class-2 arrivals; the chain is 0 <-> 1.
  const int s0 = m.space.index(0, 0), s1 = m.space.index(1, 0), s2 = m.space.index(0, 1);
  CHECK(m.generator(s0, s1) == doctest::Approx(0.01));
  CHECK(m.generator(s0, s2) == 0.0);
  CHECK(m.generator(s1, s0) == doctest::Approx(cfg.psi(1)).epsilon(1e-14));
  const auto z = stationary_distribution(m.generator);
  CHECK(z(s1) / z(s0) == doctest::Approx(0.01 / cfg.psi(1)).epsilon(1e-12));
  CHECK(std::abs(z(s2)) < 1e-14);
  const auto a = arrival_distribution(z, m.space);
  CHECK(a.p_rej == doctest::Approx(z(s1) + z(s2)).epsilon(1e-14));
}

TEST_CASE("arrival chain: K = 3 generator matches a hand enumeration") {
  for (double ratio : {1.0, 2.0, 0.5}) {
    const auto cfg = scaled(3, ratio);
    const auto m = build_mc1(cfg);
    const auto table = mc1_table(cfg);
    for (int a = 0; a < m.space.size(); ++a)
      for (int b = 0; b < m.space.size(); ++b) {
        if (a == b) continue;
        const auto it = table.find({m.space.state(a), m.space.state(b)});
        const double expect = it == table.end() ? 0.0 : it->second;
        CHECK(m.generator(a, b) == doctest::Approx(expect).epsilon(1e-13));
      }
  }
}

TEST_CASE("generator rows sum to zero") {
  for (int K = 1; K <= 12; ++K)
    for (double ratio : {1.0, 2.0, 0.5}) {
      const auto cfg = scaled(K, ratio);
      for (bool pd : {false, true}) {
        const auto g = build_mc1(cfg, pd).generator;
        const double scale = g.cwiseAbs().maxCoeff();
        CHECK(g.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12 * scale);
      }
      for (int k : {1, 2}) {
        auto c = cfg;
        c.tagged_class = k;
        const auto r = mc2_mc3_rates(c);
        for (const auto& rates : {r, pd_refined_rates(r, c)}) {
          const auto g = background_generator(c, rates);
          const double scale = std::max(1e-300, g.cwiseAbs().maxCoeff());
          CHECK(g.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12 * scale);
        }
      }
    }
}

TEST_CASE("stationary distribution") {
  const auto cfg = reference_config();
  const auto m = build_mc1(cfg);
  const auto z = stationary_distribution(m.generator);
  CHECK(std::abs(z.sum() - 1.0) < 1e-12);
  CHECK(z.minCoeff() >= 0.0);
  CHECK((z.transpose() * m.generator).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("stationary distribution matches a long CTMC run (K = 3)") {
  const auto cfg = scaled(3);
  const auto m = build_mc1(cfg);
  const auto z = stationary_distribution(m.generator);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector occ = Vector::Zero(m.space.size());
  int s = 0;
  for (long e = 0; e < 10000000; ++e) {
    const double out = -m.generator(s, s);
    occ(s) += -std::log1p(-u(rng)) / out;
    double x = u(rng) * out;
    int next = s;
    for (int t = 0; t < m.space.size(); ++t) {
      if (t == s) continue;
      x -= m.generator(s, t);
      next = t;
      if (x < 0.0) break;
    }
    s = next;
  }
  occ /= occ.sum();
  CHECK(tv(occ, z) < 0.005);
}

TEST_CASE("arrival distribution") {
  const StateSpace ext(3, true);
  Vector z = Vector::Zero(ext.size());
  z(ext.index(0, 0)) = 1.0;
  const auto a = arrival_distribution(z, ext);
  CHECK(a.p_rej == 0.0);
  CHECK(a.pi(0) == 1.0);
  CHECK(a.pi.size() == 6);

  Vector full = Vector::Zero(ext.size());
  full(ext.index(3, 0)) = 0.5;
  full(ext.index(0, 3)) = 0.5;
  CHECK_THROWS_AS(arrival_distribution(full, ext), NumericalError);
}

TEST_CASE("tagged-flow rates match direct enumeration") {
  for (double ratio : {1.0, 2.0}) {
    for (int k : {1, 2}) {
      auto cfg = scaled(3, ratio);
      cfg.tagged_class = k;
      const auto r = mc2_mc3_rates(cfg);
      const StateSpace s(3);
      const double R = cfg.capacity_bps / cfg.bitrate_bps;
      for (int l = 0; l < s.size(); ++l) {
        const auto [i, j] = s.state(l);
        const double w = (i + (k == 1)) * cfg.phi1 + (j + (k == 2)) * cfg.phi2;
        CHECK(r.mu(l) == doctest::Approx(i * cfg.phi1 * cfg.theta1 * R / w).epsilon(1e-14));
        CHECK(r.nu(l) == doctest::Approx(j * cfg.phi2 * cfg.theta2 * R / w).epsilon(1e-14));
        CHECK(r.phi_abs(l) ==
              doctest::Approx(cfg.phi(k) * cfg.theta(k) * R / w).epsilon(1e-14));
        if (i == 0) CHECK(r.mu(l) == 0.0);
      }
      if (k == 1) CHECK(r.phi_abs(0) == doctest::Approx(cfg.psi(1)).epsilon(1e-14));
    }
  }
}

TEST_CASE("swapping class labels transposes the rate table") {
  for (int K = 1; K <= 6; ++K)
    for (double ratio : {1.0, 2.0, 0.5}) {
      auto a = scaled(K, ratio);
      a.tagged_class = 1;
      auto b = a;
      std::swap(b.phi1, b.phi2);
      std::swap(b.theta1, b.theta2);
      std::swap(b.lambda1, b.lambda2);
      b.tagged_class = 2;
      const auto ra = mc2_mc3_rates(a);
      const auto rb = mc2_mc3_rates(b);
      const StateSpace s(K);
      for (int l = 0; l < s.size(); ++l) {
        const auto [i, j] = s.state(l);
        const int t = s.index(j, i);
        CHECK(ra.mu(l) == doctest::Approx(rb.nu(t)).epsilon(1e-14));
        CHECK(ra.nu(l) == doctest::Approx(rb.mu(t)).epsilon(1e-14));
        CHECK(ra.phi_abs(l) == doctest::Approx(rb.phi_abs(t)).epsilon(1e-14));
        CHECK(buffer_rates(a).b(l) == doctest::Approx(buffer_rates(b).b(t)).epsilon(1e-14));
      }
    }
}

TEST_CASE("progressive-download refinement is a contraction") {
  for (int k : {1, 2}) {
    auto cfg = reference_config();
    cfg.tagged_class = k;
    const auto r = mc2_mc3_rates(cfg);
    const auto p = pd_refined_rates(r, cfg);
    CHECK((p.mu.array() <= r.mu.array()).all());
    CHECK((p.nu.array() <= r.nu.array()).all());
    CHECK((p.phi_abs.array() <= r.phi_abs.array()).all());
  }
  auto cfg = reference_config();
  const StateSpace s(cfg.max_flows);
  const auto r = mc2_mc3_rates(cfg);
  const auto p = pd_refined_rates(r, cfg);
  const auto br = buffer_rates(cfg);
  // Congested state: each flow gets less than the bitrate, nothing changes.
  const int congested = s.index(5, 3);
  REQUIRE(br.b(congested) < 1.0);
  CHECK(p.mu(congested) == r.mu(congested));
  CHECK(p.nu(congested) == r.nu(congested));
  // One other class-1 flow and room to spare: its service is the viewing time.
  const int light = s.index(1, 0);
  REQUIRE(br.b(light) > 1.0);
  CHECK(p.mu(light) == doctest::Approx(cfg.theta1).epsilon(1e-14));
}

TEST_CASE("configuration validation") {
  SystemConfig cfg = reference_config();
  cfg.phi1 = 0.0;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  CHECK_THROWS_AS(StateSpace(0), DomainError);
}
