#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "vqoe/analytic.hpp"
#include "vqoe/error.hpp"

using namespace vqoe;
using namespace vqoe::analytic;
using markov::State;

namespace {

SystemConfig cell(int K, double capacity = 5e6, double ratio = 1.0, int tagged = 1) {
  SystemConfig cfg;
  cfg.capacity_bps = capacity;
  cfg.max_flows = K;
  cfg.phi1 = ratio;
  cfg.tagged_class = tagged;
  return markov::with_load(cfg, 0.96, 0.6);
}

// Rates written out from the model definition, independent of the library.
struct Direct {
  const SystemConfig& c;
  double share(int i, int j) const {
    const int k = c.tagged_class;
    return (i + (k == 1)) * c.phi1 + (j + (k == 2)) * c.phi2;
  }
  double b(int i, int j) const {
    return c.capacity_bps * c.phi(c.tagged_class) / (c.bitrate_bps * share(i, j));
  }
  double mu(int i, int j) const {
    return i * c.phi1 * c.theta1 * c.capacity_bps / (c.bitrate_bps * share(i, j));
  }
  double nu(int i, int j) const {
    return j * c.phi2 * c.theta2 * c.capacity_bps / (c.bitrate_bps * share(i, j));
  }
  // Tagged flow finishes watching: its remaining viewing is memoryless.
  double absorb(int i, int j) const { return c.theta(c.tagged_class) * b(i, j); }
};

// One background transition of the population with the tagged flow present.
State jump(const Direct& d, State s, std::mt19937_64& rng, double& total) {
  const int K = d.c.max_flows;
  const bool room = s.i + s.j < K - 1;
  const double r[4] = {room ? d.c.lambda1 : 0.0, room ? d.c.lambda2 : 0.0, d.mu(s.i, s.j),
                       d.nu(s.i, s.j)};
  total = r[0] + r[1] + r[2] + r[3];
  std::uniform_real_distribution<double> u(0.0, total);
  double x = u(rng);
  if ((x -= r[0]) < 0) return {s.i + 1, s.j};
  if ((x -= r[1]) < 0) return {s.i, s.j + 1};
  if ((x -= r[2]) < 0) return {s.i - 1, s.j};
  return {s.i, s.j - 1};
}

double rates_out(const Direct& d, State s) {
  const bool room = s.i + s.j < d.c.max_flows - 1;
  return (room ? d.c.lambda() : 0.0) + d.mu(s.i, s.j) + d.nu(s.i, s.j);
}

}  // namespace

TEST_CASE("single-state system") {
  const auto cfg = cell(1);
  const auto rates = markov::build_rates(cfg);
  const auto mw = build_mw(rates, cfg);
  REQUIRE(mw.matrix.rows() == 1);
  const double b = 5e6 / 980e3;
  CHECK(mw.matrix(0, 0) == doctest::Approx(cfg.theta1 * b / (b - 1.0)).epsilon(1e-14));
  const auto s = starvation_probability(cfg);
  CHECK(s.probability == 0.0);
  CHECK(s.playback(0) == 0.0);
}

TEST_CASE("coefficient matrices: stencil and row balance") {
  for (int K : {3, 6}) {
    for (int k : {1, 2}) {
      const auto cfg = cell(K, 5e6, 2.0, k);
      const auto rates = markov::build_rates(cfg);
      const auto mw = build_mw(rates, cfg);
      const auto mv = build_mv(rates, cfg);
      const auto& sp = rates.space;
      Direct d{cfg};
      for (int a = 0; a < sp.size(); ++a) {
        const auto s = sp.state(a);
        for (int b = 0; b < sp.size(); ++b) {
          const auto t = sp.state(b);
          const int dist = std::abs(s.i - t.i) + std::abs(s.j - t.j);
          if (dist > 1) {
            CHECK(mw.matrix(a, b) == 0.0);
            CHECK(mv.matrix(a, b) == 0.0);
          }
        }
        const double phi = cfg.theta(k) * d.b(s.i, s.j);
        CHECK(mw.matrix.row(a).sum() ==
              doctest::Approx(phi / (d.b(s.i, s.j) - 1.0)).epsilon(1e-10));
        CHECK(std::abs(mv.matrix.row(a).sum()) < 1e-14 * mv.matrix.cwiseAbs().maxCoeff());
      }
      const auto sf = decompose(mw.matrix);
      CHECK(sf.valid);
      CHECK(sf.reconstruction_error < 1e-8);
    }
  }
}

TEST_CASE("W: spectral and Riccati routes agree for K <= 6") {
  for (int K = 2; K <= 6; ++K)
    for (double cap : {5e6, 2.5e6})
      for (int k : {1, 2}) {
        const auto cfg = cell(K, cap, 1.0, k);
        const auto rates = markov::build_rates(cfg);
        const auto mw = build_mw(rates, cfg);
        const auto sf = decompose(mw.matrix);
        REQUIRE(sf.valid);
        const auto spectral = solve_w_spectral(mw, sf);
        const auto riccati = solve_w_riccati(mw);
        for (double q : {0.0, 1.0, 5.0, 10.0, 30.0, 80.0})
          CHECK((spectral.at(q) - riccati.at(q, 0.005)).cwiseAbs().maxCoeff() < 1e-6);
      }
}

TEST_CASE("W satisfies its ODE and is bounded") {
  const auto cfg = cell(5, 2.5e6);
  const auto rates = markov::build_rates(cfg);
  const auto mw = build_mw(rates, cfg);
  const auto w = solve_w_spectral(mw, decompose(mw.matrix));
  const double h = 1e-4;
  for (double q : {0.5, 3.0, 12.0, 40.0}) {
    const Vector fd = (w.at(q + h) - w.at(q - h)) / (2 * h);
    const Vector rhs = mw.matrix * w.at(q);
    CHECK((fd - rhs).cwiseAbs().maxCoeff() < 1e-6);
  }
  const Vector w0 = w.at(0.0);
  for (int l = 0; l < rates.space.size(); ++l)
    if (rates.buffer.c(l) < 0.0) CHECK(w0(l) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("W: monotone in q and in congestion") {
  for (int K = 2; K <= 6; ++K)
    for (int k : {1, 2}) {
      const auto cfg = cell(K, 2.5e6, 1.0, k);
      const auto rates = markov::build_rates(cfg);
      const auto mw = build_mw(rates, cfg);
      const auto w = solve_w_spectral(mw, decompose(mw.matrix));
      const auto& sp = rates.space;
      Vector prev = w.at(0.0);
      for (int n = 0; n < 50; ++n) {
        const Vector cur = w.at(2.0 * n);
        CHECK(cur.minCoeff() >= -1e-10);
        CHECK(cur.maxCoeff() <= 1.0 + 1e-10);
        CHECK(((cur - prev).array() <= 1e-10).all());
        for (int a = 0; a < sp.size(); ++a)
          for (int b = 0; b < sp.size(); ++b) {
            const auto s = sp.state(a), t = sp.state(b);
            if (s.i <= t.i && s.j <= t.j) CHECK(cur(a) <= cur(b) + 1e-10);
          }
        prev = cur;
      }
    }
}

TEST_CASE("W matches a Monte Carlo of the playback phase (K = 3)") {
  const auto cfg = cell(3, 2.5e6);
  const auto rates = markov::build_rates(cfg);
  const auto mw = build_mw(rates, cfg);
  const auto w = solve_w_spectral(mw, decompose(mw.matrix));
  Direct d{cfg};
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> ex(1.0);
  const double q0 = 8.0;
  const Vector wq = w.at(q0);
  for (int l = 0; l < rates.space.size(); ++l) {
    long starved = 0;
    const long n = 100000;
    for (long r = 0; r < n; ++r) {
      State s = rates.space.state(l);
      double q = q0;
      for (;;) {
        const double c = d.b(s.i, s.j) - 1.0;
        const double out = rates_out(d, s) + d.absorb(s.i, s.j);
        const double dt = ex(rng) / out;
        if (c < 0.0 && q + c * dt <= 0.0) {
          ++starved;
          break;
        }
        q += c * dt;
        std::uniform_real_distribution<double> u(0.0, out);
        if (u(rng) < d.absorb(s.i, s.j)) break;
        double tot;
        s = jump(d, s, rng, tot);
      }
    }
    CHECK(std::abs(static_cast<double>(starved) / n - wq(l)) < 0.01);
  }
}

TEST_CASE("V: identity at zero threshold, stochastic rows, matches simulation") {
  const auto cfg = cell(3, 2.5e6);
  const auto rates = markov::build_rates(cfg);
  const auto mv = build_mv(rates, cfg);
  const Matrix v0 = solve_v(0.0, mv);
  CHECK((v0 - Matrix::Identity(v0.rows(), v0.cols())).cwiseAbs().maxCoeff() == 0.0);
  for (double qa : {1.0, 10.0, 30.0, 180.0}) {
    const Matrix v = solve_v(qa, mv);
    CHECK((v.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
    CHECK(v.minCoeff() >= 0.0);
    const auto sf = decompose(mv.matrix);
    if (sf.valid) CHECK((v - solve_v_spectral(qa, sf)).cwiseAbs().maxCoeff() < 1e-9);
  }

  Direct d{cfg};
  std::mt19937_64 rng(6);
  std::exponential_distribution<double> ex(1.0);
  const double qa = 10.0;
  const Matrix v = solve_v(qa, mv);
  for (int l = 0; l < rates.space.size(); ++l) {
    Vector hist = Vector::Zero(rates.space.size());
    const long n = 200000;
    for (long r = 0; r < n; ++r) {
      State s = rates.space.state(l);
      double q = 0.0;
      for (;;) {
        const double out = rates_out(d, s);
        const double dt = out > 0.0 ? ex(rng) / out : INFINITY;
        if (q + d.b(s.i, s.j) * dt >= qa) break;
        q += d.b(s.i, s.j) * dt;
        double tot;
        s = jump(d, s, rng, tot);
      }
      hist(rates.space.index(s.i, s.j)) += 1.0;
    }
    hist /= static_cast<double>(n);
    CHECK(0.5 * (hist.transpose() - v.row(l)).cwiseAbs().sum() < 0.01);
  }
}

TEST_CASE("mean downloading time") {
  {
    const auto cfg = cell(1);
    const auto rates = markov::build_rates(cfg);
    const auto mv = build_mv(rates, cfg);
    const auto sf = decompose(mv.matrix);
    for (double qv : {1.0, 100.0, 1000.0}) {
      CHECK(mean_sojourn(qv, mv, sf)(0) == doctest::Approx(qv * 980e3 / 5e6).epsilon(1e-14));
      CHECK(mean_sojourn_expm(qv, mv)(0) == doctest::Approx(qv * 980e3 / 5e6).epsilon(1e-12));
    }
  }
  const auto cfg = cell(3, 2.5e6);
  const auto rates = markov::build_rates(cfg);
  const auto mv = build_mv(rates, cfg);
  const auto sf = decompose(mv.matrix);
  Vector prev = Vector::Zero(rates.space.size());
  for (double qv : {0.5, 10.0, 100.0, 500.0, 2000.0}) {
    const Vector s = mean_sojourn(qv, mv, sf);
    CHECK(s.minCoeff() > 0.0);
    CHECK(((s - prev).array() >= 0.0).all());
    CHECK((s - mean_sojourn_expm(qv, mv)).cwiseAbs().maxCoeff() < 1e-8 * s.maxCoeff());
    CHECK((s - mean_sojourn_integrated(qv, mv, 0.005)).cwiseAbs().maxCoeff() < 1e-6 * s.maxCoeff());
    prev = s;
  }

  // Simulated time to fetch 100 content-seconds from each start state.
  Direct d{cfg};
  std::mt19937_64 rng(8);
  std::exponential_distribution<double> ex(1.0);
  const double qv = 100.0;
  const Vector s = mean_sojourn(qv, mv, sf);
  for (int l = 0; l < rates.space.size(); ++l) {
    double total = 0.0;
    const long n = 100000;
    for (long r = 0; r < n; ++r) {
      State st = rates.space.state(l);
      double left = qv, t = 0.0;
      for (;;) {
        const double out = rates_out(d, st);
        const double dt = out > 0.0 ? ex(rng) / out : INFINITY;
        const double need = left / d.b(st.i, st.j);
        if (need <= dt) {
          t += need;
          break;
        }
        t += dt;
        left -= d.b(st.i, st.j) * dt;
        double tot;
        st = jump(d, st, rng, tot);
      }
      total += t;
    }
    CHECK(std::abs(total / n / s(l) - 1.0) < 0.01);
  }
}

TEST_CASE("starvation probability: limits and ordering") {
  const auto cfg = cell(10);
  auto big = cfg;
  big.startup_threshold = 3000.0;
  CHECK(starvation_probability(big).probability < 1e-6);

  for (double qa : {0.0, 10.0, 30.0, 80.0}) {
    for (int k : {1, 2}) {
      auto basic = cfg;
      basic.tagged_class = k;
      basic.startup_threshold = qa;
      auto pd = basic;
      pd.pd_mode = true;
      const double pb = starvation_probability(basic).probability;
      const double pp = starvation_probability(pd).probability;
      CHECK(pb >= 0.0);
      CHECK(pb <= 1.0);
      CHECK(pp >= pb);
    }
  }
}

TEST_CASE("DT/VT: single flow, equal weights, lower bound") {
  const auto one = cell(1);
  CHECK(mean_dtvt(one).mean_ratio == doctest::Approx(980.0 / 5000.0).epsilon(1e-9));

  const auto r = solve_qoe(cell(10));
  CHECK(std::abs(r.of(1).mean_dtvt - r.of(2).mean_dtvt) < 1e-6);
  for (double ratio : {1.0, 2.0, 0.5}) {
    const auto q = solve_qoe(cell(10, 5e6, ratio));
    for (int k : {1, 2}) {
      CHECK(q.of(k).ok);
      CHECK(q.of(k).mean_dtvt >= 980.0 / 5000.0);
      CHECK(q.of(k).mean_dtvt == doctest::Approx(q.of(k).mean_dtvt_closed_form).epsilon(1e-7));
    }
  }

  SolverOptions forced;
  forced.force_integration = true;
  const auto a = solve_qoe(cell(6, 2.5e6));
  const auto b = solve_qoe(cell(6, 2.5e6), forced);
  for (int k : {1, 2}) {
    CHECK(std::abs(a.of(k).mean_dtvt - b.of(k).mean_dtvt) < 1e-7);
    CHECK(std::abs(a.of(k).starvation_probability - b.of(k).starvation_probability) < 1e-6);
  }
}

TEST_CASE("evaluation cell: end points of the q_a sweep") {
  auto cfg = cell(10);
  cfg.startup_threshold = 0.0;
  const auto r0 = solve_qoe(cfg);
  cfg.startup_threshold = 30.0;
  const auto r30 = solve_qoe(cfg);
  CHECK(std::abs(r0.of(1).starvation_probability - 0.48) <= 0.05);
  CHECK(std::abs(r30.of(1).starvation_probability - 0.17) <= 0.05);
  CHECK(std::abs(r0.of(2).starvation_probability - 0.57) <= 0.05);
  CHECK(std::abs(r30.of(2).starvation_probability - 0.48) <= 0.05);
}

TEST_CASE("balanced playback rate: bitrate nudge with a warning") {
  SystemConfig cfg = cell(4);
  cfg.bitrate_bps = 2.5e6;  // b = 1 exactly with two flows
  cfg = markov::with_load(cfg, 0.96, 0.6);
  const auto rates = markov::build_rates(cfg);
  CHECK_THROWS_AS(build_mw(rates, cfg), DomainError);
  const auto r = solve_qoe(cfg);
  for (int k : {1, 2}) {
    CHECK(r.of(k).ok);
    CHECK(std::isfinite(r.of(k).starvation_probability));
    CHECK_FALSE(r.of(k).diagnostics.warnings.empty());
    CHECK(r.of(k).diagnostics.bitrate_used != cfg.bitrate_bps);
  }
}

TEST_CASE("state-indexed boundary rule is selectable") {
  SolverOptions o;
  o.boundary = BoundaryRule::state_indexed;
  const auto r = solve_qoe(cell(3, 2.5e6), o);
  for (int k : {1, 2}) {
    if (!r.of(k).ok) continue;
    CHECK(r.of(k).starvation_probability >= 0.0);
    CHECK(r.of(k).starvation_probability <= 1.0);
  }
}
