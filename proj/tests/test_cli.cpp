#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "vqoe/error.hpp"
#include "vqoe/experiment.hpp"
#include "vqoe/report.hpp"

using namespace vqoe;
using namespace vqoe::experiment;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

std::string csv(const report::CsvTable& t) {
  std::ostringstream o;
  report::write_csv(o, t);
  return o.str();
}

}  // namespace

TEST_CASE("config text round trip") {
  auto cfg = default_config();
  CHECK(parse(render_config(cfg)) == cfg);

  cfg.seed = 77;
  cfg.sweep_q_a = {0, 10.5, 180};
  cfg.sweep_phi_ratio = {0.5, 2};
  cfg.mode = flowsim::Mode::pd_finite_duration;
  cfg.pd_mode = PdSetting::off;
  cfg.format = ExperimentConfig::Format::json;
  cfg.boundary = analytic::BoundaryRule::state_indexed;
  cfg.trace = "trace with spaces.csv";
  CHECK(parse(render_config(cfg)) == cfg);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse("[system]\ncapacity = 5e6\n"), DomainError);
  CHECK_THROWS_AS(parse("[plot]\nx = 1\n"), DomainError);
  CHECK_THROWS_AS(parse("[system]\ncapacity_bps = fast\n"), DomainError);
  try {
    parse("[run]\nseed = 1\n[sweep\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }

  auto empty = parse("[sweep]\nq_a =\n");
  CHECK_THROWS_AS(empty.validate("solve"), DomainError);
  auto bad = default_config();
  bad.sweep_rho = {-0.5};
  CHECK_THROWS_AS(bad.validate("solve"), DomainError);
  auto nofile = default_config();
  CHECK_THROWS_AS(nofile.validate("fit"), DomainError);
  nofile.fit_input = "/nonexistent/trace.csv";
  CHECK_THROWS_AS(nofile.validate("fit"), IoError);
  CHECK_THROWS_AS(load_config("/nonexistent/run.ini"), IoError);
}

TEST_CASE("sweep expansion order and derived systems") {
  auto cfg = parse("[sweep]\nmax_flows = 3, 10\nphi_ratio = 1, 2\nq_a = 0, 30\n");
  const auto pts = expand_sweep(cfg);
  REQUIRE(pts.size() == 8);
  CHECK(pts[0].max_flows == 3);
  CHECK(pts[1].q_a == 30.0);
  CHECK(pts[2].phi_ratio == 2.0);
  CHECK(pts[4].max_flows == 10);
  const auto sys = system_at(cfg, pts[3]);
  CHECK(sys.phi1 == 2.0);
  CHECK(sys.phi2 == 1.0);
  CHECK(sys.startup_threshold == 30.0);
  CHECK(sys.offered_load() == doctest::Approx(0.96).epsilon(1e-12));
  CHECK(sim_at(cfg, pts[0], 0, {}).seed != sim_at(cfg, pts[0], 1, {}).seed);
}

TEST_CASE("solve rows: single-flow cell never starves") {
  auto cfg = parse("[sweep]\nmax_flows = 1\nq_a = 0, 20\n");
  const auto t = solve_table(run_solve(cfg));
  REQUIRE(t.rows.size() == 4);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    CHECK(t.at(r, "starvation_probability") == "0");
    CHECK(std::stod(t.at(r, "mean_dtvt")) == doctest::Approx(0.196).epsilon(1e-9));
    CHECK(t.at(r, "ok") == "true");
  }
}

TEST_CASE("CSV writing quotes and reading restores") {
  report::CsvTable t;
  t.header = {"a", "b,c", "d"};
  t.rows = {{"1", "x\"y", "multi\nline"}, {"", "plain", "2.5"}};
  const auto text = csv(t);
  CHECK(text.find("\"b,c\"") != std::string::npos);
  CHECK(text.find("\"x\"\"y\"") != std::string::npos);
  std::istringstream in(text);
  const auto back = report::read_csv(in);
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);

  std::istringstream ragged("a,b\n1,2\n3\n");
  try {
    report::read_csv(ragged);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  std::istringstream nothing("");
  CHECK_THROWS_AS(report::read_csv(nothing), ParseError);
  CHECK(report::fmt(0.1) == "0.1");
  CHECK(report::fmt(INFINITY) == "inf");
}

TEST_CASE("compare flags") {
  auto cfg = parse("[sweep]\nmax_flows = 3\nq_a = 120\n");
  cfg.mode = flowsim::Mode::pd;
  const auto model = run_solve(cfg);
  REQUIRE(model.size() == 1);
  const auto& m = model[0].report;

  auto fake = [&](double shift2) {
    SimRow s{model[0].point, {}};
    for (int k = 1; k <= 2; ++k) {
      auto& c = s.report.classes[k - 1];
      c.accepted = 100000;
      const double p = m.of(k).starvation_probability + (k == 2 ? shift2 : 0.0);
      c.starved = std::lround(p * c.accepted);
      c.dtvt_sum = m.of(k).mean_dtvt * c.accepted;
    }
    return std::vector<SimRow>{s};
  };
  auto flag = [](const report::CsvTable& t, int klass, const std::string& metric) {
    for (std::size_t r = 0; r < t.rows.size(); ++r)
      if (t.at(r, "class") == std::to_string(klass) && t.at(r, "metric") == metric)
        return t.at(r, "flag");
    return std::string("missing");
  };

  const auto close = compare_table(cfg, model, fake(0.0));
  CHECK(flag(close, 1, "starvation_probability") == "pass");
  CHECK(flag(close, 2, "mean_dtvt") == "pass");
  const auto drift = compare_table(cfg, model, fake(0.06));
  CHECK(flag(drift, 2, "starvation_probability") == "expected");
  const auto wide = compare_table(cfg, model, fake(0.2));
  CHECK(flag(wide, 2, "starvation_probability") == "fail");
  cfg.mode = flowsim::Mode::basic;
  CHECK(flag(compare_table(cfg, model, fake(0.06)), 2, "starvation_probability") == "fail");
}

TEST_CASE("runs are reproducible") {
  auto cfg = parse("[sim]\ntarget_flows = 3000\nwarmup_flows = 100\nreplicas = 2\n"
                   "[system]\ncapacity_bps = 2.5e6\n[sweep]\nmax_flows = 3\nq_a = 0, 10\n");
  CHECK(csv(simulate_table(run_simulate(cfg))) == csv(simulate_table(run_simulate(cfg))));
  CHECK(csv(solve_table(run_solve(cfg))) == csv(solve_table(run_solve(cfg))));
  CHECK(solve_json(run_solve(cfg)).dump() == solve_json(run_solve(cfg)).dump());
  auto other = cfg;
  other.seed = 2;
  CHECK(csv(simulate_table(run_simulate(cfg))) != csv(simulate_table(run_simulate(other))));
}

TEST_CASE("infer rows") {
  auto cfg = default_config();
  cfg.infer_samples = 5;
  CHECK_THROWS_AS(cfg.validate("infer"), DomainError);
}
