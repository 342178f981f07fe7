#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "vqoe/error.hpp"
#include "vqoe/inference.hpp"

using namespace vqoe;
using namespace vqoe::inference;

namespace {

const workload::HyperExpParams kTraceFit = workload::HyperExpParams::from_means(0.6011, 94.0, 1143.0);

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

void check_valid_cdf(const DocModel& m) {
  const auto& g = m.grid();
  REQUIRE(g.size() == DocModel::kGridPoints + 1);
  CHECK(g.front() >= 0.0);
  CHECK(g.back() == 1.0);
  for (std::size_t k = 1; k < g.size(); ++k) CHECK(g[k] >= g[k - 1]);
  CHECK(m.cdf(kDocCeiling) == 1.0);
}

}  // namespace

TEST_CASE("reference 0-50 s constants are not a valid CDF as printed") {
  const ReferenceDocParameters p;
  CHECK(p.epsilon == 0.9460);
  CHECK(p.c == 0.2733);
  CHECK(p.a == 0.6383);
  CHECK(p.b == 6.723);
  const DocModel m({0.0, 50.0}, p.epsilon, p.c, p.a, p.b);
  double top = 0.0;
  for (int k = 1; k <= 1050; ++k) top = std::max(top, m.raw_cdf(k / 1000.0));
  CHECK(top > 1.0);
  check_valid_cdf(m);
}

TEST_CASE("piecewise model parameters are recovered from their own samples") {
  const auto corpus = synthetic_doc_corpus(400000, 7);
  const auto fit = fit_bucket_table(corpus.records);
  REQUIRE(fit.fits.size() == corpus.truth.size());
  double prev_mean = 2.0;
  for (std::size_t m = 0; m < fit.fits.size(); ++m) {
    const auto& got = fit.fits[m].model;
    const auto& want = corpus.truth[m];
    CAPTURE(m);
    CHECK(rel(got.epsilon(), want.epsilon()) < 0.05);
    CHECK(rel(got.c(), want.c()) < 0.05);
    CHECK(rel(got.a(), want.a()) < 0.05);
    CHECK(rel(got.b(), want.b()) < 0.05);
    check_valid_cdf(got);
    CHECK(got.mean() <= prev_mean);
    CHECK(want.mean() <= prev_mean + 0.02);
    prev_mean = got.mean();
  }
}

TEST_CASE("degenerate and short buckets are rejected") {
  std::vector<double> full(1000, 1.0);
  CHECK_THROWS_AS(fit_doc_model(full, {0.0, 50.0}), DomainError);
  std::vector<double> few(100, 0.5);
  for (std::size_t k = 0; k < few.size(); ++k) few[k] = 0.01 * (k + 1);
  CHECK_THROWS_AS(fit_doc_model(few, {0.0, 50.0}), DomainError);
}

TEST_CASE("sampling from the table") {
  const BucketTable pm({DocModel::point_mass({0.0, 50.0}, 1.0),
                        DocModel::point_mass({50.0, 100.0}, 1.0)});
  Rng rng(1);
  for (double d : {1.0, 37.5, 50.0, 99.0}) CHECK(sample_viewing_time_from_duration(d, pm, rng) == d);
  CHECK_THROWS_AS(pm.lookup(150.0), DomainError);
  CHECK_THROWS_AS(pm.lookup(0.0), DomainError);

  const auto corpus = synthetic_doc_corpus(50000, 2);
  const BucketTable truth(corpus.truth);
  Rng a(9), b(9);
  for (int k = 0; k < 100; ++k) {
    const double x = sample_viewing_time_from_duration(700.0, truth, a);
    CHECK(x == sample_viewing_time_from_duration(700.0, truth, b));
    CHECK(x > 0.0);
    CHECK(x <= kDocCeiling * 700.0);
  }
}

TEST_CASE("class posterior") {
  const double g0 = (0.6011 / 94.0) / (0.6011 / 94.0 + 0.3989 / 1143.0);
  CHECK(class_posterior(0.0, kTraceFit) == doctest::Approx(g0).epsilon(1e-14));
  CHECK(class_posterior(0.0, kTraceFit) == doctest::Approx(0.9482).epsilon(1e-4));
  CHECK(class_posterior(10.0 * 1143.0, kTraceFit) < 0.01);

  const workload::HyperExpParams same{0.3, 1.0 / 200.0, 1.0 / 200.0};
  for (double t : {0.0, 50.0, 5000.0}) CHECK(class_posterior(t, same) == doctest::Approx(0.3));

  // Equal likelihood weights at t* = log(p1 theta1 / (p2 theta2)) / (theta1 - theta2).
  const double t1 = kTraceFit.theta1, t2 = kTraceFit.theta2;
  const double ts = std::log(0.6011 * t1 / (0.3989 * t2)) / (t1 - t2);
  CHECK(class_posterior(ts, kTraceFit) == doctest::Approx(0.5).epsilon(1e-12));
  double prev = 1.0;
  for (int k = 0; k <= 100; ++k) {
    const double g = class_posterior(20.0 * k, kTraceFit);
    CHECK(g <= prev);
    prev = g;
  }
}

TEST_CASE("held-out reconstruction of viewing times") {
  const auto train = synthetic_doc_corpus(400000, 7);
  const auto table = fit_bucket_table(train.records).table;
  const auto held = synthetic_doc_corpus(100000, 8);
  Rng rng(3);
  std::vector<double> truth, inferred;
  for (const auto& r : held.records) {
    truth.push_back(r.viewing_time);
    inferred.push_back(sample_viewing_time_from_duration(*r.duration, table, rng));
  }
  CHECK(ks_distance(truth, inferred) < 0.05);

  const auto a = std::get<workload::HyperExpParams>(workload::fit_hyperexp_mle(truth).params);
  const auto b = std::get<workload::HyperExpParams>(workload::fit_hyperexp_mle(inferred).params);
  CHECK(rel(1.0 / b.theta1, 1.0 / a.theta1) < 0.10);
  CHECK(rel(1.0 / b.theta2, 1.0 / a.theta2) < 0.10);
}

TEST_CASE("bucket table text format") {
  const auto corpus = synthetic_doc_corpus(1000, 4);
  std::vector<DocModel> models = corpus.truth;
  models[2] = DocModel::point_mass(models[2].bucket(), 0.75);
  const BucketTable t(models);
  std::stringstream s;
  write_bucket_table(s, t);
  const auto back = read_bucket_table(s);
  REQUIRE(back.models().size() == t.models().size());
  for (std::size_t m = 0; m < t.models().size(); ++m) {
    const auto& x = t.models()[m];
    const auto& y = back.models()[m];
    CHECK(x.bucket().lo == y.bucket().lo);
    CHECK(x.bucket().hi == y.bucket().hi);
    CHECK(x.epsilon() == y.epsilon());
    CHECK(x.c() == y.c());
    CHECK(x.a() == y.a());
    CHECK(x.b() == y.b());
    CHECK(x.is_point_mass() == y.is_point_mass());
  }
  CHECK(std::isinf(back.models().back().bucket().hi));

  std::istringstream bad("# comment\n0,50,0.1,0.3,-2,6.35\n50,100,0.1\n");
  try {
    read_bucket_table(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  std::istringstream empty("# nothing\n\n");
  CHECK_THROWS_AS(read_bucket_table(empty), ParseError);
  std::istringstream gap("0,50,0.1,0.3,-2,6.35\n60,100,0.1,0.3,-2,6.35\n");
  CHECK_THROWS_AS(read_bucket_table(gap), Error);
  CHECK_THROWS_AS(read_bucket_table(std::string("/nonexistent/table.csv")), IoError);
}
