#include <doctest.h>

#include <cmath>
#include <vector>

#include "prod/rng.hpp"
#include "prod/surrogate.hpp"
#include "prod/theorycheck.hpp"

using namespace prod;
using linalg::Vec;
using theorycheck::CheckResult;
using theorycheck::ConcentrationConfig;
using theorycheck::ConcentrationKind;

TEST_CASE("median moment bound holds for every noise shape") {
  const auto uniform = lengthdist::uniform_noise();

  // r = 1 reduces to the raw moment, loose by a factor of two
  const auto base = theorycheck::check_median_moment(uniform, 1, 100000, 1);
  CHECK(base.pass);
  CHECK(base.empirical_value <= uniform.v + 0.01);
  CHECK(base.bound_value == doctest::Approx(2.0 / 3.0));

  // medians of five concentrate below the raw moment
  const auto five = theorycheck::check_median_moment(uniform, 5, 100000, 2);
  CHECK(five.pass);
  CHECK(five.empirical_value <= uniform.v);

  const auto pareto = theorycheck::check_median_moment(lengthdist::two_sided_pareto_noise(), 16, 100000, 3);
  CHECK(pareto.pass);

  const auto student = theorycheck::check_median_moment(lengthdist::student_t_noise(), 5, 100000, 4);
  CHECK(student.pass);

  CHECK_THROWS_AS(theorycheck::check_median_moment(uniform, 1, 100, 1), ArgumentError);
}

TEST_CASE("median tail frequency stays under the Hoeffding envelope") {
  const auto uniform = lengthdist::uniform_noise();

  const auto r8 = theorycheck::check_median_tail(uniform, 0.5, 8, 100000, 5);
  CHECK(r8.pass);
  CHECK(r8.bound_value == doctest::Approx(std::exp(-1.0)));

  const auto r32 = theorycheck::check_median_tail(uniform, 0.5, 32, 100000, 6);
  CHECK(r32.pass);
  CHECK(r32.bound_value == doctest::Approx(std::exp(-4.0)).epsilon(1e-12));

  // decay direction: higher r keeps fewer medians above u
  CHECK(r32.empirical_value <= r8.empirical_value + 3.0 * 0.01);

  // u beyond the support never fires
  const auto beyond = theorycheck::check_median_tail(uniform, 1.1, 8, 10000, 7);
  CHECK(beyond.empirical_value == 0.0);
  CHECK(beyond.pass);

  // per-sample tail above 1/4 violates the precondition
  CHECK_THROWS_AS(theorycheck::check_median_tail(uniform, 0.2, 8, 10000, 8), PreconditionError);
}

TEST_CASE("potential chain on the hand-computable stream") {
  const std::vector<Vec> ones{{1.0}, {1.0}, {1.0}};
  const auto res = theorycheck::check_potential(ones, 1.0);
  CHECK(res.pass);
  CHECK(res.empirical_value == doctest::Approx(11.0 / 6.0).epsilon(1e-12));
  CHECK(res.bound_value == doctest::Approx(2.0 * std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("potential chain is trivial for zero features") {
  const std::vector<Vec> zeros(5, Vec(3, 0.0));
  const auto res = theorycheck::check_potential(zeros, 1.0);
  CHECK(res.pass);
  CHECK(res.empirical_value == 0.0);
}

TEST_CASE("potential chain holds on random feature streams") {
  rng::Stream s = rng::Stream::root(91);
  for (int rep = 0; rep < 5; ++rep) {
    const int d = 8, n = 500;
    std::vector<Vec> phis(n);
    for (auto& phi : phis) phi = surrogate::sample_feature(d, s);
    CHECK(theorycheck::check_potential(phis, 1.0).pass);
  }
  CHECK_THROWS_AS(theorycheck::check_potential({Vec{2.0}}, 1.0), PreconditionError);
}

TEST_CASE("zero coefficients never violate the linear lemma") {
  ConcentrationConfig cfg;
  cfg.n = 10;
  cfg.r = 8;
  cfg.trials = 1000;
  cfg.coeffs.assign(10, 0.0);
  cfg.noise = lengthdist::uniform_noise();
  const auto res = theorycheck::check_concentration(ConcentrationKind::Linear, cfg, 1);
  CHECK(res.violations == 0);
  CHECK(res.pass);
}

TEST_CASE("concentration lemmas hold within their failure budgets") {
  ConcentrationConfig cfg;
  cfg.n = 20;
  cfg.r = 64;
  cfg.delta = 0.2;
  cfg.trials = 1000;
  cfg.noise = lengthdist::uniform_noise();

  const auto lin = theorycheck::check_concentration(ConcentrationKind::Linear, cfg, 2);
  CHECK(lin.pass);
  CHECK(lin.bound_value == doctest::Approx(0.1 + 40.0 * std::exp(-8.0)).epsilon(1e-12));

  const auto quad = theorycheck::check_concentration(ConcentrationKind::Quadratic, cfg, 3);
  CHECK(quad.pass);
}

TEST_CASE("checks are deterministic under their seed") {
  const auto uniform = lengthdist::uniform_noise();
  const auto a = theorycheck::check_median_moment(uniform, 5, 20000, 42);
  const auto b = theorycheck::check_median_moment(uniform, 5, 20000, 42);
  CHECK(a.empirical_value == b.empirical_value);

  const auto ta = theorycheck::check_median_tail(uniform, 0.5, 8, 20000, 42);
  const auto tb = theorycheck::check_median_tail(uniform, 0.5, 8, 20000, 42);
  CHECK(ta.violations == tb.violations);

  theorycheck::ConcentrationConfig cfg;
  cfg.noise = uniform;
  const auto ca = theorycheck::check_concentration(theorycheck::ConcentrationKind::Linear, cfg, 42);
  const auto cb = theorycheck::check_concentration(theorycheck::ConcentrationKind::Linear, cfg, 42);
  CHECK(ca.violations == cb.violations);
}

TEST_CASE("vacuous budgets are flagged rather than failed") {
  ConcentrationConfig cfg;
  cfg.n = 50;
  cfg.r = 4;
  cfg.delta = 0.2;
  cfg.trials = 1000;
  cfg.noise = lengthdist::uniform_noise();
  const auto res = theorycheck::check_concentration(ConcentrationKind::Linear, cfg, 4);
  CHECK(res.pass);
  CHECK(res.tolerance_note.find("vacuous") != std::string::npos);
  CHECK(res.bound_value >= 1.0);
}
