#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "tdopt/errors.hpp"
#include "tdopt/model.hpp"

using namespace tdopt;

namespace {

bool rel_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

Model builtin_with_box(Builtin which, std::vector<double> lo,
                       std::vector<double> hi) {
  return make_builtin(which, ParamSpace(std::move(lo), std::move(hi)));
}

}  // namespace

TEST_CASE("built-in evaluators reproduce hand values") {
  Model linear = builtin_with_box(Builtin::Linear, {-100, -100}, {100, 100});
  double thl[] = {60.0, 0.56};
  CHECK(linear.eval(100.0, thl) == doctest::Approx(116.0).epsilon(1e-14));

  Model emax = builtin_with_box(Builtin::Emax, {-600, -600, 1}, {600, 600, 600});
  double the[] = {60.0, 294.0, 25.0};
  CHECK(emax.eval(0.0, the) == 60.0);

  Model exp3 = builtin_with_box(Builtin::Exp3, {-10, -10, 0.01}, {10, 10, 10});
  double thx[] = {2.0, 1.0, 0.8};
  CHECK(exp3.eval(0.0, thx) == 1.0);
}

TEST_CASE("built-in gradients reproduce hand values") {
  Model linear = builtin_with_box(Builtin::Linear, {-100, -100}, {100, 100});
  double th0[] = {0.0, 0.0};
  auto gl = linear.grad_theta(3.0, th0);
  CHECK(gl == std::vector<double>{1.0, 3.0});

  Model emax = builtin_with_box(Builtin::Emax, {-600, -600, 1}, {600, 600, 600});
  double the[] = {60.0, 294.0, 25.0};
  CHECK(emax.grad_theta(25.0, the)[1] == 0.5);

  Model exp3 = builtin_with_box(Builtin::Exp3, {-10, -10, 0.01}, {10, 10, 10});
  double thx[] = {2.0, 1.0, 0.5};
  auto gx = exp3.grad_theta(1.0, thx);
  double e = std::exp(-0.5);
  CHECK(gx[0] == 1.0);
  CHECK(gx[1] == doctest::Approx(-e).epsilon(1e-14));
  CHECK(gx[2] == doctest::Approx(e).epsilon(1e-14));
}

TEST_CASE("the sigmoid family divides by the scaled logistic term") {
  Model sig = builtin_with_box(Builtin::SigmoidEmax, {-600, -600, 0, 0.1},
                               {600, 600, 600, 600});
  double th[] = {49.62, 290.51, 150.0, 45.51};
  // at x = t3 the logistic term is exactly 1/2 regardless of t4
  CHECK(sig.eval(150.0, th) ==
        doctest::Approx(49.62 + 290.51 / 2.0).epsilon(1e-14));
  // far below the inflection the response decays toward t1
  CHECK(sig.eval(-1e4, th) == doctest::Approx(49.62).epsilon(1e-6));
}

TEST_CASE("every built-in gradient matches central finite differences") {
  struct Sample {
    Builtin which;
    std::vector<double> lo, hi;
  };
  const Sample samples[] = {
      {Builtin::Linear, {-5, -5}, {5, 5}},
      {Builtin::Quadratic, {-5, -5, -5}, {5, 5, 5}},
      {Builtin::Emax, {-5, -5, 0.5}, {5, 5, 20}},
      {Builtin::SigmoidEmax, {-5, -5, 0, 0.3}, {5, 5, 10, 5}},
      {Builtin::Exp3, {-5, -5, 0.05}, {5, 5, 2}},
      {Builtin::Exp4, {-5, -5, 0.05, 0.5}, {5, 5, 2, 2}},
  };
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> uu(0.0, 1.0);
  for (const Sample& s : samples) {
    Model m = builtin_with_box(s.which, s.lo, s.hi);
    const std::size_t d = m.dim();
    for (int rep = 0; rep < 100; ++rep) {
      double x = 0.1 + 9.8 * uu(rng);
      std::vector<double> th(d);
      for (std::size_t k = 0; k < d; ++k)
        th[k] = s.lo[k] + (s.hi[k] - s.lo[k]) * (0.05 + 0.9 * uu(rng));
      auto grad = m.grad_theta(x, th);
      for (std::size_t k = 0; k < d; ++k) {
        double h = 1e-6 * (1.0 + std::abs(th[k]));
        std::vector<double> tp = th, tm = th;
        tp[k] += h;
        tm[k] -= h;
        double fd = (m.eval(x, tp) - m.eval(x, tm)) / (2.0 * h);
        CHECK(rel_close(grad[k], fd, 1e-5));
      }
    }
  }
}

TEST_CASE("evaluation is deterministic") {
  Model m = builtin_with_box(Builtin::Exp4, {-5, -5, 0.05, 0.5}, {5, 5, 2, 2});
  double th[] = {1.3, 0.7, 0.9, 1.4};
  double first = m.eval(3.7, th);
  for (int i = 0; i < 10; ++i) CHECK(m.eval(3.7, th) == first);
}

TEST_CASE("dimension mismatches and non-finite values are rejected") {
  Model linear = builtin_with_box(Builtin::Linear, {-1, -1}, {1, 1});
  double one[] = {0.5};
  CHECK_THROWS_AS(linear.eval(0.0, std::span<const double>(one, 1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(linear.grad_theta(0.0, std::span<const double>(one, 1)),
                  std::invalid_argument);

  Model exp3 = builtin_with_box(Builtin::Exp3, {-1e6, -1e6, -1e6}, {1e6, 1e6, 1e6});
  double blow[] = {0.0, 1.0, -1000.0};
  try {
    exp3.eval(10.0, blow);
    FAIL("expected a numeric-domain error");
  } catch (const numeric_domain_error& err) {
    // the message names the offending model
    CHECK(std::string(err.what()).find("exp3") != std::string::npos);
  }
}

TEST_CASE("parameter boxes validate their bounds") {
  CHECK_THROWS_AS(ParamSpace({0.0, 1.0}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(ParamSpace({1.0}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(ParamSpace({2.0}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(ParamSpace({}, {}), std::invalid_argument);

  ParamSpace box({0.0, -2.0}, {1.0, 2.0});
  CHECK(box.dim() == 2);
  CHECK(box.center() == std::vector<double>{0.5, 0.0});
  double inside[] = {0.5, 0.0};
  double outside[] = {1.5, 0.0};
  CHECK(box.contains(inside));
  CHECK_FALSE(box.contains(outside));
  double clip[] = {1.5, -3.0};
  box.project(clip);
  CHECK(clip[0] == 1.0);
  CHECK(clip[1] == -2.0);
  CHECK(box.on_boundary(clip));
  CHECK_FALSE(box.on_boundary(inside));
}

TEST_CASE("centered boxes widen by a multiple of each coordinate") {
  ParamSpace box = ParamSpace::centered({2.0, -1.0}, 10.0);
  CHECK(box.lower(0) == -18.0);
  CHECK(box.upper(0) == 22.0);
  CHECK(box.lower(1) == -11.0);
  CHECK(box.upper(1) == 9.0);
  CHECK_THROWS_AS(ParamSpace::centered({0.0}, 10.0), std::invalid_argument);
}

TEST_CASE("builtin names round-trip") {
  for (Builtin b : {Builtin::Linear, Builtin::Quadratic, Builtin::Emax,
                    Builtin::SigmoidEmax, Builtin::Exp3, Builtin::Exp4}) {
    auto back = builtin_from_name(builtin_name(b));
    REQUIRE(back.has_value());
    CHECK(*back == b);
  }
  CHECK_FALSE(builtin_from_name("cubic").has_value());
}
