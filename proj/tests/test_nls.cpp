#include <cmath>
#include <optional>
#include <vector>

#include "doctest.h"
#include "tdopt/errors.hpp"
#include "tdopt/expr.hpp"
#include "tdopt/model.hpp"
#include "tdopt/nls.hpp"

using namespace tdopt;

namespace {

double manual_sse(const Model& m, const std::vector<double>& y,
                  const std::vector<double>& x, const std::vector<double>& w,
                  const std::vector<double>& theta) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (w[k] == 0.0) continue;
    double r = y[k] - m.eval(x[k], theta);
    s += w[k] * r * r;
  }
  return s;
}

// central difference gradient of the weighted sse in theta
std::vector<double> fd_sse_grad(const Model& m, const std::vector<double>& y,
                                const std::vector<double>& x,
                                const std::vector<double>& w,
                                std::vector<double> theta) {
  std::vector<double> g(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    double h = 1e-6 * (1.0 + std::abs(theta[k]));
    double save = theta[k];
    theta[k] = save + h;
    double fp = manual_sse(m, y, x, w, theta);
    theta[k] = save - h;
    double fm = manual_sse(m, y, x, w, theta);
    theta[k] = save;
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Model parsed(const char* src, ParamSpace space, const char* name) {
  return to_model(expr::ModelExpr::parse(src), std::move(space), name);
}

}  // namespace

TEST_CASE("constant model fits to the weighted mean exactly") {
  Model c = parsed("t1", ParamSpace({-100.0}, {100.0}), "const");
  std::vector<double> y{0.0, 1.0}, x{0.0, 1.0}, w{0.5, 0.5};
  FitResult r = fit(y, x, w, c, {{7.0}});
  CHECK(r.converged);
  CHECK(r.theta_hat[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(r.sse == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(r.starts_used == 0);  // solved by weighted normal equations
  CHECK_FALSE(r.on_boundary);
}

TEST_CASE("straight-line fit reproduces the weighted projection of x^2") {
  Model line = make_builtin(
      Builtin::Linear, ParamSpace({-100.0, -100.0}, {100.0, 100.0}));
  std::vector<double> x{-1.0, 0.0, 1.0}, y{1.0, 0.0, 1.0};

  FitResult opt = fit(y, x, std::vector<double>{0.25, 0.5, 0.25}, line,
                      {{0.0, 0.0}});
  CHECK(opt.theta_hat[0] == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(std::abs(opt.theta_hat[1]) < 1e-13);
  CHECK(opt.sse == doctest::Approx(0.25).epsilon(1e-13));

  double third = 1.0 / 3.0;
  FitResult uni = fit(y, x, std::vector<double>{third, third, third}, line,
                      {{0.0, 0.0}});
  CHECK(uni.theta_hat[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-13));
  CHECK(std::abs(uni.theta_hat[1]) < 1e-13);
  CHECK(uni.sse == doctest::Approx(2.0 / 9.0).epsilon(1e-13));
}

TEST_CASE("default_starts puts the warm start first, then the center") {
  Model m = make_builtin(Builtin::Exp3, ParamSpace({-1.0, -1.0, 0.1},
                                                  {1.0, 1.0, 2.0}));
  auto one = default_starts(m, std::vector<double>{0.5, -0.5, 1.5}, 1, 0);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == std::vector<double>{0.5, -0.5, 1.5});

  auto center_only = default_starts(m, std::nullopt, 1, 0);
  REQUIRE(center_only.size() == 1);
  CHECK(center_only[0] == std::vector<double>{0.0, 0.0, 1.05});

  auto five = default_starts(m, std::vector<double>{0.5, -0.5, 1.5}, 5, 7);
  REQUIRE(five.size() == 5);
  CHECK(five[0] == std::vector<double>{0.5, -0.5, 1.5});
  CHECK(five[1] == std::vector<double>{0.0, 0.0, 1.05});
  for (const auto& s : five) CHECK(m.space().contains(s));

  CHECK(default_starts(m, std::nullopt, 5, 7) ==
        default_starts(m, std::nullopt, 5, 7));
  CHECK_THROWS_AS(default_starts(m, std::vector<double>{0.0}, 3, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(default_starts(m, std::nullopt, 0, 0),
                  std::invalid_argument);
}

TEST_CASE("fit never ends above an evaluable start") {
  Model m = parsed("t1*exp(-t2*x)",
                   ParamSpace({0.1, 0.01}, {10.0, 5.0}), "decay");
  std::vector<double> x, y, w;
  for (int k = 0; k <= 5; ++k) {
    x.push_back(k);
    y.push_back(2.0 * std::exp(-0.8 * k));
    w.push_back(1.0 / 6.0);
  }
  auto starts = default_starts(m, std::nullopt, 5, 3);
  FitResult r = fit(y, x, w, m, starts);
  CHECK(r.converged);
  CHECK(r.sse <= 1e-16);
  CHECK(r.theta_hat[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(r.theta_hat[1] == doctest::Approx(0.8).epsilon(1e-6));
  for (const auto& s : starts)
    CHECK(r.sse <= manual_sse(m, y, x, w, s) + 1e-12);
}

TEST_CASE("converged interior fits are stationary points of the sse") {
  // best three-parameter exponential approximation to a four-parameter one
  Model target = make_builtin(
      Builtin::Exp4, ParamSpace({-100.0, -100.0, 1e-4, 1e-4},
                                 {100.0, 100.0, 100.0, 100.0}));
  Model m = make_builtin(
      Builtin::Exp3, ParamSpace({-100.0, -100.0, 1e-4}, {100.0, 100.0, 100.0}));
  std::vector<double> truth{2.0, 1.0, 0.8, 1.5};
  std::vector<double> x, y, w;
  for (int k = 0; k <= 10; ++k) {
    x.push_back(k);
    y.push_back(target.eval(k, truth));
    w.push_back(1.0 / 11.0);
  }
  FitResult r = fit(y, x, w, m, default_starts(m, std::nullopt, 5, 1));
  CHECK(r.converged);
  CHECK(r.sse > 0.0);  // a three-term exponential cannot reproduce four
  CHECK_FALSE(r.on_boundary);
  std::vector<double> g = fd_sse_grad(m, y, x, w, r.theta_hat);
  for (double gk : g) CHECK(std::abs(gk) <= 1e-7 * (1.0 + r.sse));
  CHECK(r.grad_norm <= 1e-8 * (1.0 + r.sse));
}

TEST_CASE("reported sse matches a recomputation at theta_hat") {
  Model m = make_builtin(
      Builtin::Emax, ParamSpace({0.0, 0.0, 1.0}, {500.0, 500.0, 500.0}));
  std::vector<double> truth{60.0, 294.0, 25.0};
  std::vector<double> x{0.0, 50.0, 100.0, 250.0, 500.0};
  std::vector<double> y, w(x.size(), 1.0 / 5.0);
  for (double xi : x) y.push_back(m.eval(xi, truth) + 0.1 * std::sin(xi));
  FitResult r = fit(y, x, w, m, default_starts(m, std::nullopt, 3, 0));
  double again = manual_sse(m, y, x, w, r.theta_hat);
  CHECK(r.sse == doctest::Approx(again).epsilon(1e-10));
}

TEST_CASE("refitting from the previous solution does not move it") {
  std::vector<double> x{0.0, 100.0, 200.0, 300.0, 400.0, 500.0};
  std::vector<double> w(x.size(), 1.0 / 6.0);

  SUBCASE("separable model") {
    Model m = make_builtin(
        Builtin::Emax, ParamSpace({0.0, 0.0, 1.0}, {500.0, 500.0, 500.0}));
    std::vector<double> truth{60.0, 294.0, 25.0};
    std::vector<double> y;
    for (double xi : x) y.push_back(m.eval(xi, truth) + 1.0);
    FitResult first = fit(y, x, w, m, default_starts(m, std::nullopt, 3, 0));
    FitResult again = fit(y, x, w, m, {first.theta_hat});
    CHECK(again.theta_hat == first.theta_hat);
    CHECK(again.sse == first.sse);
  }

  SUBCASE("plain damped Gauss-Newton model") {
    Model m = parsed("t1*exp(-t2*x)+t2*x",
                     ParamSpace({0.1, 1e-3}, {10.0, 1.0}), "mixed");
    std::vector<double> y;
    for (double xi : x) y.push_back(3.0 * std::exp(-0.01 * xi) + 0.02 * xi);
    FitResult first = fit(y, x, w, m, default_starts(m, std::nullopt, 5, 2));
    FitResult again = fit(y, x, w, m, {first.theta_hat});
    CHECK(again.sse <= first.sse);
    REQUIRE(again.theta_hat.size() == first.theta_hat.size());
    for (std::size_t k = 0; k < first.theta_hat.size(); ++k)
      CHECK(again.theta_hat[k] ==
            doctest::Approx(first.theta_hat[k]).epsilon(1e-12));
  }
}

TEST_CASE("the iteration budget is honored") {
  Model m = parsed("t1*exp(-t2*x)",
                   ParamSpace({0.1, 0.01}, {100.0, 5.0}), "decay");
  std::vector<double> x, y, w;
  for (int k = 0; k <= 5; ++k) {
    x.push_back(k);
    y.push_back(2.0 * std::exp(-0.8 * k));
    w.push_back(1.0 / 6.0);
  }
  FitOptions opts;
  opts.max_iters = 1;
  FitResult r = fit(y, x, w, m, {{99.0, 4.9}}, opts);
  CHECK(r.starts_used == 1);
  CHECK_FALSE(r.converged);
}

TEST_CASE("a model with no evaluable start raises a numeric-domain error") {
  Model m = parsed("log(x - t1)", ParamSpace({2.0}, {3.0}), "shifted-log");
  std::vector<double> x{0.0, 1.0}, y{0.0, 0.0}, w{0.5, 0.5};
  CHECK_THROWS_AS(fit(y, x, w, m, {{2.5}}), numeric_domain_error);
}

TEST_CASE("zero-weight observations are never evaluated") {
  // the model is undefined at x=0, but that row carries no weight
  Model m = parsed("log(x - t1)", ParamSpace({0.25}, {0.75}), "shifted-log");
  std::vector<double> x{0.0, 2.0, 3.0};
  std::vector<double> y{123.0, std::log(1.5), std::log(2.5)};
  std::vector<double> w{0.0, 0.5, 0.5};
  FitResult r = fit(y, x, w, m, default_starts(m, std::nullopt, 3, 0));
  CHECK(r.converged);
  CHECK(r.theta_hat[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(r.sse <= 1e-14);
}

TEST_CASE("fit validates its inputs") {
  Model m = parsed("t1", ParamSpace({-1.0}, {1.0}), "const");
  std::vector<double> y{0.0}, x{0.0}, w{1.0};
  CHECK_THROWS_AS(fit(y, x, std::vector<double>{0.5, 0.5}, m, {{0.0}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(fit({}, {}, {}, m, {{0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(fit(y, x, w, m, {}), std::invalid_argument);
  CHECK_THROWS_AS(fit(y, x, w, m, {{0.0, 0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(fit(y, x, std::vector<double>{-0.5}, m, {{0.0}}),
                  std::invalid_argument);
}
