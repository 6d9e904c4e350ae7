#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "tdopt/design.hpp"
#include "tdopt/errors.hpp"

using namespace tdopt;

namespace {

// Worst deviation of the realized proportions from the target weights; the
// quantity the rounding rule is judged by.
double minimax_err(const std::vector<int>& runs, const Design& d, int n) {
  double worst = 0.0;
  for (std::size_t k = 0; k < runs.size(); ++k)
    worst = std::max(worst,
                     std::abs(static_cast<double>(runs[k]) / n - d.weight(k)));
  return worst;
}

// Exhaustive reference: best achievable minimax deviation over every
// composition of n into size(d) positive parts.
double best_minimax(const Design& d, int n) {
  const int m = static_cast<int>(d.size());
  std::vector<int> runs(static_cast<std::size_t>(m), 1);
  double best = 1e300;
  auto rec = [&](auto&& self, int k, int left) -> void {
    if (k == m - 1) {
      runs[static_cast<std::size_t>(k)] = left;
      best = std::min(best, minimax_err(runs, d, n));
      return;
    }
    int reserve = m - 1 - k;
    for (int r = 1; r <= left - reserve; ++r) {
      runs[static_cast<std::size_t>(k)] = r;
      self(self, k + 1, left - r);
    }
  };
  rec(rec, 0, n);
  return best;
}

Design random_design(std::mt19937& rng, int max_points) {
  std::uniform_int_distribution<int> un(1, max_points);
  std::uniform_real_distribution<double> ux(-1.0, 1.0), uw(0.05, 1.0);
  int n = un(rng);
  std::vector<double> x, w;
  double sum = 0.0;
  while (static_cast<int>(x.size()) < n) {
    double cand = ux(rng);
    bool dup = false;
    for (double v : x) dup = dup || v == cand;
    if (dup) continue;
    x.push_back(cand);
    w.push_back(uw(rng));
    sum += w.back();
  }
  for (double& v : w) v /= sum;
  return Design(std::move(x), std::move(w));
}

}  // namespace

TEST_CASE("designs are sorted and validated on construction") {
  Design d({1.0, 0.0}, {0.3, 0.7});
  CHECK(d.x(0) == 0.0);
  CHECK(d.x(1) == 1.0);
  CHECK(d.weight(0) == 0.7);
  CHECK(d.weight(1) == 0.3);

  CHECK_THROWS_AS(Design({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(Design({0.0, 1.0}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(Design({0.0, 0.0}, {0.5, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(Design({0.0, 1.0}, {-0.1, 1.1}), std::invalid_argument);
  CHECK_THROWS_AS(Design({0.0, 1.0}, {0.4, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(Design({0.0, std::nan("")}, {0.5, 0.5}),
                  std::invalid_argument);
}

TEST_CASE("canonicalize merges close points at their weighted mean") {
  Design d({0.0, 1e-9, 1.0}, {0.5, 0.2, 0.3});
  Design m = d.canonicalize(1e-6);
  REQUIRE(m.size() == 2);
  CHECK(m.x(0) == doctest::Approx(2e-10 / 0.7).epsilon(1e-12));
  CHECK(std::abs(m.x(0)) < 1e-9);
  CHECK(m.weight(0) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(m.x(1) == 1.0);
  CHECK(m.weight(1) == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("canonicalize with a tolerance below the minimum gap is identity") {
  Design d({-1.0, 0.25, 1.0}, {0.2, 0.5, 0.3});
  CHECK(d.canonicalize(0.1) == d);
  CHECK(d.canonicalize(0.0) == d);
}

TEST_CASE("canonicalize cascades left to right against the cluster mean") {
  // 0 and 0.5 merge into a point at 0.25 carrying 2/3 of the mass; 1 stays
  // out because it is 0.75 away from that cluster's mean.
  Design d = Design::uniform({0.0, 0.5, 1.0});
  Design m = d.canonicalize(0.6);
  REQUIRE(m.size() == 2);
  CHECK(m.x(0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(m.weight(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(m.x(1) == 1.0);
  CHECK(m.weight(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("canonicalize is idempotent on random designs") {
  std::mt19937 rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    Design d = random_design(rng, 8);
    for (double tol : {1e-6, 0.05, 0.4}) {
      Design once = d.canonicalize(tol);
      CHECK(once.canonicalize(tol) == once);
      double sum = 0.0;
      for (std::size_t k = 0; k < once.size(); ++k) sum += once.weight(k);
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("prune removes light points and renormalizes") {
  Design d({0.0, 5.0}, {1.0 - 1e-5, 1e-5});
  Design p = d.prune(1.22e-4);
  REQUIRE(p.size() == 1);
  CHECK(p.x(0) == 0.0);
  CHECK(p.weight(0) == 1.0);

  Design keep({0.0, 1.0}, {0.5, 0.5});
  CHECK(keep.prune(0.0) == keep);
  CHECK(keep.prune(0.3) == keep);

  CHECK_THROWS_AS(Design::uniform({0.0, 1.0, 2.0}).prune(0.5),
                  degenerate_design_error);
}

TEST_CASE("prune is idempotent") {
  std::mt19937 rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    Design d = random_design(rng, 8);
    Design once = d.prune(0.08);
    CHECK(once.prune(0.08) == once);
  }
}

TEST_CASE("mix forms the convex combination of two designs") {
  Design xi({-1.0, 0.0, 1.0}, {0.25, 0.5, 0.25});
  Design zeta({0.0, 0.5}, {0.4, 0.6});

  CHECK(Design::mix(xi, zeta, 0.0) == xi);
  CHECK(Design::mix(xi, zeta, 1.0) == zeta);
  CHECK(Design::mix(xi, xi, 0.5) == xi);

  Design self = Design::mix(xi, xi, 0.37);
  REQUIRE(self.size() == xi.size());
  for (std::size_t k = 0; k < xi.size(); ++k) {
    CHECK(self.x(k) == xi.x(k));
    CHECK(self.weight(k) == doctest::Approx(xi.weight(k)).epsilon(1e-15));
  }

  Design m = Design::mix(Design::point(0.0), Design::point(1.0), 0.25);
  REQUIRE(m.size() == 2);
  CHECK(m.x(0) == 0.0);
  CHECK(m.weight(0) == 0.75);
  CHECK(m.x(1) == 1.0);
  CHECK(m.weight(1) == 0.25);

  Design both = Design::mix(xi, zeta, 0.5);
  REQUIRE(both.size() == 4);
  CHECK(both.weight(1) == doctest::Approx(0.45).epsilon(1e-15));  // shared 0
  CHECK_THROWS_AS(Design::mix(xi, zeta, 1.5), std::invalid_argument);
}

TEST_CASE("round_to_runs apportions observations to the weights") {
  Design opt({0.0, 0.5, 1.0}, {0.25, 0.5, 0.25});
  CHECK(opt.round_to_runs(4) == std::vector<int>{1, 2, 1});

  CHECK(Design::point(3.0).round_to_runs(7) == std::vector<int>{7});

  CHECK_THROWS_AS(opt.round_to_runs(2), std::invalid_argument);
}

TEST_CASE("round_to_runs matches the exhaustive minimax reference") {
  Design d({0.0, 0.441, 1.952, 10.0}, {0.209, 0.385, 0.291, 0.115});
  std::vector<int> runs = d.round_to_runs(20);
  CHECK(runs == std::vector<int>{4, 8, 6, 2});
  CHECK(minimax_err(runs, d, 20) ==
        doctest::Approx(best_minimax(d, 20)).epsilon(1e-12));

  // a second size, checked purely against the reference
  std::vector<int> runs9 = d.round_to_runs(9);
  int total = 0;
  for (int r : runs9) {
    CHECK(r >= 1);
    total += r;
  }
  CHECK(total == 9);
  CHECK(minimax_err(runs9, d, 9) <= best_minimax(d, 9) + 1e-12);
}

TEST_CASE("csv serialization round-trips designs bit-exactly") {
  std::mt19937 rng(9);
  for (int rep = 0; rep < 50; ++rep) {
    Design d = random_design(rng, 6);
    std::ostringstream os;
    d.write_csv(os);
    std::istringstream is(os.str());
    Design back = Design::read_csv(is);
    CHECK(back == d);
  }
}

TEST_CASE("csv reading skips headers and comments and flags bad rows") {
  std::istringstream ok("x,weight\n# a comment\n0,0.5\n1,0.5  # trailing\n");
  Design d = Design::read_csv(ok);
  REQUIRE(d.size() == 2);
  CHECK(d.weight(0) == 0.5);

  std::istringstream missing("x,weight\n0\n");
  CHECK_THROWS_WITH_AS(Design::read_csv(missing),
                       doctest::Contains("line 2"), std::runtime_error);

  std::istringstream junk("0,abc\n");
  CHECK_THROWS_AS(Design::read_csv(junk), std::runtime_error);

  std::istringstream empty("x,weight\n# nothing\n");
  CHECK_THROWS_AS(Design::read_csv(empty), std::runtime_error);
}

TEST_CASE("grid designs hit both interval ends exactly") {
  Design g = Design::grid(Interval{0.0, 10.0}, 11);
  REQUIRE(g.size() == 11);
  CHECK(g.x(0) == 0.0);
  CHECK(g.x(10) == 10.0);
  CHECK(g.weight(3) == doctest::Approx(1.0 / 11.0).epsilon(1e-15));
  CHECK_THROWS_AS(Design::grid(Interval{0.0, 1.0}, 1), std::invalid_argument);
}

TEST_CASE("merged_design accepts unsorted input with near-duplicates") {
  Design m = merged_design({1.0, 0.0, 1.0 + 1e-12}, {0.25, 0.5, 0.25}, 1e-6);
  REQUIRE(m.size() == 2);
  CHECK(m.x(0) == 0.0);
  CHECK(m.weight(1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(merged_design({0.0}, {0.5, 0.5}, 1e-6),
                  std::invalid_argument);
}
