#include "tdopt/design.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "tdopt/errors.hpp"
#include "tdopt/util.hpp"

namespace tdopt {

namespace {

struct WeightedPoints {
  std::vector<double> x, w;
};

void sort_by_support(std::vector<double>& x, std::vector<double>& w) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> xs(x.size()), ws(w.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    xs[k] = x[order[k]];
    ws[k] = w[order[k]];
  }
  x = std::move(xs);
  w = std::move(ws);
}

// left-to-right clustering against the running weighted mean; inputs sorted
WeightedPoints merge_clusters(const std::vector<double>& x,
                              const std::vector<double>& w, double merge_tol) {
  WeightedPoints out;
  std::size_t k = 0;
  while (k < x.size()) {
    double first = x[k];
    double sum_w = w[k], sum_wx = w[k] * x[k], sum_x = x[k];
    std::size_t count = 1;
    auto mean = [&]() { return sum_w > 0 ? sum_wx / sum_w : sum_x / count; };
    ++k;
    while (k < x.size() && std::abs(x[k] - mean()) <= merge_tol) {
      sum_w += w[k];
      sum_wx += w[k] * x[k];
      sum_x += x[k];
      ++count;
      ++k;
    }
    // rounding in the weighted mean must not leave the cluster hull
    out.x.push_back(std::clamp(mean(), first, x[k - 1]));
    out.w.push_back(sum_w);
  }
  return out;
}

}  // namespace

Design::Design(std::vector<double> support, std::vector<double> weights)
    : x_(std::move(support)), w_(std::move(weights)) {
  if (x_.empty()) throw std::invalid_argument("design needs at least one point");
  if (x_.size() != w_.size())
    throw std::invalid_argument("design support and weights differ in length");
  sort_by_support(x_, w_);
  double sum = 0.0;
  for (std::size_t k = 0; k < x_.size(); ++k) {
    if (!std::isfinite(x_[k]))
      throw std::invalid_argument("design support must be finite");
    if (k > 0 && x_[k] <= x_[k - 1])
      throw std::invalid_argument("design support points must be distinct");
    if (!(w_[k] >= 0.0))
      throw std::invalid_argument("design weights must be nonnegative");
    sum += w_[k];
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("design weights must sum to 1, got " + util::g17(sum));
}

Design Design::point(double x) { return Design({x}, {1.0}); }

Design Design::uniform(std::vector<double> support) {
  std::vector<double> w(support.size(),
                        1.0 / static_cast<double>(support.size()));
  return Design(std::move(support), std::move(w));
}

Design Design::grid(Interval space, int n) {
  if (n < 2) throw std::invalid_argument("grid() needs n >= 2");
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k)
    x[static_cast<std::size_t>(k)] =
        space.lower + space.width() * k / static_cast<double>(n - 1);
  x.back() = space.upper;
  return uniform(std::move(x));
}

Design Design::canonicalize(double merge_tol) const {
  if (merge_tol < 0) throw std::invalid_argument("merge_tol must be >= 0");
  WeightedPoints m = merge_clusters(x_, w_, merge_tol);
  return Design(std::move(m.x), std::move(m.w));
}

Design Design::prune(double threshold) const {
  std::vector<double> x, w;
  double sum = 0.0;
  for (std::size_t k = 0; k < x_.size(); ++k) {
    if (w_[k] >= threshold) {
      x.push_back(x_[k]);
      w.push_back(w_[k]);
      sum += w_[k];
    }
  }
  if (x.empty() || sum <= 0.0)
    throw degenerate_design_error("pruning at threshold " + util::g17(threshold) +
                                  " removed every support point");
  if (x.size() == x_.size()) return *this;  // keeps prune exactly idempotent
  for (double& v : w) v /= sum;
  return Design(std::move(x), std::move(w));
}

Design Design::mix(const Design& xi, const Design& zeta, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("mix() needs alpha in [0, 1]");
  if (alpha == 0.0) return xi;
  if (alpha == 1.0) return zeta;
  std::vector<double> x, w;
  std::size_t i = 0, j = 0;
  while (i < xi.size() || j < zeta.size()) {
    bool take_xi = j >= zeta.size() ||
                   (i < xi.size() && xi.x_[i] <= zeta.x_[j]);
    if (take_xi && j < zeta.size() && i < xi.size() && xi.x_[i] == zeta.x_[j]) {
      x.push_back(xi.x_[i]);
      w.push_back((1.0 - alpha) * xi.w_[i] + alpha * zeta.w_[j]);
      ++i;
      ++j;
    } else if (take_xi) {
      x.push_back(xi.x_[i]);
      w.push_back((1.0 - alpha) * xi.w_[i]);
      ++i;
    } else {
      x.push_back(zeta.x_[j]);
      w.push_back(alpha * zeta.w_[j]);
      ++j;
    }
  }
  return Design(std::move(x), std::move(w));
}

std::vector<int> Design::round_to_runs(int n) const {
  if (n < static_cast<int>(size()))
    throw std::invalid_argument("round_to_runs() needs at least one run per point");
  std::vector<int> runs(size());
  long total = 0;
  for (std::size_t k = 0; k < size(); ++k) {
    runs[k] = static_cast<int>(
        std::max(1.0, std::nearbyint(n * w_[k])));
    total += runs[k];
  }
  auto err_at = [&](std::size_t k, int r) {
    return std::abs(static_cast<double>(r) / n - w_[k]);
  };
  while (total > n) {
    std::size_t best = size();
    double best_err = 0.0;
    for (std::size_t k = 0; k < size(); ++k) {
      if (runs[k] <= 1) continue;
      double e = err_at(k, runs[k] - 1);
      if (best == size() || e < best_err) {
        best = k;
        best_err = e;
      }
    }
    --runs[best];
    --total;
  }
  while (total < n) {
    std::size_t best = 0;
    double best_err = err_at(0, runs[0] + 1);
    for (std::size_t k = 1; k < size(); ++k) {
      double e = err_at(k, runs[k] + 1);
      if (e < best_err) {
        best = k;
        best_err = e;
      }
    }
    ++runs[best];
    ++total;
  }
  return runs;
}

void Design::write_csv(std::ostream& os) const {
  os << "x,weight\n";
  for (std::size_t k = 0; k < size(); ++k)
    os << util::g17(x_[k]) << ',' << util::g17(w_[k]) << '\n';
}

Design Design::read_csv(std::istream& is) {
  std::vector<double> x, w;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    std::size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    std::size_t e = line.find_last_not_of(" \t\r");
    std::string body = line.substr(b, e - b + 1);
    if (x.empty() && w.empty() && body.find_first_not_of("xweight, \t") ==
                                      std::string::npos)
      continue;  // header row
    std::istringstream row(body);
    std::string ax, aw;
    if (!std::getline(row, ax, ',') || !std::getline(row, aw))
      throw std::runtime_error("design csv line " + std::to_string(lineno) +
                               ": expected 'x,weight'");
    try {
      std::size_t used = 0;
      double xv = std::stod(ax, &used);
      if (ax.find_first_not_of(" \t", used) != std::string::npos)
        throw std::invalid_argument(ax);
      double wv = std::stod(aw, &used);
      if (aw.find_first_not_of(" \t", used) != std::string::npos)
        throw std::invalid_argument(aw);
      x.push_back(xv);
      w.push_back(wv);
    } catch (const std::exception&) {
      throw std::runtime_error("design csv line " + std::to_string(lineno) +
                               ": malformed number");
    }
  }
  if (x.empty())
    throw std::runtime_error("design csv contains no data rows");
  return Design(std::move(x), std::move(w));
}

Design merged_design(std::vector<double> points, std::vector<double> weights,
                     double merge_tol) {
  if (points.size() != weights.size())
    throw std::invalid_argument("merged_design: length mismatch");
  sort_by_support(points, weights);
  WeightedPoints m = merge_clusters(points, weights, merge_tol);
  return Design(std::move(m.x), std::move(m.w));
}

}  // namespace tdopt
