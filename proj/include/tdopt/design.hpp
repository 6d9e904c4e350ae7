#pragma once

#include <iosfwd>
#include <span>
#include <vector>

namespace tdopt {

//! Closed design interval [lower, upper], lower < upper.
struct Interval {
  double lower = 0.0;
  double upper = 1.0;
  double width() const { return upper - lower; }
  bool contains(double x, double tol = 0.0) const {
    return x >= lower - tol && x <= upper + tol;
  }
};

//! Discrete probability measure on the design space: strictly increasing
//! support, nonnegative weights summing to 1 (within 1e-12). Construction
//! sorts the input by support point and validates the invariants.
class Design {
public:
  Design(std::vector<double> support, std::vector<double> weights);

  static Design point(double x);
  static Design uniform(std::vector<double> support);
  //! n equispaced points spanning the interval, uniform weights. n >= 2.
  static Design grid(Interval space, int n);

  std::size_t size() const { return x_.size(); }
  double x(std::size_t k) const { return x_[k]; }
  double weight(std::size_t k) const { return w_[k]; }
  std::span<const double> support() const { return x_; }
  std::span<const double> weights() const { return w_; }

  bool operator==(const Design& other) const {
    return x_ == other.x_ && w_ == other.w_;
  }

  //! Merges support clusters left to right: a point joins the current
  //! cluster while it lies within merge_tol of the cluster's running
  //! weighted mean; each cluster collapses to that mean with the summed
  //! weight. Zero-mass clusters collapse to their plain mean.
  Design canonicalize(double merge_tol) const;

  //! Drops points with weight < threshold and renormalizes. Throws
  //! degenerate_design_error when nothing would survive.
  Design prune(double threshold) const;

  //! Convex combination (1-alpha)*xi + alpha*zeta on the union support,
  //! exact duplicates merged. alpha in [0, 1]; the endpoints return the
  //! respective operand unchanged.
  static Design mix(const Design& xi, const Design& zeta, double alpha);

  //! Apportions n runs to the support, minimizing max_k |n_k/n - w_k|
  //! subject to n_k >= 1 and sum n_k = n. Requires n >= size().
  std::vector<int> round_to_runs(int n) const;

  //! CSV with header "x,weight", 17-significant-digit values.
  void write_csv(std::ostream& os) const;
  //! Parses the write_csv format; '#' comments, blank lines and an optional
  //! header row are tolerated. Validates the Design invariants.
  static Design read_csv(std::istream& is);

private:
  std::vector<double> x_, w_;
};

//! Builds a Design from raw, possibly unsorted/duplicated points by merging
//! with the canonicalize rule first. Used when assembling support unions.
Design merged_design(std::vector<double> points, std::vector<double> weights,
                     double merge_tol);

}  // namespace tdopt
