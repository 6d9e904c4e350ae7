#pragma once

#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "tdopt/model.hpp"

namespace tdopt {

struct FitOptions {
  int max_iters = 200;
  //! Stop when the accepted relative sse decrease falls below this.
  double sse_rel_tol = 1e-12;
  //! Stop when the projected sse gradient infinity norm falls below
  //! grad_tol * (1 + sse). Projection zeroes components that point out of
  //! the box at an active bound, so boundary minima register as stationary.
  double grad_tol = 1e-10;
  //! Levenberg ridge schedule for the damped Gauss-Newton steps.
  double lambda_init = 1e-3;
  double lambda_decrease = 0.3;
  double lambda_increase = 10.0;
  double lambda_max = 1e14;
  //! A coordinate within boundary_frac * box width of a bound counts as on
  //! the boundary.
  double boundary_frac = 1e-9;
  //! Two multistart minima within near_tied_rel relative sse but separated
  //! by more than near_tied_sep_frac of the box width flag a near tie.
  double near_tied_rel = 1e-6;
  double near_tied_sep_frac = 1e-3;
};

struct FitResult {
  std::vector<double> theta_hat;
  double sse = std::numeric_limits<double>::infinity();
  //! Stationary at a tolerance: small projected gradient, an active bound,
  //! or sse progress exhausted below the relative change tolerance.
  bool converged = false;
  //! Infinity norm of the projected sse gradient at theta_hat.
  double grad_norm = std::numeric_limits<double>::infinity();
  bool on_boundary = false;
  int starts_used = 0;
  //! Distinct multistart minima with near-identical sse were found.
  bool near_tied = false;
};

//! Weighted least squares min_theta sum_k weights[k]*(target[k] -
//! eta(points[k], theta))^2 over the model's parameter box. Linear-in-
//! parameters models are solved exactly by weighted normal equations (with
//! an iterative fallback when the solution leaves the box); everything else
//! runs damped Gauss-Newton from every start, keeping the best minimum.
//! Deterministic: identical inputs give identical results.
FitResult fit(std::span<const double> target, std::span<const double> points,
              std::span<const double> weights, const Model& model,
              const std::vector<std::vector<double>>& starts,
              const FitOptions& opts = {});

//! Start list: `previous` first when given (warm start), then the box
//! center, then deterministic Halton points in the box until `count` entries
//! exist; truncated to `count`.
std::vector<std::vector<double>> default_starts(
    const Model& model, const std::optional<std::vector<double>>& previous,
    int count, unsigned seed);

}  // namespace tdopt
