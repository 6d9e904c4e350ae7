#pragma once

#include <Eigen/Dense>
#include <span>

#include "tdopt/criterion.hpp"

namespace tdopt {

//! Concave quadratic surrogate of the criterion on a fixed support:
//! phi(w) = -w'Q w + b'w, built by linearizing every candidate model around
//! its current inner solution. Q is symmetric positive semidefinite and b is
//! entrywise nonnegative; phi(w_bar) reproduces T at the expansion point.
struct QPData {
  Eigen::MatrixXd Q;
  Eigen::VectorXd b;
};

//! Assembles the surrogate at expansion weights omega_bar with inner fits
//! `eval` (as returned by t_value_raw on the same support/weights). Rank-
//! deficient normal matrices J'WJ get a ridge of 1e-10 * trace / dim;
//! comparisons with identically zero candidate gradient contribute nothing
//! to Q.
QPData build_qp(const ComparisonProblem& p, std::span<const double> support,
                std::span<const double> omega_bar, const CriterionEval& eval);

//! Global maximizer of -w'Qw + b'w over the probability simplex, by a
//! primal active-set method (exact face solves via a bordered KKT system,
//! blocking-constraint line searches, dual-feasibility releases).
std::vector<double> solve_simplex_qp(const QPData& qp);

struct WeightsResult {
  std::vector<double> weights;
  //! Criterion evaluation at `weights` (reusable as a warm start).
  CriterionEval eval;
  int rounds = 0;
  bool converged = false;
};

//! Sequential-QP weight optimization on a fixed support: repeat {refit ->
//! build_qp -> solve_simplex_qp} up to max_rounds, accepting a candidate
//! only when the exact criterion does not decrease; a rejected candidate is
//! damped toward the incumbent (midpoint, at most 10 halvings) before the
//! round is abandoned. The returned value is monotone in the start.
WeightsResult optimize_weights_qp(const ComparisonProblem& p,
                                  std::span<const double> support,
                                  std::span<const double> omega0,
                                  int max_rounds,
                                  const CriterionOptions& opts = {},
                                  const CriterionEval* warm = nullptr);

//! Exchange-gradient weight optimization: per iteration move mass from the
//! support point with the smallest Psi (among carriers) to the one with the
//! largest, the amount chosen by a bracketed line search (quadratic-model
//! shortcut + golden section, at most 30 criterion evaluations) accepted
//! only when the criterion does not decrease. Stops when the Psi spread
//! drops below tol * T or after max_iters. Ties break to the lowest index.
WeightsResult optimize_weights_gradient(const ComparisonProblem& p,
                                        std::span<const double> support,
                                        std::span<const double> omega0,
                                        int max_iters, double tol,
                                        const CriterionOptions& opts = {},
                                        const CriterionEval* warm = nullptr);

}  // namespace tdopt
