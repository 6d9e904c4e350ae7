#pragma once

#include <memory>
#include <span>
#include <vector>

#include "tdopt/design.hpp"
#include "tdopt/model.hpp"
#include "tdopt/nls.hpp"

namespace tdopt {

//! One active entry of the comparison table: the fixed model (row) is
//! discriminated against the candidate model class (column) with weight p.
struct Comparison {
  std::size_t fixed = 0;
  std::size_t candidate = 0;
  double p = 0.0;
};

//! A model-discrimination problem: a list of models on a common design
//! interval, nominal parameter values for every model that appears as a
//! fixed (row) model, and a nonnegative table of comparison weights.
//! Diagonal entries are ignored; rows with positive entries must have
//! nominal parameters inside their box. Active comparisons are enumerated
//! in row-major table order.
class ComparisonProblem {
public:
  ComparisonProblem(std::vector<std::shared_ptr<const Model>> models,
                    std::vector<std::vector<double>> fixed_params,
                    std::vector<std::vector<double>> table, Interval space);

  std::size_t n_models() const { return models_.size(); }
  const Model& model(std::size_t i) const { return *models_[i]; }
  const std::shared_ptr<const Model>& model_ptr(std::size_t i) const {
    return models_[i];
  }
  //! Empty vector when model i never occurs as a fixed model.
  const std::vector<double>& fixed_params(std::size_t i) const {
    return fixed_params_[i];
  }
  const std::vector<std::vector<double>>& table() const { return table_; }
  Interval space() const { return space_; }
  const std::vector<Comparison>& comparisons() const { return comparisons_; }

  //! eta_i(x, theta_bar_i) for the fixed side of comparison c.
  double fixed_value(const Comparison& c, double x) const;

private:
  std::vector<std::shared_ptr<const Model>> models_;
  std::vector<std::vector<double>> fixed_params_;
  std::vector<std::vector<double>> table_;
  Interval space_;
  std::vector<Comparison> comparisons_;
};

//! Discrete prior on a model's parameter box: atoms with positive masses
//! summing to 1 (within 1e-12).
struct DiscretePrior {
  struct Atom {
    std::vector<double> lambda;
    double tau = 0.0;
  };
  std::vector<Atom> atoms;
};

//! Role of one model when assembling a Bayesian problem: nominal values for
//! a fixed model, a prior to be expanded, or nothing (candidate only).
struct ModelPriorSpec {
  std::optional<std::vector<double>> fixed;
  std::optional<DiscretePrior> prior;
};

//! Collapses discrete priors into an equivalent deterministic problem: each
//! prior atom of a row model becomes an extra fixed model (sharing the
//! original Model object) whose row entries are p_{i,j} * tau_k; candidate
//! columns keep referring to the original models. A single-atom prior is
//! written back as plain nominal values, leaving the problem structurally
//! local.
ComparisonProblem expand_bayes(
    std::vector<std::shared_ptr<const Model>> models,
    const std::vector<ModelPriorSpec>& specs,
    const std::vector<std::vector<double>>& base_table, Interval space);

struct CriterionOptions {
  //! Multistart count for cold inner fits (warm-started fits use 1 start).
  int multistart = 5;
  unsigned seed = 1;
  int threads = 1;
  FitOptions fit;
  //! Psi scan grid and bracket refinement width, as a fraction of the
  //! design-interval width.
  int grid_points = 1001;
  double refine_tol_frac = 1e-8;
};

//! Criterion value with the inner fit behind every active comparison.
struct CriterionEval {
  double value = 0.0;
  //! Aligned with ComparisonProblem::comparisons().
  std::vector<FitResult> fits;
  //! Indices of comparisons whose inner fit ended on the parameter box
  //! boundary, reported near-tied minima, or did not converge.
  std::vector<std::size_t> degenerate;
};

//! T(xi) = sum_c p_c * min_theta sum_k w_k (eta_fixed(x_k) -
//! eta_cand(x_k, theta))^2. Inner fits warm-start from `warm` when given.
CriterionEval t_value(const ComparisonProblem& p, const Design& d,
                      const CriterionEval* warm = nullptr,
                      const CriterionOptions& opts = {});

//! Same on raw (support, weights) arrays; no Design invariants required, so
//! zero weights and arbitrary order are fine. Weights must be nonnegative
//! with a positive sum.
CriterionEval t_value_raw(const ComparisonProblem& p,
                          std::span<const double> points,
                          std::span<const double> weights,
                          const CriterionEval* warm = nullptr,
                          const CriterionOptions& opts = {});

//! Psi(x) = sum_c p_c (eta_fixed(x) - eta_cand(x, theta_hat_c))^2 with the
//! inner solutions frozen at `eval`.
double psi(const ComparisonProblem& p, const CriterionEval& eval, double x);

//! All local maximizers of Psi detected on an equispaced grid (one-sided at
//! the interval ends), each refined by golden-section bracketing to width
//! refine_tol, deduplicated and sorted. A constant Psi yields the ends only.
std::vector<double> psi_local_maxima(const ComparisonProblem& p,
                                     const CriterionEval& eval,
                                     int grid_points, double refine_tol);

//! Global maximum of Psi over the interval (grid scan + refinement).
double max_psi(const ComparisonProblem& p, const CriterionEval& eval,
               int grid_points, double refine_tol, double* argmax = nullptr);

//! T(d) / max_x Psi(x, d), clamped to [0, 1]; 0 when T(d) = 0.
double efficiency_lower_bound(const ComparisonProblem& p, const Design& d,
                              const CriterionOptions& opts = {});

struct OptimalityReport {
  double t_value = 0.0;
  double max_psi = 0.0;
  //! max_psi - t_value.
  double gap = 0.0;
  std::vector<double> support_psi;
  double tol = 0.0;
  bool pass = false;
  //! T(d) = 0: the check is vacuous and fails with this diagnosis.
  bool zero_criterion = false;
};

//! Equivalence-theorem certificate: passes when max Psi <= (1+tol)*T and
//! Psi at every support point is within tol*T of T.
OptimalityReport check_optimality(const ComparisonProblem& p, const Design& d,
                                  double tol,
                                  const CriterionOptions& opts = {});

//! Gateaux derivative of T at xi toward zeta: integral of Psi(., xi) under
//! zeta minus T(xi), with the inner solutions frozen at xi.
double directional_derivative(const ComparisonProblem& p, const Design& xi,
                              const Design& zeta,
                              const CriterionOptions& opts = {});

//! Writes "x,psi" rows over an equispaced grid, preceded by a comment line
//! carrying T(d) as a horizontal reference.
void write_psi_curve_csv(std::ostream& os, const ComparisonProblem& p,
                         const CriterionEval& eval, int grid_points);

}  // namespace tdopt
