#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tdopt/criterion.hpp"
#include "tdopt/weights.hpp"

namespace tdopt {

enum class Step2Method { Qp, Gradient };

//! Machine-epsilon^(1/4), the default weight-pruning threshold (~1.218e-4).
double default_prune_threshold();

struct SolveOptions {
  int grid_points = 1001;
  //! Certify and stop once the efficiency bound reaches 1 - eff_tol.
  double eff_tol = 1e-4;
  int max_outer = 50;
  Step2Method step2_method = Step2Method::Qp;
  //! QP rounds per outer iteration.
  int step2_rounds = 5;
  //! Exchange-method budget and Psi-spread tolerance (relative to T).
  int step2_grad_iters = 400;
  double step2_grad_tol = 1e-5;
  double prune_threshold = default_prune_threshold();
  //! Support-merge tolerance; negative means 1e-6 * interval width.
  double merge_tol = -1.0;
  //! Carriers closer than this fraction of the interval width are candidates
  //! for condensation into a single support point; 0 disables.
  double condense_frac = 0.02;
  int multistart = 5;
  unsigned seed = 1;
  int threads = 1;
  FitOptions fit;
  double refine_tol_frac = 1e-8;
};

struct TraceRow {
  int iter = 0;
  int support_size = 0;
  double t_value = 0.0;
  double max_psi = 0.0;
  double efficiency = 0.0;
  //! max - min of Psi over the support (Step-2 stationarity witness).
  double psi_spread = 0.0;
  //! Wall time spent on this iteration.
  double seconds = 0.0;
};

struct SolveReport {
  Design design;
  double value = 0.0;
  double efficiency = 0.0;
  //! Number of completed refinement passes (row 0 describes the start).
  int iterations = 0;
  bool converged = false;
  std::vector<TraceRow> trace;
  std::vector<std::string> warnings;
};

//! Support-expansion solver: per iteration (1) add every local maximizer of
//! Psi (the interval ends always included as candidates) to the support,
//! (2) re-optimize the weights on the enlarged support, then drop points
//! below the pruning threshold. A candidate iterate replaces the incumbent
//! only when its criterion value does not decrease, so the reported T trace
//! is exactly nondecreasing. Throws invalid_start_error when T(start) = 0.
SolveReport solve(const ComparisonProblem& p, const Design& start,
                  const SolveOptions& opts = {});

//! Classical exchange baseline: mix a point mass at the Psi maximizer into
//! the design with step alpha(s) (default 1/(s+1) when `alpha` is empty),
//! merging coincident points. Same report shape; the T trace is not
//! guaranteed monotone here.
SolveReport solve_af(const ComparisonProblem& p, const Design& start,
                     const std::function<double(int)>& alpha = {},
                     const SolveOptions& opts = {});

//! CSV with header "iter,support_size,t_value,max_psi,efficiency,seconds".
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace);

}  // namespace tdopt
