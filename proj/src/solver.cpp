#include "tdopt/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "tdopt/errors.hpp"
#include "tdopt/util.hpp"

namespace tdopt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

CriterionOptions criterion_options(const SolveOptions& o) {
  CriterionOptions c;
  c.multistart = o.multistart;
  c.seed = o.seed;
  c.threads = o.threads;
  c.fit = o.fit;
  c.grid_points = o.grid_points;
  c.refine_tol_frac = o.refine_tol_frac;
  return c;
}

double support_spread(const ComparisonProblem& p, const CriterionEval& ev,
                      const Design& d) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (d.weight(k) <= 0.0) continue;
    double v = psi(p, ev, d.x(k));
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi > lo ? hi - lo : 0.0;
}

TraceRow make_row(const ComparisonProblem& p, const CriterionEval& ev,
                  const Design& d, int iter, double refine_tol,
                  int grid_points, double seconds) {
  TraceRow row;
  row.iter = iter;
  row.support_size = static_cast<int>(d.size());
  row.t_value = ev.value;
  row.max_psi = max_psi(p, ev, grid_points, refine_tol, nullptr);
  row.efficiency =
      row.max_psi > 0 ? std::clamp(row.t_value / row.max_psi, 0.0, 1.0) : 0.0;
  row.psi_spread = support_spread(p, ev, d);
  row.seconds = seconds;
  return row;
}

void note_degenerate_fits(const CriterionEval& ev, int iter,
                          std::vector<std::string>& warnings) {
  if (ev.degenerate.empty()) return;
  warnings.push_back("iteration " + std::to_string(iter) + ": " +
                     std::to_string(ev.degenerate.size()) +
                     " inner fit(s) on the box boundary, near-tied or "
                     "unconverged");
}

}  // namespace

double default_prune_threshold() {
  return std::pow(std::numeric_limits<double>::epsilon(), 0.25);
}

SolveReport solve(const ComparisonProblem& p, const Design& start,
                  const SolveOptions& opts) {
  const double width = p.space().width();
  const double merge_tol = opts.merge_tol < 0 ? 1e-6 * width : opts.merge_tol;
  const double refine_tol = opts.refine_tol_frac * width;
  CriterionOptions copt = criterion_options(opts);

  SolveReport rep{Design::point(p.space().lower), 0.0, 0.0, 0, false, {}, {}};
  Clock::time_point t0 = Clock::now();

  Design incumbent = start;
  CriterionEval ev = t_value(p, incumbent, nullptr, copt);
  if (ev.value <= 0.0)
    throw invalid_start_error(
        "the starting design does not separate the models (T = 0); add "
        "support points");
  note_degenerate_fits(ev, 0, rep.warnings);
  rep.trace.push_back(make_row(p, ev, incumbent, 0, refine_tol,
                               opts.grid_points, seconds_since(t0)));

  if (rep.trace.back().efficiency >= 1.0 - opts.eff_tol) {
    rep.converged = true;
  } else {
    for (int iter = 1; iter <= opts.max_outer; ++iter) {
      t0 = Clock::now();

      // step 1: enlarge the support by the local maximizers of Psi (the
      // interval ends are always candidates; new points start at weight 0)
      std::vector<double> points(incumbent.support().begin(),
                                 incumbent.support().end());
      std::vector<double> weights(incumbent.weights().begin(),
                                  incumbent.weights().end());
      for (double x :
           psi_local_maxima(p, ev, opts.grid_points, refine_tol)) {
        points.push_back(x);
        weights.push_back(0.0);
      }
      points.push_back(p.space().lower);
      points.push_back(p.space().upper);
      weights.push_back(0.0);
      weights.push_back(0.0);
      Design enlarged = merged_design(points, weights, merge_tol);

      // step 2: weight optimization on a fixed support. The QP surrogate can
      // stall with the carriers still unbalanced (its curvature is frozen at
      // the expansion point, and the acceptance guard then rejects the whole
      // round); the exchange method ascends from any weights, so it finishes
      // the equalization in that case.
      auto optimize_on = [&](const Design& d,
                             const CriterionEval* warm) -> WeightsResult {
        if (opts.step2_method != Step2Method::Qp)
          return optimize_weights_gradient(p, d.support(), d.weights(),
                                           opts.step2_grad_iters,
                                           opts.step2_grad_tol, copt, warm);
        WeightsResult w = optimize_weights_qp(p, d.support(), d.weights(),
                                              opts.step2_rounds, copt, warm);
        double hi = -std::numeric_limits<double>::infinity();
        double lo = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < w.weights.size(); ++k) {
          double v = psi(p, w.eval, d.x(k));
          if (w.weights[k] > 0.0) lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        if (hi - lo > opts.step2_grad_tol * std::max(w.eval.value, 0.0))
          w = optimize_weights_gradient(p, d.support(), w.weights,
                                        opts.step2_grad_iters,
                                        opts.step2_grad_tol, copt, &w.eval);
        return w;
      };
      auto reweighted = [&](const Design& d, WeightsResult& w) {
        Design cand = Design(std::vector<double>(d.support().begin(),
                                                 d.support().end()),
                             w.weights)
                          .prune(opts.prune_threshold);
        CriterionEval cev = t_value(p, cand, &w.eval, copt);
        return std::make_pair(std::move(cand), std::move(cev));
      };

      WeightsResult wres = optimize_on(enlarged, &ev);
      auto [candidate, cand_ev] = reweighted(enlarged, wres);

      // Condensation: nearby carriers usually stand in for one true support
      // point, and splitting mass across them flattens the weight problem
      // enough to stop both Step-2 methods short of the optimum. Replace
      // each cluster by one point at the local Psi maximum over its hull,
      // reoptimize, and keep the condensed design when it does at least as
      // well.
      if (opts.condense_frac > 0.0 && candidate.size() >= 2) {
        const double radius = opts.condense_frac * width;
        std::vector<double> cx, cw;
        bool clustered = false;
        for (std::size_t k = 0; k < candidate.size();) {
          std::size_t j = k + 1;
          double wsum = candidate.weight(k);
          while (j < candidate.size() &&
                 candidate.x(j) - candidate.x(j - 1) <= radius) {
            wsum += candidate.weight(j);
            ++j;
          }
          if (j == k + 1) {
            cx.push_back(candidate.x(k));
          } else {
            clustered = true;
            cx.push_back(util::golden_max(
                [&](double x) { return psi(p, cand_ev, x); }, candidate.x(k),
                candidate.x(j - 1), refine_tol, 60, nullptr));
          }
          cw.push_back(wsum);
          k = j;
        }
        if (clustered) {
          Design csupp = merged_design(cx, cw, merge_tol);
          WeightsResult cwres = optimize_on(csupp, &cand_ev);
          auto [ccand, ccand_ev] = reweighted(csupp, cwres);
          if (ccand_ev.value >= cand_ev.value) {
            candidate = std::move(ccand);
            cand_ev = std::move(ccand_ev);
          }
        }
      }

      if (cand_ev.value < ev.value) {
        // keep the incumbent; repeating the pass would rebuild the same
        // candidate, so stop here
        rep.warnings.push_back(
            "iteration " + std::to_string(iter) +
            ": pruned candidate decreased the criterion; keeping the "
            "incumbent design");
        rep.trace.push_back(make_row(p, ev, incumbent, iter, refine_tol,
                                     opts.grid_points, seconds_since(t0)));
        ++rep.iterations;
        break;
      }

      bool unchanged =
          candidate == incumbent &&
          cand_ev.value - ev.value <= 1e-13 * (1.0 + ev.value);
      incumbent = std::move(candidate);
      ev = std::move(cand_ev);
      note_degenerate_fits(ev, iter, rep.warnings);
      rep.trace.push_back(make_row(p, ev, incumbent, iter, refine_tol,
                                   opts.grid_points, seconds_since(t0)));
      ++rep.iterations;

      if (rep.trace.back().efficiency >= 1.0 - opts.eff_tol) {
        rep.converged = true;
        break;
      }
      if (unchanged) {
        rep.warnings.push_back("iteration " + std::to_string(iter) +
                               ": support and weights stalled below the "
                               "efficiency target");
        break;
      }
    }
  }

  rep.design = incumbent;
  rep.value = ev.value;
  rep.efficiency = rep.trace.back().efficiency;
  return rep;
}

SolveReport solve_af(const ComparisonProblem& p, const Design& start,
                     const std::function<double(int)>& alpha,
                     const SolveOptions& opts) {
  const double width = p.space().width();
  const double merge_tol = opts.merge_tol < 0 ? 1e-6 * width : opts.merge_tol;
  const double refine_tol = opts.refine_tol_frac * width;
  CriterionOptions copt = criterion_options(opts);
  auto step = [&](int s) {
    double a = alpha ? alpha(s) : 1.0 / (s + 1);
    if (!(a >= 0.0 && a <= 1.0))
      throw std::invalid_argument("step sequence must stay inside [0, 1]");
    return a;
  };

  SolveReport rep{Design::point(p.space().lower), 0.0, 0.0, 0, false, {}, {}};
  Clock::time_point t0 = Clock::now();

  Design design = start;
  CriterionEval ev = t_value(p, design, nullptr, copt);
  if (ev.value <= 0.0)
    throw invalid_start_error(
        "the starting design does not separate the models (T = 0); add "
        "support points");
  rep.trace.push_back(make_row(p, ev, design, 0, refine_tol, opts.grid_points,
                               seconds_since(t0)));

  if (rep.trace.back().efficiency >= 1.0 - opts.eff_tol) {
    rep.converged = true;
  } else {
    for (int s = 1; s <= opts.max_outer; ++s) {
      t0 = Clock::now();
      double xstar = 0.0;
      max_psi(p, ev, opts.grid_points, refine_tol, &xstar);
      design = Design::mix(design, Design::point(xstar), step(s))
                   .canonicalize(merge_tol);
      ev = t_value(p, design, &ev, copt);
      rep.trace.push_back(make_row(p, ev, design, s, refine_tol,
                                   opts.grid_points, seconds_since(t0)));
      ++rep.iterations;
      if (rep.trace.back().efficiency >= 1.0 - opts.eff_tol) {
        rep.converged = true;
        break;
      }
    }
  }

  rep.design = design;
  rep.value = ev.value;
  rep.efficiency = rep.trace.back().efficiency;
  return rep;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
  os << "iter,support_size,t_value,max_psi,efficiency,seconds\n";
  for (const TraceRow& r : trace)
    os << r.iter << ',' << r.support_size << ',' << util::g17(r.t_value) << ','
       << util::g17(r.max_psi) << ',' << util::g17(r.efficiency) << ','
       << util::g17(r.seconds) << '\n';
}

}  // namespace tdopt
