#include "tdopt/criterion.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "tdopt/errors.hpp"
#include "tdopt/util.hpp"

namespace tdopt {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

std::vector<double> grid_abscissae(Interval space, int grid_points) {
  require(grid_points >= 2, "need at least 2 grid points");
  std::vector<double> xs(static_cast<std::size_t>(grid_points));
  for (int g = 0; g < grid_points; ++g)
    xs[static_cast<std::size_t>(g)] =
        space.lower + space.width() * g / static_cast<double>(grid_points - 1);
  xs.back() = space.upper;
  return xs;
}

}  // namespace

ComparisonProblem::ComparisonProblem(
    std::vector<std::shared_ptr<const Model>> models,
    std::vector<std::vector<double>> fixed_params,
    std::vector<std::vector<double>> table, Interval space)
    : models_(std::move(models)),
      fixed_params_(std::move(fixed_params)),
      table_(std::move(table)),
      space_(space) {
  const std::size_t n = models_.size();
  require(n >= 2, "a comparison problem needs at least two models");
  for (const auto& m : models_) require(m != nullptr, "null model");
  require(fixed_params_.size() == n,
          "fixed_params must have one entry per model (empty when unused)");
  require(table_.size() == n, "comparison table must be square");
  require(space_.lower < space_.upper, "design interval must have lower < upper");
  for (std::size_t i = 0; i < n; ++i) {
    require(table_[i].size() == n, "comparison table must be square");
    for (std::size_t j = 0; j < n; ++j) {
      double p = table_[i][j];
      require(std::isfinite(p) && p >= 0.0,
              "comparison weights must be nonnegative");
      if (i == j || p == 0.0) continue;
      comparisons_.push_back({i, j, p});
    }
    bool row_active = false;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && table_[i][j] > 0.0) row_active = true;
    if (row_active) {
      require(fixed_params_[i].size() == models_[i]->dim(),
              "fixed model '" + models_[i]->name() +
                  "' needs nominal parameters of its dimension");
      require(models_[i]->space().contains(fixed_params_[i]),
              "nominal parameters of '" + models_[i]->name() +
                  "' lie outside the parameter box");
    }
  }
  require(!comparisons_.empty(), "comparison table has no active entries");
}

double ComparisonProblem::fixed_value(const Comparison& c, double x) const {
  return models_[c.fixed]->eval(x, fixed_params_[c.fixed]);
}

ComparisonProblem expand_bayes(
    std::vector<std::shared_ptr<const Model>> models,
    const std::vector<ModelPriorSpec>& specs,
    const std::vector<std::vector<double>>& base_table, Interval space) {
  const std::size_t n = models.size();
  require(specs.size() == n, "expand_bayes: one spec per model");
  require(base_table.size() == n, "expand_bayes: table must be square");
  for (const auto& row : base_table)
    require(row.size() == n, "expand_bayes: table must be square");

  std::vector<std::vector<double>> fixed(n);
  std::vector<std::vector<double>> table = base_table;
  struct PendingAtoms {
    std::size_t row;
    const DiscretePrior* prior;
  };
  std::vector<PendingAtoms> pending;

  for (std::size_t i = 0; i < n; ++i) {
    const ModelPriorSpec& s = specs[i];
    require(!(s.fixed && s.prior),
            "model '" + models[i]->name() +
                "' has both nominal parameters and a prior");
    bool row_active = false;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && base_table[i][j] > 0.0) row_active = true;
    if (s.fixed) fixed[i] = *s.fixed;
    if (!s.prior || !row_active) continue;

    const DiscretePrior& prior = *s.prior;
    require(!prior.atoms.empty(), "prior of '" + models[i]->name() +
                                      "' has no atoms");
    double mass = 0.0;
    for (const auto& atom : prior.atoms) {
      require(atom.tau > 0.0, "prior masses must be positive");
      require(atom.lambda.size() == models[i]->dim(),
              "prior atom of '" + models[i]->name() + "' has wrong dimension");
      require(models[i]->space().contains(atom.lambda),
              "prior atom of '" + models[i]->name() +
                  "' lies outside the parameter box");
      mass += atom.tau;
    }
    require(std::abs(mass - 1.0) <= 1e-12,
            "prior masses of '" + models[i]->name() + "' must sum to 1");

    if (prior.atoms.size() == 1) {
      fixed[i] = prior.atoms.front().lambda;  // structurally local
      continue;
    }
    pending.push_back({i, &prior});
    // the averaged rows replace the original one
    for (std::size_t j = 0; j < n; ++j) table[i][j] = 0.0;
  }

  std::size_t total = n;
  for (const auto& pa : pending) total += pa.prior->atoms.size();
  for (auto& row : table) row.resize(total, 0.0);
  for (const auto& pa : pending) {
    for (const auto& atom : pa.prior->atoms) {
      models.push_back(models[pa.row]);
      fixed.push_back(atom.lambda);
      std::vector<double> row(total, 0.0);
      for (std::size_t j = 0; j < n; ++j)
        if (j != pa.row) row[j] = base_table[pa.row][j] * atom.tau;
      table.push_back(std::move(row));
    }
  }
  return ComparisonProblem(std::move(models), std::move(fixed),
                           std::move(table), space);
}

CriterionEval t_value_raw(const ComparisonProblem& p,
                          std::span<const double> points,
                          std::span<const double> weights,
                          const CriterionEval* warm,
                          const CriterionOptions& opts) {
  require(points.size() == weights.size(), "points/weights length mismatch");
  require(!points.empty(), "criterion needs at least one design point");
  double wsum = 0.0;
  double span_tol = 1e-9 * p.space().width();
  for (std::size_t k = 0; k < points.size(); ++k) {
    require(p.space().contains(points[k], span_tol),
            "design point " + util::g17(points[k]) +
                " lies outside the design interval");
    require(weights[k] >= 0.0, "design weights must be nonnegative");
    wsum += weights[k];
  }
  require(wsum > 0.0, "design weights must have positive sum");

  const auto& comps = p.comparisons();
  CriterionEval out;
  out.fits.resize(comps.size());
  std::vector<double> contributions(comps.size(), 0.0);

  util::parallel_for(comps.size(), opts.threads, [&](std::size_t c) {
    const Comparison& cmp = comps[c];
    const Model& cand = p.model(cmp.candidate);
    std::vector<double> target(points.size());
    for (std::size_t k = 0; k < points.size(); ++k)
      target[k] = p.fixed_value(cmp, points[k]);

    std::optional<std::vector<double>> prev;
    if (warm && warm->fits.size() == comps.size() &&
        warm->fits[c].theta_hat.size() == cand.dim())
      prev = warm->fits[c].theta_hat;
    int count = prev ? 1 : opts.multistart;
    auto starts = default_starts(cand, prev, count,
                                 opts.seed + static_cast<unsigned>(c));
    out.fits[c] = fit(target, points, weights, cand, starts, opts.fit);
    contributions[c] = cmp.p * out.fits[c].sse;
  });

  for (std::size_t c = 0; c < comps.size(); ++c) {
    out.value += contributions[c];
    const FitResult& f = out.fits[c];
    if (f.on_boundary || f.near_tied || !f.converged) out.degenerate.push_back(c);
  }
  return out;
}

CriterionEval t_value(const ComparisonProblem& p, const Design& d,
                      const CriterionEval* warm, const CriterionOptions& opts) {
  return t_value_raw(p, d.support(), d.weights(), warm, opts);
}

double psi(const ComparisonProblem& p, const CriterionEval& eval, double x) {
  const auto& comps = p.comparisons();
  require(eval.fits.size() == comps.size(),
          "psi(): evaluation does not match the problem");
  double sum = 0.0;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    const Comparison& cmp = comps[c];
    double diff =
        p.fixed_value(cmp, x) - p.model(cmp.candidate).eval(x, eval.fits[c].theta_hat);
    sum += cmp.p * diff * diff;
  }
  return sum;
}

std::vector<double> psi_local_maxima(const ComparisonProblem& p,
                                     const CriterionEval& eval, int grid_points,
                                     double refine_tol) {
  std::vector<double> xs = grid_abscissae(p.space(), grid_points);
  const std::size_t G = xs.size();
  std::vector<double> f(G);
  for (std::size_t g = 0; g < G; ++g) f[g] = psi(p, eval, xs[g]);

  auto objective = [&](double x) { return psi(p, eval, x); };
  std::vector<double> found;
  auto refine = [&](std::size_t lo_idx, std::size_t hi_idx, double seed_x,
                    double seed_f) {
    double bv = 0.0;
    double bx = util::golden_max(objective, xs[lo_idx], xs[hi_idx], refine_tol,
                                 200, &bv);
    found.push_back(bv >= seed_f ? bx : seed_x);
  };

  // one-sided maxima at the interval ends
  if (f[0] >= f[1]) refine(0, 1, xs[0], f[0]);
  for (std::size_t g = 1; g + 1 < G; ++g) {
    // plateaus count only at a strict edge, so constant stretches are skipped
    if (f[g] >= f[g - 1] && f[g] >= f[g + 1] &&
        (f[g] > f[g - 1] || f[g] > f[g + 1]))
      refine(g - 1, g + 1, xs[g], f[g]);
  }
  if (f[G - 1] >= f[G - 2]) refine(G - 2, G - 1, xs[G - 1], f[G - 1]);

  std::sort(found.begin(), found.end());
  std::vector<double> out;
  double dedup = std::max(10.0 * refine_tol, 1e-13 * p.space().width());
  for (double x : found) {
    if (out.empty() || x - out.back() > dedup)
      out.push_back(x);
  }
  return out;
}

double max_psi(const ComparisonProblem& p, const CriterionEval& eval,
               int grid_points, double refine_tol, double* argmax) {
  std::vector<double> xs = grid_abscissae(p.space(), grid_points);
  std::size_t best_g = 0;
  double best_f = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < xs.size(); ++g) {
    double v = psi(p, eval, xs[g]);
    if (v > best_f) {
      best_f = v;
      best_g = g;
    }
  }
  std::size_t lo = best_g > 0 ? best_g - 1 : 0;
  std::size_t hi = best_g + 1 < xs.size() ? best_g + 1 : xs.size() - 1;
  double refined_v = 0.0;
  double refined_x = util::golden_max([&](double x) { return psi(p, eval, x); },
                                      xs[lo], xs[hi], refine_tol, 200,
                                      &refined_v);
  double out_x = xs[best_g], out_v = best_f;
  if (refined_v > best_f) {
    out_x = refined_x;
    out_v = refined_v;
  }
  if (argmax) *argmax = out_x;
  return out_v;
}

double efficiency_lower_bound(const ComparisonProblem& p, const Design& d,
                              const CriterionOptions& opts) {
  CriterionEval ev = t_value(p, d, nullptr, opts);
  if (ev.value <= 0.0) return 0.0;
  double m = max_psi(p, ev, opts.grid_points,
                     opts.refine_tol_frac * p.space().width(), nullptr);
  if (m <= 0.0) return 0.0;
  return std::clamp(ev.value / m, 0.0, 1.0);
}

OptimalityReport check_optimality(const ComparisonProblem& p, const Design& d,
                                  double tol, const CriterionOptions& opts) {
  require(tol >= 0.0, "check_optimality(): tol must be >= 0");
  OptimalityReport rep;
  rep.tol = tol;
  CriterionEval ev = t_value(p, d, nullptr, opts);
  rep.t_value = ev.value;
  rep.max_psi = max_psi(p, ev, opts.grid_points,
                        opts.refine_tol_frac * p.space().width(), nullptr);
  rep.gap = rep.max_psi - rep.t_value;
  rep.support_psi.reserve(d.size());
  for (std::size_t k = 0; k < d.size(); ++k)
    rep.support_psi.push_back(psi(p, ev, d.x(k)));
  if (ev.value <= 0.0) {
    rep.zero_criterion = true;
    rep.pass = false;
    return rep;
  }
  bool ok = rep.max_psi <= (1.0 + tol) * rep.t_value;
  for (std::size_t k = 0; k < d.size() && ok; ++k) {
    if (d.weight(k) <= 0.0) continue;  // equality binds on carried mass only
    if (std::abs(rep.support_psi[k] - rep.t_value) > tol * rep.t_value)
      ok = false;
  }
  rep.pass = ok;
  return rep;
}

double directional_derivative(const ComparisonProblem& p, const Design& xi,
                              const Design& zeta, const CriterionOptions& opts) {
  CriterionEval ev = t_value(p, xi, nullptr, opts);
  double toward = 0.0;
  for (std::size_t k = 0; k < zeta.size(); ++k)
    toward += zeta.weight(k) * psi(p, ev, zeta.x(k));
  return toward - ev.value;
}

void write_psi_curve_csv(std::ostream& os, const ComparisonProblem& p,
                         const CriterionEval& eval, int grid_points) {
  os << "# t_value = " << util::g17(eval.value) << '\n';
  os << "x,psi\n";
  for (double x : grid_abscissae(p.space(), grid_points))
    os << util::g17(x) << ',' << util::g17(psi(p, eval, x)) << '\n';
}

}  // namespace tdopt
