#include "tdopt/nls.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "tdopt/errors.hpp"
#include "tdopt/util.hpp"

namespace tdopt {

namespace {

struct Problem {
  std::span<const double> y, x, w;
  const Model& model;
};

std::optional<double> try_sse(const Problem& p, std::span<const double> theta) {
  double sse = 0.0;
  try {
    for (std::size_t k = 0; k < p.x.size(); ++k) {
      if (p.w[k] == 0.0) continue;
      double r = p.y[k] - p.model.eval(p.x[k], theta);
      sse += p.w[k] * r * r;
    }
  } catch (const numeric_domain_error&) {
    return std::nullopt;
  }
  if (!std::isfinite(sse)) return std::nullopt;
  return sse;
}

// residuals r_k = y_k - eta(x_k) and Jacobian rows J_k = d eta/d theta(x_k);
// zero-weight rows stay zero without evaluating the model there
bool try_jacobian(const Problem& p, std::span<const double> theta,
                  Eigen::VectorXd& r, Eigen::MatrixXd& J) {
  const auto d = static_cast<Eigen::Index>(p.model.dim());
  std::vector<double> g(p.model.dim());
  try {
    for (std::size_t k = 0; k < p.x.size(); ++k) {
      if (p.w[k] == 0.0) {
        r(static_cast<Eigen::Index>(k)) = 0.0;
        J.row(static_cast<Eigen::Index>(k)).setZero();
        continue;
      }
      r(static_cast<Eigen::Index>(k)) = p.y[k] - p.model.eval(p.x[k], theta);
      p.model.grad_theta(p.x[k], theta, g);
      for (Eigen::Index j = 0; j < d; ++j)
        J(static_cast<Eigen::Index>(k), j) = g[static_cast<std::size_t>(j)];
    }
  } catch (const numeric_domain_error&) {
    return false;
  }
  return r.allFinite() && J.allFinite();
}

// infinity norm of the sse gradient projected onto the feasible directions
double projected_grad_norm(const ParamSpace& space,
                           std::span<const double> theta,
                           const Eigen::VectorXd& grad, double boundary_frac) {
  double norm = 0.0;
  for (std::size_t k = 0; k < space.dim(); ++k) {
    double g = grad(static_cast<Eigen::Index>(k));
    double margin = boundary_frac * space.width(k);
    bool at_lower = theta[k] - space.lower(k) <= margin;
    bool at_upper = space.upper(k) - theta[k] <= margin;
    if (at_lower && g > 0) g = 0;
    if (at_upper && g < 0) g = 0;
    norm = std::max(norm, std::abs(g));
  }
  return norm;
}

struct StartOutcome {
  std::vector<double> theta;
  double sse = std::numeric_limits<double>::infinity();
  double grad_norm = std::numeric_limits<double>::infinity();
  bool converged = false;
};

StartOutcome run_start(const Problem& p, std::vector<double> theta,
                       const FitOptions& opts) {
  const ParamSpace& space = p.model.space();
  const auto m = static_cast<Eigen::Index>(p.x.size());
  const auto d = static_cast<Eigen::Index>(space.dim());
  space.project(theta);

  StartOutcome out;
  out.theta = theta;
  auto sse0 = try_sse(p, theta);
  if (!sse0) return out;
  out.sse = *sse0;

  Eigen::VectorXd r(m), sw(m);
  Eigen::MatrixXd J(m, d);
  for (Eigen::Index k = 0; k < m; ++k)
    sw(k) = std::sqrt(p.w[static_cast<std::size_t>(k)]);

  double lambda = opts.lambda_init;
  int stalls = 0;
  bool sse_stationary = false;
  std::vector<double> trial(theta.size());
  Eigen::MatrixXd A(m + d, d);
  Eigen::VectorXd rhs(m + d);
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    if (!try_jacobian(p, theta, r, J)) break;
    Eigen::MatrixXd WJ = sw.asDiagonal() * J;
    Eigen::VectorXd Wr = sw.cwiseProduct(r);
    Eigen::VectorXd grad = -2.0 * (WJ.transpose() * Wr);  // sse gradient
    out.grad_norm = projected_grad_norm(space, theta, grad, opts.boundary_frac);
    if (out.grad_norm <= opts.grad_tol * (1.0 + out.sse)) {
      out.converged = true;
      return out;
    }
    // Active set: a coordinate at a bound whose gradient pushes outward is
    // frozen, so steps optimize over the face instead of being truncated
    // by the projection.
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < d; ++j) {
      auto ju = static_cast<std::size_t>(j);
      double margin = opts.boundary_frac * space.width(ju);
      bool at_lower = theta[ju] - space.lower(ju) <= margin;
      bool at_upper = space.upper(ju) - theta[ju] <= margin;
      if ((at_lower && grad(j) > 0) || (at_upper && grad(j) < 0)) continue;
      free.push_back(j);
    }
    if (free.empty()) break;  // fully pinned: projected gradient is zero
    const auto f = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd WJf(m, f);
    for (Eigen::Index j = 0; j < f; ++j) WJf.col(j) = WJ.col(free[
        static_cast<std::size_t>(j)]);

    // Marquardt scaling; the damped step solves the stacked least-squares
    // system [WJf; sqrt(lambda) S] delta = [Wr; 0] by QR, which keeps the
    // conditioning of J instead of squaring it in the normal equations.
    Eigen::VectorXd diag = WJf.colwise().squaredNorm();
    double floor = 1e-12 * std::max(1.0, diag.maxCoeff());
    Eigen::VectorXd scale = diag.cwiseMax(floor).cwiseSqrt();

    bool accepted = false;
    while (lambda <= opts.lambda_max) {
      A.topLeftCorner(m, f) = WJf;
      A.block(m, 0, f, f).setZero();
      double sl = std::sqrt(lambda);
      for (Eigen::Index j = 0; j < f; ++j) A(m + j, j) = sl * scale(j);
      rhs.head(m) = Wr;
      rhs.segment(m, f).setZero();
      Eigen::VectorXd step =
          A.topLeftCorner(m + f, f).colPivHouseholderQr().solve(rhs.head(m + f));
      if (step.allFinite()) {
        trial = theta;
        for (Eigen::Index j = 0; j < f; ++j)
          trial[static_cast<std::size_t>(free[static_cast<std::size_t>(j)])] +=
              step(j);
        space.project(trial);
        auto sse_new = try_sse(p, trial);
        if (sse_new && *sse_new < out.sse) {
          double drop = out.sse - *sse_new;
          theta = trial;
          out.theta = theta;
          stalls = drop <= opts.sse_rel_tol * (out.sse + 1e-300) ? stalls + 1
                                                                 : 0;
          out.sse = *sse_new;
          lambda = std::max(lambda * opts.lambda_decrease, 1e-300);
          accepted = true;
          break;
        }
      }
      lambda *= opts.lambda_increase;
    }
    // No damping value yields an improvement, or two successive accepted
    // steps fell below the relative sse tolerance: the iterate is
    // stationary at working precision.
    if (!accepted || stalls >= 2) {
      sse_stationary = true;
      break;
    }
  }
  // converged means stationary: small projected gradient, an active bound,
  // or sse progress exhausted below the relative tolerance
  if (try_jacobian(p, theta, r, J)) {
    Eigen::VectorXd g = -2.0 * (J.transpose() *
                                (sw.cwiseProduct(sw).cwiseProduct(r)));
    out.grad_norm = projected_grad_norm(space, theta, g, opts.boundary_frac);
    if (out.grad_norm <= opts.grad_tol * (1.0 + out.sse) ||
        space.on_boundary(theta, opts.boundary_frac))
      out.converged = true;
  }
  if (sse_stationary) out.converged = true;
  return out;
}

// exact weighted least squares for eta(x, theta) = eta(x, 0) + J(x)' theta
std::optional<StartOutcome> try_linear_exact(const Problem& p,
                                             const FitOptions& opts) {
  const ParamSpace& space = p.model.space();
  const auto m = static_cast<Eigen::Index>(p.x.size());
  const auto d = static_cast<Eigen::Index>(space.dim());
  Eigen::MatrixXd A(m, d);
  Eigen::VectorXd b(m);
  std::vector<double> zero(space.dim(), 0.0), g(space.dim());
  try {
    for (Eigen::Index k = 0; k < m; ++k) {
      if (p.w[static_cast<std::size_t>(k)] == 0.0) {
        A.row(k).setZero();
        b(k) = 0.0;
        continue;
      }
      double x = p.x[static_cast<std::size_t>(k)];
      double sw = std::sqrt(p.w[static_cast<std::size_t>(k)]);
      p.model.grad_theta(x, zero, g);
      for (Eigen::Index j = 0; j < d; ++j)
        A(k, j) = sw * g[static_cast<std::size_t>(j)];
      b(k) = sw * (p.y[static_cast<std::size_t>(k)] - p.model.eval(x, zero));
    }
  } catch (const numeric_domain_error&) {
    return std::nullopt;
  }
  Eigen::VectorXd sol = A.colPivHouseholderQr().solve(b);
  if (!sol.allFinite()) return std::nullopt;
  std::vector<double> theta(space.dim());
  for (Eigen::Index k = 0; k < d; ++k)
    theta[static_cast<std::size_t>(k)] = sol(k);
  double slack = 1e-9;
  for (std::size_t k = 0; k < space.dim(); ++k)
    if (theta[k] < space.lower(k) - slack * std::max(1.0, space.width(k)) ||
        theta[k] > space.upper(k) + slack * std::max(1.0, space.width(k)))
      return std::nullopt;  // unconstrained optimum leaves the box
  space.project(theta);
  auto sse = try_sse(p, theta);
  if (!sse) return std::nullopt;
  StartOutcome out;
  out.theta = std::move(theta);
  out.sse = *sse;
  out.converged = true;
  Eigen::VectorXd r(m);
  Eigen::MatrixXd J(m, d);
  if (try_jacobian(p, out.theta, r, J)) {
    Eigen::VectorXd wv(m);
    for (Eigen::Index k = 0; k < m; ++k)
      wv(k) = p.w[static_cast<std::size_t>(k)];
    Eigen::VectorXd grad = -2.0 * (J.transpose() * (wv.asDiagonal() * r));
    out.grad_norm =
        projected_grad_norm(space, out.theta, grad, opts.boundary_frac);
  }
  return out;
}

// exact weighted LS over the separable coefficients with the nonlinear block
// held at nu; nullopt when the basis degenerates or the recovered parameters
// leave the box
std::optional<StartOutcome> profile_at(const Problem& p, const Separable& sep,
                                       std::span<const double> nu) {
  const ParamSpace& space = p.model.space();
  const auto m = static_cast<Eigen::Index>(p.x.size());
  const auto b = static_cast<Eigen::Index>(sep.basis_dim);
  Eigen::MatrixXd Phi(m, b);
  Eigen::VectorXd rhs(m);
  std::vector<double> f(sep.basis_dim);
  for (Eigen::Index k = 0; k < m; ++k) {
    auto ku = static_cast<std::size_t>(k);
    if (p.w[ku] == 0.0) {
      Phi.row(k).setZero();
      rhs(k) = 0.0;
      continue;
    }
    sep.basis(p.x[ku], nu, f);
    double sw = std::sqrt(p.w[ku]);
    for (Eigen::Index j = 0; j < b; ++j)
      Phi(k, j) = sw * f[static_cast<std::size_t>(j)];
    rhs(k) = sw * p.y[ku];
  }
  if (!Phi.allFinite() || !rhs.allFinite()) return std::nullopt;
  Eigen::VectorXd c = Phi.colPivHouseholderQr().solve(rhs);
  if (!c.allFinite()) return std::nullopt;
  std::vector<double> coeffs(c.data(), c.data() + b);
  std::vector<double> theta(space.dim());
  if (!sep.recover(coeffs, nu, theta)) return std::nullopt;
  if (!space.contains(theta)) return std::nullopt;
  auto sse = try_sse(p, theta);
  if (!sse) return std::nullopt;
  StartOutcome out;
  out.theta = std::move(theta);
  out.sse = *sse;
  return out;
}

// variable projection: coefficients by exact weighted LS, the single
// nonlinear parameter by a deterministic scan with golden refinement. The
// result does not depend on the supplied starts, so repeated fits of the
// same data agree exactly; run_start() then polishes to stationarity.
std::optional<StartOutcome> try_separable(const Problem& p,
                                          const FitOptions& opts) {
  const std::optional<Separable>& sep = p.model.separable();
  if (!sep) return std::nullopt;
  const ParamSpace& space = p.model.space();

  std::optional<StartOutcome> seed;
  if (sep->nonlinear.empty()) {
    seed = profile_at(p, *sep, {});
  } else if (sep->nonlinear.size() == 1) {
    double lo = space.lower(sep->nonlinear[0]);
    double hi = space.upper(sep->nonlinear[0]);
    auto sse_at = [&](double nu) {
      auto r = profile_at(p, *sep, std::span<const double>(&nu, 1));
      return r ? r->sse : std::numeric_limits<double>::infinity();
    };
    // bracket the global profile minimum on a fixed grid (log-spaced when
    // the box spans decades), then refine
    const int kn = 65;
    bool log_scale = lo > 0.0 && hi > 1e3 * lo;
    double best_sse = std::numeric_limits<double>::infinity();
    int best = -1;
    std::vector<double> nodes(kn);
    for (int i = 0; i < kn; ++i) {
      double s = static_cast<double>(i) / (kn - 1);
      nodes[static_cast<std::size_t>(i)] =
          log_scale ? lo * std::pow(hi / lo, s) : lo + s * (hi - lo);
      double v = sse_at(nodes[static_cast<std::size_t>(i)]);
      if (v < best_sse) {
        best_sse = v;
        best = i;
      }
    }
    if (best < 0) return std::nullopt;
    double bl = nodes[static_cast<std::size_t>(std::max(best - 1, 0))];
    double bh = nodes[static_cast<std::size_t>(std::min(best + 1, kn - 1))];
    double nu = util::golden_max([&](double v) { return -sse_at(v); }, bl, bh,
                                 1e-12 * std::max(std::abs(bl), std::abs(bh)),
                                 120, nullptr);
    seed = profile_at(p, *sep, std::span<const double>(&nu, 1));
  } else {
    return std::nullopt;  // multi-parameter bases go through plain LM
  }
  if (!seed) return std::nullopt;
  // run_start only ever accepts improving steps, so this cannot regress
  return run_start(p, seed->theta, opts);
}

}  // namespace

FitResult fit(std::span<const double> target, std::span<const double> points,
              std::span<const double> weights, const Model& model,
              const std::vector<std::vector<double>>& starts,
              const FitOptions& opts) {
  if (target.size() != points.size() || target.size() != weights.size())
    throw std::invalid_argument("fit(): target/points/weights length mismatch");
  if (target.empty()) throw std::invalid_argument("fit(): no observations");
  if (starts.empty()) throw std::invalid_argument("fit(): no starts given");
  for (const auto& s : starts)
    if (s.size() != model.dim())
      throw std::invalid_argument("fit(): start has wrong dimension");
  for (double w : weights)
    if (!(w >= 0.0))
      throw std::invalid_argument("fit(): weights must be nonnegative");

  Problem p{target, points, weights, model};
  FitResult res;

  if (model.linear_in_params()) {
    if (auto exact = try_linear_exact(p, opts)) {
      res.theta_hat = exact->theta;
      res.sse = exact->sse;
      res.grad_norm = exact->grad_norm;
      res.converged = true;
      res.on_boundary =
          model.space().on_boundary(res.theta_hat, opts.boundary_frac);
      res.starts_used = 0;
      return res;
    }
  }

  if (model.separable()) {
    if (auto prof = try_separable(p, opts)) {
      res.theta_hat = prof->theta;
      res.sse = prof->sse;
      res.grad_norm = prof->grad_norm;
      res.converged = prof->converged;
      res.on_boundary =
          model.space().on_boundary(res.theta_hat, opts.boundary_frac);
      res.starts_used = 0;
      return res;
    }
  }

  std::vector<StartOutcome> outcomes;
  outcomes.reserve(starts.size());
  for (const auto& s : starts) {
    outcomes.push_back(run_start(p, s, opts));
    ++res.starts_used;
    if (outcomes.back().converged && outcomes.back().sse == 0.0) break;
  }

  const StartOutcome* best = nullptr;
  for (const auto& o : outcomes)
    if (!best || o.sse < best->sse) best = &o;
  if (!best || !std::isfinite(best->sse))
    throw numeric_domain_error("fit(): model '" + model.name() +
                               "' could not be evaluated at any start");

  res.theta_hat = best->theta;
  res.sse = best->sse;
  res.grad_norm = best->grad_norm;
  res.converged = best->converged;
  res.on_boundary = model.space().on_boundary(res.theta_hat, opts.boundary_frac);

  // flag distinct minima whose sse ties the best within near_tied_rel
  const ParamSpace& space = model.space();
  for (const auto& o : outcomes) {
    if (&o == best || !std::isfinite(o.sse)) continue;
    if (o.sse - best->sse > opts.near_tied_rel * (best->sse + 1e-300)) continue;
    for (std::size_t k = 0; k < space.dim(); ++k) {
      double w = space.width(k);
      if (w > 0 &&
          std::abs(o.theta[k] - best->theta[k]) > opts.near_tied_sep_frac * w) {
        res.near_tied = true;
        break;
      }
    }
    if (res.near_tied) break;
  }
  return res;
}

std::vector<std::vector<double>> default_starts(
    const Model& model, const std::optional<std::vector<double>>& previous,
    int count, unsigned seed) {
  if (count < 1) throw std::invalid_argument("default_starts(): count >= 1");
  const ParamSpace& space = model.space();
  std::vector<std::vector<double>> out;
  if (previous) {
    std::vector<double> prev = *previous;
    if (prev.size() != space.dim())
      throw std::invalid_argument("default_starts(): previous has wrong dimension");
    space.project(prev);
    out.push_back(std::move(prev));
  }
  if (static_cast<int>(out.size()) < count) out.push_back(space.center());
  std::vector<std::uint32_t> bases = util::first_primes(space.dim());
  std::uint64_t index = 1 + static_cast<std::uint64_t>(seed % 1024) * 7;
  while (static_cast<int>(out.size()) < count) {
    std::vector<double> s(space.dim());
    for (std::size_t k = 0; k < space.dim(); ++k)
      s[k] = space.lower(k) +
             space.width(k) * util::halton(index, bases[k]);
    out.push_back(std::move(s));
    ++index;
  }
  out.resize(static_cast<std::size_t>(count));
  return out;
}

}  // namespace tdopt
