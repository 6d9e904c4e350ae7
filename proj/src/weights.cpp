#include "tdopt/weights.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tdopt/util.hpp"

namespace tdopt {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

std::vector<double> normalized_simplex(std::span<const double> w) {
  std::vector<double> out(w.begin(), w.end());
  double sum = 0.0;
  for (double v : out) {
    require(v >= 0.0, "weights must be nonnegative");
    sum += v;
  }
  require(sum > 0.0, "weights must have positive sum");
  for (double& v : out) v /= sum;
  return out;
}

}  // namespace

QPData build_qp(const ComparisonProblem& p, std::span<const double> support,
                std::span<const double> omega_bar, const CriterionEval& eval) {
  const auto n = static_cast<Eigen::Index>(support.size());
  require(support.size() == omega_bar.size(), "support/weights length mismatch");
  require(eval.fits.size() == p.comparisons().size(),
          "build_qp(): evaluation does not match the problem");
  QPData qp;
  qp.Q = Eigen::MatrixXd::Zero(n, n);
  qp.b = Eigen::VectorXd::Zero(n);

  for (std::size_t c = 0; c < p.comparisons().size(); ++c) {
    const Comparison& cmp = p.comparisons()[c];
    const Model& cand = p.model(cmp.candidate);
    const std::vector<double>& theta = eval.fits[c].theta_hat;
    const auto d = static_cast<Eigen::Index>(cand.dim());

    Eigen::MatrixXd J(n, d);
    Eigen::VectorXd r(n);
    std::vector<double> g(cand.dim());
    for (Eigen::Index k = 0; k < n; ++k) {
      double x = support[static_cast<std::size_t>(k)];
      r(k) = p.fixed_value(cmp, x) - cand.eval(x, theta);
      cand.grad_theta(x, theta, g);
      for (Eigen::Index j = 0; j < d; ++j)
        J(k, j) = g[static_cast<std::size_t>(j)];
    }
    qp.b += cmp.p * r.cwiseProduct(r);

    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index k = 0; k < n; ++k)
      M += omega_bar[static_cast<std::size_t>(k)] * J.row(k).transpose() *
           J.row(k);
    double tr = M.trace();
    if (!(tr > 0.0)) continue;  // candidate gradient vanishes on the support
    M.diagonal().array() += 1e-10 * tr / static_cast<double>(d);

    Eigen::MatrixXd R = r.asDiagonal() * J;  // n x d
    Eigen::MatrixXd MinvRt = M.ldlt().solve(R.transpose());
    qp.Q += cmp.p * (R * MinvRt);
  }
  qp.Q = 0.5 * (qp.Q + qp.Q.transpose()).eval();
  return qp;
}

std::vector<double> solve_simplex_qp(const QPData& qp) {
  const Eigen::Index n = qp.b.size();
  require(qp.Q.rows() == n && qp.Q.cols() == n, "QP dimensions disagree");
  if (n == 1) return {1.0};

  // minimize f(w) = w'Qw - b'w on the simplex; Q is PSD
  const double scale =
      std::max({1.0, qp.Q.cwiseAbs().maxCoeff(), qp.b.cwiseAbs().maxCoeff()});
  const double eps_dual = 1e-10 * scale;
  const double eps_grad = 1e-11 * scale;

  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  std::vector<bool> active(static_cast<std::size_t>(n), false);

  auto grad = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return 2.0 * (qp.Q * v) - qp.b;
  };

  const int max_iter = 100 + 20 * static_cast<int>(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!active[static_cast<std::size_t>(i)]) free.push_back(i);
    const auto m = static_cast<Eigen::Index>(free.size());

    Eigen::VectorXd direction = Eigen::VectorXd::Zero(n);
    bool at_face_minimum = true;

    if (m > 1) {
      Eigen::MatrixXd Qff(m, m);
      Eigen::VectorXd gf(m), wf(m);
      Eigen::VectorXd g_full = grad(w);
      for (Eigen::Index a = 0; a < m; ++a) {
        gf(a) = g_full(free[static_cast<std::size_t>(a)]);
        wf(a) = w(free[static_cast<std::size_t>(a)]);
        for (Eigen::Index bcol = 0; bcol < m; ++bcol)
          Qff(a, bcol) = qp.Q(free[static_cast<std::size_t>(a)],
                              free[static_cast<std::size_t>(bcol)]);
      }
      // null-space basis of the sum constraint on the free block
      Eigen::MatrixXd ones(1, m);
      ones.setOnes();
      Eigen::MatrixXd Z = Eigen::FullPivLU<Eigen::MatrixXd>(ones).kernel();
      Eigen::MatrixXd H = Z.transpose() * Qff * Z;
      Eigen::VectorXd gz = Z.transpose() * gf;

      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
      const Eigen::VectorXd& lam = es.eigenvalues();
      const Eigen::MatrixXd& V = es.eigenvectors();
      double lam_max = std::max(lam.cwiseAbs().maxCoeff(), 1.0);
      Eigen::VectorXd gz_hat = V.transpose() * gz;
      Eigen::VectorXd y = Eigen::VectorXd::Zero(Z.cols());
      bool ray = false;
      Eigen::VectorXd ray_dir;
      for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam(i) > 1e-12 * lam_max) {
          y += (-gz_hat(i) / (2.0 * lam(i))) * V.col(i);
        } else if (std::abs(gz_hat(i)) > eps_grad) {
          // flat curvature with slope: objective decreases along this ray
          ray = true;
          ray_dir = -(gz_hat(i) > 0 ? 1.0 : -1.0) * (Z * V.col(i));
          break;
        }
      }
      if (ray) {
        at_face_minimum = false;
        for (Eigen::Index a = 0; a < m; ++a)
          direction(free[static_cast<std::size_t>(a)]) = ray_dir(a);
        // walk to the nearest bound along the ray
        double alpha = std::numeric_limits<double>::infinity();
        Eigen::Index block = -1;
        for (Eigen::Index a = 0; a < m; ++a) {
          Eigen::Index i = free[static_cast<std::size_t>(a)];
          if (direction(i) < 0) {
            double t = -w(i) / direction(i);
            if (t < alpha) {
              alpha = t;
              block = i;
            }
          }
        }
        if (block < 0) break;  // cannot happen on a bounded face
        w += alpha * direction;
        w(block) = 0.0;
        active[static_cast<std::size_t>(block)] = true;
        continue;
      }
      Eigen::VectorXd step_f = Z * y;
      double step_norm = step_f.cwiseAbs().maxCoeff();
      if (step_norm > 1e-14) {
        at_face_minimum = false;
        // blocking line search toward the face minimizer
        double alpha = 1.0;
        Eigen::Index block = -1;
        for (Eigen::Index a = 0; a < m; ++a) {
          if (step_f(a) < 0) {
            double t = -wf(a) / step_f(a);
            if (t < alpha) {
              alpha = t;
              block = free[static_cast<std::size_t>(a)];
            }
          }
        }
        for (Eigen::Index a = 0; a < m; ++a) {
          Eigen::Index i = free[static_cast<std::size_t>(a)];
          w(i) = std::max(0.0, w(i) + alpha * step_f(a));
        }
        if (block >= 0) {
          w(block) = 0.0;
          active[static_cast<std::size_t>(block)] = true;
          continue;
        }
        at_face_minimum = true;  // full step taken
      }
    }

    if (at_face_minimum) {
      // release the most violated dual among the zeroed coordinates
      Eigen::VectorXd g_full = grad(w);
      double mu = 0.0;
      int cnt = 0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (!active[static_cast<std::size_t>(i)]) {
          mu += g_full(i);
          ++cnt;
        }
      mu /= std::max(cnt, 1);
      Eigen::Index worst = -1;
      double worst_rho = -eps_dual;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!active[static_cast<std::size_t>(i)]) continue;
        double rho = g_full(i) - mu;
        if (rho < worst_rho) {
          worst_rho = rho;
          worst = i;
        }
      }
      if (worst < 0) break;  // KKT satisfied
      active[static_cast<std::size_t>(worst)] = false;
    }
  }

  std::vector<double> out(static_cast<std::size_t>(n));
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double v = std::max(0.0, w(i));
    out[static_cast<std::size_t>(i)] = v;
    sum += v;
  }
  for (double& v : out) v /= sum;
  return out;
}

WeightsResult optimize_weights_qp(const ComparisonProblem& p,
                                  std::span<const double> support,
                                  std::span<const double> omega0,
                                  int max_rounds, const CriterionOptions& opts,
                                  const CriterionEval* warm) {
  require(support.size() == omega0.size(), "support/weights length mismatch");
  require(max_rounds >= 1, "optimize_weights_qp(): max_rounds >= 1");
  WeightsResult res;
  res.weights = normalized_simplex(omega0);
  res.eval = t_value_raw(p, support, res.weights, warm, opts);

  for (int round = 0; round < max_rounds; ++round) {
    QPData qp = build_qp(p, support, res.weights, res.eval);
    std::vector<double> cand = solve_simplex_qp(qp);

    bool accepted = false;
    std::vector<double> trial = cand;
    for (int halving = 0; halving <= 10; ++halving) {
      CriterionEval ev = t_value_raw(p, support, trial, &res.eval, opts);
      if (ev.value >= res.eval.value) {
        double dist = 0.0;
        for (std::size_t k = 0; k < trial.size(); ++k)
          dist = std::max(dist, std::abs(trial[k] - res.weights[k]));
        double gain = ev.value - res.eval.value;
        res.weights = std::move(trial);
        res.eval = std::move(ev);
        accepted = true;
        ++res.rounds;
        if (dist <= 1e-12 || gain <= 1e-13 * (1.0 + res.eval.value)) {
          res.converged = true;
          return res;
        }
        break;
      }
      // damp toward the incumbent and retry
      std::vector<double> mid(trial.size());
      for (std::size_t k = 0; k < trial.size(); ++k)
        mid[k] = 0.5 * (trial[k] + res.weights[k]);
      trial = std::move(mid);
    }
    if (!accepted) {
      ++res.rounds;
      return res;  // the surrogate no longer improves the exact criterion
    }
  }
  return res;
}

WeightsResult optimize_weights_gradient(const ComparisonProblem& p,
                                        std::span<const double> support,
                                        std::span<const double> omega0,
                                        int max_iters, double tol,
                                        const CriterionOptions& opts,
                                        const CriterionEval* warm) {
  require(support.size() == omega0.size(), "support/weights length mismatch");
  require(max_iters >= 1, "optimize_weights_gradient(): max_iters >= 1");
  require(tol >= 0.0, "optimize_weights_gradient(): tol >= 0");
  const std::size_t n = support.size();
  WeightsResult res;
  res.weights = normalized_simplex(omega0);
  res.eval = t_value_raw(p, support, res.weights, warm, opts);
  if (n == 1) {
    res.converged = true;
    return res;
  }

  int stalls = 0;
  for (int iter = 0; iter < max_iters; ++iter) {
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = psi(p, res.eval, support[k]);

    std::size_t to = 0, from = n;
    for (std::size_t k = 1; k < n; ++k)
      if (v[k] > v[to]) to = k;
    for (std::size_t k = 0; k < n; ++k)
      if (res.weights[k] > 0.0 && (from == n || v[k] < v[from])) from = k;
    if (from == n) break;  // no carrier, cannot happen on a simplex

    double spread = v[to] - v[from];
    if (spread <= tol * std::max(res.eval.value, 0.0)) {
      res.converged = true;
      break;
    }
    if (from == to) {
      res.converged = true;
      break;
    }

    // line search over the mass alpha moved from `from` to `to`
    double alpha_max = res.weights[from];
    double best_alpha = 0.0, best_value = res.eval.value;
    CriterionEval best_eval = res.eval;
    auto evaluate = [&](double alpha) {
      std::vector<double> trial = res.weights;
      trial[from] -= alpha;
      trial[to] += alpha;
      if (trial[from] < 0) trial[from] = 0;
      CriterionEval ev = t_value_raw(p, support, trial, &res.eval, opts);
      if (ev.value > best_value) {
        best_value = ev.value;
        best_alpha = alpha;
        best_eval = std::move(ev);
        return best_value;
      }
      return ev.value;
    };

    int evals = 0;
    double g0 = res.eval.value;
    double g_mid = evaluate(0.5 * alpha_max);
    double g_end = evaluate(alpha_max);
    evals += 2;
    // vertex of the parabola through 0, alpha_max/2, alpha_max
    double denom = 2.0 * (g_end - 2.0 * g_mid + g0);
    if (denom < 0) {
      double vertex =
          alpha_max * (3.0 * g0 - 4.0 * g_mid + g_end) / (2.0 * denom);
      if (vertex > 0 && vertex < alpha_max) {
        evaluate(vertex);
        ++evals;
      }
    }
    util::golden_max([&](double a) { return evaluate(a); }, 0.0, alpha_max,
                     1e-10 * std::max(alpha_max, 1e-30), 30 - evals - 2,
                     nullptr);

    ++res.rounds;
    if (best_alpha > 0.0 && best_value >= res.eval.value) {
      double gain = best_value - res.eval.value;
      res.weights[from] = std::max(0.0, res.weights[from] - best_alpha);
      res.weights[to] += best_alpha;
      res.eval = std::move(best_eval);
      if (gain <= 1e-15 * (1.0 + res.eval.value)) {
        if (++stalls >= 3) break;
      } else {
        stalls = 0;
      }
    } else {
      if (++stalls >= 3) break;
    }
  }
  return res;
}

}  // namespace tdopt
