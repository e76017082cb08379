#pragma once

#include <cstdio>

#include <Eigen/Dense>

#include "mape/common.hpp"

namespace mape {

// Bargaining-based gradient combination. Given per-task gradients g_i, find
// positive weights alpha with (G^T G) alpha = 1/alpha (elementwise) and step
// along sum_i alpha_i g_i. The solution is invariant to rescaling any task's
// gradient: alpha_i absorbs the factor.
//
// Solver: damped fixed-point iteration to get into the basin, then Newton on
// F(alpha) = M alpha - 1/alpha with a positivity-preserving backtracking
// line search. The fixed point alone stalls on a sizeable fraction of random
// instances, so the Newton polish is what actually reaches tight residuals;
// if even that fails within budget the combiner falls back to uniform
// weights and says so in the diagnostics. With more tasks than gradient
// dimensions the Gram matrix is singular and the exact solution sits at
// infinity along its null space; iterates can still drive the residual to
// roughly 1e-7 before rounding noise floors out, but not to the tighter
// default, so pass a tolerance that matches what the caller can accept.

struct NashDiagnostics {
  Eigen::VectorXd weights;     // per kept task
  std::vector<int> kept;       // input indices that had non-zero gradients
  std::vector<int> dropped;    // zero-gradient inputs skipped this step
  double residual = 0.0;       // max |M a - 1/a| at the returned weights
  int fixed_point_iterations = 0;
  int newton_iterations = 0;
  bool fallback_uniform = false;
};

struct NashResult {
  Eigen::VectorXd update;
  NashDiagnostics diag;
};

inline double nash_residual(const Eigen::MatrixXd& m,
                            const Eigen::VectorXd& a) {
  return (m * a - a.cwiseInverse()).cwiseAbs().maxCoeff();
}

inline NashResult nash_combine(const std::vector<Eigen::VectorXd>& grads,
                               double tol = 1e-8, int max_iters = 200) {
  if (grads.empty()) throw ArgumentError("nash_combine: no gradients");
  const Eigen::Index dim = grads.front().size();
  NashResult res;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].size() != dim)
      throw ArgumentError("nash_combine: gradient dimension mismatch");
    if (grads[i].norm() > 0.0)
      res.diag.kept.push_back(static_cast<int>(i));
    else
      res.diag.dropped.push_back(static_cast<int>(i));
  }
  if (!res.diag.dropped.empty())
    log_warn("nash_combine: dropping " +
             std::to_string(res.diag.dropped.size()) +
             " zero-gradient task(s) this step");
  const auto k = static_cast<Eigen::Index>(res.diag.kept.size());
  if (k == 0) {
    res.update = Eigen::VectorXd::Zero(dim);
    return res;
  }

  Eigen::MatrixXd g(dim, k);
  for (Eigen::Index j = 0; j < k; ++j)
    g.col(j) = grads[static_cast<std::size_t>(res.diag.kept[j])];
  const Eigen::MatrixXd m = g.transpose() * g;

  Eigen::VectorXd a(k);
  for (Eigen::Index i = 0; i < k; ++i)
    a(i) = 1.0 / std::sqrt(m(i, i) * static_cast<double>(k));

  constexpr double kDamping = 0.5;
  const int fp_budget = std::min(max_iters, 50);
  int it = 0;
  for (; it < fp_budget && nash_residual(m, a) > tol; ++it) {
    const Eigen::VectorXd y = m * a;
    Eigen::VectorXd next = a;
    for (Eigen::Index i = 0; i < k; ++i)
      if (y(i) > 1e-12) next(i) = 1.0 / y(i);
    a = (1.0 - kDamping) * a + kDamping * next;
  }
  res.diag.fixed_point_iterations = it;

  for (int nt = 0; nt < max_iters && nash_residual(m, a) > tol; ++nt) {
    const Eigen::VectorXd f = m * a - a.cwiseInverse();
    Eigen::MatrixXd jac = m;
    for (Eigen::Index i = 0; i < k; ++i) jac(i, i) += 1.0 / (a(i) * a(i));
    const Eigen::VectorXd step = jac.ldlt().solve(f);
    double t = 1.0;
    while (t > 1e-12 && ((a - t * step).array() <= 0.0).any()) t *= 0.5;
    if (t <= 1e-12) break;  // cannot stay positive along this direction
    a -= t * step;
    res.diag.newton_iterations = nt + 1;
  }

  res.diag.residual = nash_residual(m, a);
  if (!(res.diag.residual <= tol) || !a.allFinite()) {
    char shown[32];
    std::snprintf(shown, sizeof(shown), "%.3e", res.diag.residual);
    log_warn(std::string("nash_combine: solver missed tolerance (residual ") +
             shown + "); using uniform weights");
    a.setConstant(1.0 / static_cast<double>(k));
    res.diag.fallback_uniform = true;
    res.diag.residual = nash_residual(m, a);
  }

  res.diag.weights = a;
  res.update = g * a;
  return res;
}

}  // namespace mape
