#include "poe/newton.hpp"

#include <cmath>
#include <limits>

#include "poe/error.hpp"

namespace poe {

NewtonResult newton_maximize(const NewtonObjective& obj, Eigen::VectorXd x0,
                             const NewtonOptions& opts) {
  if (!obj.eval || !obj.value) throw ConfigError("newton: objective callbacks missing");
  if (!(opts.backtrack > 0.0 && opts.backtrack < 1.0) || !(opts.armijo > 0.0 && opts.armijo < 1.0))
    throw ConfigError("newton: backtrack and armijo constants must lie in (0, 1)");

  NewtonResult res;
  res.x = std::move(x0);
  const auto n = res.x.size();
  Eigen::VectorXd g(n);
  Eigen::MatrixXd H(n, n);
  for (std::size_t it = 0;; ++it) {
    res.value = obj.eval(res.x, g, H);
    res.grad_norm = n > 0 ? g.cwiseAbs().maxCoeff() : 0.0;
    if (!std::isfinite(res.value)) throw NumericalSupportError("newton: objective not finite");
    if (n == 0) {
      res.converged = true;
      break;
    }

    const Eigen::VectorXd absdiag = H.diagonal().cwiseAbs().cwiseMax(
        std::numeric_limits<double>::min());
    const Eigen::VectorXd s = absdiag.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd Hs = -(s.asDiagonal() * H * s.asDiagonal());
    Eigen::LLT<Eigen::MatrixXd> llt(Hs);
    Eigen::VectorXd p;
    bool newton_step = llt.info() == Eigen::Success;
    if (newton_step) {
      p = s.cwiseProduct(llt.solve(s.cwiseProduct(g)));
      newton_step = p.allFinite();
    }
    if (!newton_step) {
      // Reflect and floor the spectrum so saddle directions still get curvature-scaled
      // steps; a plain diagonal step stalls when one coordinate sits near a boundary.
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hs);
      Eigen::VectorXd lam = es.eigenvalues().cwiseAbs();
      const double floor = std::max(lam.maxCoeff() * 1e-10, std::numeric_limits<double>::min());
      lam = lam.cwiseMax(floor);
      const Eigen::MatrixXd& V = es.eigenvectors();
      p = s.cwiseProduct(V * (V.transpose() * s.cwiseProduct(g)).cwiseQuotient(lam));
      if (!p.allFinite()) p = g.cwiseQuotient(absdiag);
      ++res.gradient_fallbacks;
    }
    const double predicted = g.dot(p);
    if (!(predicted > opts.grad_tol * std::max(1.0, std::abs(res.value)))) {
      res.converged = true;
      break;
    }
    if (it >= opts.max_iters) break;

    double kappa = opts.kappa0;
    if (obj.max_step) kappa = std::min(kappa, obj.max_step(res.x, p));
    bool accepted = false;
    for (std::size_t b = 0; b <= opts.max_backtracks && kappa > 0.0; ++b, kappa *= opts.backtrack) {
      const Eigen::VectorXd xn = res.x + kappa * p;
      const double fn = obj.value(xn);
      if (fn >= res.value + opts.armijo * kappa * predicted) {
        res.x = xn;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      res.line_search_failed = true;
      break;
    }
    ++res.iterations;
  }
  return res;
}

}  // namespace poe
