#include "poe/baselines.hpp"

#include <algorithm>
#include <numeric>

#include "poe/error.hpp"

namespace poe {

namespace {

bool well_conditioned(const Eigen::LDLT<Eigen::MatrixXd>& f) {
  if (f.info() != Eigen::Success || !f.isPositive()) return false;
  const Eigen::VectorXd D = f.vectorD();
  return D.minCoeff() > 1e-14 * D.maxCoeff();
}

}  // namespace

LWeights l_weights(const OrderStatMoments& osm) {
  const auto P = static_cast<Eigen::Index>(osm.P);
  if (P == 0 || osm.mu1.size() != P || osm.mu2.size() != P || osm.S1.rows() != P ||
      osm.S2.rows() != P || osm.S12.rows() != P)
    throw ConfigError("l_weights: order-statistic moments have inconsistent dimensions");

  Eigen::MatrixXd S(2 * P, 2 * P);
  S << osm.S1, -osm.S12, -osm.S12.transpose(), osm.S2;
  Eigen::MatrixXd A(2, 2 * P);
  A.row(0).setOnes();
  A.row(1) << Eigen::RowVectorXd::Ones(P), -Eigen::RowVectorXd::Ones(P);
  const Eigen::Vector2d gamma(1.0, 0.0);

  LWeights w;
  const double trace = S.trace();
  if (!(trace > 0.0)) {
    // Degenerate (constant) delays: every constrained weighting has zero error.
    w.c1 = Eigen::VectorXd::Constant(P, 0.5 / static_cast<double>(P));
    w.c2 = w.c1;
  } else {
    Eigen::LDLT<Eigen::MatrixXd> f(S);
    double ridge = 1e-12 * trace / static_cast<double>(2 * P);
    while (!well_conditioned(f)) {
      w.regularized = true;
      f.compute(S + ridge * Eigen::MatrixXd::Identity(2 * P, 2 * P));
      ridge *= 10.0;
    }
    const Eigen::MatrixXd X = f.solve(A.transpose());  // S^-1 A'
    const Eigen::Matrix2d G = A * X;                   // A S^-1 A'
    const Eigen::Vector2d y = G.ldlt().solve(gamma);
    const Eigen::VectorXd c = X * y;
    w.c1 = c.head(P);
    w.c2 = c.tail(P);
    w.predicted_mse = gamma.dot(y);
  }
  w.intercept = w.c2.dot(osm.mu2) - w.c1.dot(osm.mu1);
  return w;
}

double l_estimate(std::span<const double> u, std::span<const double> v, const LWeights& w) {
  const auto P = static_cast<std::size_t>(w.c1.size());
  if (u.size() != P || v.size() != P)
    throw ConfigError("l_estimate: sample length does not match the weights");
  std::vector<double> su(u.begin(), u.end()), sv(v.begin(), v.end());
  std::sort(su.begin(), su.end());
  std::sort(sv.begin(), sv.end());
  double acc = w.intercept;
  for (std::size_t k = 0; k < P; ++k) {
    const auto e = static_cast<Eigen::Index>(k);
    acc += w.c1[e] * su[k] - w.c2[e] * sv[k];
  }
  return acc;
}

double link_sample_mean(std::span<const double> u, std::span<const double> v, double mean_fwd,
                        double mean_rev) {
  if (u.empty() || u.size() != v.size())
    throw ConfigError("link_sample_mean: u and v must be nonempty and equally long");
  const double n = static_cast<double>(u.size());
  const double ubar = std::accumulate(u.begin(), u.end(), 0.0) / n;
  const double vbar = std::accumulate(v.begin(), v.end(), 0.0) / n;
  return 0.5 * (ubar - vbar) - 0.5 * (mean_fwd - mean_rev);
}

double median_estimate(std::vector<double> offsets) {
  if (offsets.empty()) throw ConfigError("median_estimate: no offsets");
  const auto mid = offsets.begin() + static_cast<std::ptrdiff_t>((offsets.size() - 1) / 2);
  std::nth_element(offsets.begin(), mid, offsets.end());
  return *mid;
}

double fta_estimate(std::vector<double> offsets, std::size_t M) {
  if (offsets.size() < 2 * M + 1)
    throw ConfigError("fta_estimate: need more than 2M offsets");
  std::sort(offsets.begin(), offsets.end());
  const auto first = offsets.begin() + static_cast<std::ptrdiff_t>(M);
  const auto last = offsets.end() - static_cast<std::ptrdiff_t>(M);
  return std::accumulate(first, last, 0.0) / static_cast<double>(last - first);
}

}  // namespace poe
