#pragma once

#include <random>

#include "poe/em.hpp"
#include "poe/rng.hpp"

namespace poe::test {

/// Single-component links with the given shapes and scales in both directions.
inline ThetaPi simple_theta(std::size_t N, double a, double b) {
  ThetaPi t;
  t.psi.d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
  t.psi.tau = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
  t.pi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
  for (std::size_t i = 0; i < N; ++i) {
    t.psi.fwd.push_back({{a, b}});
    t.psi.rev.push_back({{a, b}});
    t.alpha.push_back({1.0});
    t.beta.push_back({1.0});
  }
  return t;
}

inline ObservationSet obs_from(std::initializer_list<std::initializer_list<double>> u,
                               std::initializer_list<std::initializer_list<double>> v) {
  const auto N = static_cast<Eigen::Index>(u.size());
  const auto P = static_cast<Eigen::Index>(u.begin()->size());
  ObservationSet o{Eigen::MatrixXd(N, P), Eigen::MatrixXd(N, P)};
  Eigen::Index i = 0;
  for (const auto& r : u) {
    Eigen::Index j = 0;
    for (double x : r) o.u(i, j++) = x;
    ++i;
  }
  i = 0;
  for (const auto& r : v) {
    Eigen::Index j = 0;
    for (double x : r) o.v(i, j++) = x;
    ++i;
  }
  return o;
}

/// Gamma(shape, scale) delays on N links x P rounds, with offsets d, delta and tau.
inline ObservationSet gamma_obs(std::size_t N, std::size_t P, double shape, double scale,
                                double delta, const Eigen::VectorXd& d, const Eigen::VectorXd& tau,
                                Rng& rng) {
  std::gamma_distribution<double> g(shape, scale);
  ObservationSet o{Eigen::MatrixXd(N, P), Eigen::MatrixXd(N, P)};
  for (Eigen::Index i = 0; i < o.u.rows(); ++i)
    for (Eigen::Index j = 0; j < o.u.cols(); ++j) {
      o.u(i, j) = d[i] + delta + tau[i] + g(rng);
      o.v(i, j) = d[i] - delta + g(rng);
    }
  return o;
}

}  // namespace poe::test
