#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "poe/delay_sim.hpp"

namespace poe {

/// Order-statistic weights of the per-link L-estimator
///   delta_i = c1' sort(u_i) - c2' sort(v_i) + intercept.
struct LWeights {
  Eigen::VectorXd c1, c2;
  double intercept = 0.0;
  double predicted_mse = 0.0;
  bool regularized = false;
};

/// Minimum-variance weights under the constant-bias constraint A c = [1, 0]'.
LWeights l_weights(const OrderStatMoments& osm);
double l_estimate(std::span<const double> u, std::span<const double> v, const LWeights& w);

/// (mean(u) - mean(v))/2 corrected by the prior queuing-delay means.
double link_sample_mean(std::span<const double> u, std::span<const double> v, double mean_fwd,
                        double mean_rev);

/// Lower median: element floor((N-1)/2) of the sorted offsets.
double median_estimate(std::vector<double> offsets);
/// Mean after discarding the M smallest and M largest offsets.
double fta_estimate(std::vector<double> offsets, std::size_t M);

}  // namespace poe
