#pragma once

#include <cstddef>
#include <vector>

namespace poe {

/// Gamma distribution in shape/scale form: mean = shape*scale, variance = shape*scale^2.
struct GammaComponent {
  double shape = 1.0;
  double scale = 1.0;

  double mean() const { return shape * scale; }
  double variance() const { return shape * scale * scale; }
  /// -lgamma(shape) - shape*log(scale); the w-independent part of the log density.
  double log_norm() const;
};

/// Finite mixture of Gamma components; weights are nonnegative and sum to one.
struct GammaMixture {
  std::vector<double> weights;
  std::vector<GammaComponent> components;

  std::size_t size() const { return components.size(); }
  double mean() const;
  double variance() const;
  /// Throws ConfigError unless weights/components are consistent and positive.
  void validate() const;

  static GammaMixture single(double shape, double scale);
};

/// Density of one component. w < 0 gives 0; w == 0 gives the right limit and throws
/// SingularityError when shape < 1.
double gamma_pdf(double w, const GammaComponent& c);
double log_gamma_pdf(double w, const GammaComponent& c);

/// Mixture density of x - shift.
double shifted_mixture_pdf(double x, const GammaMixture& mix, double shift);
/// Same, accumulated with log-sum-exp over components.
double shifted_mixture_log_pdf(double x, const GammaMixture& mix, double shift);

/// Mixture with M equal-weight components whose mean equals `mean`. For M == 1 mean and
/// variance are matched exactly; for M > 1 the common solution has its scales spread by
/// (1 + jitter*s_k) with s_k evenly spaced in [-1, 1].
GammaMixture moment_match_init(double mean, double variance, std::size_t M, double jitter = 0.1);

}  // namespace poe
