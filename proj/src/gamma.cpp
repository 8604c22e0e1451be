#include "poe/gamma.hpp"

#include <cmath>
#include <limits>

#include "poe/error.hpp"

namespace poe {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double GammaComponent::log_norm() const { return -std::lgamma(shape) - shape * std::log(scale); }

double GammaMixture::mean() const {
  double m = 0.0;
  for (std::size_t k = 0; k < size(); ++k) m += weights[k] * components[k].mean();
  return m;
}

double GammaMixture::variance() const {
  double second = 0.0;
  for (std::size_t k = 0; k < size(); ++k) {
    const auto& c = components[k];
    second += weights[k] * (c.variance() + c.mean() * c.mean());
  }
  const double m = mean();
  return second - m * m;
}

void GammaMixture::validate() const {
  if (components.empty()) throw ConfigError("gamma mixture needs at least one component");
  if (weights.size() != components.size())
    throw ConfigError("gamma mixture: weights and components differ in length");
  double total = 0.0;
  for (std::size_t k = 0; k < size(); ++k) {
    if (!(weights[k] >= 0.0)) throw ConfigError("gamma mixture: negative weight");
    if (!(components[k].shape > 0.0) || !(components[k].scale > 0.0))
      throw ConfigError("gamma mixture: shape and scale must be positive");
    total += weights[k];
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("gamma mixture: weights must sum to 1");
}

GammaMixture GammaMixture::single(double shape, double scale) {
  return GammaMixture{{1.0}, {GammaComponent{shape, scale}}};
}

double log_gamma_pdf(double w, const GammaComponent& c) {
  if (w < 0.0) return kNegInf;
  if (w == 0.0) {
    if (c.shape > 1.0) return kNegInf;
    if (c.shape == 1.0) return -std::log(c.scale);
    throw SingularityError("gamma density with shape < 1 is unbounded at w = 0");
  }
  return (c.shape - 1.0) * std::log(w) - w / c.scale + c.log_norm();
}

double gamma_pdf(double w, const GammaComponent& c) {
  const double lp = log_gamma_pdf(w, c);
  return lp == kNegInf ? 0.0 : std::exp(lp);
}

double shifted_mixture_pdf(double x, const GammaMixture& mix, double shift) {
  double total = 0.0;
  for (std::size_t k = 0; k < mix.size(); ++k)
    total += mix.weights[k] * gamma_pdf(x - shift, mix.components[k]);
  return total;
}

double shifted_mixture_log_pdf(double x, const GammaMixture& mix, double shift) {
  const double w = x - shift;
  // Streaming log-sum-exp.
  double top = kNegInf;
  double acc = 0.0;
  for (std::size_t k = 0; k < mix.size(); ++k) {
    if (mix.weights[k] <= 0.0) continue;
    const double t = std::log(mix.weights[k]) + log_gamma_pdf(w, mix.components[k]);
    if (t == kNegInf) continue;
    if (t > top) {
      acc = acc * std::exp(top - t) + 1.0;
      top = t;
    } else {
      acc += std::exp(t - top);
    }
  }
  return top == kNegInf ? kNegInf : top + std::log(acc);
}

GammaMixture moment_match_init(double mean, double variance, std::size_t M, double jitter) {
  if (!(mean > 0.0)) throw ConfigError("moment_match_init: mean must be positive");
  if (!(variance > 0.0)) throw ConfigError("moment_match_init: variance must be positive");
  if (M == 0) throw ConfigError("moment_match_init: need at least one component");
  if (!(jitter >= 0.0 && jitter < 1.0))
    throw ConfigError("moment_match_init: jitter must lie in [0, 1)");

  const double shape = mean * mean / variance;
  const double scale = variance / mean;
  GammaMixture mix;
  mix.weights.assign(M, 1.0 / static_cast<double>(M));
  mix.components.resize(M);
  for (std::size_t k = 0; k < M; ++k) {
    const double spread =
        M == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(M - 1);
    mix.components[k] = GammaComponent{shape, scale * (1.0 + jitter * spread)};
  }
  return mix;
}

}  // namespace poe
