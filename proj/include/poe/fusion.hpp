#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

#include "poe/gamma.hpp"
#include "poe/scenario.hpp"

namespace poe {

/// Quadrature policy for the offset posterior.
struct QuadratureSpec {
  std::size_t n_delta = 4001;  ///< odd, so the grid centre is a node
  std::size_t n_d = 2001;      ///< target node count of each fixed-delay grid
  std::size_t n_pilot = 2001;  ///< pilot scan used to locate the support windows
  double cutoff_nats = 36.0;   ///< log-density drop that bounds each window
  double tau_bound = 2e-6;     ///< |tau| range integrated out on nuisance links (s)
};

struct FusionLink {
  std::size_t index = 0;  ///< link id in the originating ObservationSet
  std::vector<double> u, v;
  GammaMixture fwd, rev;
  /// Treat the link as attacked with unknown tau in [-tau_bound, tau_bound].
  bool attack_nuisance = false;
};

struct FusionProblem {
  std::vector<FusionLink> links;
  QuadratureSpec quadrature;

  void validate() const;
};

FusionProblem make_fusion_problem(const ObservationSet& obs, const std::vector<std::size_t>& links,
                                  const std::vector<GammaMixture>& fwd,
                                  const std::vector<GammaMixture>& rev,
                                  const QuadratureSpec& quadrature = {});

/// Uniform offset grid delta_k = delta0 + k*h; link i integrates d over
/// d_m = d0 + m*stride*h, m < n_d, truncated at the support edge.
struct GridPlan {
  struct Link {
    double d0 = 0.0;
    std::size_t stride = 1;
    std::size_t n_d = 0;
  };
  double delta0 = 0.0;
  double h = 0.0;
  std::size_t n_delta = 0;
  std::vector<Link> links;

  double delta(std::size_t k) const { return delta0 + static_cast<double>(k) * h; }
  double delta_end() const { return delta(n_delta - 1); }
};

GridPlan plan_grid(const FusionProblem& prob);

struct LogOmega {
  double value = 0.0;
  /// First link whose integrand vanished on its grid (value is then -inf).
  std::optional<std::size_t> empty_link;
};

/// log of the product over links of the fixed-delay integrals at one offset value.
LogOmega log_omega(double delta, const FusionProblem& prob, const GridPlan& plan);
LogOmega log_omega(double delta, const FusionProblem& prob);

struct FusionResult {
  double delta_hat = 0.0;
  double log_normalizer = 0.0;  ///< log of the integral of Omega over the offset grid
  GridPlan plan;
};

/// Posterior-mean offset over the plan's grid (parallel lattice kernel).
FusionResult fuse_estimate(const FusionProblem& prob);
/// log Omega at every offset node, via the lattice kernel.
std::vector<double> log_omega_grid(const FusionProblem& prob, const GridPlan& plan);

/// Fusion over the links that the ground truth marks clean, with the given pdfs.
FusionResult genie_bound(const ObservationSet& obs, const std::vector<int>& attacked,
                         const std::vector<GammaMixture>& fwd, const std::vector<GammaMixture>& rev,
                         const QuadratureSpec& quadrature = {});

void write_fusion_header(std::ostream& os);
void write_fusion_row(std::ostream& os, const FusionResult& r);

namespace reference {
/// Serial evaluation of every grid node straight from the mixture densities.
std::vector<double> log_omega_grid(const FusionProblem& prob, const GridPlan& plan);
FusionResult fuse_estimate(const FusionProblem& prob);
}  // namespace reference

}  // namespace poe
