#include <vector>

#include "fusion_detail.hpp"
#include "poe/fusion.hpp"

namespace poe::reference {

std::vector<double> log_omega_grid(const FusionProblem& prob, const GridPlan& plan) {
  std::vector<double> out(plan.n_delta);
  for (std::size_t k = 0; k < plan.n_delta; ++k)
    out[k] = poe::log_omega(plan.delta(k), prob, plan).value;
  return out;
}

FusionResult fuse_estimate(const FusionProblem& prob) {
  GridPlan plan = plan_grid(prob);
  const auto lo = reference::log_omega_grid(prob, plan);
  return detail::summarize(lo, std::move(plan));
}

}  // namespace poe::reference
