#include <algorithm>
#include <cmath>
#include <numeric>

#include "poe/baselines.hpp"
#include "poe/em.hpp"
#include "poe/error.hpp"

namespace poe {

void initial_offsets(const ObservationSet& obs, const std::vector<LinkPrior>& priors,
                     const std::vector<bool>& flagged, double delta0, Eigen::VectorXd& d,
                     Eigen::VectorXd& tau) {
  const auto N = static_cast<Eigen::Index>(obs.n_links());
  d.resize(N);
  tau.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto& pr = priors[static_cast<std::size_t>(i)];
    const double ubar = obs.u.row(i).mean(), vbar = obs.v.row(i).mean();
    if (!flagged[static_cast<std::size_t>(i)]) {
      d[i] = 0.5 * (ubar + vbar) - 0.5 * (pr.mean_fwd + pr.mean_rev);
      tau[i] = 0.0;
    } else {
      d[i] = vbar + delta0 - pr.mean_rev;
      tau[i] = ubar - delta0 - d[i] - pr.mean_fwd;
    }
  }
}

namespace {

GammaMixture fit_start(double mean, double var, std::size_t M, const InitOptions& o) {
  GammaMixture m = moment_match_init(mean, var, M, o.jitter);
  // Keep each component's mean while lifting its shape into the optimizer's chart.
  for (auto& c : m.components)
    if (c.shape < o.a_min + o.shape_margin) {
      const double mu = c.mean();
      c.shape = o.a_min + o.shape_margin;
      c.scale = mu / c.shape;
    }
  return m;
}

}  // namespace

InitResult initialize(const ObservationSet& obs, const std::vector<LinkPrior>& priors,
                      const InitOptions& opts) {
  obs.validate();
  const std::size_t N = obs.n_links(), P = obs.n_rounds();
  if (priors.size() != N) throw ConfigError("initialize: one prior per link required");
  for (std::size_t i = 0; i < N; ++i) {
    const auto& pr = priors[i];
    if (pr.osm.P != P)
      throw ConfigError("initialize: order-statistic moments of link " + std::to_string(i) +
                        " were computed for P=" + std::to_string(pr.osm.P));
    if (!(pr.mean_fwd > 0.0 && pr.var_fwd > 0.0 && pr.mean_rev > 0.0 && pr.var_rev > 0.0))
      throw ConfigError("initialize: prior means and variances must be positive");
    if (pr.M < 1 || pr.L < 1) throw ConfigError("initialize: mixture orders must be >= 1");
  }

  InitResult out;
  out.delta_link.resize(static_cast<Eigen::Index>(N));
  std::vector<double> mse(N);
  for (std::size_t i = 0; i < N; ++i) {
    const LWeights w = l_weights(priors[i].osm);
    const auto ii = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd u = obs.u.row(ii).transpose(), v = obs.v.row(ii).transpose();
    out.delta_link[ii] = l_estimate({u.data(), P}, {v.data(), P}, w);
    mse[i] = w.predicted_mse;
  }
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return out.delta_link[static_cast<Eigen::Index>(a)] < out.delta_link[static_cast<Eigen::Index>(b)];
  });
  const std::size_t med = order[(N - 1) / 2];
  out.delta_med = out.delta_link[static_cast<Eigen::Index>(med)];
  out.sigma_medp = std::sqrt(mse[med]);

  out.flagged.assign(N, false);
  std::size_t n_flagged = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const double gap = std::abs(out.delta_med - out.delta_link[static_cast<Eigen::Index>(i)]);
    // The median link is the reference and is never flagged, even when sigma is zero.
    out.flagged[i] = i != med && gap >= 2.0 * out.sigma_medp;
    n_flagged += out.flagged[i] ? 1 : 0;
  }
  if (2 * n_flagged >= N)
    out.warning = "screening flagged " + std::to_string(n_flagged) + " of " + std::to_string(N) +
                  " links; the attacked-minority assumption looks violated";

  ThetaPi& th = out.theta;
  th.pi.resize(static_cast<Eigen::Index>(N));
  th.psi.delta = out.delta_med;
  for (std::size_t i = 0; i < N; ++i) {
    const auto& pr = priors[i];
    const GammaMixture f = fit_start(pr.mean_fwd, pr.var_fwd, pr.M, opts);
    const GammaMixture r = fit_start(pr.mean_rev, pr.var_rev, pr.L, opts);
    th.psi.fwd.push_back(f.components);
    th.psi.rev.push_back(r.components);
    th.alpha.push_back(f.weights);
    th.beta.push_back(r.weights);
    th.pi[static_cast<Eigen::Index>(i)] = out.flagged[i] ? opts.pi_flagged : opts.pi_clean;
  }
  initial_offsets(obs, priors, out.flagged, out.delta_med, th.psi.d, th.psi.tau);

  // Mean-based starts can sit past the support edge (zero likelihood); pull them inside.
  const double delta = th.psi.delta;
  for (std::size_t i = 0; i < N; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const auto& pr = priors[i];
    const double margin =
        opts.support_margin_sd * std::sqrt(std::min(pr.var_fwd, pr.var_rev));
    const double umin = obs.u.row(ii).minCoeff() - delta, vmin = obs.v.row(ii).minCoeff() + delta;
    // A flagged link only needs the attacked state to cover every round, so a negative
    // attack must not drag d below the reverse-path edge.
    if (out.flagged[i]) {
      th.psi.d[ii] = std::min(th.psi.d[ii], vmin - margin);
      th.psi.tau[ii] = std::min(th.psi.tau[ii], umin - th.psi.d[ii] - margin);
    } else {
      th.psi.d[ii] = std::min(th.psi.d[ii], std::min(umin, vmin) - margin);
    }
  }
  th.validate();
  return out;
}

}  // namespace poe
