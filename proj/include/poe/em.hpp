#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "poe/delay_sim.hpp"
#include "poe/gamma.hpp"
#include "poe/newton.hpp"
#include "poe/scenario.hpp"

namespace poe {

/// Location and shape parameters of the relaxed model.
struct Psi {
  double delta = 0.0;
  Eigen::VectorXd d, tau;
  std::vector<std::vector<GammaComponent>> fwd, rev;  ///< per link, M_i resp. L_i components

  std::size_t n_links() const { return static_cast<std::size_t>(d.size()); }
};

struct ThetaPi {
  Psi psi;
  std::vector<std::vector<double>> alpha, beta;
  Eigen::VectorXd pi;

  std::size_t n_links() const { return psi.n_links(); }
  GammaMixture fwd_mixture(std::size_t i) const;
  GammaMixture rev_mixture(std::size_t i) const;
  /// Throws ConfigError on ragged-size mismatches, weights off the simplex, pi outside
  /// [0, 1] or nonpositive shapes/scales.
  void validate() const;
};

/// a1(i,j,k,l) and a0(i,j,k,l), stored per link as P x M_i x L_i, row-major.
struct Responsibilities {
  std::vector<std::vector<double>> a1, a0;
  std::vector<std::size_t> M, L;
  std::size_t P = 0;

  std::size_t at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return (j * M[i] + k) * L[i] + l;
  }
};

double log_likelihood(const ThetaPi& theta, const ObservationSet& obs);

struct EStepResult {
  Responsibilities resp;
  double llf = 0.0;  ///< log-likelihood at the parameters the E-step was run at
};

/// Posterior over (attack state, forward component, reverse component) for every round.
EStepResult e_step(const ThetaPi& theta, const ObservationSet& obs);

namespace reference {
/// Serial evaluation in linear space; slower and prone to underflow, kept for testing.
EStepResult e_step(const ThetaPi& theta, const ObservationSet& obs);
}  // namespace reference

struct ClosedFormUpdate {
  Eigen::VectorXd pi;
  std::vector<std::vector<double>> alpha, beta;
};
ClosedFormUpdate m_step_closed(const Responsibilities& resp);

struct PsiStepOptions {
  NewtonOptions newton;
  /// Shapes are parameterized as a = a_min + exp(theta).
  double a_min = 1.0;
  /// Hold every mixture weight, shape and scale at its current value (run_em honours the
  /// weights; m_step_psi the shapes and scales).
  bool fix_mixtures = false;
  /// Links whose pi is below this keep their current tau.
  double tau_freeze = 1e-3;
};

struct PsiStepResult {
  Psi psi;
  double q_before = 0.0, q_after = 0.0;
  NewtonResult newton;
};

/// Responsibility-weighted expected complete-data log-likelihood as a function of Psi.
double q_function(const Psi& psi, const Responsibilities& resp, const ObservationSet& obs);

/// Maximizes q_function over Psi by damped Newton, starting at `theta_g.psi`.
PsiStepResult m_step_psi(const ThetaPi& theta_g, const Responsibilities& resp,
                         const ObservationSet& obs, const PsiStepOptions& opts = {});

/// Packed free-parameter view of q_function, exposed for derivative checks. Order:
/// delta, d_1..N, tau_1..N, then per link (theta, log b) of each forward component
/// followed by each reverse component.
struct QPacking {
  std::size_t n_links = 0;
  std::vector<std::size_t> M, L;
  double a_min = 1.0;

  std::size_t size() const;
  Eigen::VectorXd pack(const Psi& psi) const;
  Psi unpack(const Eigen::VectorXd& x) const;
};
QPacking make_packing(const Psi& psi, double a_min);
/// Value, full gradient and Hessian of q_function in packed coordinates.
double q_packed(const QPacking& pk, const Eigen::VectorXd& x, const Responsibilities& resp,
                const ObservationSet& obs, Eigen::VectorXd* grad, Eigen::MatrixXd* hess);

struct EmOptions {
  PsiStepOptions psi;
  /// Convergence threshold on |LLF change|; defaults to eps_rel * |initial LLF|.
  std::optional<double> eps;
  double eps_rel = 1e-6;
  std::size_t max_iters = 500;
};

struct EmTraceRow {
  std::size_t iter = 0;
  double llf = 0.0;
  double grad_norm = 0.0;
  Eigen::VectorXd pi;
};

struct EmResult {
  ThetaPi theta;
  std::vector<bool> attacked;
  std::vector<EmTraceRow> trace;
  bool converged = false;
  std::size_t iterations = 0;
  std::size_t newton_fallbacks = 0;
  std::size_t line_search_failures = 0;
};

EmResult run_em(const ObservationSet& obs, const ThetaPi& init, const EmOptions& opts = {});

/// attacked_i = pi_i >= 0.5.
std::vector<bool> classify_links(const Eigen::VectorXd& pi);

void write_trace_csv(std::ostream& os, const std::vector<EmTraceRow>& trace);

// ---- initialization -------------------------------------------------------------------

/// Prior knowledge of one link: queuing-delay moments and the sorted-delay moments of the
/// L-estimator, plus the mixture orders to fit.
struct LinkPrior {
  double mean_fwd = 0.0, var_fwd = 0.0, mean_rev = 0.0, var_rev = 0.0;
  OrderStatMoments osm;
  std::size_t M = 1, L = 1;
};

struct InitOptions {
  double jitter = 0.1;
  double pi_flagged = 0.9, pi_clean = 0.1;
  /// Shapes from moment matching are raised to at least a_min + shape_margin.
  double a_min = 1.0;
  double shape_margin = 1e-2;
  /// Fixed-delay and attack starts stay this many prior standard deviations inside the
  /// region where every round has positive density.
  double support_margin_sd = 0.05;
};

struct InitResult {
  ThetaPi theta;
  Eigen::VectorXd delta_link;  ///< per-link L-estimates
  double delta_med = 0.0;
  double sigma_medp = 0.0;
  std::vector<bool> flagged;
  std::optional<std::string> warning;
};

/// Screening-based start: L-estimates per link, median reference, 2-sigma flagging.
InitResult initialize(const ObservationSet& obs, const std::vector<LinkPrior>& priors,
                      const InitOptions& opts = {});

/// d and tau starts from sample means given the screening outcome (before any support
/// adjustment): clean links take the mean of (u+v)/2 minus the mean queuing delay;
/// flagged links take d from v and the remaining forward excess as tau.
void initial_offsets(const ObservationSet& obs, const std::vector<LinkPrior>& priors,
                     const std::vector<bool>& flagged, double delta0, Eigen::VectorXd& d,
                     Eigen::VectorXd& tau);

}  // namespace poe
