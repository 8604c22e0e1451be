#pragma once

// Pieces shared by the lattice kernel and the serial reference.

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "poe/fusion.hpp"

namespace poe::detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Window {
  double lo = 0.0, hi = 0.0;
};

/// Bounds of s where sum_j log f(x_j - s) lies within `cutoff` nats of its maximum.
Window log_density_window(const std::vector<double>& x, const GammaMixture& mix,
                          std::size_t n_pilot, double cutoff);

/// Half-width (in lattice steps) of the tau smearing on nuisance links.
std::size_t tau_steps(const QuadratureSpec& q, double h);
double min_of(const std::vector<double>& x);

/// Sum over rounds of log f1(u_j - s).
double log_fwd(const FusionLink& link, double s);
/// Sum over rounds of log f2(v_j - t), t = d - delta.
double log_rev(const FusionLink& link, double t);

/// The fixed-delay integrand vanishes for d >= D(delta).
double support_edge(const FusionLink& link, double delta);

/// Reverse part of the integrand at d -> D(delta) from below, with the binding round
/// evaluated at exactly zero delay; nullopt when the limit is infinite.
std::optional<double> log_rev_edge(const FusionLink& link, double delta, double D);
/// Forward part of the same limit (clean links only).
std::optional<double> log_fwd_edge(const FusionLink& link, double delta, double D);

/// Composite trapezoid over d_m = d0 + m*step for m <= m_edge, closed by the partial
/// segment [d_{m_edge}, D]. `value(m)` returns the log integrand at node m; `edge` is the
/// log integrand at D, nullopt for an integrable singularity (closed by a rectangle).
template <class ValueFn>
double log_fixed_delay_integral(double d0, double step, std::size_t n_d, double D,
                                ValueFn&& value, const std::optional<double>& edge,
                                std::vector<double>& buf) {
  if (!(D > d0)) return kNegInf;
  const double span = (D - d0) / step;
  std::size_t m_edge = n_d - 1;
  bool partial = false;
  if (span < static_cast<double>(n_d)) {
    m_edge = std::min<std::size_t>(static_cast<std::size_t>(span), n_d - 1);
    partial = true;
  }
  buf.resize(m_edge + 1);
  for (std::size_t m = 0; m <= m_edge; ++m) buf[m] = value(m);
  // Trailing nodes lost to rounding at the support edge.
  while (partial && m_edge > 0 && buf[m_edge] == kNegInf) --m_edge;

  double mx = kNegInf;
  for (std::size_t m = 0; m <= m_edge; ++m) mx = std::max(mx, buf[m]);
  if (partial && edge) mx = std::max(mx, *edge);
  if (mx == kNegInf) return kNegInf;

  double acc = 0.0;
  for (std::size_t m = 0; m < m_edge; ++m) {
    const double w = m == 0 ? 0.5 * step : step;
    acc += w * std::exp(buf[m] - mx);
  }
  double w_top = m_edge == 0 ? 0.0 : 0.5 * step;
  if (partial) {
    const double tail = D - (d0 + static_cast<double>(m_edge) * step);
    w_top += edge ? 0.5 * tail : tail;
    if (edge) acc += 0.5 * tail * std::exp(*edge - mx);
  }
  acc += w_top * std::exp(buf[m_edge] - mx);
  return acc > 0.0 ? mx + std::log(acc) : kNegInf;
}

/// Posterior mean and log normalizer from log Omega on the offset grid.
FusionResult summarize(const std::vector<double>& log_om, GridPlan plan);

}  // namespace poe::detail
