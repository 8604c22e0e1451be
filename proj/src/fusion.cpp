#include "poe/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "fusion_detail.hpp"
#include "parallel.hpp"
#include "poe/error.hpp"

namespace poe {

namespace detail {

double min_of(const std::vector<double>& x) { return *std::min_element(x.begin(), x.end()); }

double log_fwd(const FusionLink& link, double s) {
  double acc = 0.0;
  for (double u : link.u) {
    acc += shifted_mixture_log_pdf(u, link.fwd, s);
    if (acc == kNegInf) break;
  }
  return acc;
}

double log_rev(const FusionLink& link, double t) {
  double acc = 0.0;
  for (double v : link.v) {
    acc += shifted_mixture_log_pdf(v, link.rev, t);
    if (acc == kNegInf) break;
  }
  return acc;
}

double support_edge(const FusionLink& link, double delta) {
  double D = std::numeric_limits<double>::infinity();
  for (double v : link.v) D = std::min(D, v + delta);
  if (!link.attack_nuisance)
    for (double u : link.u) D = std::min(D, u - delta);
  return D;
}

namespace {

std::optional<double> edge_sum(const std::vector<double>& x, double sign, double delta, double D,
                               const GammaMixture& mix) {
  double acc = 0.0;
  try {
    for (double xj : x) {
      // Same expression as support_edge, so the binding round lands on exactly zero.
      const double w = (sign > 0 ? xj + delta : xj - delta) - D;
      acc += shifted_mixture_log_pdf(w, mix, 0.0);
    }
  } catch (const SingularityError&) {
    return std::nullopt;
  }
  return acc;
}

}  // namespace

std::optional<double> log_rev_edge(const FusionLink& link, double delta, double D) {
  return edge_sum(link.v, +1.0, delta, D, link.rev);
}

std::optional<double> log_fwd_edge(const FusionLink& link, double delta, double D) {
  return edge_sum(link.u, -1.0, delta, D, link.fwd);
}

Window log_density_window(const std::vector<double>& x, const GammaMixture& mix,
                          std::size_t n_pilot, double cutoff) {
  const double hi = min_of(x);
  const double x_range = *std::max_element(x.begin(), x.end()) - hi;
  double spread = 0.0;
  for (const auto& c : mix.components)
    spread = std::max(spread, c.mean() + 12.0 * std::sqrt(c.variance()));

  auto scan = [&](double top, double bottom, Window& out) {
    std::vector<double> L(n_pilot);
    const double step = (top - bottom) / static_cast<double>(n_pilot - 1);
    double mx = kNegInf;
    for (std::size_t p = 0; p < n_pilot; ++p) {
      const double s = top - step * static_cast<double>(p);
      double acc = 0.0;
      for (double xj : x) {
        acc += shifted_mixture_log_pdf(xj, mix, s);
        if (acc == kNegInf) break;
      }
      L[p] = acc;
      mx = std::max(mx, acc);
    }
    if (mx == kNegInf) return false;
    std::size_t first = n_pilot, last = 0;
    for (std::size_t p = 0; p < n_pilot; ++p)
      if (L[p] >= mx - cutoff) {
        first = std::min(first, p);
        last = p;
      }
    out.hi = first == 0 ? top : top - step * static_cast<double>(first - 1);
    out.lo = last + 1 >= n_pilot ? bottom : top - step * static_cast<double>(last + 1);
    return last + 1 < n_pilot;  // false: the window reached the bottom of the scan
  };

  Window coarse;
  double span = x_range + spread;
  bool closed = false;
  for (int attempt = 0; attempt < 8 && !closed; ++attempt, span *= 4.0) {
    // A failed scan with an all -inf profile leaves `coarse` untouched.
    coarse = Window{hi, hi};
    closed = scan(hi, hi - span, coarse);
    if (coarse.lo == coarse.hi) throw DataError("log-density profile is -inf everywhere");
  }
  Window fine;
  scan(coarse.hi, coarse.lo, fine);
  return fine;
}

std::size_t tau_steps(const QuadratureSpec& q, double h) {
  return static_cast<std::size_t>(std::ceil(q.tau_bound / h));
}

FusionResult summarize(const std::vector<double>& log_om, GridPlan plan) {
  const double mx = *std::max_element(log_om.begin(), log_om.end());
  if (!std::isfinite(mx))
    throw NumericalSupportError(
        "fusion: every offset grid weight underflowed; widen the quadrature windows");
  const std::size_t n = log_om.size();
  const double c = 0.5 * static_cast<double>(n - 1);
  double sw = 0.0, swk = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double w = (k == 0 || k + 1 == n ? 0.5 : 1.0) * std::exp(log_om[k] - mx);
    sw += w;
    swk += w * (static_cast<double>(k) - c);
  }
  FusionResult r;
  const double centre = plan.delta0 + c * plan.h;
  r.delta_hat = centre + plan.h * swk / sw;
  r.log_normalizer = mx + std::log(sw * plan.h);
  r.plan = std::move(plan);
  return r;
}

}  // namespace detail

using detail::kNegInf;

void FusionProblem::validate() const {
  if (links.empty()) throw ConfigError("fusion: no links selected");
  if (quadrature.n_delta < 3 || quadrature.n_d < 2 || quadrature.n_pilot < 16)
    throw ConfigError("fusion: quadrature point counts too small");
  if (!(quadrature.cutoff_nats > 0.0)) throw ConfigError("fusion: cutoff_nats must be positive");
  if (!(quadrature.tau_bound >= 0.0)) throw ConfigError("fusion: tau_bound must be nonnegative");
  for (const auto& l : links) {
    if (l.u.empty() || l.u.size() != l.v.size())
      throw ConfigError("fusion: link " + std::to_string(l.index) + " has mismatched u/v");
    l.fwd.validate();
    l.rev.validate();
  }
}

FusionProblem make_fusion_problem(const ObservationSet& obs, const std::vector<std::size_t>& links,
                                  const std::vector<GammaMixture>& fwd,
                                  const std::vector<GammaMixture>& rev,
                                  const QuadratureSpec& quadrature) {
  if (fwd.size() != links.size() || rev.size() != links.size())
    throw ConfigError("fusion: one forward and one reverse mixture per selected link required");
  FusionProblem prob;
  prob.quadrature = quadrature;
  for (std::size_t r = 0; r < links.size(); ++r) {
    const auto i = links[r];
    if (i >= obs.n_links()) throw ConfigError("fusion: selected link index out of range");
    FusionLink l;
    l.index = i;
    const auto row = static_cast<Eigen::Index>(i);
    l.u.assign(obs.u.row(row).begin(), obs.u.row(row).end());
    l.v.assign(obs.v.row(row).begin(), obs.v.row(row).end());
    l.fwd = fwd[r];
    l.rev = rev[r];
    prob.links.push_back(std::move(l));
  }
  prob.validate();
  return prob;
}

GridPlan plan_grid(const FusionProblem& prob) {
  prob.validate();
  const auto& q = prob.quadrature;
  const std::size_t K = prob.links.size();
  std::vector<detail::Window> sw(K), tw(K);
  double lo = -std::numeric_limits<double>::infinity(), hi = -lo;
  double hull_lo = hi, hull_hi = lo;
  for (std::size_t i = 0; i < K; ++i) {
    const auto& l = prob.links[i];
    try {
      sw[i] = detail::log_density_window(l.u, l.fwd, q.n_pilot, q.cutoff_nats);
      tw[i] = detail::log_density_window(l.v, l.rev, q.n_pilot, q.cutoff_nats);
    } catch (const DataError& e) {
      throw SupportMismatchError(l.index, e.what());
    }
    if (l.attack_nuisance) {
      sw[i].lo -= q.tau_bound;
      sw[i].hi += q.tau_bound;
    }
    const double a = 0.5 * (sw[i].lo - tw[i].hi), b = 0.5 * (sw[i].hi - tw[i].lo);
    lo = std::max(lo, a);
    hi = std::min(hi, b);
    hull_lo = std::min(hull_lo, a);
    hull_hi = std::max(hull_hi, b);
  }
  if (!(lo < hi)) {
    // Links disagree about the offset; keep every link's mass on the grid.
    lo = hull_lo;
    hi = hull_hi;
  }
  GridPlan plan;
  plan.n_delta = q.n_delta | 1u;
  plan.h = (hi - lo) / static_cast<double>(plan.n_delta - 1);
  const double centre = 0.5 * (lo + hi);
  plan.delta0 = centre - 0.5 * static_cast<double>(plan.n_delta - 1) * plan.h;
  const double dlo_delta = plan.delta0, dhi_delta = plan.delta_end();

  for (std::size_t i = 0; i < K; ++i) {
    const double d_lo = std::max(sw[i].lo - dhi_delta, tw[i].lo + dlo_delta);
    const double d_hi = std::min(sw[i].hi - dlo_delta, tw[i].hi + dhi_delta);
    if (!(d_lo < d_hi))
      throw SupportMismatchError(prob.links[i].index,
                                 "no fixed-delay value is consistent with the offset window");
    GridPlan::Link g;
    g.d0 = d_lo;
    g.stride = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil((d_hi - d_lo) /
                                              (plan.h * static_cast<double>(q.n_d - 1)))));
    const double step = plan.h * static_cast<double>(g.stride);
    g.n_d = static_cast<std::size_t>(std::floor((d_hi - d_lo) / step)) + 2;
    plan.links.push_back(g);
  }
  return plan;
}

namespace {

std::optional<double> add(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a || !b) return std::nullopt;
  return *a + *b;
}

/// Per-link log-density profiles on the lattice s_n = s0 + n*h (forward, smeared over tau
/// on nuisance links) and t_n = t0 + n*h (reverse).
struct LinkLattice {
  double s0 = 0.0, t0 = 0.0;
  std::vector<double> F, H;

  double F_at(double s, double h) const {
    const double x = (s - s0) / h;
    if (x <= 0.0) return F.front();
    const auto n = static_cast<std::size_t>(x);
    if (n + 1 >= F.size()) return F.back();
    const double f = x - static_cast<double>(n);
    if (F[n] == kNegInf || F[n + 1] == kNegInf) return f < 0.5 ? F[n] : F[n + 1];
    return (1.0 - f) * F[n] + f * F[n + 1];
  }
};

LinkLattice build_lattice(const FusionLink& link, const GridPlan& plan, const GridPlan::Link& g,
                          const QuadratureSpec& q) {
  const std::size_t Kd = plan.n_delta;
  const std::size_t len = (Kd - 1) + g.stride * g.n_d + 1;
  const double h = plan.h;
  LinkLattice lat;
  lat.s0 = plan.delta0 + g.d0;
  lat.t0 = g.d0 - plan.delta0 - static_cast<double>(Kd - 1) * h;
  lat.H.resize(len);
  detail::ExceptionSlot slot;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(len); ++n)
    slot.run([&] {
      lat.H[static_cast<std::size_t>(n)] =
          detail::log_rev(link, lat.t0 + static_cast<double>(n) * h);
    });
  slot.rethrow();

  if (!link.attack_nuisance) {
    lat.F.resize(len);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(len); ++n)
      slot.run([&] {
        lat.F[static_cast<std::size_t>(n)] =
            detail::log_fwd(link, lat.s0 + static_cast<double>(n) * h);
      });
    slot.rethrow();
    return lat;
  }

  // Nuisance link: F(s) = log of the trapezoid sum of exp(log_fwd(s + r*h)) * h, |r| <= R.
  const std::size_t R = detail::tau_steps(q, h);
  const std::size_t ext = len + 2 * R;
  std::vector<double> Fe(ext);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(ext); ++n)
    slot.run([&] {
      Fe[static_cast<std::size_t>(n)] = detail::log_fwd(
          link, lat.s0 + (static_cast<double>(n) - static_cast<double>(R)) * h);
    });
  slot.rethrow();
  const double mx = *std::max_element(Fe.begin(), Fe.end());
  if (mx == kNegInf)
    throw SupportMismatchError(link.index, "forward integrand vanishes for every attack value");
  std::vector<long double> cum(ext + 1, 0.0L);
  for (std::size_t n = 0; n < ext; ++n) cum[n + 1] = cum[n] + std::exp(Fe[n] - mx);
  lat.F.resize(len);
  for (std::size_t n = 0; n < len; ++n) {
    long double s = cum[n + 2 * R + 1] - cum[n];
    s -= 0.5L * (std::exp(Fe[n] - mx) + std::exp(Fe[n + 2 * R] - mx));
    lat.F[n] = s > 0.0L ? mx + std::log(static_cast<double>(s) * h) : kNegInf;
  }
  return lat;
}

}  // namespace

std::vector<double> log_omega_grid(const FusionProblem& prob, const GridPlan& plan) {
  const std::size_t Kd = plan.n_delta;
  std::vector<double> total(Kd, 0.0);
  for (std::size_t i = 0; i < prob.links.size(); ++i) {
    const auto& link = prob.links[i];
    const auto& g = plan.links[i];
    const LinkLattice lat = build_lattice(link, plan, g, prob.quadrature);
    const double step = plan.h * static_cast<double>(g.stride);
    std::vector<double> per(Kd);
    detail::ExceptionSlot slot;
#pragma omp parallel
    {
      std::vector<double> buf;
#pragma omp for schedule(static)
      for (std::ptrdiff_t kk = 0; kk < static_cast<std::ptrdiff_t>(Kd); ++kk) slot.run([&] {
        const auto k = static_cast<std::size_t>(kk);
        const double delta = plan.delta(k);
        const double D = detail::support_edge(link, delta);
        auto value = [&](std::size_t m) {
          const std::size_t off = g.stride * m;
          return lat.F[k + off] + lat.H[off + (Kd - 1) - k];
        };
        std::optional<double> edge = detail::log_rev_edge(link, delta, D);
        if (link.attack_nuisance)
          edge = add(edge, lat.F_at(delta + D, plan.h));
        else
          edge = add(edge, detail::log_fwd_edge(link, delta, D));
        per[k] = detail::log_fixed_delay_integral(g.d0, step, g.n_d, D, value, edge, buf);
      });
    }
    slot.rethrow();
    if (std::all_of(per.begin(), per.end(), [](double x) { return x == kNegInf; }))
      throw SupportMismatchError(link.index, "integrand is zero on the whole grid");
    for (std::size_t k = 0; k < Kd; ++k) total[k] += per[k];
  }
  return total;
}

LogOmega log_omega(double delta, const FusionProblem& prob, const GridPlan& plan) {
  LogOmega out;
  std::vector<double> buf;
  for (std::size_t i = 0; i < prob.links.size(); ++i) {
    const auto& link = prob.links[i];
    const auto& g = plan.links[i];
    const double step = plan.h * static_cast<double>(g.stride);
    const std::size_t R = detail::tau_steps(prob.quadrature, plan.h);
    auto fwd = [&](double s) {
      if (!link.attack_nuisance) return detail::log_fwd(link, s);
      std::vector<double> terms(2 * R + 1);
      double mx = kNegInf;
      for (std::size_t r = 0; r <= 2 * R; ++r) {
        terms[r] = detail::log_fwd(link, s + (static_cast<double>(r) - static_cast<double>(R)) *
                                                 plan.h);
        mx = std::max(mx, terms[r]);
      }
      if (mx == kNegInf) return kNegInf;
      double acc = 0.0;
      for (std::size_t r = 0; r <= 2 * R; ++r)
        acc += (r == 0 || r == 2 * R ? 0.5 : 1.0) * std::exp(terms[r] - mx);
      return mx + std::log(acc * plan.h);
    };
    const double D = detail::support_edge(link, delta);
    auto value = [&](std::size_t m) {
      const double d = g.d0 + static_cast<double>(m) * step;
      const double r = detail::log_rev(link, d - delta);
      return r == kNegInf ? kNegInf : r + fwd(delta + d);
    };
    std::optional<double> edge = detail::log_rev_edge(link, delta, D);
    edge = add(edge, link.attack_nuisance ? std::optional<double>(fwd(delta + D))
                                          : detail::log_fwd_edge(link, delta, D));
    const double li = detail::log_fixed_delay_integral(g.d0, step, g.n_d, D, value, edge, buf);
    if (li == kNegInf) {
      out.value = kNegInf;
      out.empty_link = link.index;
      return out;
    }
    out.value += li;
  }
  return out;
}

LogOmega log_omega(double delta, const FusionProblem& prob) {
  return log_omega(delta, prob, plan_grid(prob));
}

FusionResult fuse_estimate(const FusionProblem& prob) {
  GridPlan plan = plan_grid(prob);
  const auto lo = log_omega_grid(prob, plan);
  return detail::summarize(lo, std::move(plan));
}

FusionResult genie_bound(const ObservationSet& obs, const std::vector<int>& attacked,
                         const std::vector<GammaMixture>& fwd, const std::vector<GammaMixture>& rev,
                         const QuadratureSpec& quadrature) {
  obs.validate();
  const std::size_t N = obs.n_links();
  if (attacked.size() != N || fwd.size() != N || rev.size() != N)
    throw ConfigError("genie_bound: attack flags and mixtures must cover every link");
  std::vector<std::size_t> keep;
  std::vector<GammaMixture> f, r;
  for (std::size_t i = 0; i < N; ++i)
    if (!attacked[i]) {
      keep.push_back(i);
      f.push_back(fwd[i]);
      r.push_back(rev[i]);
    }
  if (keep.empty()) throw NoCleanLinkError("genie_bound: every link is attacked");
  return fuse_estimate(make_fusion_problem(obs, keep, f, r, quadrature));
}

void write_fusion_header(std::ostream& os) {
  os << "delta_hat_s,log_normalizer,n_delta,delta_lo_s,delta_hi_s,h_s\n";
}

void write_fusion_row(std::ostream& os, const FusionResult& r) {
  char buf[192];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu,%.17g,%.17g,%.17g\n", r.delta_hat,
                r.log_normalizer, r.plan.n_delta, r.plan.delta0, r.plan.delta_end(), r.plan.h);
  os << buf;
}

}  // namespace poe
