#include "poe/em.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "parallel.hpp"
#include "poe/error.hpp"

namespace poe {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

double log_sum_exp(const double* x, std::size_t n) {
  double mx = kNegInf;
  for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, x[k]);
  if (mx == kNegInf) return kNegInf;
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc += std::exp(x[k] - mx);
  return mx + std::log(acc);
}

void check_dims(const ThetaPi& theta, const ObservationSet& obs) {
  obs.validate();
  if (theta.n_links() != obs.n_links())
    throw ConfigError("parameter vector covers " + std::to_string(theta.n_links()) +
                      " links but the observations have " + std::to_string(obs.n_links()));
}

/// Unnormalized log posterior of every (state, k, l) cell of round (i, j); layout
/// [state 1 cells (k, l) row-major | state 0 cells].
void log_cells(const ThetaPi& th, const ObservationSet& obs, std::size_t i, std::size_t j,
               std::vector<double>& out) {
  const auto& ps = th.psi;
  const std::size_t M = ps.fwd[i].size(), L = ps.rev[i].size();
  const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
  const double u = obs.u(ii, jj), v = obs.v(ii, jj);
  const double x1 = u - ps.delta - ps.d[ii] - ps.tau[ii];
  const double x0 = u - ps.delta - ps.d[ii];
  const double y = v + ps.delta - ps.d[ii];
  const double lp1 = safe_log(th.pi[ii]), lp0 = safe_log(1.0 - th.pi[ii]);
  out.resize(2 * M * L);
  for (std::size_t l = 0; l < L; ++l) {
    const double r = safe_log(th.beta[i][l]) + log_gamma_pdf(y, ps.rev[i][l]);
    for (std::size_t k = 0; k < M; ++k) {
      const double la = safe_log(th.alpha[i][k]);
      const auto& c = ps.fwd[i][k];
      out[k * L + l] = lp1 == kNegInf ? kNegInf : lp1 + la + log_gamma_pdf(x1, c) + r;
      out[M * L + k * L + l] = lp0 == kNegInf ? kNegInf : lp0 + la + log_gamma_pdf(x0, c) + r;
    }
  }
}

}  // namespace

GammaMixture ThetaPi::fwd_mixture(std::size_t i) const { return {alpha[i], psi.fwd[i]}; }
GammaMixture ThetaPi::rev_mixture(std::size_t i) const { return {beta[i], psi.rev[i]}; }

void ThetaPi::validate() const {
  const std::size_t N = n_links();
  if (static_cast<std::size_t>(psi.tau.size()) != N || psi.fwd.size() != N ||
      psi.rev.size() != N || alpha.size() != N || beta.size() != N ||
      static_cast<std::size_t>(pi.size()) != N)
    throw ConfigError("theta: per-link vectors differ in length");
  for (std::size_t i = 0; i < N; ++i) {
    fwd_mixture(i).validate();
    rev_mixture(i).validate();
    const double p = pi[static_cast<Eigen::Index>(i)];
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("theta: pi outside [0, 1]");
  }
  if (!std::isfinite(psi.delta) || !psi.d.allFinite() || !psi.tau.allFinite())
    throw ConfigError("theta: non-finite location parameter");
}

double log_likelihood(const ThetaPi& theta, const ObservationSet& obs) {
  check_dims(theta, obs);
  const std::size_t N = obs.n_links(), P = obs.n_rounds();
  std::vector<double> per(N * P);
  detail::ExceptionSlot slot;
#pragma omp parallel
  {
    std::vector<double> cells;
#pragma omp for schedule(static)
    for (std::ptrdiff_t f = 0; f < static_cast<std::ptrdiff_t>(N * P); ++f)
      slot.run([&] {
        const auto idx = static_cast<std::size_t>(f);
        log_cells(theta, obs, idx / P, idx % P, cells);
        per[idx] = log_sum_exp(cells.data(), cells.size());
      });
  }
  slot.rethrow();
  double acc = 0.0;
  for (double x : per) acc += x;
  return acc;
}

EStepResult e_step(const ThetaPi& theta, const ObservationSet& obs) {
  check_dims(theta, obs);
  const std::size_t N = obs.n_links(), P = obs.n_rounds();
  EStepResult out;
  auto& R = out.resp;
  R.P = P;
  for (std::size_t i = 0; i < N; ++i) {
    R.M.push_back(theta.psi.fwd[i].size());
    R.L.push_back(theta.psi.rev[i].size());
    R.a1.emplace_back(P * R.M[i] * R.L[i]);
    R.a0.emplace_back(P * R.M[i] * R.L[i]);
  }
  std::vector<double> per(N * P);
  detail::ExceptionSlot slot;
#pragma omp parallel
  {
    std::vector<double> cells;
#pragma omp for schedule(static)
    for (std::ptrdiff_t f = 0; f < static_cast<std::ptrdiff_t>(N * P); ++f)
      slot.run([&] {
        const auto idx = static_cast<std::size_t>(f);
        const std::size_t i = idx / P, j = idx % P;
        log_cells(theta, obs, i, j, cells);
        const double Z = log_sum_exp(cells.data(), cells.size());
        if (Z == kNegInf) throw DegenerateSupportError(i, j);
        per[idx] = Z;
        const std::size_t ML = R.M[i] * R.L[i];
        for (std::size_t c = 0; c < ML; ++c) {
          R.a1[i][j * ML + c] = std::exp(cells[c] - Z);
          R.a0[i][j * ML + c] = std::exp(cells[ML + c] - Z);
        }
      });
  }
  slot.rethrow();
  for (double x : per) out.llf += x;
  return out;
}

namespace reference {

EStepResult e_step(const ThetaPi& theta, const ObservationSet& obs) {
  check_dims(theta, obs);
  const std::size_t N = obs.n_links(), P = obs.n_rounds();
  EStepResult out;
  auto& R = out.resp;
  R.P = P;
  for (std::size_t i = 0; i < N; ++i) {
    const auto& ps = theta.psi;
    const std::size_t M = ps.fwd[i].size(), L = ps.rev[i].size();
    const auto ii = static_cast<Eigen::Index>(i);
    R.M.push_back(M);
    R.L.push_back(L);
    R.a1.emplace_back(P * M * L);
    R.a0.emplace_back(P * M * L);
    for (std::size_t j = 0; j < P; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double u = obs.u(ii, jj), v = obs.v(ii, jj);
      double total = 0.0;
      for (std::size_t k = 0; k < M; ++k)
        for (std::size_t l = 0; l < L; ++l) {
          const double common = theta.alpha[i][k] * theta.beta[i][l] *
                                gamma_pdf(v + ps.delta - ps.d[ii], ps.rev[i][l]);
          const double f1 = gamma_pdf(u - ps.delta - ps.d[ii] - ps.tau[ii], ps.fwd[i][k]);
          const double f0 = gamma_pdf(u - ps.delta - ps.d[ii], ps.fwd[i][k]);
          R.a1[i][R.at(i, j, k, l)] = theta.pi[ii] * common * f1;
          R.a0[i][R.at(i, j, k, l)] = (1.0 - theta.pi[ii]) * common * f0;
          total += R.a1[i][R.at(i, j, k, l)] + R.a0[i][R.at(i, j, k, l)];
        }
      if (!(total > 0.0)) throw DegenerateSupportError(i, j);
      for (std::size_t c = j * M * L; c < (j + 1) * M * L; ++c) {
        R.a1[i][c] /= total;
        R.a0[i][c] /= total;
      }
      out.llf += std::log(total);
    }
  }
  return out;
}

}  // namespace reference

ClosedFormUpdate m_step_closed(const Responsibilities& R) {
  const std::size_t N = R.a1.size();
  const double P = static_cast<double>(R.P);
  ClosedFormUpdate out;
  out.pi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
  out.alpha.resize(N);
  out.beta.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t M = R.M[i], L = R.L[i];
    out.alpha[i].assign(M, 0.0);
    out.beta[i].assign(L, 0.0);
    double s1 = 0.0;
    for (std::size_t j = 0; j < R.P; ++j)
      for (std::size_t k = 0; k < M; ++k)
        for (std::size_t l = 0; l < L; ++l) {
          const double a1 = R.a1[i][R.at(i, j, k, l)], a0 = R.a0[i][R.at(i, j, k, l)];
          s1 += a1;
          out.alpha[i][k] += a1 + a0;
          out.beta[i][l] += a1 + a0;
        }
    out.pi[static_cast<Eigen::Index>(i)] = std::clamp(s1 / P, 0.0, 1.0);
    // Renormalize away rounding so the rows stay on the simplex.
    double sa = 0.0, sb = 0.0;
    for (double a : out.alpha[i]) sa += a;
    for (double b : out.beta[i]) sb += b;
    for (double& a : out.alpha[i]) a /= sa;
    for (double& b : out.beta[i]) b /= sb;
  }
  return out;
}

// ---- Q function ----------------------------------------------------------------------

std::size_t QPacking::size() const {
  std::size_t n = 1 + 2 * n_links;
  for (std::size_t i = 0; i < n_links; ++i) n += 2 * (M[i] + L[i]);
  return n;
}

QPacking make_packing(const Psi& psi, double a_min) {
  QPacking pk;
  pk.n_links = psi.n_links();
  pk.a_min = a_min;
  for (std::size_t i = 0; i < pk.n_links; ++i) {
    pk.M.push_back(psi.fwd[i].size());
    pk.L.push_back(psi.rev[i].size());
  }
  return pk;
}

Eigen::VectorXd QPacking::pack(const Psi& psi) const {
  Eigen::VectorXd x(static_cast<Eigen::Index>(size()));
  const auto N = static_cast<Eigen::Index>(n_links);
  x[0] = psi.delta;
  x.segment(1, N) = psi.d;
  x.segment(1 + N, N) = psi.tau;
  Eigen::Index o = 1 + 2 * N;
  auto put = [&](const GammaComponent& c) {
    if (!(c.shape > a_min))
      throw ConfigError("shape " + std::to_string(c.shape) + " is not above a_min");
    x[o++] = std::log(c.shape - a_min);
    x[o++] = std::log(c.scale);
  };
  for (std::size_t i = 0; i < n_links; ++i) {
    for (const auto& c : psi.fwd[i]) put(c);
    for (const auto& c : psi.rev[i]) put(c);
  }
  return x;
}

Psi QPacking::unpack(const Eigen::VectorXd& x) const {
  Psi psi;
  const auto N = static_cast<Eigen::Index>(n_links);
  psi.delta = x[0];
  psi.d = x.segment(1, N);
  psi.tau = x.segment(1 + N, N);
  Eigen::Index o = 1 + 2 * N;
  auto get = [&] {
    // Floor keeps a shape that ran to the chart boundary packable on the next step.
    GammaComponent c{a_min + std::max(std::exp(x[o]), 1e-12 * std::max(1.0, a_min)),
                     std::exp(x[o + 1])};
    o += 2;
    return c;
  };
  psi.fwd.resize(n_links);
  psi.rev.resize(n_links);
  for (std::size_t i = 0; i < n_links; ++i) {
    for (std::size_t k = 0; k < M[i]; ++k) psi.fwd[i].push_back(get());
    for (std::size_t l = 0; l < L[i]; ++l) psi.rev[i].push_back(get());
  }
  return psi;
}

namespace {

/// Responsibility-weighted sums of log h over every round, in packed coordinates.
class QEvaluator {
public:
  QEvaluator(const QPacking& pk, const Responsibilities& R, const ObservationSet& obs)
      : pk_(pk), obs_(obs) {
    const std::size_t N = pk.n_links, P = obs.n_rounds();
    if (R.a1.size() != N || R.P != P) throw ConfigError("Q: responsibilities do not match data");
    A1_.resize(N);
    A0_.resize(N);
    B_.resize(N);
    base_.resize(N);
    std::size_t o = 1 + 2 * N;
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t M = pk.M[i], L = pk.L[i];
      if (R.M[i] != M || R.L[i] != L) throw ConfigError("Q: mixture orders do not match");
      A1_[i].assign(P * M, 0.0);
      A0_[i].assign(P * M, 0.0);
      B_[i].assign(P * L, 0.0);
      for (std::size_t j = 0; j < P; ++j)
        for (std::size_t k = 0; k < M; ++k)
          for (std::size_t l = 0; l < L; ++l) {
            const double a1 = R.a1[i][R.at(i, j, k, l)], a0 = R.a0[i][R.at(i, j, k, l)];
            A1_[i][j * M + k] += a1;
            A0_[i][j * M + k] += a0;
            B_[i][j * L + l] += a1 + a0;
          }
      base_[i] = o;
      o += 2 * (M + L);
    }
  }

  /// Total responsibility carried by the forward (k < M) or reverse component.
  double component_weight(std::size_t i, std::size_t c) const {
    const std::size_t M = pk_.M[i], L = pk_.L[i], P = obs_.n_rounds();
    double s = 0.0;
    for (std::size_t j = 0; j < P; ++j)
      s += c < M ? A1_[i][j * M + c] + A0_[i][j * M + c] : B_[i][j * L + (c - M)];
    return s;
  }
  double attack_weight(std::size_t i) const {
    double s = 0.0;
    for (double a : A1_[i]) s += a;
    return s;
  }
  std::size_t component_index(std::size_t i, std::size_t c) const { return base_[i] + 2 * c; }

  double eval(const Eigen::VectorXd& x, Eigen::VectorXd* g, Eigen::MatrixXd* H) const {
    const std::size_t N = pk_.n_links, P = obs_.n_rounds();
    if (g) g->setZero(x.size());
    if (H) H->setZero(x.size(), x.size());
    double q = 0.0;
    const auto NN = static_cast<Eigen::Index>(N);
    for (std::size_t i = 0; i < N; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const Eigen::Index id = 1 + ii, it = 1 + NN + ii;
      const double delta = x[0], d = x[id], tau = x[it];
      const std::size_t M = pk_.M[i], L = pk_.L[i];
      for (std::size_t c = 0; c < M + L; ++c) {
        const auto ith = static_cast<Eigen::Index>(base_[i] + 2 * c), iph = ith + 1;
        const double ea = std::exp(x[ith]), a = pk_.a_min + ea, lb = x[iph], b = std::exp(lb);
        const double lg = std::lgamma(a);
        const double dg = g || H ? boost::math::digamma(a) : 0.0;
        const double tg = H ? boost::math::trigamma(a) : 0.0;
        for (std::size_t j = 0; j < P; ++j) {
          const auto jj = static_cast<Eigen::Index>(j);
          // Up to two shifted arguments per component: (weight, w, dw/d delta, uses tau).
          struct Arg {
            double weight, w, sdelta;
            bool tau;
          } args[2];
          int na = 0;
          if (c < M) {
            const double u = obs_.u(ii, jj);
            args[na++] = {A1_[i][j * M + c], u - delta - d - tau, -1.0, true};
            args[na++] = {A0_[i][j * M + c], u - delta - d, -1.0, false};
          } else {
            args[na++] = {B_[i][j * L + (c - M)], obs_.v(ii, jj) + delta - d, 1.0, false};
          }
          for (int t = 0; t < na; ++t) {
            const auto& ar = args[t];
            if (ar.weight <= 0.0) continue;
            if (!(ar.w > 0.0)) return kNegInf;
            const double cw = ar.weight, w = ar.w, lw = std::log(w);
            q += cw * ((a - 1.0) * lw - w / b - lg - a * lb);
            if (!g && !H) continue;
            const double gw = (a - 1.0) / w - 1.0 / b;
            const double gt = ea * (lw - dg - lb);
            const double gp = w / b - a;
            // Linear parameters touched by w with their signs.
            Eigen::Index lin[3] = {0, id, it};
            double sg[3] = {ar.sdelta, -1.0, -1.0};
            const int nl = ar.tau ? 3 : 2;
            if (g) {
              for (int r = 0; r < nl; ++r) (*g)[lin[r]] += cw * gw * sg[r];
              (*g)[ith] += cw * gt;
              (*g)[iph] += cw * gp;
            }
            if (H) {
              const double hww = -(a - 1.0) / (w * w);
              const double htt = gt - ea * ea * tg, hpp = -w / b, htp = -ea;
              const double htw = ea / w, hpw = 1.0 / b;
              for (int r = 0; r < nl; ++r) {
                for (int s = 0; s < nl; ++s) (*H)(lin[r], lin[s]) += cw * hww * sg[r] * sg[s];
                (*H)(ith, lin[r]) += cw * htw * sg[r];
                (*H)(lin[r], ith) += cw * htw * sg[r];
                (*H)(iph, lin[r]) += cw * hpw * sg[r];
                (*H)(lin[r], iph) += cw * hpw * sg[r];
              }
              (*H)(ith, ith) += cw * htt;
              (*H)(iph, iph) += cw * hpp;
              (*H)(ith, iph) += cw * htp;
              (*H)(iph, ith) += cw * htp;
            }
          }
        }
      }
    }
    return q;
  }

  /// Largest step along p (full coordinates) keeping every weighted argument positive.
  double max_step(const Eigen::VectorXd& x, const Eigen::VectorXd& p) const {
    const std::size_t N = pk_.n_links, P = obs_.n_rounds();
    const auto NN = static_cast<Eigen::Index>(N);
    double kmax = std::numeric_limits<double>::infinity();
    auto limit = [&](double w, double rate) {
      if (rate < 0.0) kmax = std::min(kmax, w / -rate);
    };
    for (std::size_t i = 0; i < N; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const Eigen::Index id = 1 + ii, it = 1 + NN + ii;
      const std::size_t M = pk_.M[i], L = pk_.L[i];
      for (std::size_t j = 0; j < P; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        double w1 = 0.0, w0 = 0.0, wb = 0.0;
        for (std::size_t k = 0; k < M; ++k) {
          w1 += A1_[i][j * M + k];
          w0 += A0_[i][j * M + k];
        }
        for (std::size_t l = 0; l < L; ++l) wb += B_[i][j * L + l];
        const double u = obs_.u(ii, jj), v = obs_.v(ii, jj);
        if (w1 > 0.0) limit(u - x[0] - x[id] - x[it], -p[0] - p[id] - p[it]);
        if (w0 > 0.0) limit(u - x[0] - x[id], -p[0] - p[id]);
        if (wb > 0.0) limit(v + x[0] - x[id], p[0] - p[id]);
      }
    }
    return kmax;
  }

private:
  const QPacking& pk_;
  const ObservationSet& obs_;
  std::vector<std::vector<double>> A1_, A0_, B_;
  std::vector<std::size_t> base_;
};

}  // namespace

double q_packed(const QPacking& pk, const Eigen::VectorXd& x, const Responsibilities& resp,
                const ObservationSet& obs, Eigen::VectorXd* grad, Eigen::MatrixXd* hess) {
  return QEvaluator(pk, resp, obs).eval(x, grad, hess);
}

double q_function(const Psi& psi, const Responsibilities& resp, const ObservationSet& obs) {
  // Shapes at or below 1 fall outside the packed chart, so evaluate with a_min = 0.
  const QPacking pk = make_packing(psi, 0.0);
  return q_packed(pk, pk.pack(psi), resp, obs, nullptr, nullptr);
}

PsiStepResult m_step_psi(const ThetaPi& theta_g, const Responsibilities& resp,
                         const ObservationSet& obs, const PsiStepOptions& opts) {
  check_dims(theta_g, obs);
  // Fixed mixtures never move through the shape chart, so any positive shape is allowed.
  const QPacking pk = make_packing(theta_g.psi, opts.fix_mixtures ? 0.0 : opts.a_min);
  const QEvaluator qe(pk, resp, obs);
  const Eigen::VectorXd x0 = pk.pack(theta_g.psi);
  const std::size_t N = pk.n_links;

  // Free coordinates: offset and fixed delays always; tau on links that may be attacked;
  // mixture parameters with nonzero responsibility unless fixed.
  std::vector<Eigen::Index> free;
  free.push_back(0);
  for (std::size_t i = 0; i < N; ++i) free.push_back(static_cast<Eigen::Index>(1 + i));
  const double tiny = 1e-12 * static_cast<double>(obs.n_rounds());
  for (std::size_t i = 0; i < N; ++i)
    if (theta_g.pi[static_cast<Eigen::Index>(i)] >= opts.tau_freeze && qe.attack_weight(i) > tiny)
      free.push_back(static_cast<Eigen::Index>(1 + N + i));
  if (!opts.fix_mixtures)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t c = 0; c < pk.M[i] + pk.L[i]; ++c)
        if (qe.component_weight(i, c) > tiny) {
          free.push_back(static_cast<Eigen::Index>(qe.component_index(i, c)));
          free.push_back(static_cast<Eigen::Index>(qe.component_index(i, c) + 1));
        }
  const auto nf = static_cast<Eigen::Index>(free.size());

  auto expand = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd x = x0;
    for (Eigen::Index r = 0; r < nf; ++r) x[free[static_cast<std::size_t>(r)]] = z[r];
    return x;
  };
  NewtonObjective obj;
  obj.eval = [&](const Eigen::VectorXd& z, Eigen::VectorXd& g, Eigen::MatrixXd& H) {
    Eigen::VectorXd gf;
    Eigen::MatrixXd Hf;
    const double q = qe.eval(expand(z), &gf, &Hf);
    g.resize(nf);
    H.resize(nf, nf);
    for (Eigen::Index r = 0; r < nf; ++r) {
      g[r] = gf[free[static_cast<std::size_t>(r)]];
      for (Eigen::Index s = 0; s < nf; ++s)
        H(r, s) = Hf(free[static_cast<std::size_t>(r)], free[static_cast<std::size_t>(s)]);
    }
    return q;
  };
  obj.value = [&](const Eigen::VectorXd& z) { return qe.eval(expand(z), nullptr, nullptr); };
  obj.max_step = [&](const Eigen::VectorXd& z, const Eigen::VectorXd& p) {
    Eigen::VectorXd pf = Eigen::VectorXd::Zero(x0.size());
    for (Eigen::Index r = 0; r < nf; ++r) pf[free[static_cast<std::size_t>(r)]] = p[r];
    // Stay strictly inside: the boundary itself has zero density for shapes above one.
    return 0.995 * qe.max_step(expand(z), pf);
  };

  Eigen::VectorXd z0(nf);
  for (Eigen::Index r = 0; r < nf; ++r) z0[r] = x0[free[static_cast<std::size_t>(r)]];

  PsiStepResult out;
  out.q_before = qe.eval(x0, nullptr, nullptr);
  out.newton = newton_maximize(obj, z0, opts.newton);
  out.q_after = out.newton.value;
  out.psi = pk.unpack(expand(out.newton.x));
  // Frozen entries keep their exact values rather than a round trip through the chart.
  for (std::size_t i = 0; i < N; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (std::find(free.begin(), free.end(), 1 + static_cast<Eigen::Index>(N) + ii) == free.end())
      out.psi.tau[ii] = theta_g.psi.tau[ii];
    for (std::size_t c = 0; c < pk.M[i] + pk.L[i]; ++c)
      if (std::find(free.begin(), free.end(),
                    static_cast<Eigen::Index>(qe.component_index(i, c))) == free.end()) {
        if (c < pk.M[i])
          out.psi.fwd[i][c] = theta_g.psi.fwd[i][c];
        else
          out.psi.rev[i][c - pk.M[i]] = theta_g.psi.rev[i][c - pk.M[i]];
      }
  }
  return out;
}

// ---- iteration -----------------------------------------------------------------------

std::vector<bool> classify_links(const Eigen::VectorXd& pi) {
  std::vector<bool> out(static_cast<std::size_t>(pi.size()));
  for (Eigen::Index i = 0; i < pi.size(); ++i) out[static_cast<std::size_t>(i)] = pi[i] >= 0.5;
  return out;
}

EmResult run_em(const ObservationSet& obs, const ThetaPi& init, const EmOptions& opts) {
  init.validate();
  check_dims(init, obs);
  if (opts.eps && !(*opts.eps > 0.0)) throw ConfigError("run_em: eps must be positive");
  for (std::size_t i = 0; i < init.n_links(); ++i)
    for (const auto* comps : {&init.psi.fwd[i], &init.psi.rev[i]})
      for (const auto& c : *comps)
        if (!opts.psi.fix_mixtures && !(c.shape > opts.psi.a_min))
          throw ConfigError("run_em: initial shape " + std::to_string(c.shape) + " on link " +
                            std::to_string(i) + " must exceed a_min");

  EmResult res;
  res.theta = init;
  EStepResult E = e_step(res.theta, obs);
  const double eps = opts.eps.value_or(std::max(opts.eps_rel * std::abs(E.llf), 1e-300));
  res.trace.push_back({0, E.llf, 0.0, res.theta.pi});

  for (std::size_t it = 1; it <= opts.max_iters; ++it) {
    const double prev = E.llf;
    const ClosedFormUpdate cf = m_step_closed(E.resp);
    res.theta.pi = cf.pi;
    if (!opts.psi.fix_mixtures) {
      res.theta.alpha = cf.alpha;
      res.theta.beta = cf.beta;
    }
    const PsiStepResult ps = m_step_psi(res.theta, E.resp, obs, opts.psi);
    res.theta.psi = ps.psi;
    res.newton_fallbacks += ps.newton.gradient_fallbacks;
    res.line_search_failures += ps.newton.line_search_failed ? 1 : 0;
    E = e_step(res.theta, obs);
    res.iterations = it;
    res.trace.push_back({it, E.llf, ps.newton.grad_norm, res.theta.pi});
    if (std::abs(E.llf - prev) < eps) {
      res.converged = true;
      break;
    }
  }
  res.attacked = classify_links(res.theta.pi);
  return res;
}

void write_trace_csv(std::ostream& os, const std::vector<EmTraceRow>& trace) {
  os << "iter,llf,grad_norm";
  const Eigen::Index N = trace.empty() ? 0 : trace.front().pi.size();
  for (Eigen::Index i = 0; i < N; ++i) os << ",pi_" << (i + 1);
  os << '\n';
  char buf[64];
  for (const auto& r : trace) {
    os << r.iter;
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g", r.llf, r.grad_norm);
    os << buf;
    for (Eigen::Index i = 0; i < r.pi.size(); ++i) {
      std::snprintf(buf, sizeof buf, ",%.17g", r.pi[i]);
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace poe
