#include "poe/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "poe/error.hpp"
#include "poe/rng.hpp"

namespace poe {

std::size_t GroundTruth::n_attacked() const {
  std::size_t n = 0;
  for (int a : attacked) n += a == 1 ? 1 : 0;
  return n;
}

void GroundTruth::validate() const {
  const auto N = d.size();
  if (tau.size() != N || attacked.size() != static_cast<std::size_t>(N))
    throw ConfigError("ground truth: d, tau and attacked must have equal length");
  for (Eigen::Index i = 0; i < N; ++i) {
    const int a = attacked[static_cast<std::size_t>(i)];
    if (a != 0 && a != 1) throw ConfigError("ground truth: attack indicators must be 0 or 1");
    if (a == 0 && tau[i] != 0.0)
      throw ConfigError("ground truth: tau must be 0 on unattacked link " + std::to_string(i));
    if (!(d[i] >= 0.0)) throw ConfigError("ground truth: fixed delays must be nonnegative");
  }
  if (2 * n_attacked() >= static_cast<std::size_t>(N))
    throw ConfigError("ground truth: fewer than half of the links may be attacked");
}

void ObservationSet::validate() const {
  if (u.rows() != v.rows() || u.cols() != v.cols())
    throw ConfigError("observations: u and v shapes differ");
  if (u.rows() == 0 || u.cols() == 0) throw ConfigError("observations: empty");
  if (!u.allFinite() || !v.allFinite()) throw DataError("observations contain non-finite values");
}

ObservationSet ObservationSet::prefix(std::size_t P) const {
  if (P > n_rounds()) throw ConfigError("observations: prefix longer than available rounds");
  const auto p = static_cast<Eigen::Index>(P);
  return ObservationSet{u.leftCols(p), v.leftCols(p)};
}

ObservationSet ObservationSet::rows(const std::vector<std::size_t>& links) const {
  ObservationSet out{Eigen::MatrixXd(static_cast<Eigen::Index>(links.size()), u.cols()),
                     Eigen::MatrixXd(static_cast<Eigen::Index>(links.size()), v.cols())};
  for (std::size_t r = 0; r < links.size(); ++r) {
    if (links[r] >= n_links()) throw ConfigError("observations: link index out of range");
    out.u.row(static_cast<Eigen::Index>(r)) = u.row(static_cast<Eigen::Index>(links[r]));
    out.v.row(static_cast<Eigen::Index>(r)) = v.row(static_cast<Eigen::Index>(links[r]));
  }
  return out;
}

ObservationSet synthesize(const GroundTruth& truth, const Eigen::MatrixXd& fwd_delays,
                          const Eigen::MatrixXd& rev_delays, AttackDirection direction) {
  const auto N = truth.d.size();
  if (truth.tau.size() != N || truth.attacked.size() != static_cast<std::size_t>(N))
    throw ConfigError("synthesize: ground truth vectors differ in length");
  if (fwd_delays.rows() != N || rev_delays.rows() != N ||
      fwd_delays.cols() != rev_delays.cols() || fwd_delays.cols() == 0)
    throw ConfigError("synthesize: delay draws must be N x P for both directions");
  if ((fwd_delays.array() < 0.0).any() || (rev_delays.array() < 0.0).any())
    throw ConfigError("synthesize: queuing delays must be nonnegative");

  ObservationSet obs{fwd_delays, rev_delays};
  for (Eigen::Index i = 0; i < N; ++i) {
    const double attack = truth.attacked[static_cast<std::size_t>(i)] ? truth.tau[i] : 0.0;
    const double fwd_attack = direction == AttackDirection::forward ? attack : 0.0;
    const double rev_attack = direction == AttackDirection::reverse ? attack : 0.0;
    obs.u.row(i).array() += truth.d[i] + truth.delta + fwd_attack;
    obs.v.row(i).array() += truth.d[i] - truth.delta + rev_attack;
  }
  return obs;
}

std::vector<double> draw_attack_magnitudes(std::size_t n_attacked, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x7a0);
  // Equal-length intervals, so the sign is a fair coin and the magnitude is uniform.
  std::uniform_real_distribution<double> mag(0.5e-6, 2.0e-6);
  std::bernoulli_distribution negative(0.5);
  std::vector<double> out(n_attacked);
  for (auto& t : out) {
    const double m = mag(rng);
    t = negative(rng) ? -m : m;
  }
  return out;
}

void write_observations_csv(std::ostream& os, const ObservationSet& obs) {
  os << "link,round,u_s,v_s\n";
  char buf[96];
  for (Eigen::Index i = 0; i < obs.u.rows(); ++i)
    for (Eigen::Index j = 0; j < obs.u.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%td,%td,%.17g,%.17g\n", i, j, obs.u(i, j), obs.v(i, j));
      os << buf;
    }
}

ObservationSet read_observations_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("link,round,u_s,v_s", 0) != 0)
    throw ConfigError("observation CSV must start with header 'link,round,u_s,v_s'");
  std::map<std::pair<long, long>, std::pair<double, double>> cells;
  long max_link = -1, max_round = -1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f[4];
    for (auto& x : f)
      if (!std::getline(ls, x, ',')) throw ConfigError("observation CSV: short row '" + line + "'");
    try {
      const long i = std::stol(f[0]), j = std::stol(f[1]);
      if (i < 0 || j < 0) throw ConfigError("observation CSV: negative index");
      cells[{i, j}] = {std::stod(f[2]), std::stod(f[3])};
      max_link = std::max(max_link, i);
      max_round = std::max(max_round, j);
    } catch (const std::invalid_argument&) {
      throw ConfigError("observation CSV: unparsable row '" + line + "'");
    }
  }
  const long N = max_link + 1, P = max_round + 1;
  if (static_cast<long>(cells.size()) != N * P)
    throw ConfigError("observation CSV: every (link, round) pair must appear exactly once");
  ObservationSet obs{Eigen::MatrixXd(N, P), Eigen::MatrixXd(N, P)};
  for (const auto& [key, val] : cells) {
    obs.u(key.first, key.second) = val.first;
    obs.v(key.first, key.second) = val.second;
  }
  obs.validate();
  return obs;
}

}  // namespace poe
