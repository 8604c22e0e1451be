#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

namespace poe {

/// Which direction of a link the attacker delays.
enum class AttackDirection { forward, reverse };

/// Ground-truth parameters of a multi-master exchange.
struct GroundTruth {
  double delta = 0.0;            ///< slave phase offset (s)
  Eigen::VectorXd d;             ///< fixed path delay per link (s)
  Eigen::VectorXd tau;           ///< attack magnitude per link (s)
  std::vector<int> attacked;     ///< attack indicator per link, 0 or 1

  std::size_t n_links() const { return static_cast<std::size_t>(d.size()); }
  std::size_t n_attacked() const;
  /// Throws ConfigError on inconsistent sizes, indicators outside {0,1}, tau on clean
  /// links, negative d, or an attacked majority (count must stay below N/2).
  void validate() const;
};

/// Forward (u = t2 - t1) and reverse (v = t4 - t3) timestamp differences, N links x P rounds.
struct ObservationSet {
  Eigen::MatrixXd u;
  Eigen::MatrixXd v;

  std::size_t n_links() const { return static_cast<std::size_t>(u.rows()); }
  std::size_t n_rounds() const { return static_cast<std::size_t>(u.cols()); }
  /// Throws ConfigError on shape mismatch and DataError on non-finite entries.
  void validate() const;
  /// The first P rounds of every link.
  ObservationSet prefix(std::size_t P) const;
  /// The selected links, in the given order.
  ObservationSet rows(const std::vector<std::size_t>& links) const;
};

/// u_ij = d_i + delta + w1_ij (+ tau_i if attacked), v_ij = d_i - delta + w2_ij. With
/// AttackDirection::reverse the attack delay is added to v instead.
ObservationSet synthesize(const GroundTruth& truth, const Eigen::MatrixXd& fwd_delays,
                          const Eigen::MatrixXd& rev_delays,
                          AttackDirection direction = AttackDirection::forward);

/// Attack magnitudes uniform on [0.5, 2.0] U [-2.0, -0.5] microseconds, returned in seconds.
std::vector<double> draw_attack_magnitudes(std::size_t n_attacked, std::uint64_t seed);

/// CSV with header `link,round,u_s,v_s`, one row per (link, round).
void write_observations_csv(std::ostream& os, const ObservationSet& obs);
ObservationSet read_observations_csv(std::istream& is);

}  // namespace poe
