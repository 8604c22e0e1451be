#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace poe {

struct PacketClass {
  double size_bytes = 0.0;
  double fraction = 0.0;
};

/// Background cross traffic on a cascade of store-and-forward switches.
struct TrafficScenario {
  std::size_t n_switches = 10;
  double capacity_bps = 1e9;
  std::vector<PacketClass> packet_mix;
  double load = 0.2;
  double sync_bytes = 90.0;

  void validate() const;
  double mean_service_time() const;
  /// Background packet arrival rate (packets/s) giving `load` of capacity.
  double arrival_rate() const;
  std::string describe() const;

  /// ITU-T G.8261 traffic models.
  static TrafficScenario tm1(double load, std::size_t n_switches = 10);
  static TrafficScenario tm2(double load, std::size_t n_switches = 10);
};

/// Queuing-delay samples and their sample moments.
struct DelayEmpirics {
  std::vector<double> samples;
  double mean = 0.0;
  double variance = 0.0;
  std::string provenance;
  /// Row-major n_samples x n_switches waiting times; empty unless requested.
  std::vector<double> per_switch;
  std::size_t n_switches = 0;

  static DelayEmpirics from_samples(std::vector<double> samples, std::string provenance = {});
};

/// Moments of the sorted P-vectors of forward/reverse queuing delays.
struct OrderStatMoments {
  std::size_t P = 0;
  Eigen::VectorXd mu1, mu2;
  Eigen::MatrixXd S1, S2, S12;
};

struct CascadeOptions {
  bool record_per_switch = false;
  /// Mean gap between probe arrivals, in units of the queue relaxation time.
  double probe_spacing = 5.0;
  /// Warm-up length, in units of the queue relaxation time.
  double warmup = 20.0;
};

/// End-to-end queuing delay of a sync packet crossing the cascade. Each switch runs an
/// independent queue fed by Poisson background arrivals; the sync packet waits behind
/// whatever work is queued or in transmission when it arrives and never preempts.
DelayEmpirics simulate_cascade(const TrafficScenario& scenario, std::size_t n_samples,
                               std::uint64_t seed, const CascadeOptions& opts = {});

/// Background packet sizes drawn from the scenario's mix (bytes).
std::vector<double> draw_packet_sizes(const TrafficScenario& scenario, std::size_t n,
                                      std::uint64_t seed);

/// Bootstrap estimate of sorted-delay moments for P rounds.
OrderStatMoments order_statistic_moments(const DelayEmpirics& fwd, const DelayEmpirics& rev,
                                         std::size_t P, std::size_t n_mc, std::uint64_t seed);

void write_delays_csv(std::ostream& os, const DelayEmpirics& e);
DelayEmpirics read_delays_csv(std::istream& is, std::string provenance = {});

}  // namespace poe
