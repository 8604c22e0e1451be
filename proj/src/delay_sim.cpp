#include "poe/delay_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "poe/error.hpp"
#include "poe/rng.hpp"

namespace poe {

void TrafficScenario::validate() const {
  if (n_switches < 1) throw ConfigError("n_switches must be at least 1");
  if (!(capacity_bps > 0.0)) throw ConfigError("capacity_bps must be positive");
  if (!(sync_bytes > 0.0)) throw ConfigError("sync_bytes must be positive");
  if (!(load >= 0.0)) throw ConfigError("load must be nonnegative");
  if (load >= 1.0) throw UnstableQueueError("load must be below 1 for a stable queue");
  if (packet_mix.empty()) throw ConfigError("packet_mix is empty");
  double total = 0.0;
  for (const auto& c : packet_mix) {
    if (!(c.size_bytes > 0.0)) throw ConfigError("packet_mix: sizes must be positive");
    if (!(c.fraction >= 0.0)) throw ConfigError("packet_mix: fractions must be nonnegative");
    total += c.fraction;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("packet_mix: fractions must sum to 1");
}

double TrafficScenario::mean_service_time() const {
  double bytes = 0.0;
  for (const auto& c : packet_mix) bytes += c.fraction * c.size_bytes;
  return 8.0 * bytes / capacity_bps;
}

double TrafficScenario::arrival_rate() const { return load / mean_service_time(); }

std::string TrafficScenario::describe() const {
  std::ostringstream os;
  os << "switches=" << n_switches << " capacity_bps=" << capacity_bps << " load=" << load
     << " mix={";
  for (std::size_t i = 0; i < packet_mix.size(); ++i)
    os << (i ? "," : "") << packet_mix[i].size_bytes << ":" << packet_mix[i].fraction;
  os << "}";
  return os.str();
}

TrafficScenario TrafficScenario::tm1(double load, std::size_t n_switches) {
  return TrafficScenario{n_switches, 1e9, {{64, 0.80}, {576, 0.05}, {1518, 0.15}}, load, 90.0};
}

TrafficScenario TrafficScenario::tm2(double load, std::size_t n_switches) {
  return TrafficScenario{n_switches, 1e9, {{64, 0.30}, {576, 0.10}, {1518, 0.60}}, load, 90.0};
}

DelayEmpirics DelayEmpirics::from_samples(std::vector<double> samples, std::string provenance) {
  DelayEmpirics e;
  e.samples = std::move(samples);
  e.provenance = std::move(provenance);
  const double n = static_cast<double>(e.samples.size());
  if (e.samples.empty()) return e;
  double sum = 0.0;
  for (double x : e.samples) sum += x;
  e.mean = sum / n;
  double ss = 0.0;
  for (double x : e.samples) ss += (x - e.mean) * (x - e.mean);
  e.variance = e.samples.size() > 1 ? ss / (n - 1.0) : 0.0;
  return e;
}

namespace {

std::discrete_distribution<std::size_t> size_distribution(const TrafficScenario& s) {
  std::vector<double> w;
  for (const auto& c : s.packet_mix) w.push_back(c.fraction);
  return std::discrete_distribution<std::size_t>(w.begin(), w.end());
}

// Workload process of one switch output port, advanced lazily to probe times.
class SwitchQueue {
public:
  SwitchQueue(const TrafficScenario& s, Rng rng)
      : rng_(std::move(rng)), interarrival_(s.arrival_rate()), sizes_(size_distribution(s)) {
    for (const auto& c : s.packet_mix) service_.push_back(8.0 * c.size_bytes / s.capacity_bps);
    next_arrival_ = interarrival_(rng_);
  }

  /// Unfinished background work at time t (t nondecreasing across calls).
  double workload_at(double t) {
    while (next_arrival_ <= t) {
      workload_ = std::max(0.0, workload_ - (next_arrival_ - now_));
      now_ = next_arrival_;
      workload_ += service_[sizes_(rng_)];
      next_arrival_ += interarrival_(rng_);
    }
    workload_ = std::max(0.0, workload_ - (t - now_));
    now_ = t;
    return workload_;
  }

private:
  Rng rng_;
  std::exponential_distribution<double> interarrival_;
  std::discrete_distribution<std::size_t> sizes_;
  std::vector<double> service_;
  double now_ = 0.0;
  double workload_ = 0.0;
  double next_arrival_ = 0.0;
};

double relaxation_time(const TrafficScenario& s) {
  double m1 = 0.0, m2 = 0.0;
  for (const auto& c : s.packet_mix) {
    const double x = 8.0 * c.size_bytes / s.capacity_bps;
    m1 += c.fraction * x;
    m2 += c.fraction * x * x;
  }
  const double slack = 1.0 - s.load;
  return (m2 / m1) / (slack * slack);
}

}  // namespace

DelayEmpirics simulate_cascade(const TrafficScenario& scenario, std::size_t n_samples,
                               std::uint64_t seed, const CascadeOptions& opts) {
  scenario.validate();
  if (n_samples < 1) throw ConfigError("simulate_cascade: n_samples must be at least 1");

  const std::size_t ns = scenario.n_switches;
  std::vector<double> per_switch(n_samples * ns, 0.0);

  if (scenario.load > 0.0) {
    const double relax = relaxation_time(scenario);
    // Switches are independent; each owns its RNG substream and its column of per_switch.
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t s = 0; s < ns; ++s) {
      SwitchQueue queue(scenario, make_rng(seed, 0x5157, s));
      Rng probe_rng = make_rng(seed, 0x9807, s);
      std::exponential_distribution<double> gap(1.0 / (opts.probe_spacing * relax));
      double t = opts.warmup * relax;
      for (std::size_t i = 0; i < n_samples; ++i) {
        t += gap(probe_rng);
        per_switch[i * ns + s] = queue.workload_at(t);
      }
    }
  }

  std::vector<double> total(n_samples, 0.0);
  for (std::size_t i = 0; i < n_samples; ++i) {
    double acc = 0.0;
    for (std::size_t s = 0; s < ns; ++s) acc += per_switch[i * ns + s];
    total[i] = acc;
  }

  std::ostringstream prov;
  prov << scenario.describe() << " seed=" << seed;
  auto e = DelayEmpirics::from_samples(std::move(total), prov.str());
  if (opts.record_per_switch) {
    e.per_switch = std::move(per_switch);
    e.n_switches = ns;
  }
  return e;
}

std::vector<double> draw_packet_sizes(const TrafficScenario& scenario, std::size_t n,
                                      std::uint64_t seed) {
  scenario.validate();
  auto dist = size_distribution(scenario);
  Rng rng = make_rng(seed, 0x512e);
  std::vector<double> out(n);
  for (auto& x : out) x = scenario.packet_mix[dist(rng)].size_bytes;
  return out;
}

OrderStatMoments order_statistic_moments(const DelayEmpirics& fwd, const DelayEmpirics& rev,
                                         std::size_t P, std::size_t n_mc, std::uint64_t seed) {
  if (P == 0) throw ConfigError("order_statistic_moments: P must be positive");
  if (n_mc < 1000) throw ConfigError("order_statistic_moments: n_mc must be at least 1000");
  if (fwd.samples.size() < P || rev.samples.size() < P)
    throw ConfigError("order_statistic_moments: fewer samples than P");

  const Eigen::Index p = static_cast<Eigen::Index>(P);
  Eigen::MatrixXd draws1(p, static_cast<Eigen::Index>(n_mc));
  Eigen::MatrixXd draws2(p, static_cast<Eigen::Index>(n_mc));
  Rng rng1 = make_rng(seed, 0x0517, 1);
  Rng rng2 = make_rng(seed, 0x0517, 2);
  std::uniform_int_distribution<std::size_t> pick1(0, fwd.samples.size() - 1);
  std::uniform_int_distribution<std::size_t> pick2(0, rev.samples.size() - 1);
  std::vector<double> buf(P);
  for (std::size_t r = 0; r < n_mc; ++r) {
    for (auto& x : buf) x = fwd.samples[pick1(rng1)];
    std::sort(buf.begin(), buf.end());
    for (Eigen::Index k = 0; k < p; ++k) draws1(k, static_cast<Eigen::Index>(r)) = buf[k];
    for (auto& x : buf) x = rev.samples[pick2(rng2)];
    std::sort(buf.begin(), buf.end());
    for (Eigen::Index k = 0; k < p; ++k) draws2(k, static_cast<Eigen::Index>(r)) = buf[k];
  }

  OrderStatMoments m;
  m.P = P;
  m.mu1 = draws1.rowwise().mean();
  m.mu2 = draws2.rowwise().mean();
  const Eigen::MatrixXd c1 = draws1.colwise() - m.mu1;
  const Eigen::MatrixXd c2 = draws2.colwise() - m.mu2;
  const double denom = static_cast<double>(n_mc - 1);
  m.S1 = c1 * c1.transpose() / denom;
  m.S2 = c2 * c2.transpose() / denom;
  m.S12 = c1 * c2.transpose() / denom;
  return m;
}

void write_delays_csv(std::ostream& os, const DelayEmpirics& e) {
  os << "delay_s\n";
  char buf[32];
  for (double x : e.samples) {
    std::snprintf(buf, sizeof buf, "%.17g\n", x);
    os << buf;
  }
}

DelayEmpirics read_delays_csv(std::istream& is, std::string provenance) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("delay_s", 0) != 0)
    throw ConfigError("delay CSV must start with header 'delay_s'");
  std::vector<double> samples;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      samples.push_back(std::stod(line));
    } catch (const std::exception&) {
      throw ConfigError("delay CSV: unparsable value '" + line + "'");
    }
  }
  return DelayEmpirics::from_samples(std::move(samples), std::move(provenance));
}

}  // namespace poe
