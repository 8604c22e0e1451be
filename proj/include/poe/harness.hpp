#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "poe/delay_sim.hpp"
#include "poe/em.hpp"
#include "poe/fusion.hpp"
#include "poe/scenario.hpp"

namespace poe {

enum class Approach { genie, em_minimax_1, em_minimax_2, fta, median };

std::string to_string(Approach a);
Approach approach_from_string(const std::string& s);

/// Where queuing delays come from: the switch-cascade simulator under a G.8261 mix, or
/// i.i.d. draws from a known Gamma mixture.
enum class DelaySource { tm1, tm2, synthetic };

struct ExperimentConfig {
  DelaySource source = DelaySource::tm1;
  TrafficScenario traffic = TrafficScenario::tm1(0.2);
  GammaMixture synthetic;  ///< delay law when source == synthetic (seconds)
  std::size_t N = 3;
  std::size_t n_attacked = 1;
  std::vector<std::size_t> P_grid{10, 25, 50};
  std::size_t n_trials = 100;
  std::uint64_t seed = 1;
  double d_lo = 50e-6, d_hi = 150e-6;
  std::optional<double> delta_true;  ///< nullopt: uniform on [-10, 10] us per trial
  std::vector<std::size_t> M, L;     ///< mixture orders per link
  std::vector<Approach> approaches{Approach::genie, Approach::em_minimax_1,
                                   Approach::em_minimax_2, Approach::fta, Approach::median};
  AttackDirection direction = AttackDirection::forward;
  std::size_t pool_size = 200000;
  std::size_t n_mc = 20000;
  std::size_t reference_fit_rounds = 4000;
  QuadratureSpec quadrature;
  EmOptions em;
  InitOptions init;

  std::string model_name() const;
  double load() const { return source == DelaySource::synthetic ? 0.0 : traffic.load; }
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Reads the JSON config schema documented in README.md; values in microseconds where the
/// key carries a `_us` suffix.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct ResultRow {
  Approach approach = Approach::genie;
  std::size_t P = 0;
  double load = 0.0;
  std::string traffic_model;
  double rmse_s = 0.0, std_s = 0.0, bias_s = 0.0;
  std::size_t n_trials = 0;  ///< trials that produced an estimate
  std::optional<double> classification_accuracy;
  std::size_t n_failed = 0;  ///< not part of the CSV schema
};

using ResultTable = std::vector<ResultRow>;

/// Sorted by (approach name, P); 9 columns with a header row.
void emit_table(const ResultTable& rt, std::ostream& os);
void emit_table(const ResultTable& rt, const std::filesystem::path& path);
ResultTable read_table(std::istream& is);

/// Delay pool and the derived quantities every trial of a scenario shares.
struct ScenarioContext {
  DelayEmpirics pool;
  GammaMixture reference;  ///< "true" delay pdf given to the genie and EM-minimax-I
  std::vector<OrderStatMoments> osm;  ///< one per entry of P_grid
};

/// Simulates (or reads from `cache_dir`, when given) the delay pool, fits the reference
/// mixture and bootstraps the sorted-delay moments.
ScenarioContext prepare_context(const ExperimentConfig& cfg,
                                const std::optional<std::filesystem::path>& cache_dir = {});

/// Maximum-likelihood fit of a shifted M-component mixture to i.i.d. delay samples, with the
/// shift absorbed into the returned components.
GammaMixture fit_reference_mixture(const std::vector<double>& samples, std::size_t M,
                                   std::size_t rounds, std::uint64_t seed,
                                   const EmOptions& em = {});

struct TrialRecord {
  GroundTruth truth;
  /// [P index][approach index] estimation error, nullopt on failure.
  std::vector<std::vector<std::optional<double>>> error;
  /// [P index][approach index] exact identification of the attacked set (EM approaches).
  std::vector<std::vector<std::optional<bool>>> identified;
  std::vector<std::string> failures;
  std::vector<EmTraceRow> em_trace;  ///< EM-minimax-II trace at the largest P
};

TrialRecord run_trial(const ExperimentConfig& cfg, const ScenarioContext& ctx, std::size_t trial);

struct ExperimentResult {
  ResultTable table;
  std::vector<TrialRecord> trials;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ScenarioContext& ctx);
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Fusion over the links `attacked` marks clean, with the mixtures of `theta`.
FusionProblem fusion_problem_from_theta(const ObservationSet& obs, const ThetaPi& theta,
                                        const std::vector<bool>& attacked,
                                        const QuadratureSpec& q = {});

/// Command-line entry point; returns the process exit code.
int cli_main(int argc, char** argv);

}  // namespace poe
