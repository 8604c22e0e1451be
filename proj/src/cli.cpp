#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "poe/error.hpp"
#include "poe/harness.hpp"
#include "poe/serialize.hpp"

namespace poe {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  bool verbose = false;
};

ExperimentConfig read_config(const Common& c) {
  if (!fs::exists(c.config)) throw ConfigError("--config: file '" + c.config + "' not found");
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

fs::path out_dir(const Common& c) {
  fs::path p(c.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ConfigError("--out: cannot create directory '" + c.out + "': " + ec.message());
  return p;
}

void print_summary(const ResultTable& rt) {
  for (const auto& r : rt) {
    std::printf("%-13s P=%-4zu rmse=%.4g us  bias=%+.4g us  std=%.4g us  ok=%zu failed=%zu", to_string(r.approach).c_str(),
                r.P, r.rmse_s * 1e6, r.bias_s * 1e6, r.std_s * 1e6, r.n_trials, r.n_failed);
    if (r.classification_accuracy) std::printf("  id=%.3f", *r.classification_accuracy);
    std::printf("\n");
  }
}

void write_traces(const fs::path& dir, const ExperimentResult& res) {
  for (std::size_t t = 0; t < res.trials.size(); ++t) {
    if (res.trials[t].em_trace.empty()) continue;
    std::ofstream os(dir / ("em_trace_" + std::to_string(t) + ".csv"));
    write_trace_csv(os, res.trials[t].em_trace);
  }
}

void report_failures(const ExperimentResult& res, bool verbose) {
  std::size_t n = 0;
  for (const auto& t : res.trials) n += t.failures.size();
  if (n == 0) return;
  std::fprintf(stderr, "warning: %zu estimator failures across trials\n", n);
  if (!verbose) return;
  for (std::size_t t = 0; t < res.trials.size(); ++t)
    for (const auto& f : res.trials[t].failures) std::fprintf(stderr, "  trial %zu: %s\n", t, f.c_str());
}

int cmd_simulate(const Common& c, std::optional<std::size_t> n_samples) {
  const ExperimentConfig cfg = read_config(c);
  if (cfg.source == DelaySource::synthetic)
    throw ConfigError("traffic_model: simulate-delays needs TM1 or TM2");
  const fs::path dir = out_dir(c);
  const std::size_t n = n_samples.value_or(cfg.pool_size);
  const DelayEmpirics e = simulate_cascade(cfg.traffic, n, cfg.seed);
  char name[64];
  std::snprintf(name, sizeof name, "delays_%s_%.2f.csv", cfg.model_name().c_str(), cfg.load());
  std::ofstream os(dir / name);
  write_delays_csv(os, e);
  if (!os) throw std::runtime_error("write to " + (dir / name).string() + " failed");
  std::size_t zeros = 0;
  for (double x : e.samples) zeros += x == 0.0 ? 1 : 0;
  std::printf("%s: n=%zu mean=%.4g us std=%.4g us P(w=0)=%.4f -> %s\n", e.provenance.c_str(), n,
              e.mean * 1e6, std::sqrt(e.variance) * 1e6,
              static_cast<double>(zeros) / static_cast<double>(n), (dir / name).string().c_str());
  return 0;
}

int cmd_run(const Common& c, bool genie_only) {
  ExperimentConfig cfg = read_config(c);
  if (genie_only) {
    if (cfg.n_attacked >= cfg.N) throw NoCleanLinkError("bound: no clean link, every link is attacked");
    cfg.approaches = {Approach::genie};
  }
  const fs::path dir = out_dir(c);
  const ScenarioContext ctx = prepare_context(cfg, dir);
  if (c.verbose)
    std::fprintf(stderr, "pool: %zu samples, mean %.4g us; reference mixture with %zu components\n",
                 ctx.pool.samples.size(), ctx.pool.mean * 1e6, ctx.reference.weights.size());
  const ExperimentResult res = run_experiment(cfg, ctx);
  emit_table(res.table, dir / "results.csv");
  if (c.verbose) write_traces(dir, res);
  report_failures(res, c.verbose);
  print_summary(res.table);
  return 0;
}

int cmd_classify(const Common& c, const std::string& observations) {
  const ExperimentConfig cfg = read_config(c);
  if (observations.empty()) throw ConfigError("--observations: required for classify");
  std::ifstream in(observations);
  if (!in) throw ConfigError("--observations: cannot open '" + observations + "'");
  const ObservationSet obs = read_observations_csv(in);
  if (obs.n_links() != cfg.N)
    throw ConfigError("N: config has " + std::to_string(cfg.N) + " links, observations have " +
                      std::to_string(obs.n_links()));
  ExperimentConfig pcfg = cfg;
  pcfg.P_grid = {obs.n_rounds()};
  pcfg.pool_size = std::max(pcfg.pool_size, obs.n_rounds());
  const fs::path dir = out_dir(c);
  const ScenarioContext ctx = prepare_context(pcfg, dir);
  std::vector<LinkPrior> priors(cfg.N);
  for (std::size_t i = 0; i < cfg.N; ++i)
    priors[i] = LinkPrior{ctx.pool.mean, ctx.pool.variance, ctx.pool.mean, ctx.pool.variance,
                          ctx.osm[0], cfg.M[i], cfg.L[i]};
  const InitResult init = initialize(obs, priors, cfg.init);
  if (init.warning) std::fprintf(stderr, "warning: %s\n", init.warning->c_str());
  const EmResult r = run_em(obs, init.theta, cfg.em);
  {
    std::ofstream os(dir / "classification.csv");
    os << "link,pi_hat,attacked\n";
    for (std::size_t i = 0; i < cfg.N; ++i) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", r.theta.pi[static_cast<Eigen::Index>(i)]);
      os << i << ',' << buf << ',' << (r.attacked[i] ? 1 : 0) << '\n';
    }
  }
  {
    std::ofstream os(dir / "theta_hat.json");
    os << nlohmann::json(r.theta).dump(2) << '\n';
  }
  if (c.verbose) {
    std::ofstream os(dir / "em_trace_0.csv");
    write_trace_csv(os, r.trace);
  }
  double delta_hat = std::nan("");
  try {
    delta_hat = fuse_estimate(fusion_problem_from_theta(obs, r.theta, r.attacked, cfg.quadrature)).delta_hat;
  } catch (const NoCleanLinkError&) {
  }
  std::printf("em: %zu iterations%s, attacked =", r.iterations, r.converged ? "" : " (not converged)");
  for (std::size_t i = 0; i < cfg.N; ++i)
    if (r.attacked[i]) std::printf(" %zu", i);
  std::printf("; delta_hat = %.6g us\n", delta_hat * 1e6);
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Clock-offset estimation over multiple masters under delay attacks"};
  app.require_subcommand(1);
  Common c;
  std::optional<std::size_t> n_samples;
  std::string observations;
  auto add_common = [&](CLI::App* s) {
    s->add_option("--config", c.config, "JSON experiment config")->required();
    s->add_option("--seed", c.seed, "overrides the config seed");
    s->add_option("--out", c.out, "output directory")->capture_default_str();
    s->add_flag("--verbose", c.verbose, "dump EM traces and per-trial failures");
  };
  auto* sim = app.add_subcommand("simulate-delays", "simulate the switch cascade to a delay CSV");
  add_common(sim);
  sim->add_option("--n-samples", n_samples, "number of delays (default pool_size)");
  auto* run = app.add_subcommand("run", "Monte Carlo comparison of all configured approaches");
  add_common(run);
  auto* bound = app.add_subcommand("bound", "genie estimator only");
  add_common(bound);
  auto* cls = app.add_subcommand("classify", "EM classification of an observation CSV");
  add_common(cls);
  cls->add_option("--observations", observations, "CSV with link,round,u_s,v_s");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    if (sim->parsed()) return cmd_simulate(c, n_samples);
    if (run->parsed()) return cmd_run(c, false);
    if (bound->parsed()) return cmd_run(c, true);
    return cmd_classify(c, observations);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

}  // namespace poe
