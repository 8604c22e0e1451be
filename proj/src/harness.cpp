#include "poe/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "parallel.hpp"
#include "poe/baselines.hpp"
#include "poe/error.hpp"
#include "poe/rng.hpp"
#include "poe/serialize.hpp"

namespace poe {

namespace {

const std::vector<std::pair<Approach, std::string>>& approach_names() {
  static const std::vector<std::pair<Approach, std::string>> names{
      {Approach::em_minimax_1, "em_minimax_1"},
      {Approach::em_minimax_2, "em_minimax_2"},
      {Approach::fta, "fta"},
      {Approach::genie, "genie"},
      {Approach::median, "median"}};
  return names;
}

bool is_em(Approach a) { return a == Approach::em_minimax_1 || a == Approach::em_minimax_2; }

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

}  // namespace

std::string to_string(Approach a) {
  for (const auto& [k, v] : approach_names())
    if (k == a) return v;
  return "unknown";
}

Approach approach_from_string(const std::string& s) {
  for (const auto& [k, v] : approach_names())
    if (v == s) return k;
  throw ConfigError("approaches: unknown approach '" + s + "'");
}

std::string ExperimentConfig::model_name() const {
  switch (source) {
    case DelaySource::tm1: return "TM1";
    case DelaySource::tm2: return "TM2";
    case DelaySource::synthetic: return "synthetic";
  }
  return "unknown";
}

void ExperimentConfig::validate() const {
  if (N < 1) throw ConfigError("N: at least one link required");
  if (n_attacked >= N) throw NoCleanLinkError("n_attacked: no clean link, every link is attacked");
  if (2 * n_attacked >= N)
    throw ConfigError("n_attacked: " + std::to_string(n_attacked) +
                      " attacked links is not below N/2 for N=" + std::to_string(N));
  if (P_grid.empty()) throw ConfigError("P_grid: must not be empty");
  for (auto P : P_grid)
    if (P < 1) throw ConfigError("P_grid: round counts must be positive");
  if (n_trials < 1) throw ConfigError("n_trials: must be at least 1");
  if (!(d_lo >= 0.0 && d_hi >= d_lo)) throw ConfigError("d_range_us: need 0 <= lo <= hi");
  if (M.size() != N || L.size() != N)
    throw ConfigError("mixture_orders: one forward and one reverse order per link required");
  for (std::size_t i = 0; i < N; ++i)
    if (M[i] < 1 || L[i] < 1) throw ConfigError("mixture_orders: orders must be >= 1");
  if (approaches.empty()) throw ConfigError("approaches: must not be empty");
  if (source == DelaySource::synthetic)
    synthetic.validate();
  else
    traffic.validate();
  const auto Pmax = *std::max_element(P_grid.begin(), P_grid.end());
  if (pool_size < Pmax) throw ConfigError("pool_size: smaller than the largest P");
  if (n_mc < 1000) throw ConfigError("n_mc: must be at least 1000");
  if (reference_fit_rounds < 10) throw ConfigError("reference_fit_rounds: must be at least 10");
  FusionProblem probe;
  probe.quadrature = quadrature;
  probe.links.push_back(FusionLink{0, {0.0}, {0.0}, GammaMixture::single(1, 1),
                                   GammaMixture::single(1, 1), false});
  probe.validate();
}

// ---- config --------------------------------------------------------------------------

namespace {

using nlohmann::json;

template <class T>
T field(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

std::vector<std::size_t> orders(const json& j, const char* key, std::size_t N) {
  if (!j.contains(key)) return std::vector<std::size_t>(N, 1);
  const auto& v = j.at(key);
  try {
    if (v.is_number_integer()) return std::vector<std::size_t>(N, v.get<std::size_t>());
    return v.get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("mixture_orders.") + key + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  static const std::set<std::string> known{
      "traffic_model", "load", "n_switches", "capacity_bps", "sync_bytes", "packet_mix",
      "synthetic", "N", "n_attacked", "P_grid", "n_trials", "seed", "d_range_us",
      "delta_true_us", "mixture_orders", "approaches", "attack_direction", "pool_size",
      "n_mc", "reference_fit_rounds", "quadrature", "em"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("config: unknown key '" + k + "'");

  ExperimentConfig c;
  const auto model = field<std::string>(j, "traffic_model", "TM1");
  const double load = field<double>(j, "load", 0.2);
  if (model == "TM1") {
    c.source = DelaySource::tm1;
    c.traffic = TrafficScenario::tm1(load);
  } else if (model == "TM2") {
    c.source = DelaySource::tm2;
    c.traffic = TrafficScenario::tm2(load);
  } else if (model == "synthetic") {
    c.source = DelaySource::synthetic;
    if (!j.contains("synthetic")) throw ConfigError("synthetic: required for traffic_model synthetic");
    const auto& s = j.at("synthetic");
    GammaMixture m;
    m.weights = field<std::vector<double>>(s, "weights", {});
    const auto shapes = field<std::vector<double>>(s, "shapes", {});
    const auto scales = field<std::vector<double>>(s, "scales_us", {});
    if (shapes.size() != m.weights.size() || scales.size() != m.weights.size())
      throw ConfigError("synthetic: weights, shapes and scales_us must have equal length");
    for (std::size_t k = 0; k < shapes.size(); ++k) m.components.push_back({shapes[k], scales[k] * 1e-6});
    c.synthetic = m;
  } else {
    throw ConfigError("traffic_model: expected TM1, TM2 or synthetic, got '" + model + "'");
  }
  c.traffic.n_switches = field<std::size_t>(j, "n_switches", c.traffic.n_switches);
  c.traffic.capacity_bps = field<double>(j, "capacity_bps", c.traffic.capacity_bps);
  c.traffic.sync_bytes = field<double>(j, "sync_bytes", c.traffic.sync_bytes);
  if (j.contains("packet_mix")) {
    c.traffic.packet_mix.clear();
    for (const auto& p : j.at("packet_mix"))
      c.traffic.packet_mix.push_back(
          {field<double>(p, "size_bytes", 0.0), field<double>(p, "fraction", 0.0)});
  }

  c.N = field<std::size_t>(j, "N", c.N);
  c.n_attacked = field<std::size_t>(j, "n_attacked", c.n_attacked);
  c.P_grid = field<std::vector<std::size_t>>(j, "P_grid", c.P_grid);
  c.n_trials = field<std::size_t>(j, "n_trials", c.n_trials);
  c.seed = field<std::uint64_t>(j, "seed", c.seed);
  const auto dr = field<std::vector<double>>(j, "d_range_us", {c.d_lo * 1e6, c.d_hi * 1e6});
  if (dr.size() != 2) throw ConfigError("d_range_us: expected [lo, hi]");
  c.d_lo = dr[0] * 1e-6;
  c.d_hi = dr[1] * 1e-6;
  if (j.contains("delta_true_us")) {
    const auto& d = j.at("delta_true_us");
    if (d.is_string()) {
      if (d.get<std::string>() != "draw")
        throw ConfigError("delta_true_us: expected a number or \"draw\"");
    } else {
      c.delta_true = field<double>(j, "delta_true_us", 0.0) * 1e-6;
    }
  }
  const json mo = j.value("mixture_orders", json::object());
  c.M = orders(mo, "M", c.N);
  c.L = orders(mo, "L", c.N);
  if (j.contains("approaches")) {
    c.approaches.clear();
    for (const auto& s : field<std::vector<std::string>>(j, "approaches", {}))
      c.approaches.push_back(approach_from_string(s));
  }
  const auto dir = field<std::string>(j, "attack_direction", "forward");
  if (dir == "forward")
    c.direction = AttackDirection::forward;
  else if (dir == "reverse")
    c.direction = AttackDirection::reverse;
  else
    throw ConfigError("attack_direction: expected forward or reverse");
  c.pool_size = field<std::size_t>(j, "pool_size", c.pool_size);
  c.n_mc = field<std::size_t>(j, "n_mc", c.n_mc);
  c.reference_fit_rounds = field<std::size_t>(j, "reference_fit_rounds", c.reference_fit_rounds);
  if (j.contains("quadrature")) {
    try {
      c.quadrature = j.at("quadrature").get<QuadratureSpec>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("quadrature: ") + e.what());
    }
  }
  if (j.contains("em")) {
    const auto& e = j.at("em");
    c.em.eps_rel = field<double>(e, "eps_rel", c.em.eps_rel);
    c.em.max_iters = field<std::size_t>(e, "max_iters", c.em.max_iters);
    c.em.psi.a_min = field<double>(e, "a_min", c.em.psi.a_min);
    c.em.psi.newton.max_iters = field<std::size_t>(e, "newton_max_iters", c.em.psi.newton.max_iters);
    c.em.psi.newton.grad_tol = field<double>(e, "grad_tol", c.em.psi.newton.grad_tol);
    c.init.a_min = c.em.psi.a_min;
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

// ---- tables --------------------------------------------------------------------------

void emit_table(const ResultTable& rt, std::ostream& os) {
  ResultTable rows = rt;
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    const auto na = to_string(a.approach), nb = to_string(b.approach);
    return na != nb ? na < nb : a.P < b.P;
  });
  os << "approach,P,load,traffic_model,rmse_s,std_s,bias_s,n_trials,classification_accuracy\n";
  for (const auto& r : rows) {
    os << to_string(r.approach) << ',' << r.P << ',' << fmt("%.6g", r.load) << ','
       << r.traffic_model << ',' << fmt("%.17g", r.rmse_s) << ',' << fmt("%.17g", r.std_s) << ','
       << fmt("%.17g", r.bias_s) << ',' << r.n_trials << ',';
    if (r.classification_accuracy) os << fmt("%.17g", *r.classification_accuracy);
    os << '\n';
  }
}

void emit_table(const ResultTable& rt, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("output: cannot write '" + path.string() + "'");
  emit_table(rt, out);
  if (!out) throw std::runtime_error("output: write to '" + path.string() + "' failed");
}

ResultTable read_table(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("approach,P,", 0) != 0)
    throw ConfigError("result table: missing header");
  ResultTable rt;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 9) throw ConfigError("result table: expected 9 columns in '" + line + "'");
    ResultRow r;
    r.approach = approach_from_string(f[0]);
    r.P = std::stoul(f[1]);
    r.load = std::stod(f[2]);
    r.traffic_model = f[3];
    r.rmse_s = std::stod(f[4]);
    r.std_s = std::stod(f[5]);
    r.bias_s = std::stod(f[6]);
    r.n_trials = std::stoul(f[7]);
    if (!f[8].empty()) r.classification_accuracy = std::stod(f[8]);
    rt.push_back(r);
  }
  return rt;
}

// ---- scenario context ----------------------------------------------------------------

namespace {

std::vector<double> draw_mixture(const GammaMixture& m, std::size_t n, Rng& rng) {
  std::discrete_distribution<std::size_t> pick(m.weights.begin(), m.weights.end());
  std::vector<std::gamma_distribution<double>> comps;
  for (const auto& c : m.components) comps.emplace_back(c.shape, c.scale);
  std::vector<double> out(n);
  for (auto& x : out) x = comps[pick(rng)](rng);
  return out;
}

constexpr std::uint64_t kPoolSeed = 0x5eed0001;

}  // namespace

GammaMixture fit_reference_mixture(const std::vector<double>& samples, std::size_t M,
                                   std::size_t rounds, std::uint64_t seed, const EmOptions& em) {
  if (samples.size() < 2) throw ConfigError("reference fit: need at least two samples");
  Rng rng = make_rng(seed, 0xf17);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  ObservationSet obs{Eigen::MatrixXd(1, static_cast<Eigen::Index>(rounds)),
                     Eigen::MatrixXd(1, static_cast<Eigen::Index>(rounds))};
  for (Eigen::Index j = 0; j < obs.u.cols(); ++j) {
    obs.u(0, j) = samples[pick(rng)];
    obs.v(0, j) = samples[pick(rng)];
  }
  const auto e = DelayEmpirics::from_samples(samples);

  // One clean link with free shift: d absorbs the common support edge, delta the asymmetry.
  InitOptions io;
  io.a_min = em.psi.a_min;
  ThetaPi th;
  th.psi.delta = 0.0;
  const double margin = io.support_margin_sd * std::sqrt(e.variance);
  th.psi.d = Eigen::VectorXd::Constant(1, std::min(obs.u.minCoeff(), obs.v.minCoeff()) - margin);
  th.psi.tau = Eigen::VectorXd::Zero(1);
  th.pi = Eigen::VectorXd::Zero(1);
  GammaMixture start = moment_match_init(e.mean - th.psi.d[0], e.variance, M, io.jitter);
  for (auto& c : start.components)
    if (c.shape < io.a_min + io.shape_margin) {
      const double mu = c.mean();
      c.shape = io.a_min + io.shape_margin;
      c.scale = mu / c.shape;
    }
  th.psi.fwd = {start.components};
  th.psi.rev = {start.components};
  th.alpha = {start.weights};
  th.beta = {start.weights};
  const EmResult r = run_em(obs, th, em);
  return r.theta.fwd_mixture(0);
}

ScenarioContext prepare_context(const ExperimentConfig& cfg,
                                const std::optional<std::filesystem::path>& cache_dir) {
  cfg.validate();
  ScenarioContext ctx;
  const std::size_t ref_order =
      std::max(*std::max_element(cfg.M.begin(), cfg.M.end()),
               *std::max_element(cfg.L.begin(), cfg.L.end()));
  if (cfg.source == DelaySource::synthetic) {
    Rng rng = make_rng(kPoolSeed, 0x5171);
    ctx.pool = DelayEmpirics::from_samples(draw_mixture(cfg.synthetic, cfg.pool_size, rng),
                                           "synthetic");
    ctx.reference = cfg.synthetic;
  } else {
    std::optional<std::filesystem::path> cache;
    if (cache_dir)
      cache = *cache_dir / ("delays_" + cfg.model_name() + "_" + fmt("%.2f", cfg.load()) + ".csv");
    bool loaded = false;
    if (cache && std::filesystem::exists(*cache)) {
      std::ifstream in(*cache);
      auto e = read_delays_csv(in, cfg.traffic.describe());
      if (e.samples.size() == cfg.pool_size) {
        ctx.pool = std::move(e);
        loaded = true;
      }
    }
    if (!loaded) {
      ctx.pool = simulate_cascade(cfg.traffic, cfg.pool_size, kPoolSeed);
      if (cache) {
        std::filesystem::create_directories(cache->parent_path());
        std::ofstream out(*cache);
        write_delays_csv(out, ctx.pool);
      }
    }
    ctx.reference =
        fit_reference_mixture(ctx.pool.samples, ref_order, cfg.reference_fit_rounds, kPoolSeed, cfg.em);
  }
  for (std::size_t p = 0; p < cfg.P_grid.size(); ++p)
    ctx.osm.push_back(
        order_statistic_moments(ctx.pool, ctx.pool, cfg.P_grid[p], cfg.n_mc, mix64(kPoolSeed + p)));
  return ctx;
}

// ---- trials --------------------------------------------------------------------------

FusionProblem fusion_problem_from_theta(const ObservationSet& obs, const ThetaPi& theta,
                                        const std::vector<bool>& attacked,
                                        const QuadratureSpec& q) {
  std::vector<std::size_t> keep;
  std::vector<GammaMixture> f, r;
  for (std::size_t i = 0; i < theta.n_links(); ++i)
    if (!attacked[i]) {
      keep.push_back(i);
      f.push_back(theta.fwd_mixture(i));
      r.push_back(theta.rev_mixture(i));
    }
  if (keep.empty()) throw NoCleanLinkError("fusion: every link was classified as attacked");
  return make_fusion_problem(obs, keep, f, r, q);
}

TrialRecord run_trial(const ExperimentConfig& cfg, const ScenarioContext& ctx, std::size_t trial) {
  const std::size_t N = cfg.N;
  Rng rng = make_rng(cfg.seed, 0x7121a1, trial);
  TrialRecord rec;
  GroundTruth& g = rec.truth;
  std::uniform_real_distribution<double> ud(-10e-6, 10e-6), dd(cfg.d_lo, cfg.d_hi);
  g.delta = cfg.delta_true ? *cfg.delta_true : ud(rng);
  g.d.resize(static_cast<Eigen::Index>(N));
  for (Eigen::Index i = 0; i < g.d.size(); ++i) g.d[i] = dd(rng);
  std::vector<std::size_t> idx(N);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  g.attacked.assign(N, 0);
  g.tau = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
  const auto taus = draw_attack_magnitudes(cfg.n_attacked, mix64(cfg.seed ^ mix64(trial + 1)));
  for (std::size_t a = 0; a < cfg.n_attacked; ++a) {
    g.attacked[idx[a]] = 1;
    g.tau[static_cast<Eigen::Index>(idx[a])] = taus[a];
  }

  const auto Pmax = static_cast<Eigen::Index>(*std::max_element(cfg.P_grid.begin(), cfg.P_grid.end()));
  std::uniform_int_distribution<std::size_t> pick(0, ctx.pool.samples.size() - 1);
  Eigen::MatrixXd w1(static_cast<Eigen::Index>(N), Pmax), w2(static_cast<Eigen::Index>(N), Pmax);
  for (Eigen::Index i = 0; i < w1.rows(); ++i)
    for (Eigen::Index j = 0; j < Pmax; ++j) {
      w1(i, j) = ctx.pool.samples[pick(rng)];
      w2(i, j) = ctx.pool.samples[pick(rng)];
    }
  const ObservationSet full = synthesize(g, w1, w2, cfg.direction);
  const std::vector<GammaMixture> ref(N, ctx.reference);
  std::vector<bool> truth_flags(N);
  for (std::size_t i = 0; i < N; ++i) truth_flags[i] = g.attacked[i] == 1;

  const std::size_t NA = cfg.approaches.size();
  rec.error.assign(cfg.P_grid.size(), std::vector<std::optional<double>>(NA));
  rec.identified.assign(cfg.P_grid.size(), std::vector<std::optional<bool>>(NA));
  for (std::size_t p = 0; p < cfg.P_grid.size(); ++p) {
    const std::size_t P = cfg.P_grid[p];
    const ObservationSet obs = full.prefix(P);
    std::vector<LinkPrior> priors(N);
    for (std::size_t i = 0; i < N; ++i)
      priors[i] = LinkPrior{ctx.pool.mean, ctx.pool.variance, ctx.pool.mean, ctx.pool.variance,
                            ctx.osm[p], cfg.M[i], cfg.L[i]};
    std::vector<double> offsets(N);
    for (std::size_t i = 0; i < N; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const Eigen::VectorXd u = obs.u.row(ii).transpose(), v = obs.v.row(ii).transpose();
      offsets[i] = link_sample_mean({u.data(), P}, {v.data(), P}, ctx.pool.mean, ctx.pool.mean);
    }
    std::optional<InitResult> init;
    for (std::size_t a = 0; a < NA; ++a) {
      const Approach ap = cfg.approaches[a];
      try {
        double est = 0.0;
        switch (ap) {
          case Approach::genie:
            est = genie_bound(obs, g.attacked, ref, ref, cfg.quadrature).delta_hat;
            break;
          case Approach::median: est = median_estimate(offsets); break;
          case Approach::fta: est = fta_estimate(offsets, cfg.n_attacked); break;
          case Approach::em_minimax_1:
          case Approach::em_minimax_2: {
            if (!init) {
              InitOptions io = cfg.init;
              io.a_min = cfg.em.psi.a_min;
              init = initialize(obs, priors, io);
            }
            ThetaPi start = init->theta;
            EmOptions eo = cfg.em;
            if (ap == Approach::em_minimax_1) {
              for (std::size_t i = 0; i < N; ++i) {
                start.psi.fwd[i] = start.psi.rev[i] = ctx.reference.components;
                start.alpha[i] = start.beta[i] = ctx.reference.weights;
              }
              eo.psi.fix_mixtures = true;
            }
            const EmResult r = run_em(obs, start, eo);
            rec.identified[p][a] = r.attacked == truth_flags;
            if (ap == Approach::em_minimax_2 && p + 1 == cfg.P_grid.size()) rec.em_trace = r.trace;
            est = fuse_estimate(fusion_problem_from_theta(obs, r.theta, r.attacked, cfg.quadrature))
                      .delta_hat;
            break;
          }
        }
        rec.error[p][a] = est - g.delta;
      } catch (const std::exception& e) {
        rec.failures.push_back(to_string(ap) + " P=" + std::to_string(P) + ": " + e.what());
      }
    }
  }
  return rec;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ScenarioContext& ctx) {
  cfg.validate();
  ExperimentResult res;
  res.trials.resize(cfg.n_trials);
  detail::ExceptionSlot slot;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(cfg.n_trials); ++t)
    slot.run([&] {
      res.trials[static_cast<std::size_t>(t)] = run_trial(cfg, ctx, static_cast<std::size_t>(t));
    });
  slot.rethrow();

  for (std::size_t a = 0; a < cfg.approaches.size(); ++a)
    for (std::size_t p = 0; p < cfg.P_grid.size(); ++p) {
      ResultRow row;
      row.approach = cfg.approaches[a];
      row.P = cfg.P_grid[p];
      row.load = cfg.load();
      row.traffic_model = cfg.model_name();
      double sum = 0.0;
      std::size_t n = 0, n_id = 0, n_class = 0;
      for (const auto& tr : res.trials) {
        if (tr.error[p][a]) {
          sum += *tr.error[p][a];
          ++n;
        }
        if (tr.identified[p][a]) {
          ++n_class;
          n_id += *tr.identified[p][a] ? 1 : 0;
        }
      }
      row.n_trials = n;
      row.n_failed = cfg.n_trials - n;
      if (n > 0) {
        row.bias_s = sum / static_cast<double>(n);
        double ss = 0.0;
        for (const auto& tr : res.trials)
          if (tr.error[p][a]) ss += (*tr.error[p][a] - row.bias_s) * (*tr.error[p][a] - row.bias_s);
        row.std_s = std::sqrt(ss / static_cast<double>(n));
        row.rmse_s = std::hypot(row.bias_s, row.std_s);
      }
      if (is_em(row.approach) && n_class > 0)
        row.classification_accuracy = static_cast<double>(n_id) / static_cast<double>(n_class);
      res.table.push_back(row);
    }
  return res;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  return run_experiment(cfg, prepare_context(cfg));
}

}  // namespace poe
