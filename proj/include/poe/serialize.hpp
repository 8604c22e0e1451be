#pragma once

// JSON forms of the model types; mixtures follow {weights, shapes, scales}.

#include <string>

#include "json.hpp"
#include "poe/em.hpp"
#include "poe/error.hpp"
#include "poe/fusion.hpp"
#include "poe/gamma.hpp"
#include "poe/scenario.hpp"

namespace poe {

inline void to_json(nlohmann::json& j, const GammaMixture& m) {
  std::vector<double> shapes, scales;
  for (const auto& c : m.components) {
    shapes.push_back(c.shape);
    scales.push_back(c.scale);
  }
  j = nlohmann::json{{"weights", m.weights}, {"shapes", shapes}, {"scales", scales}};
}

inline void from_json(const nlohmann::json& j, GammaMixture& m) {
  const auto weights = j.at("weights").get<std::vector<double>>();
  const auto shapes = j.at("shapes").get<std::vector<double>>();
  const auto scales = j.at("scales").get<std::vector<double>>();
  if (weights.size() != shapes.size() || shapes.size() != scales.size())
    throw ConfigError("mixture: weights, shapes and scales must have equal length");
  m.weights = weights;
  m.components.clear();
  for (std::size_t k = 0; k < shapes.size(); ++k) m.components.push_back({shapes[k], scales[k]});
  m.validate();
}

namespace detail {
inline std::vector<double> to_vec(const Eigen::VectorXd& x) { return {x.data(), x.data() + x.size()}; }
inline Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace detail

inline void to_json(nlohmann::json& j, const ThetaPi& t) {
  nlohmann::json links = nlohmann::json::array();
  for (std::size_t i = 0; i < t.n_links(); ++i)
    links.push_back({{"fwd", t.fwd_mixture(i)}, {"rev", t.rev_mixture(i)}});
  j = nlohmann::json{{"delta", t.psi.delta},
                     {"d", detail::to_vec(t.psi.d)},
                     {"tau", detail::to_vec(t.psi.tau)},
                     {"pi", detail::to_vec(t.pi)},
                     {"links", links}};
}

inline void from_json(const nlohmann::json& j, ThetaPi& t) {
  t = ThetaPi{};
  t.psi.delta = j.at("delta").get<double>();
  t.psi.d = detail::from_vec(j.at("d").get<std::vector<double>>());
  t.psi.tau = detail::from_vec(j.at("tau").get<std::vector<double>>());
  t.pi = detail::from_vec(j.at("pi").get<std::vector<double>>());
  for (const auto& l : j.at("links")) {
    const auto f = l.at("fwd").get<GammaMixture>();
    const auto r = l.at("rev").get<GammaMixture>();
    t.psi.fwd.push_back(f.components);
    t.psi.rev.push_back(r.components);
    t.alpha.push_back(f.weights);
    t.beta.push_back(r.weights);
  }
  t.validate();
}

inline void to_json(nlohmann::json& j, const GroundTruth& g) {
  j = nlohmann::json{{"delta", g.delta},
                     {"d", detail::to_vec(g.d)},
                     {"tau", detail::to_vec(g.tau)},
                     {"attacked", g.attacked}};
}

inline void from_json(const nlohmann::json& j, GroundTruth& g) {
  g.delta = j.at("delta").get<double>();
  g.d = detail::from_vec(j.at("d").get<std::vector<double>>());
  g.tau = detail::from_vec(j.at("tau").get<std::vector<double>>());
  g.attacked = j.at("attacked").get<std::vector<int>>();
  g.validate();
}

inline void to_json(nlohmann::json& j, const QuadratureSpec& q) {
  j = nlohmann::json{{"n_delta", q.n_delta},         {"n_d", q.n_d},
                     {"n_pilot", q.n_pilot},         {"cutoff_nats", q.cutoff_nats},
                     {"tau_bound_us", q.tau_bound * 1e6}};
}

inline void from_json(const nlohmann::json& j, QuadratureSpec& q) {
  q = QuadratureSpec{};
  q.n_delta = j.value("n_delta", q.n_delta);
  q.n_d = j.value("n_d", q.n_d);
  q.n_pilot = j.value("n_pilot", q.n_pilot);
  q.cutoff_nats = j.value("cutoff_nats", q.cutoff_nats);
  q.tau_bound = j.value("tau_bound_us", q.tau_bound * 1e6) * 1e-6;
}

}  // namespace poe
