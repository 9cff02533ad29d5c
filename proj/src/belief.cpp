#include "raeid/belief.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "json.hpp"
#include "raeid/io.hpp"

namespace raeid {

namespace {

constexpr double kSumTol = 1e-12;

void check_distribution(const Eigen::Ref<const Eigen::VectorXd>& v, const std::string& what) {
  if (!v.allFinite() || (v.array() < 0.0).any()) {
    throw ConfigError(what + " has a negative or non-finite entry");
  }
  if (std::abs(v.sum() - 1.0) > kSumTol) throw ConfigError(what + " does not sum to 1");
}

void check_index(int value, int count, const char* what) {
  if (value < 0 || value >= count) {
    throw ConfigError(std::string(what) + " index " + std::to_string(value) + " out of range [0, " +
                      std::to_string(count) + ")");
  }
}

}  // namespace

void POMDPSpec::validate() const {
  if (num_states < 1 || num_actions < 1 || num_observations < 1) {
    throw ConfigError("POMDP needs at least one state, action and observation");
  }
  if (transition.size() != static_cast<std::size_t>(num_actions)) {
    throw ConfigError("POMDP transition tensor has the wrong number of actions");
  }
  for (int a = 0; a < num_actions; ++a) {
    const auto& t = T(a);
    if (t.rows() != num_states || t.cols() != num_states) {
      throw ConfigError("POMDP transition for action " + std::to_string(a) + " has the wrong shape");
    }
    for (int s = 0; s < num_states; ++s) {
      check_distribution(t.row(s).transpose(),
                         "T[" + std::to_string(s) + "][" + std::to_string(a) + "]");
    }
  }
  if (observation.rows() != num_states || observation.cols() != num_observations) {
    throw ConfigError("POMDP observation matrix has the wrong shape");
  }
  for (int s = 0; s < num_states; ++s) {
    check_distribution(observation.row(s).transpose(), "omega[" + std::to_string(s) + "]");
  }
  if (reward.size() != num_states || !reward.allFinite()) {
    throw ConfigError("POMDP reward must have one finite entry per state");
  }
  if (!(discount >= 0.0 && discount <= 1.0)) throw ConfigError("POMDP discount must lie in [0, 1]");
  if (initial.size() != num_states) throw ConfigError("POMDP initial distribution has the wrong size");
  check_distribution(initial, "p0");
}

POMDPSpec pomdp_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("POMDP JSON: ") + e.what());
  }
  static const std::vector<std::string> kKeys = {"states",      "actions", "observations",
                                                 "transition",  "observation", "reward",
                                                 "discount",    "initial"};
  if (!j.is_object()) throw ConfigError("POMDP JSON must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw ConfigError("POMDP JSON: unknown key '" + key + "'");
    }
  }
  POMDPSpec spec;
  try {
    spec.num_states = j.at("states").get<int>();
    spec.num_actions = j.at("actions").get<int>();
    spec.num_observations = j.at("observations").get<int>();
    const auto t = j.at("transition").get<std::vector<std::vector<std::vector<double>>>>();
    const auto o = j.at("observation").get<std::vector<std::vector<double>>>();
    const auto r = j.at("reward").get<std::vector<double>>();
    const auto p0 = j.at("initial").get<std::vector<double>>();
    spec.discount = j.value("discount", 0.95);
    const int S = spec.num_states, A = spec.num_actions, O = spec.num_observations;
    if (S < 1 || A < 1 || O < 1) throw ConfigError("POMDP counts must be positive");
    if (t.size() != static_cast<std::size_t>(S)) throw ConfigError("transition: expected S rows");
    spec.transition.assign(static_cast<std::size_t>(A), Eigen::MatrixXd::Zero(S, S));
    for (int s = 0; s < S; ++s) {
      if (t[s].size() != static_cast<std::size_t>(A)) throw ConfigError("transition: expected A entries");
      for (int a = 0; a < A; ++a) {
        if (t[s][a].size() != static_cast<std::size_t>(S)) throw ConfigError("transition: expected S probabilities");
        for (int s2 = 0; s2 < S; ++s2) spec.transition[a](s, s2) = t[s][a][s2];
      }
    }
    if (o.size() != static_cast<std::size_t>(S)) throw ConfigError("observation: expected S rows");
    spec.observation.resize(S, O);
    for (int s = 0; s < S; ++s) {
      if (o[s].size() != static_cast<std::size_t>(O)) throw ConfigError("observation: expected O columns");
      for (int k = 0; k < O; ++k) spec.observation(s, k) = o[s][k];
    }
    spec.reward = Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size()));
    spec.initial = Eigen::Map<const Eigen::VectorXd>(p0.data(), static_cast<Eigen::Index>(p0.size()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("POMDP JSON: ") + e.what());
  }
  spec.validate();
  return spec;
}

void validate_belief(const Belief& b, int num_states) {
  if (b.size() != num_states) throw ConfigError("belief has the wrong number of states");
  check_distribution(b, "belief");
}

namespace {

Eigen::VectorXd predicted(const Belief& b, int action, const POMDPSpec& spec) {
  return spec.T(action).transpose() * b;
}

}  // namespace

double obs_likelihood(const Belief& b, int action, int observation, const POMDPSpec& spec) {
  check_index(action, spec.num_actions, "action");
  check_index(observation, spec.num_observations, "observation");
  if (b.size() != spec.num_states) throw ConfigError("belief has the wrong number of states");
  const double p = spec.observation.col(observation).dot(predicted(b, action, spec));
  return std::clamp(p, 0.0, 1.0);
}

Belief belief_update(const Belief& b, int action, int observation, const POMDPSpec& spec) {
  check_index(action, spec.num_actions, "action");
  check_index(observation, spec.num_observations, "observation");
  if (b.size() != spec.num_states) throw ConfigError("belief has the wrong number of states");
  const Eigen::VectorXd joint =
      spec.observation.col(observation).cwiseProduct(predicted(b, action, spec));
  const double norm = joint.sum();
  if (!(norm > 0.0)) {
    throw ZeroLikelihoodError("observation " + std::to_string(observation) + " after action " +
                              std::to_string(action) + " has zero probability under the belief");
  }
  return joint / norm;
}

namespace {

void check_edges(std::span<const double> edges) {
  if (!std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw ConfigError("observation bin edges must be strictly increasing");
  }
}

}  // namespace

int discretize(double value, std::span<const double> edges) {
  check_edges(edges);
  return static_cast<int>(std::lower_bound(edges.begin(), edges.end(), value) - edges.begin());
}

namespace {

double shock_cdf(double z, ShockDistribution dist) {
  if (std::isinf(z)) return z > 0 ? 1.0 : 0.0;
  if (dist == ShockDistribution::Normal) return 0.5 * std::erfc(-z / std::sqrt(2.0));
  const double half = std::sqrt(3.0);
  return std::clamp((z + half) / (2.0 * half), 0.0, 1.0);
}

double bin_mass(double lo, double hi, double mean, double sigma, ShockDistribution dist) {
  if (sigma == 0.0) return (mean > lo && mean <= hi) ? 1.0 : 0.0;
  return shock_cdf((hi - mean) / sigma, dist) - shock_cdf((lo - mean) / sigma, dist);
}

}  // namespace

std::vector<RegimeFilterStep> filter_regimes(const RegimeSpec& spec,
                                             std::span<const double> returns,
                                             std::span<const double> edges,
                                             double initial_return) {
  check_edges(edges);
  const int S = spec.num_regimes();
  const int O = static_cast<int>(edges.size()) + 1;
  const double inf = std::numeric_limits<double>::infinity();

  POMDPSpec pomdp;
  pomdp.num_states = S;
  pomdp.num_actions = 1;
  pomdp.num_observations = O;
  pomdp.transition = {spec.transition()};
  pomdp.reward = Eigen::VectorXd::Zero(S);
  pomdp.initial = spec.initial_dist();

  // p0 is the prior of the first regime, so step 0 skips the transition.
  std::vector<RegimeFilterStep> out;
  out.reserve(returns.size());
  Belief b = spec.initial_dist();
  double prev = initial_return;
  for (std::size_t t = 0; t < returns.size(); ++t) {
    pomdp.observation.resize(S, O);
    for (int s = 0; s < S; ++s) {
      const auto& p = spec.params(s);
      const double mean = p.mu + p.phi * prev;
      for (int k = 0; k < O; ++k) {
        const double lo = k == 0 ? -inf : edges[static_cast<std::size_t>(k - 1)];
        const double hi = k == O - 1 ? inf : edges[static_cast<std::size_t>(k)];
        pomdp.observation(s, k) = bin_mass(lo, hi, mean, p.sigma, spec.shocks());
      }
    }
    const int o = discretize(returns[t], edges);
    if (t == 0) {
      const Eigen::VectorXd joint = pomdp.observation.col(o).cwiseProduct(b);
      if (!(joint.sum() > 0.0)) throw ZeroLikelihoodError("first return has zero likelihood");
      b = joint / joint.sum();
    } else {
      b = belief_update(b, 0, o, pomdp);
    }
    out.push_back({o, b});
    prev = returns[t];
  }
  return out;
}

void write_belief_csv(std::ostream& out, std::span<const RegimeFilterStep> steps,
                      std::span<const int> regimes) {
  if (!regimes.empty() && regimes.size() != steps.size()) {
    throw DataError("belief CSV: regime column length differs from trajectory");
  }
  const Eigen::Index S = steps.empty() ? 0 : steps.front().belief.size();
  out << "step,observation";
  for (Eigen::Index s = 0; s < S; ++s) out << ",b" << s;
  if (!regimes.empty()) out << ",regime";
  out << '\n';
  for (std::size_t t = 0; t < steps.size(); ++t) {
    out << t << ',' << steps[t].observation;
    for (Eigen::Index s = 0; s < S; ++s) out << ',' << fixed6(steps[t].belief(s));
    if (!regimes.empty()) out << ',' << regimes[t];
    out << '\n';
  }
}

}  // namespace raeid
