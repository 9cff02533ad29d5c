#pragma once

// Finite POMDP description and the exact Bayesian belief update, plus a
// regime filter that runs the update over a simulated return series.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "raeid/common.hpp"
#include "raeid/market_sim.hpp"

namespace raeid {

using Belief = Eigen::VectorXd;

/// Raised when an observation has zero probability under the current belief.
class ZeroLikelihoodError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

struct POMDPSpec {
  int num_states = 0;
  int num_actions = 0;
  int num_observations = 0;
  std::vector<Eigen::MatrixXd> transition;  // [a](s, s')
  Eigen::MatrixXd observation;              // (s', o)
  Eigen::VectorXd reward;                   // per state
  double discount = 0.95;
  Eigen::VectorXd initial;

  /// Throws ConfigError on shape or normalization violations (tolerance 1e-12).
  void validate() const;
  const Eigen::MatrixXd& T(int a) const { return transition.at(static_cast<std::size_t>(a)); }
};

/// JSON object with keys states, actions, observations, transition
/// ([s][a][s']), observation ([s'][o]), reward, discount, initial.
POMDPSpec pomdp_from_json(const std::string& text);

/// Throws ConfigError unless b is a distribution over the spec's states.
void validate_belief(const Belief& b, int num_states);

double obs_likelihood(const Belief& b, int action, int observation, const POMDPSpec& spec);

Belief belief_update(const Belief& b, int action, int observation, const POMDPSpec& spec);

/// Observation bins for returns: edges e_0 < ... < e_{k-2} split the real
/// line into k bins (-inf, e_0], (e_0, e_1], ..., (e_{k-2}, inf).
int discretize(double value, std::span<const double> edges);

struct RegimeFilterStep {
  int observation = 0;
  Belief belief;
};

/// Filters regimes from returns. States are regimes, there is one action
/// with the regime chain as transition, and the observation likelihood of
/// bin o in regime s is the shock-distribution mass of that bin given
/// mu[s] + phi[s] * previous return. Row t is the posterior after o_t.
std::vector<RegimeFilterStep> filter_regimes(const RegimeSpec& spec,
                                             std::span<const double> returns,
                                             std::span<const double> edges,
                                             double initial_return = 0.0);

/// CSV `step,observation,b0,...` with an optional trailing `regime` column.
void write_belief_csv(std::ostream& out, std::span<const RegimeFilterStep> steps,
                      std::span<const int> regimes = {});

}  // namespace raeid
