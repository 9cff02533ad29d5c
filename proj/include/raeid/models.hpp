#pragma once

// Small differentiable stand-ins for the language-model policy and the reward
// model, with hand-derived gradients for every training loss.
//
// Parameters live in one flat vector per network. Layout (row-major):
//   linear: W[out x in], b[out]
//   mlp:    W1[hidden x in], b1[hidden], W2[out x hidden], b2[out]
// with a tanh hidden layer.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "raeid/common.hpp"
#include "raeid/dataset.hpp"

namespace raeid {

using FeatureVector = Eigen::VectorXd;

struct FeatureConfig {
  int context_depth = kDefaultContextDepth;
  bool use_context = true;
  int news_dim = 8;  // expected embedding length; 0 disables the news block
};

/// Flattens a context window (10 normalized columns per day, zero-padded at
/// the oldest end, absent values as 0) and appends the news embedding.
class FeatureEncoder {
 public:
  static constexpr int kColumnsPerDay = 10;

  explicit FeatureEncoder(FeatureConfig config = {});

  int dimension() const;
  const FeatureConfig& config() const { return config_; }
  FeatureVector encode(const Example& example) const;

 private:
  FeatureConfig config_;
};

enum class Architecture { Linear, Mlp };

std::string_view architecture_name(Architecture a);

class Network {
 public:
  Network(Architecture arch, int input_dim, int hidden, int output_dim);

  /// Weights ~ N(0, init_std^2), biases 0.
  static Network initialized(Architecture arch, int input_dim, int hidden, int output_dim,
                             std::uint64_t seed, double init_std = 0.02);

  Architecture architecture() const { return arch_; }
  int input_dim() const { return in_; }
  int hidden() const { return hidden_; }
  int output_dim() const { return out_; }
  Eigen::Index num_parameters() const { return params_.size(); }
  static Eigen::Index parameter_count(Architecture arch, int input_dim, int hidden,
                                      int output_dim);

  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::VectorXd& parameters() { return params_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  void backward(const Eigen::VectorXd& x, const Eigen::VectorXd& d_out,
                Eigen::Ref<Eigen::VectorXd> grad) const;

  bool operator==(const Network& other) const;

 private:
  void check_input(const Eigen::VectorXd& x) const;

  Architecture arch_;
  int in_, hidden_, out_;
  Eigen::VectorXd params_;
};

/// Categorical policy over {Rise, Fall, Neutral}.
class Policy {
 public:
  explicit Policy(Network net);
  static Policy initialized(Architecture arch, int input_dim, int hidden, std::uint64_t seed);

  const Network& network() const { return net_; }
  Network& network() { return net_; }
  int input_dim() const { return net_.input_dim(); }

  Eigen::VectorXd logits(const FeatureVector& f) const { return net_.forward(f); }
  Eigen::Vector3d probabilities(const FeatureVector& f) const;
  Eigen::Vector3d log_probabilities(const FeatureVector& f) const;
  Label predict(const FeatureVector& f) const;

  bool operator==(const Policy& other) const { return net_ == other.net_; }

 private:
  Network net_;
};

/// Scalar scorer r(f, label) over features concatenated with a one-hot label
/// from the four-entry reward vocabulary.
class RewardModel {
 public:
  explicit RewardModel(Network net);
  static RewardModel initialized(Architecture arch, int feature_dim, int hidden,
                                 std::uint64_t seed);
  /// For an mlp policy: hidden layer copied from the policy's encoder, with
  /// fresh label-input weights and a fresh scalar head. A linear policy has no
  /// encoder to share, so a fresh mlp with `fallback_hidden` units is returned.
  static RewardModel from_policy(const Policy& policy, std::uint64_t seed,
                                 int fallback_hidden = 32);

  const Network& network() const { return net_; }
  Network& network() { return net_; }
  int feature_dim() const { return net_.input_dim() - kNumRewardLabels; }

  double score(const FeatureVector& f, Label label) const;
  Eigen::VectorXd input(const FeatureVector& f, Label label) const;

  bool operator==(const RewardModel& other) const { return net_ == other.net_; }

 private:
  Network net_;
};

/// Immutable policy snapshot with a content hash taken at construction.
class ReferencePolicy {
 public:
  explicit ReferencePolicy(Policy policy);

  const Policy& policy() const { return policy_; }
  const std::string& hash() const { return hash_; }
  /// True when the parameters still hash to the value recorded at creation.
  bool intact() const;

 private:
  Policy policy_;
  std::string hash_;
};

std::string content_hash(const Network& net);

struct LossAndGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

struct LabeledFeature {
  FeatureVector features;
  Label label = Label::Neutral;
};

struct PreferenceFeature {
  FeatureVector features;
  Label chosen = Label::Rise;
  Label rejected = Label::Fall;
};

/// Mean categorical cross-entropy -log pi(label | f).
LossAndGrad sft_loss_and_grad(const Policy& policy, std::span<const LabeledFeature> batch);

/// Mean of -log sigmoid(r(f, chosen) - r(f, rejected)).
LossAndGrad rm_loss_and_grad(const RewardModel& rm, std::span<const PreferenceFeature> batch);

/// Mean squared distance between the probability vector and the one-hot truth.
LossAndGrad mf_loss_and_grad(const Policy& policy, std::span<const LabeledFeature> batch);

/// Hard variant: argmax one-hot instead of probabilities. Evaluation only.
double mf_loss_hard(const Policy& policy, std::span<const LabeledFeature> batch);

/// log pi(label | f) - log pi_ref(label | f).
double kl_term(const Policy& policy, const ReferencePolicy& ref, const FeatureVector& f,
               Label label);

/// Closed-form KL(pi(.|f) || pi_ref(.|f)).
double exact_kl(const Policy& policy, const ReferencePolicy& ref, const FeatureVector& f);

struct SurrogateTerm {
  FeatureVector features;
  Label action = Label::Rise;
  double old_log_prob = 0.0;
  double advantage = 0.0;
};

struct SurrogateResult {
  LossAndGrad value;
  double clip_fraction = 0.0;
};

/// Negated clipped surrogate: -mean(min(rho * A, clip(rho, 1-eps, 1+eps) * A)).
SurrogateResult ppo_surrogate_loss_and_grad(const Policy& policy,
                                            std::span<const SurrogateTerm> terms,
                                            double clip_eps);

// Checkpoints: text header, then little-endian float64 parameters.
//   RAEID-CHECKPOINT
//   version 1
//   model <policy|reward> arch=<linear|mlp> input=<n> hidden=<n> output=<n>
//   params <count>
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Policy& policy);
void save_checkpoint(const std::filesystem::path& path, const RewardModel& rm);
std::string checkpoint_bytes(const Network& net, std::string_view kind);
Policy load_policy(const std::filesystem::path& path);
RewardModel load_reward_model(const std::filesystem::path& path);
/// Additionally rejects a checkpoint whose input dimension differs.
Policy load_policy(const std::filesystem::path& path, int expected_input_dim);

}  // namespace raeid
