#pragma once

// Optimization loops: supervised fine-tuning, reward-model training, and
// single-step PPO with a KL-shaped reward, optionally combined with the
// market-feedback (Brier) loss.
//
// Sign convention for the combined update: the policy maximizes
//   L_RL - gamma * L_MF,
// i.e. it minimizes (clipped surrogate loss) + gamma * (Brier loss).

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "raeid/models.hpp"

namespace raeid {

enum class OptimizerKind { Sgd, Adam };
enum class BaselineMode { RunningMean, None };

struct TrainConfig {
  double learning_rate = 0.05;
  int batch_size = 32;
  int epochs = 50;
  double clip_eps = 0.2;
  double beta = 0.1;   // KL coefficient
  double gamma = 1.0;  // market-feedback coefficient
  int rollout_size = 256;
  int ppo_epochs = 4;
  int rl_iterations = 50;
  BaselineMode baseline = BaselineMode::RunningMean;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double momentum = 0.9;
  double grad_clip = 1.0;  // <= 0 disables
  std::uint64_t seed = 0;

  /// Throws ConfigError on an out-of-range field.
  void validate() const;
};

/// SGD with momentum or Adam over a flat parameter vector.
class Optimizer {
 public:
  Optimizer(const TrainConfig& config, Eigen::Index num_parameters);
  void step(Eigen::VectorXd& params, Eigen::VectorXd grad);

 private:
  OptimizerKind kind_;
  double lr_, momentum_, grad_clip_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

struct SftResult {
  Policy policy;
  std::vector<double> loss_curve;  // full-data loss before training, then per epoch
};

SftResult train_sft(Policy policy, std::span<const LabeledFeature> data,
                    const TrainConfig& config);

struct RmResult {
  RewardModel rm;
  std::vector<double> loss_curve;
};

RmResult train_reward_model(RewardModel rm, std::span<const PreferenceFeature> pairs,
                            const TrainConfig& config);

/// Fraction of pairs with r(chosen) > r(rejected).
double ranking_accuracy(const RewardModel& rm, std::span<const PreferenceFeature> pairs);
double policy_accuracy(const Policy& policy, std::span<const LabeledFeature> data);

struct RolloutTuple {
  FeatureVector features;
  Label sampled = Label::Neutral;
  double log_prob = 0.0;  // log pi(sampled | features) at collection time
  Label truth = Label::Neutral;
  double reward = 0.0;    // r(features, sampled) from the reward model
};

/// Samples one label per prompt for the first n prompts. Each prompt uses its
/// own generator derive_seed(seed, i), so shards can run independently.
std::vector<RolloutTuple> collect_rollouts(const Policy& policy, const RewardModel& rm,
                                           std::span<const LabeledFeature> prompts,
                                           std::size_t n, std::uint64_t seed);

/// Running mean of shaped rewards across updates.
struct RewardBaseline {
  double mean = 0.0;
  long count = 0;
  void update(std::span<const double> values);
};

struct UpdateDiagnostics {
  double loss = 0.0;
  double reward_mean = 0.0;
  double kl_mean = 0.0;        // mean closed-form KL(pi || ref) over rollout prompts
  double clip_fraction = 0.0;  // averaged over inner epochs
  double mf_loss = 0.0;
  double accuracy = 0.0;       // argmax agreement with rollout truths after the update
};

struct UpdateResult {
  Policy policy;
  UpdateDiagnostics diagnostics;
};

/// Single-step bandit PPO. Shaped reward r - beta * (log pi_old - log pi_ref);
/// advantage = shaped - baseline; `ppo_epochs` full-batch steps on the clipped
/// surrogate. A null baseline state means a fresh running mean.
UpdateResult ppo_update(Policy policy, const ReferencePolicy& ref,
                        std::span<const RolloutTuple> rollouts, const TrainConfig& config,
                        Optimizer& optimizer, RewardBaseline* baseline = nullptr);

/// As ppo_update plus gamma * Brier loss against the realized labels. With
/// gamma == 0 the arithmetic is exactly that of ppo_update.
UpdateResult rlmf_update(Policy policy, const ReferencePolicy& ref,
                         std::span<const RolloutTuple> rollouts, const TrainConfig& config,
                         Optimizer& optimizer, RewardBaseline* baseline = nullptr);

struct RlHistoryRow {
  int step = 0;
  UpdateDiagnostics diagnostics;
};

struct RlResult {
  Policy policy;
  std::vector<RlHistoryRow> history;
};

/// Repeats collect -> update for config.rl_iterations rounds, sampling
/// rollout_size prompts (cycling through `prompts`) each round.
/// `market_feedback` selects rlmf_update instead of ppo_update.
RlResult train_rl(Policy policy, const ReferencePolicy& ref, const RewardModel& rm,
                  std::span<const LabeledFeature> prompts, const TrainConfig& config,
                  bool market_feedback);

/// Metrics CSV `step,loss,reward_mean,kl_mean,clip_frac,acc`.
void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, int step, double loss, double reward_mean,
                       double kl_mean, double clip_frac, double acc);

}  // namespace raeid
