#pragma once

// Training-phase orchestration (SFT -> reward model -> PPO) and the windowed
// deployment loop in which a student policy is adapted on market feedback
// and swapped in as the executing teacher every T steps.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "raeid/trainer.hpp"

namespace raeid {

struct TrainingPhaseConfig {
  Architecture arch = Architecture::Mlp;
  int hidden = 16;
  int rm_fallback_hidden = 32;
  TrainConfig sft;
  TrainConfig rm;
  TrainConfig rl;
  bool skip_rl = false;
  std::optional<std::filesystem::path> checkpoint_dir;
  std::uint64_t seed = 0;
};

struct TrainingData {
  std::vector<LabeledFeature> sft;
  std::vector<PreferenceFeature> preferences;
};

struct TrainingPhaseResult {
  Policy sft_policy;
  RewardModel rm;
  Policy teacher;
  std::vector<double> sft_curve;
  std::vector<double> rm_curve;
  std::vector<RlHistoryRow> rl_history;
};

/// Steps 1-3 in order. With a checkpoint directory, writes sft.ckpt, rm.ckpt
/// and rlmf.ckpt after the corresponding step. Failures are re-thrown with a
/// "[stage]" prefix and their original category.
TrainingPhaseResult run_training_phase(const TrainingPhaseConfig& config,
                                       const TrainingData& data);

/// chosen = realized label; rejected = the prediction when it was wrong,
/// otherwise a seeded uniform draw from the other reward-vocabulary labels.
std::vector<PreferenceFeature> derive_preferences_from_feedback(
    std::span<const RolloutTuple> rollouts, std::uint64_t seed);

class LookaheadError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Time-ordered stream that only reveals the label at step t after a
/// prediction for t has been committed, and only exposes step t+1 after t
/// has been revealed.
class MarketStream {
 public:
  explicit MarketStream(std::vector<LabeledFeature> data, std::vector<int> regimes = {});

  std::size_t size() const { return data_.size(); }
  const FeatureVector& observe(std::size_t t);
  Label reveal(std::size_t t, Label committed_prediction);
  std::optional<int> regime(std::size_t t) const;
  const std::vector<Label>& committed() const { return committed_; }

 private:
  std::vector<LabeledFeature> data_;
  std::vector<int> regimes_;
  std::vector<Label> committed_;
  std::size_t next_ = 0;
  bool awaiting_reveal_ = false;
};

struct DeploymentConfig {
  int window = 10;
  int rm_epochs = 5;
  int rlmf_epochs = 10;
  int rollouts_per_prompt = 4;
  bool fixed_reference = false;
  bool rm_replay = false;
  TrainConfig rm_train;
  TrainConfig policy_train;
  std::uint64_t seed = 0;

  void validate() const;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t window = 0;
  std::optional<int> regime;
  Label pred = Label::Neutral;
  Label truth = Label::Neutral;
  bool correct = false;
  bool swap = false;
};

struct WindowRecord {
  std::size_t window = 0;
  std::size_t start = 0;
  std::size_t length = 0;
  double accuracy = 0.0;          // executed predictions inside the window
  bool updated = false;
  double rm_ranking_accuracy = 0.0;
  double kl_to_reference = 0.0;
  double kl_to_original = 0.0;
  double post_update_accuracy = 0.0;
};

struct DeploymentLog {
  std::vector<StepRecord> steps;
  std::vector<WindowRecord> windows;
  std::vector<std::size_t> swaps;

  double accuracy() const;
  /// Accuracy over steps [begin, end).
  double accuracy(std::size_t begin, std::size_t end) const;
  std::vector<int> predictions() const;
  std::vector<int> truths() const;
};

DeploymentLog run_deployment(const Policy& teacher, const RewardModel& rm, MarketStream stream,
                             const DeploymentConfig& config);

/// Same traversal without updates. `window` only groups the log rows.
DeploymentLog run_frozen_baseline(const Policy& teacher, MarketStream stream, int window = 10);

/// CSV `step,window,pred,truth,correct,swap`.
void write_deployment_csv(std::ostream& out, const DeploymentLog& log);

}  // namespace raeid
