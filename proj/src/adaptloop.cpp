#include "raeid/adaptloop.hpp"

#include <algorithm>
#include <ostream>

#include "raeid/rng.hpp"

namespace raeid {

namespace {

template <typename Fn>
auto tagged(const char* stage, Fn&& fn) -> decltype(fn()) {
  const std::string tag = std::string("[") + stage + "] ";
  try {
    return fn();
  } catch (const NumericalError& e) {
    throw NumericalError(tag + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(tag + e.what());
  } catch (const DataError& e) {
    throw DataError(tag + e.what());
  }
}

}  // namespace

TrainingPhaseResult run_training_phase(const TrainingPhaseConfig& config,
                                       const TrainingData& data) {
  if (data.sft.empty()) throw DataError("[sft] no training examples");
  const int dim = static_cast<int>(data.sft.front().features.size());
  const auto save = [&](const char* name, const auto& model) {
    if (config.checkpoint_dir) save_checkpoint(*config.checkpoint_dir / name, model);
  };

  SftResult sft = tagged("sft", [&] {
    Policy init = Policy::initialized(config.arch, dim, config.hidden, derive_seed(config.seed, 1));
    return train_sft(std::move(init), data.sft, config.sft);
  });
  save("sft.ckpt", sft.policy);

  RmResult rm = tagged("rm", [&] {
    if (data.preferences.empty()) throw DataError("no preference pairs");
    RewardModel init = RewardModel::from_policy(sft.policy, derive_seed(config.seed, 2),
                                                config.rm_fallback_hidden);
    return train_reward_model(std::move(init), data.preferences, config.rm);
  });
  save("rm.ckpt", rm.rm);

  TrainingPhaseResult out{sft.policy, rm.rm, sft.policy, std::move(sft.loss_curve),
                          std::move(rm.loss_curve), {}};
  if (!config.skip_rl) {
    RlResult rl = tagged("rlmf", [&] {
      std::vector<LabeledFeature> prompts;
      prompts.reserve(data.preferences.size());
      for (const auto& p : data.preferences) prompts.push_back({p.features, p.chosen});
      const ReferencePolicy ref(out.sft_policy);
      return train_rl(out.sft_policy, ref, out.rm, prompts, config.rl, false);
    });
    out.teacher = std::move(rl.policy);
    out.rl_history = std::move(rl.history);
  }
  save("rlmf.ckpt", out.teacher);
  return out;
}

std::vector<PreferenceFeature> derive_preferences_from_feedback(
    std::span<const RolloutTuple> rollouts, std::uint64_t seed) {
  std::vector<PreferenceFeature> out;
  out.reserve(rollouts.size());
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    const auto& r = rollouts[i];
    Label rejected = r.sampled;
    if (rejected == r.truth) {
      std::vector<Label> alternatives;
      for (Label l : kRewardLabels) {
        if (l != r.truth) alternatives.push_back(l);
      }
      Rng rng = make_rng(derive_seed(seed, i));
      rejected = alternatives[uniform_index(rng, alternatives.size())];
    }
    out.push_back({r.features, r.truth, rejected});
  }
  return out;
}

MarketStream::MarketStream(std::vector<LabeledFeature> data, std::vector<int> regimes)
    : data_(std::move(data)), regimes_(std::move(regimes)) {
  if (!regimes_.empty() && regimes_.size() != data_.size()) {
    throw DataError("MarketStream: regime list length differs from stream");
  }
}

const FeatureVector& MarketStream::observe(std::size_t t) {
  if (awaiting_reveal_ || t != next_ || t >= data_.size()) {
    throw LookaheadError("stream step " + std::to_string(t) + " observed out of order");
  }
  awaiting_reveal_ = true;
  return data_[t].features;
}

Label MarketStream::reveal(std::size_t t, Label committed_prediction) {
  if (!awaiting_reveal_ || t != next_) {
    throw LookaheadError("label for step " + std::to_string(t) +
                         " requested before a prediction was committed");
  }
  committed_.push_back(committed_prediction);
  awaiting_reveal_ = false;
  ++next_;
  return data_[t].label;
}

std::optional<int> MarketStream::regime(std::size_t t) const {
  if (regimes_.empty() || t >= regimes_.size()) return std::nullopt;
  return regimes_[t];
}

void DeploymentConfig::validate() const {
  if (window < 1) throw ConfigError("deployment window T must be >= 1");
  if (rm_epochs < 0 || rlmf_epochs < 0) throw ConfigError("update epochs must be >= 0");
  if (rollouts_per_prompt < 1) throw ConfigError("rollouts_per_prompt must be >= 1");
  rm_train.validate();
  policy_train.validate();
}

double DeploymentLog::accuracy() const { return accuracy(0, steps.size()); }

double DeploymentLog::accuracy(std::size_t begin, std::size_t end) const {
  end = std::min(end, steps.size());
  if (begin >= end) throw DataError("deployment log: empty accuracy range");
  std::size_t hits = 0;
  for (std::size_t i = begin; i < end; ++i) hits += steps[i].correct;
  return static_cast<double>(hits) / static_cast<double>(end - begin);
}

std::vector<int> DeploymentLog::predictions() const {
  std::vector<int> out;
  for (const auto& s : steps) out.push_back(label_index(s.pred));
  return out;
}

std::vector<int> DeploymentLog::truths() const {
  std::vector<int> out;
  for (const auto& s : steps) out.push_back(label_index(s.truth));
  return out;
}

namespace {

struct WindowBuffer {
  std::vector<RolloutTuple> feedback;  // executed prediction + realized label
  std::size_t start = 0;
};

WindowRecord evaluate_window(std::size_t index, const WindowBuffer& buf) {
  WindowRecord w;
  w.window = index;
  w.start = buf.start;
  w.length = buf.feedback.size();
  std::size_t hits = 0;
  for (const auto& r : buf.feedback) hits += r.sampled == r.truth;
  w.accuracy = w.length ? static_cast<double>(hits) / static_cast<double>(w.length) : 0.0;
  return w;
}

DeploymentLog traverse(const Policy& initial_teacher, const RewardModel* initial_rm,
                       MarketStream& stream, const DeploymentConfig& config, bool adapt) {
  const std::size_t n = stream.size();
  const auto T = static_cast<std::size_t>(config.window);
  Policy teacher = initial_teacher;
  std::optional<RewardModel> rm;
  if (initial_rm) rm = *initial_rm;
  const ReferencePolicy original(initial_teacher);
  std::vector<PreferenceFeature> replay;

  DeploymentLog log;
  WindowBuffer buf;
  bool swap_pending = false;

  const auto close_window = [&](bool update) {
    WindowRecord w = evaluate_window(log.windows.size(), buf);
    if (update) {
      const std::uint64_t wseed = derive_seed(config.seed, w.window);
      auto pairs = derive_preferences_from_feedback(buf.feedback, derive_seed(wseed, 1));
      if (config.rm_replay) {
        replay.insert(replay.end(), pairs.begin(), pairs.end());
        pairs = replay;
      }
      if (config.rm_epochs > 0) {
        TrainConfig rc = config.rm_train;
        rc.epochs = config.rm_epochs;
        rc.seed = derive_seed(wseed, 2);
        rm = train_reward_model(std::move(*rm), pairs, rc).rm;
      }
      w.rm_ranking_accuracy = ranking_accuracy(*rm, pairs);

      const ReferencePolicy ref = config.fixed_reference ? original : ReferencePolicy(teacher);
      Policy student = teacher;
      std::vector<LabeledFeature> prompts;
      for (int k = 0; k < config.rollouts_per_prompt; ++k) {
        for (const auto& r : buf.feedback) prompts.push_back({r.features, r.truth});
      }
      Optimizer opt(config.policy_train, student.network().num_parameters());
      RewardBaseline baseline;
      for (int e = 0; e < config.rlmf_epochs; ++e) {
        const auto rollouts = collect_rollouts(student, *rm, prompts, prompts.size(),
                                               derive_seed(wseed, 100 + e));
        student = rlmf_update(std::move(student), ref, rollouts, config.policy_train, opt,
                              &baseline)
                      .policy;
      }
      double kl_ref = 0.0, kl_orig = 0.0;
      std::size_t hits = 0;
      for (const auto& r : buf.feedback) {
        kl_ref += exact_kl(student, ref, r.features);
        kl_orig += exact_kl(student, original, r.features);
        hits += student.predict(r.features) == r.truth;
      }
      const double len = static_cast<double>(buf.feedback.size());
      w.kl_to_reference = kl_ref / len;
      w.kl_to_original = kl_orig / len;
      w.post_update_accuracy = static_cast<double>(hits) / len;
      w.updated = true;
      teacher = std::move(student);
      swap_pending = true;
    }
    log.windows.push_back(w);
    buf = WindowBuffer{};
  };

  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0 && t % T == 0) {
      close_window(adapt);
      if (adapt) log.swaps.push_back(t);
    }
    buf.start = buf.feedback.empty() ? t : buf.start;
    const FeatureVector& f = stream.observe(t);
    const Label pred = teacher.predict(f);
    const double logp = teacher.log_probabilities(f)[label_index(pred)];
    const Label truth = stream.reveal(t, pred);
    StepRecord rec{t, log.windows.size(), stream.regime(t), pred, truth, pred == truth,
                   swap_pending};
    swap_pending = false;
    log.steps.push_back(rec);
    buf.feedback.push_back({f, pred, logp, truth, rm ? rm->score(f, pred) : 0.0});
  }
  // The last window never has a successor to execute, so it is only evaluated.
  if (!buf.feedback.empty()) close_window(false);
  return log;
}

}  // namespace

DeploymentLog run_deployment(const Policy& teacher, const RewardModel& rm, MarketStream stream,
                             const DeploymentConfig& config) {
  config.validate();
  return traverse(teacher, &rm, stream, config, true);
}

DeploymentLog run_frozen_baseline(const Policy& teacher, MarketStream stream, int window) {
  DeploymentConfig cfg;
  cfg.window = window;
  if (window < 1) throw ConfigError("deployment window T must be >= 1");
  return traverse(teacher, nullptr, stream, cfg, false);
}

void write_deployment_csv(std::ostream& out, const DeploymentLog& log) {
  out << "step,window,pred,truth,correct,swap\n";
  for (const auto& s : log.steps) {
    out << s.step << ',' << s.window << ',' << label_name(s.pred) << ',' << label_name(s.truth)
        << ',' << (s.correct ? 1 : 0) << ',' << (s.swap ? 1 : 0) << '\n';
  }
}

}  // namespace raeid
