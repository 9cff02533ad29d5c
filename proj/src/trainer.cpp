#include "raeid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "raeid/io.hpp"
#include "raeid/rng.hpp"

namespace raeid {

namespace {

void require_finite(const Eigen::VectorXd& v, double loss, const char* stage) {
  if (!std::isfinite(loss) || !v.allFinite()) {
    throw NumericalError(std::string(stage) + ": loss or gradient became non-finite");
  }
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = make_rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
  return idx;
}

// Mini-batch loop shared by the supervised stages: floor(m / B) batches per
// epoch over a seeded permutation (one batch of all m when m < B).
template <typename Sample, typename Model, typename LossFn>
std::vector<double> minibatch_descent(Model& model, Eigen::VectorXd& params,
                                      std::span<const Sample> data, const TrainConfig& config,
                                      LossFn loss_fn, const char* stage) {
  if (data.empty()) throw DataError(std::string(stage) + ": no training data");
  config.validate();
  Optimizer opt(config, params.size());
  std::vector<double> curve;
  curve.push_back(loss_fn(model, data).loss);
  const std::size_t m = data.size();
  const std::size_t b = std::min<std::size_t>(config.batch_size, m);
  const std::size_t num_batches = m / b;
  std::vector<Sample> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = permutation(m, derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t k = 0; k < num_batches; ++k) {
      batch.clear();
      for (std::size_t i = k * b; i < (k + 1) * b; ++i) batch.push_back(data[order[i]]);
      LossAndGrad lg = loss_fn(model, std::span<const Sample>(batch));
      require_finite(lg.grad, lg.loss, stage);
      opt.step(params, std::move(lg.grad));
    }
    const double loss = loss_fn(model, data).loss;
    if (!std::isfinite(loss)) {
      throw NumericalError(std::string(stage) + ": loss diverged at epoch " + std::to_string(epoch));
    }
    curve.push_back(loss);
  }
  return curve;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("clip_eps must lie in (0, 1)");
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (rollout_size < 1) throw ConfigError("rollout_size must be >= 1");
  if (ppo_epochs < 0) throw ConfigError("ppo_epochs must be >= 0");
  if (rl_iterations < 0) throw ConfigError("rl_iterations must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
}

Optimizer::Optimizer(const TrainConfig& config, Eigen::Index n)
    : kind_(config.optimizer),
      lr_(config.learning_rate),
      momentum_(config.momentum),
      grad_clip_(config.grad_clip),
      m_(Eigen::VectorXd::Zero(n)),
      v_(Eigen::VectorXd::Zero(n)) {}

void Optimizer::step(Eigen::VectorXd& params, Eigen::VectorXd grad) {
  if (grad.size() != params.size() || m_.size() != params.size()) {
    throw ConfigError("optimizer: parameter size changed");
  }
  if (grad_clip_ > 0.0) {
    const double norm = grad.norm();
    if (norm > grad_clip_) grad *= grad_clip_ / norm;
  }
  ++t_;
  if (kind_ == OptimizerKind::Sgd) {
    m_ = momentum_ * m_ + grad;
    params -= lr_ * m_;
    return;
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  m_ = b1 * m_ + (1.0 - b1) * grad;
  v_ = b2 * v_ + (1.0 - b2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
}

SftResult train_sft(Policy policy, std::span<const LabeledFeature> data,
                    const TrainConfig& config) {
  auto curve = minibatch_descent<LabeledFeature>(
      policy, policy.network().parameters(), data, config,
      [](const Policy& p, std::span<const LabeledFeature> b) { return sft_loss_and_grad(p, b); },
      "sft");
  return {std::move(policy), std::move(curve)};
}

RmResult train_reward_model(RewardModel rm, std::span<const PreferenceFeature> pairs,
                            const TrainConfig& config) {
  auto curve = minibatch_descent<PreferenceFeature>(
      rm, rm.network().parameters(), pairs, config,
      [](const RewardModel& r, std::span<const PreferenceFeature> b) {
        return rm_loss_and_grad(r, b);
      },
      "reward model");
  return {std::move(rm), std::move(curve)};
}

double ranking_accuracy(const RewardModel& rm, std::span<const PreferenceFeature> pairs) {
  if (pairs.empty()) throw DataError("ranking_accuracy: no pairs");
  std::size_t wins = 0;
  for (const auto& p : pairs) {
    if (rm.score(p.features, p.chosen) > rm.score(p.features, p.rejected)) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(pairs.size());
}

double policy_accuracy(const Policy& policy, std::span<const LabeledFeature> data) {
  if (data.empty()) throw DataError("policy_accuracy: no data");
  std::size_t hits = 0;
  for (const auto& s : data) hits += policy.predict(s.features) == s.label;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::vector<RolloutTuple> collect_rollouts(const Policy& policy, const RewardModel& rm,
                                           std::span<const LabeledFeature> prompts,
                                           std::size_t n, std::uint64_t seed) {
  if (n > prompts.size()) throw DataError("collect_rollouts: n exceeds available prompts");
  std::vector<RolloutTuple> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& prompt = prompts[i];
    const Eigen::Vector3d logp = policy.log_probabilities(prompt.features);
    Rng rng = make_rng(derive_seed(seed, i));
    const double u = uniform01(rng);
    int a = kNumPolicyLabels - 1;
    double acc = 0.0;
    for (int k = 0; k < kNumPolicyLabels; ++k) {
      acc += std::exp(logp[k]);
      if (u < acc) {
        a = k;
        break;
      }
    }
    const Label sampled = label_from_index(a);
    out.push_back({prompt.features, sampled, logp[a], prompt.label,
                   rm.score(prompt.features, sampled)});
  }
  return out;
}

void RewardBaseline::update(std::span<const double> values) {
  for (double v : values) {
    ++count;
    mean += (v - mean) / static_cast<double>(count);
  }
}

namespace {

UpdateResult policy_update(Policy policy, const ReferencePolicy& ref,
                           std::span<const RolloutTuple> rollouts, const TrainConfig& config,
                           Optimizer& optimizer, RewardBaseline* baseline, double gamma) {
  config.validate();
  if (rollouts.empty()) throw DataError("policy update: no rollouts");
  if (!ref.intact()) throw NumericalError("reference policy was modified");

  RewardBaseline local;
  if (baseline == nullptr) baseline = &local;

  std::vector<double> shaped(rollouts.size());
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    const auto& r = rollouts[i];
    const double log_ref = ref.policy().log_probabilities(r.features)[label_index(r.sampled)];
    shaped[i] = r.reward - config.beta * (r.log_prob - log_ref);
  }
  if (config.baseline == BaselineMode::RunningMean) baseline->update(shaped);

  std::vector<SurrogateTerm> terms;
  std::vector<LabeledFeature> truths;
  terms.reserve(rollouts.size());
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    const auto& r = rollouts[i];
    const double adv =
        config.baseline == BaselineMode::RunningMean ? shaped[i] - baseline->mean : shaped[i];
    terms.push_back({r.features, r.sampled, r.log_prob, adv});
    if (gamma != 0.0) truths.push_back({r.features, r.truth});
  }

  UpdateDiagnostics diag;
  double clip_sum = 0.0;
  for (int e = 0; e < config.ppo_epochs; ++e) {
    SurrogateResult s = ppo_surrogate_loss_and_grad(policy, terms, config.clip_eps);
    clip_sum += s.clip_fraction;
    diag.loss = s.value.loss;
    if (gamma != 0.0) {
      const LossAndGrad mf = mf_loss_and_grad(policy, truths);
      s.value.grad += gamma * mf.grad;
      diag.loss += gamma * mf.loss;
    }
    require_finite(s.value.grad, diag.loss, "policy update");
    optimizer.step(policy.network().parameters(), std::move(s.value.grad));
  }
  if (!policy.network().parameters().allFinite()) {
    throw NumericalError("policy update: parameters became non-finite");
  }
  if (!ref.intact()) throw NumericalError("reference policy was modified");

  diag.clip_fraction = config.ppo_epochs > 0 ? clip_sum / config.ppo_epochs : 0.0;
  double reward = 0.0, kl = 0.0, mf = 0.0;
  std::size_t hits = 0;
  for (const auto& r : rollouts) {
    reward += r.reward;
    kl += exact_kl(policy, ref, r.features);
    const Eigen::Vector3d p = policy.probabilities(r.features);
    Eigen::Vector3d diff = p;
    diff[label_index(r.truth)] -= 1.0;
    mf += diff.squaredNorm();
    hits += policy.predict(r.features) == r.truth;
  }
  const double n = static_cast<double>(rollouts.size());
  diag.reward_mean = reward / n;
  diag.kl_mean = kl / n;
  diag.mf_loss = mf / n;
  diag.accuracy = static_cast<double>(hits) / n;
  return {std::move(policy), diag};
}

}  // namespace

UpdateResult ppo_update(Policy policy, const ReferencePolicy& ref,
                        std::span<const RolloutTuple> rollouts, const TrainConfig& config,
                        Optimizer& optimizer, RewardBaseline* baseline) {
  return policy_update(std::move(policy), ref, rollouts, config, optimizer, baseline, 0.0);
}

UpdateResult rlmf_update(Policy policy, const ReferencePolicy& ref,
                         std::span<const RolloutTuple> rollouts, const TrainConfig& config,
                         Optimizer& optimizer, RewardBaseline* baseline) {
  return policy_update(std::move(policy), ref, rollouts, config, optimizer, baseline,
                       config.gamma);
}

RlResult train_rl(Policy policy, const ReferencePolicy& ref, const RewardModel& rm,
                  std::span<const LabeledFeature> prompts, const TrainConfig& config,
                  bool market_feedback) {
  config.validate();
  if (prompts.empty()) throw DataError("train_rl: no prompts");
  Optimizer opt(config, policy.network().num_parameters());
  RewardBaseline baseline;
  RlResult result{std::move(policy), {}};
  const std::size_t n = std::min<std::size_t>(config.rollout_size, prompts.size());
  std::vector<LabeledFeature> batch;
  for (int it = 0; it < config.rl_iterations; ++it) {
    batch.clear();
    const std::size_t start = (static_cast<std::size_t>(it) * n) % prompts.size();
    for (std::size_t k = 0; k < n; ++k) batch.push_back(prompts[(start + k) % prompts.size()]);
    const auto rollouts =
        collect_rollouts(result.policy, rm, batch, n, derive_seed(config.seed, 0x524c0000ULL + it));
    UpdateResult upd =
        market_feedback
            ? rlmf_update(std::move(result.policy), ref, rollouts, config, opt, &baseline)
            : ppo_update(std::move(result.policy), ref, rollouts, config, opt, &baseline);
    result.policy = std::move(upd.policy);
    result.history.push_back({it, upd.diagnostics});
  }
  return result;
}

void write_metrics_header(std::ostream& out) {
  out << "step,loss,reward_mean,kl_mean,clip_frac,acc\n";
}

void write_metrics_row(std::ostream& out, int step, double loss, double reward_mean,
                       double kl_mean, double clip_frac, double acc) {
  out << step << ',' << fixed6(loss) << ',' << fixed6(reward_mean) << ',' << fixed6(kl_mean)
      << ',' << fixed6(clip_frac) << ',' << fixed6(acc) << '\n';
}

}  // namespace raeid
