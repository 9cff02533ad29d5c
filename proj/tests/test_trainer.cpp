#include <cmath>
#include <sstream>

#include "doctest.h"
#include "raeid/common.hpp"
#include "raeid/rng.hpp"
#include "raeid/trainer.hpp"
#include "world.hpp"

using namespace raeid;
using raeid::testing::separable_data;

namespace {

RewardModel label_reward(int d, Label favoured, double value) {
  Network net(Architecture::Linear, d + kNumRewardLabels, 0, 1);
  net.parameters().setZero();
  net.parameters()(d + label_index(favoured)) = value;
  return RewardModel(std::move(net));
}

Policy bias_policy(int d, Eigen::Vector3d bias) {
  Network net(Architecture::Linear, d, 0, kNumPolicyLabels);
  net.parameters().setZero();
  net.parameters().tail(3) = bias;
  return Policy(std::move(net));
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.clip_eps = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.beta = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("sft on separable data") {
  const auto data = separable_data(600, 2, 1);
  TrainConfig c;
  c.learning_rate = 0.1;
  c.epochs = 200;
  c.seed = 2;
  const auto r = train_sft(Policy::initialized(Architecture::Linear, 2, 0, 3), data, c);
  CHECK(policy_accuracy(r.policy, data) >= 0.99);
  CHECK(r.loss_curve.back() <= r.loss_curve.front());
  CHECK(r.loss_curve.size() == 201);

  const auto again = train_sft(Policy::initialized(Architecture::Linear, 2, 0, 3), data, c);
  CHECK(again.policy == r.policy);
  CHECK(again.loss_curve == r.loss_curve);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto data = separable_data(50, 3, 4);
  TrainConfig c;
  c.learning_rate = 0.0;
  c.epochs = 5;
  const Policy p = Policy::initialized(Architecture::Mlp, 3, 4, 5);
  CHECK(train_sft(p, data, c).policy == p);
}

TEST_CASE("full-batch gradient descent on a linear policy is monotone") {
  const auto data = separable_data(120, 4, 6, 1.5);
  TrainConfig c;
  c.learning_rate = 0.05;
  c.momentum = 0.0;
  c.grad_clip = 0.0;
  c.batch_size = 120;
  c.epochs = 100;
  const auto r = train_sft(Policy::initialized(Architecture::Linear, 4, 0, 7), data, c);
  for (std::size_t i = 1; i < r.loss_curve.size(); ++i) {
    CHECK(r.loss_curve[i] <= r.loss_curve[i - 1] + 1e-15);
  }
}

TEST_CASE("sft divergence is reported") {
  auto data = separable_data(20, 2, 8);
  data[3].features(0) = NAN;
  TrainConfig c;
  c.epochs = 2;
  CHECK_THROWS(train_sft(Policy::initialized(Architecture::Linear, 2, 0, 1), data, c));
}

TEST_CASE("reward model on separable preferences") {
  Rng rng = make_rng(9);
  auto prefs = [&](std::size_t n) {
    std::vector<PreferenceFeature> out;
    for (std::size_t i = 0; i < n; ++i) {
      FeatureVector f(4);
      for (int j = 0; j < 4; ++j) f(j) = standard_normal(rng);
      const Label chosen = f(0) > 0 ? Label::Rise : Label::Fall;
      const Label rejected = f(0) > 0 ? Label::Fall : Label::Rise;
      out.push_back({f, chosen, rejected});
    }
    return out;
  };
  const auto train = prefs(800), held = prefs(400);
  TrainConfig c;
  c.optimizer = OptimizerKind::Adam;
  c.learning_rate = 0.01;
  c.epochs = 30;
  const auto r = train_reward_model(RewardModel::initialized(Architecture::Mlp, 4, 16, 3), train, c);
  CHECK(ranking_accuracy(r.rm, held) >= 0.95);
  CHECK(rm_loss_and_grad(r.rm, held).loss < std::log(2.0));
}

TEST_CASE("rollout sampling") {
  const int d = 2;
  const auto rm = label_reward(d, Label::Rise, 1.0);
  std::vector<LabeledFeature> prompts(10000, {FeatureVector::Zero(d), Label::Fall});

  const Policy p = bias_policy(d, Eigen::Vector3d(0.6, 0.3, 0.1).array().log());
  const auto ro = collect_rollouts(p, rm, prompts, 10000, 1);
  REQUIRE(ro.size() == 10000);
  std::array<int, 3> counts{};
  for (const auto& r : ro) {
    ++counts[label_index(r.sampled)];
    CHECK(r.truth == Label::Fall);
    CHECK(r.reward == (r.sampled == Label::Rise ? 1.0 : 0.0));
    CHECK(r.log_prob == doctest::Approx(p.log_probabilities(r.features)(label_index(r.sampled))));
  }
  CHECK(std::abs(counts[0] / 1e4 - 0.6) <= 0.02);
  CHECK(std::abs(counts[1] / 1e4 - 0.3) <= 0.02);
  CHECK(std::abs(counts[2] / 1e4 - 0.1) <= 0.02);

  const Policy sure = bias_policy(d, {0.0, 50.0, 0.0});
  for (const auto& r : collect_rollouts(sure, rm, prompts, 500, 2)) CHECK(r.sampled == Label::Fall);
  CHECK(collect_rollouts(p, rm, prompts, 0, 3).empty());

  const auto a = collect_rollouts(p, rm, prompts, 300, 4);
  const auto b = collect_rollouts(p, rm, std::span(prompts).first(300), 300, 4);
  for (std::size_t i = 0; i < 300; ++i) CHECK(a[i].sampled == b[i].sampled);
}

TEST_CASE("reward for a single label concentrates the policy") {
  const int d = 3;
  Rng rng = make_rng(5);
  std::vector<LabeledFeature> prompts;
  for (int i = 0; i < 256; ++i) {
    FeatureVector f(d);
    for (int j = 0; j < d; ++j) f(j) = standard_normal(rng);
    prompts.push_back({f, Label::Neutral});
  }
  const Policy start = Policy::initialized(Architecture::Linear, d, 0, 6);
  const ReferencePolicy ref(start);
  TrainConfig c;
  c.beta = 0.0;
  c.rl_iterations = 60;
  c.rollout_size = 256;
  c.learning_rate = 0.1;
  c.seed = 7;
  const auto r = train_rl(start, ref, label_reward(d, Label::Rise, 1.0), prompts, c, false);
  double mass = 0.0;
  for (const auto& p : prompts) mass += r.policy.probabilities(p.features)(0);
  CHECK(mass / prompts.size() >= 0.95);
  CHECK(ref.intact());
  for (const auto& h : r.history) {
    CHECK(h.diagnostics.kl_mean >= 0.0);
    CHECK(h.diagnostics.clip_fraction >= 0.0);
    CHECK(h.diagnostics.clip_fraction <= 1.0);
  }
}

TEST_CASE("zero advantage leaves parameters unchanged") {
  const Policy p = Policy::initialized(Architecture::Mlp, 3, 4, 1);
  const ReferencePolicy ref(p);
  std::vector<LabeledFeature> prompts(64, {FeatureVector::Ones(3), Label::Rise});
  const auto ro = collect_rollouts(p, label_reward(3, Label::Rise, 0.0), prompts, 64, 2);
  TrainConfig c;
  c.beta = 0.0;
  c.gamma = 0.0;
  c.baseline = BaselineMode::None;
  Optimizer opt(c, p.network().num_parameters());
  const auto u = ppo_update(p, ref, ro, c, opt);
  CHECK((u.policy.network().parameters() - p.network().parameters()).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("rlmf with zero market weight matches ppo bit for bit") {
  const auto data = separable_data(128, 3, 3);
  const Policy p = Policy::initialized(Architecture::Mlp, 3, 5, 4);
  const ReferencePolicy ref(p);
  const auto rm = RewardModel::initialized(Architecture::Mlp, 3, 5, 5);
  TrainConfig c;
  c.gamma = 0.0;
  c.seed = 6;
  c.rl_iterations = 5;
  c.rollout_size = 64;
  const auto a = train_rl(p, ref, rm, data, c, false);
  const auto b = train_rl(p, ref, rm, data, c, true);
  CHECK(a.policy.network().parameters() == b.policy.network().parameters());
}

TEST_CASE("market weight resolves a conflict with the reward model") {
  const int d = 3;
  const auto data = separable_data(300, d, 10);
  const auto rm = label_reward(d, Label::Neutral, 1.0);
  const Policy start = Policy::initialized(Architecture::Linear, d, 0, 11);
  const ReferencePolicy ref(start);
  double prev = -1.0;
  for (double g : {0.0, 1.0, 10.0}) {
    TrainConfig c;
    c.gamma = g;
    c.beta = 0.0;
    c.learning_rate = 0.05;
    c.rl_iterations = 40;
    c.rollout_size = 300;
    c.seed = 12;
    const auto r = train_rl(start, ref, rm, data, c, true);
    const double acc = policy_accuracy(r.policy, data);
    CHECK(acc >= prev);
    prev = acc;
  }
  CHECK(prev >= 0.9);
}

TEST_CASE("supervised reduction of the combined update") {
  const int d = 3;
  const auto data = separable_data(300, d, 20);
  const Policy start = Policy::initialized(Architecture::Linear, d, 0, 21);
  TrainConfig c;
  c.beta = 0.0;
  c.gamma = 1.0;
  c.learning_rate = 0.5;
  c.rl_iterations = 60;
  c.rollout_size = 300;
  c.seed = 22;
  const auto r = train_rl(start, ReferencePolicy(start), label_reward(d, Label::Rise, 0.0), data, c, true);
  CHECK(policy_accuracy(r.policy, data) >= 0.99);
}

TEST_CASE("metrics csv layout") {
  std::ostringstream out;
  write_metrics_header(out);
  write_metrics_row(out, 3, 0.5, 1.0, 0.25, 0.0, 0.75);
  CHECK(out.str().rfind("step,loss,reward_mean,kl_mean,clip_frac,acc\n3,", 0) == 0);
}
