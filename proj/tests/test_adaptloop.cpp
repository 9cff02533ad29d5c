#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "raeid/adaptloop.hpp"
#include "raeid/common.hpp"
#include "raeid/metrics.hpp"
#include "world.hpp"

using namespace raeid;
using raeid::testing::separable_data;

namespace {

DeploymentConfig small_deploy(int window, int rlmf_epochs) {
  DeploymentConfig c;
  c.window = window;
  c.rm_epochs = 2;
  c.rlmf_epochs = rlmf_epochs;
  c.rollouts_per_prompt = 2;
  c.rm_train.epochs = 2;
  c.policy_train.learning_rate = 0.02;
  c.seed = 3;
  return c;
}

struct Trained {
  Policy teacher;
  RewardModel rm;
};

Trained quick_training(const std::vector<LabeledFeature>& data) {
  TrainingPhaseConfig c;
  c.hidden = 6;
  c.sft.epochs = 20;
  c.sft.learning_rate = 0.1;
  c.rm.epochs = 5;
  c.rl.rl_iterations = 3;
  c.rl.rollout_size = 64;
  c.seed = 4;
  const auto r = run_training_phase(c, {data, raeid::testing::preferences_for(data, 5)});
  return {r.teacher, r.rm};
}

}  // namespace

TEST_CASE("training phase on a separable world") {
  const auto train = separable_data(400, 4, 1);
  const auto test = separable_data(200, 4, 2);
  const auto dir = std::filesystem::temp_directory_path() / "raeid_adapt_ckpt";
  std::filesystem::create_directories(dir);

  TrainingPhaseConfig c;
  c.hidden = 8;
  c.sft.epochs = 40;
  c.sft.learning_rate = 0.1;
  c.rm.epochs = 5;
  c.rl.rl_iterations = 5;
  c.rl.rollout_size = 128;
  c.checkpoint_dir = dir;
  c.seed = 6;
  const TrainingData data{train, raeid::testing::preferences_for(train, 7)};
  const auto r = run_training_phase(c, data);
  CHECK(policy_accuracy(r.teacher, test) >= 0.9);
  CHECK(load_policy(dir / "sft.ckpt") == r.sft_policy);
  CHECK(load_reward_model(dir / "rm.ckpt") == r.rm);
  CHECK(load_policy(dir / "rlmf.ckpt") == r.teacher);

  c.skip_rl = true;
  c.checkpoint_dir.reset();
  const auto s = run_training_phase(c, data);
  CHECK(s.teacher == s.sft_policy);
  CHECK(s.sft_policy == r.sft_policy);
  std::filesystem::remove_all(dir);
}

TEST_CASE("training phase failures carry the stage") {
  TrainingPhaseConfig c;
  try {
    run_training_phase(c, {});
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).rfind("[sft]", 0) == 0);
  }
}

TEST_CASE("preferences from market feedback") {
  std::vector<RolloutTuple> wrong, right;
  for (int i = 0; i < 3000; ++i) {
    const Label truth = label_from_index(i % 3);
    const Label other = label_from_index((i + 1) % 3);
    wrong.push_back({FeatureVector::Zero(1), other, 0.0, truth, 0.0});
    right.push_back({FeatureVector::Zero(1), truth, 0.0, truth, 0.0});
  }
  const auto pw = derive_preferences_from_feedback(wrong, 1);
  REQUIRE(pw.size() == wrong.size());
  for (std::size_t i = 0; i < pw.size(); ++i) {
    CHECK(pw[i].chosen == wrong[i].truth);
    CHECK(pw[i].rejected == wrong[i].sampled);
  }
  const auto pr = derive_preferences_from_feedback(right, 2);
  REQUIRE(pr.size() == right.size());
  std::array<std::array<int, 4>, 3> counts{};
  for (const auto& p : pr) {
    REQUIRE(p.rejected != p.chosen);
    ++counts[label_index(p.chosen)][label_index(p.rejected)];
  }
  for (int c = 0; c < 3; ++c) {
    for (int r = 0; r < 4; ++r) {
      if (r != c) CHECK(std::abs(counts[c][r] / 1000.0 - 1.0 / 3.0) <= 0.05);
    }
  }
}

TEST_CASE("market stream forbids lookahead") {
  MarketStream s(separable_data(3, 2, 1));
  CHECK_THROWS_AS(s.reveal(0, Label::Rise), LookaheadError);
  CHECK_THROWS_AS(s.observe(1), LookaheadError);
  s.observe(0);
  CHECK_THROWS_AS(s.observe(0), LookaheadError);
  CHECK_THROWS_AS(s.observe(1), LookaheadError);
  s.reveal(0, Label::Fall);
  CHECK_THROWS_AS(s.reveal(0, Label::Fall), LookaheadError);
  s.observe(1);
  s.reveal(1, Label::Rise);
  s.observe(2);
  s.reveal(2, Label::Rise);
  CHECK_THROWS_AS(s.observe(3), LookaheadError);
  CHECK(s.committed() == std::vector<Label>{Label::Fall, Label::Rise, Label::Rise});
}

TEST_CASE("deployment swap cadence and log completeness") {
  const auto data = separable_data(200, 3, 8);
  const auto t = quick_training(data);
  const auto stream = separable_data(37, 3, 9);
  for (int T : {1, 5, 10, 37, 50}) {
    const auto log = run_deployment(t.teacher, t.rm, MarketStream(stream), small_deploy(T, 1));
    CHECK(log.steps.size() == stream.size());
    std::vector<std::size_t> expect;
    for (std::size_t k = T; k < stream.size(); k += T) expect.push_back(k);
    CHECK(log.swaps == expect);
    for (const auto& s : log.steps) {
      CHECK(s.swap == (std::find(expect.begin(), expect.end(), s.step) != expect.end()));
      CHECK(s.window == s.step / T);
      CHECK(s.correct == (s.pred == s.truth));
    }
    for (const auto& w : log.windows) {
      if (w.updated) {
        CHECK(std::isfinite(w.kl_to_original));
        CHECK(w.kl_to_original >= 0.0);
      }
    }
    if (!log.windows.empty()) CHECK_FALSE(log.windows.back().updated);
  }
}

TEST_CASE("frozen equivalences") {
  const auto data = separable_data(200, 3, 10);
  const auto t = quick_training(data);
  const auto stream = separable_data(60, 3, 11);
  const auto frozen = run_frozen_baseline(t.teacher, MarketStream(stream), 10);
  CHECK(frozen.swaps.empty());

  const auto whole = run_deployment(t.teacher, t.rm, MarketStream(stream), small_deploy(60, 3));
  CHECK(whole.swaps.empty());
  CHECK(whole.predictions() == frozen.predictions());

  const auto idle = run_deployment(t.teacher, t.rm, MarketStream(stream), small_deploy(10, 0));
  CHECK(idle.predictions() == frozen.predictions());

  const auto again = run_frozen_baseline(t.teacher, MarketStream(stream), 10);
  CHECK(again.predictions() == frozen.predictions());

  const auto p = frozen.predictions(), y = frozen.truths();
  CHECK(frozen.accuracy() == accuracy(p, y));
  for (std::size_t i = 0; i < stream.size(); ++i) {
    CHECK(p[i] == label_index(t.teacher.predict(stream[i].features)));
  }
}

TEST_CASE("deployment is deterministic and writes its log") {
  const auto data = separable_data(200, 3, 12);
  const auto t = quick_training(data);
  const auto stream = separable_data(40, 3, 13);
  const auto a = run_deployment(t.teacher, t.rm, MarketStream(stream), small_deploy(10, 2));
  const auto b = run_deployment(t.teacher, t.rm, MarketStream(stream), small_deploy(10, 2));
  std::ostringstream oa, ob;
  write_deployment_csv(oa, a);
  write_deployment_csv(ob, b);
  CHECK(oa.str() == ob.str());
  CHECK(oa.str().rfind("step,window,pred,truth,correct,swap\n", 0) == 0);
  CHECK_THROWS_AS(run_deployment(t.teacher, t.rm, MarketStream(stream), small_deploy(0, 1)),
                  ConfigError);
}
