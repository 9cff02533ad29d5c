#pragma once

// Synthetic fixtures shared by the unit and acceptance binaries.

#include <cstdint>
#include <vector>

#include "raeid/adaptloop.hpp"
#include "raeid/dataset.hpp"
#include "raeid/market_sim.hpp"
#include "raeid/models.hpp"
#include "raeid/rng.hpp"

namespace raeid::testing {

/// Price world with one return regime whose news channel inverts the Rise
/// and Fall codes from `shift` on. Features are the news block only.
struct FlipWorld {
  std::vector<LabeledFeature> pretrain;
  std::vector<LabeledFeature> stream;
  std::vector<int> stream_regimes;
  std::size_t shift = 0;  // index into stream
};

struct FlipWorldConfig {
  std::size_t pretrain = 600;
  std::size_t pre_shift = 200;
  std::size_t post_shift = 200;
  int news_dim = 8;
  double signal = 1.5;
  double noise = 1.0;
};

inline FlipWorld make_flip_world(std::uint64_t seed, const FlipWorldConfig& cfg = {}) {
  const std::size_t n = cfg.pretrain + cfg.pre_shift + cfg.post_shift;
  // build_examples skips the first two days.
  const auto horizon = static_cast<std::int64_t>(n + 2);
  const RegimeSpec spec = RegimeSpec::single({0.0, 0.0, 1.0});
  const RegimePath path = sample_regime_path(spec, horizon, derive_seed(seed, 1));
  const auto returns = simulate_returns(spec, path, derive_seed(seed, 2));
  const PriceSeries series = returns_to_ohlcv(returns, 100.0, derive_seed(seed, 3));

  std::vector<int> regimes(static_cast<std::size_t>(horizon), 0);
  for (std::size_t t = cfg.pretrain + cfg.pre_shift + 2; t < regimes.size(); ++t) regimes[t] = 1;

  WorldConfig w;
  w.news.dim = cfg.news_dim;
  w.news.signal = cfg.signal;
  w.news.noise = cfg.noise;
  w.news.seed = derive_seed(seed, 4);
  w.news.inverted_regimes = {1};
  w.seed = derive_seed(seed, 5);
  const auto examples = build_examples(series, regimes, w);

  FeatureConfig fc;
  fc.use_context = false;
  fc.news_dim = cfg.news_dim;
  const FeatureEncoder enc(fc);
  FlipWorld out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    LabeledFeature lf{enc.encode(examples[i]), examples[i].response};
    if (i < cfg.pretrain) {
      out.pretrain.push_back(std::move(lf));
    } else {
      out.stream.push_back(std::move(lf));
      out.stream_regimes.push_back(regimes[i + 2]);
    }
  }
  out.shift = cfg.pre_shift;
  return out;
}

/// Preference pairs (truth, uniform other label) for SFT-style data.
inline std::vector<PreferenceFeature> preferences_for(const std::vector<LabeledFeature>& data,
                                                      std::uint64_t seed) {
  std::vector<PreferenceFeature> out;
  Rng rng = make_rng(seed);
  for (const auto& d : data) {
    std::vector<Label> others;
    for (Label l : kRewardLabels) {
      if (l != d.label) others.push_back(l);
    }
    out.push_back({d.features, d.label, others[uniform_index(rng, others.size())]});
  }
  return out;
}

/// Points in R^d labelled by which of three well-separated anchors they
/// were drawn around.
inline std::vector<LabeledFeature> separable_data(std::size_t n, int d, std::uint64_t seed,
                                                  double spread = 0.3) {
  Rng rng = make_rng(seed);
  std::vector<FeatureVector> anchors;
  for (int k = 0; k < kNumPolicyLabels; ++k) {
    FeatureVector a = FeatureVector::Zero(d);
    a(k % d) = 2.0;
    if (k >= d) a(0) = -2.0;
    anchors.push_back(a);
  }
  std::vector<LabeledFeature> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int k = static_cast<int>(uniform_index(rng, kNumPolicyLabels));
    FeatureVector x = anchors[static_cast<std::size_t>(k)];
    for (int j = 0; j < d; ++j) x(j) += spread * standard_normal(rng);
    out.push_back({x, label_from_index(k)});
  }
  return out;
}

}  // namespace raeid::testing
