#include "raeid/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "CLI11.hpp"
#include "json.hpp"
#include "raeid/adaptloop.hpp"
#include "raeid/igtools.hpp"
#include "raeid/io.hpp"
#include "raeid/metrics.hpp"
#include "raeid/rng.hpp"

namespace raeid::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kFormatVersion = 1;

const std::vector<std::string> kTrainKeys = {
    "learning_rate", "batch_size", "epochs",   "clip_eps",  "beta",      "gamma",
    "rollout_size",  "ppo_epochs", "rl_iterations", "baseline", "optimizer", "momentum",
    "grad_clip"};

std::vector<std::string> with_train_keys(std::vector<std::string> extra) {
  extra.insert(extra.end(), kTrainKeys.begin(), kTrainKeys.end());
  return extra;
}

}  // namespace

const std::map<std::string, std::vector<std::string>>& config_schema() {
  static const std::map<std::string, std::vector<std::string>> schema = {
      {"run", {"seed", "out"}},
      {"paths", {"data_dir", "checkpoint_dir"}},
      {"sim",
       {"horizon", "mu", "phi", "sigma", "transition", "initial", "shocks", "init_price",
        "shift_at", "shift_mu", "shift_phi", "shift_sigma"}},
      {"indicators",
       {"macd_fast", "macd_slow", "bollinger_window", "bollinger_k", "rsi_window", "cci_window",
        "dx_window", "sma_short", "sma_long"}},
      {"dataset",
       {"context_depth", "label_threshold", "news_dim", "news_signal", "news_noise", "news_seed",
        "inverted_regimes", "train_ratio", "test_ratio", "eval_ratio", "shuffle", "instructions"}},
      {"features", {"use_context", "news_dim"}},
      {"model", {"arch", "hidden", "rm_fallback_hidden"}},
      {"sft", with_train_keys({})},
      {"rm", with_train_keys({})},
      {"rl", with_train_keys({"market_feedback"})},
      {"deploy",
       {"window", "rm_epochs", "rlmf_epochs", "rollouts_per_prompt", "fixed_reference",
        "rm_replay", "teacher", "split"}},
      {"deploy_rm", with_train_keys({})},
      {"deploy_policy", with_train_keys({})},
      {"eval", {"checkpoint", "split"}},
      {"ig",
       {"inputs", "tasks", "perplexity", "iterations", "exaggeration", "exaggeration_iterations",
        "learning_rate", "min_cluster_size", "radius"}},
  };
  return schema;
}

namespace {

void check_known(const std::string& section, const std::string& key) {
  const auto& schema = config_schema();
  const auto it = schema.find(section);
  if (it == schema.end()) throw ConfigError("unknown config section [" + section + "]");
  if (std::find(it->second.begin(), it->second.end(), key) == it->second.end()) {
    throw ConfigError("unknown config key '" + key + "' in section [" + section + "]");
  }
}

template <typename T, typename Fn>
T convert(const std::string& section, const std::string& key, const std::string& value, Fn fn) {
  try {
    return fn(value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(section + "." + key + ": cannot parse '" + value + "'");
  } catch (const std::out_of_range&) {
    throw ConfigError(section + "." + key + ": value out of range '" + value + "'");
  }
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError("config key '" + section + "' must live inside a [section]");
    }
    for (const auto& [key, value] : body) {
      check_known(section, key);
      cfg.values_[section][key] = trim(value.data());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
  }
  const std::string section = assignment.substr(0, dot);
  const std::string key = assignment.substr(dot + 1, eq - dot - 1);
  check_known(section, key);
  values_[section][key] = trim(assignment.substr(eq + 1));
}

std::optional<std::string> RunConfig::raw(const std::string& section,
                                          const std::string& key) const {
  const auto s = values_.find(section);
  if (s == values_.end()) return std::nullopt;
  const auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

std::string RunConfig::str(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
  return raw(section, key).value_or(fallback);
}

double RunConfig::real(const std::string& section, const std::string& key,
                       double fallback) const {
  const auto v = raw(section, key);
  if (!v) return fallback;
  return convert<double>(section, key, *v, [](const std::string& s) { return parse_double(s); });
}

long long RunConfig::integer(const std::string& section, const std::string& key,
                             long long fallback) const {
  const auto v = raw(section, key);
  if (!v) return fallback;
  return convert<long long>(section, key, *v, [](const std::string& s) { return parse_int(s); });
}

bool RunConfig::flag(const std::string& section, const std::string& key, bool fallback) const {
  const auto v = raw(section, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError(section + "." + key + ": expected true/false, got '" + *v + "'");
}

std::vector<double> RunConfig::reals(const std::string& section, const std::string& key,
                                     std::vector<double> fallback) const {
  const auto v = raw(section, key);
  if (!v) return fallback;
  std::vector<double> out;
  if (trim(*v).empty()) return out;
  for (const auto& part : split(*v, ',')) {
    out.push_back(convert<double>(section, key, trim(part),
                                  [](const std::string& s) { return parse_double(s); }));
  }
  return out;
}

std::vector<int> RunConfig::integers(const std::string& section, const std::string& key,
                                     std::vector<int> fallback) const {
  const auto v = raw(section, key);
  if (!v) return fallback;
  std::vector<int> out;
  if (trim(*v).empty()) return out;
  for (const auto& part : split(*v, ',')) {
    out.push_back(static_cast<int>(convert<long long>(
        section, key, trim(part), [](const std::string& s) { return parse_int(s); })));
  }
  return out;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [section, body] : values_) {
    for (const auto& [key, value] : body) out += section + "." + key + "=" + value + "\n";
  }
  return out;
}

namespace {

// Everything a command needs besides its own section.
struct Context {
  RunConfig config;
  std::uint64_t seed = 0;
  fs::path out;
  fs::path data_dir;
  fs::path checkpoint_dir;
  std::ostream* log = nullptr;
};

struct Manifest {
  ojson seeds = ojson::object();
  ojson extra = ojson::object();
  std::vector<std::pair<std::string, std::string>> files;  // name, hash
};

void emit(const Context& ctx, Manifest& m, const std::string& name, const std::string& content) {
  atomic_write_file(ctx.out / name, content);
  m.files.emplace_back(name, fnv1a_hex(content));
}

void write_manifest(const Context& ctx, const std::string& command, const Manifest& m) {
  ojson j;
  j["command"] = command;
  j["format_version"] = kFormatVersion;
  j["seed"] = ctx.seed;
  j["seeds"] = m.seeds;
  j["config_hash"] = fnv1a_hex(ctx.config.canonical());
  for (const auto& [k, v] : m.extra.items()) j[k] = v;
  ojson files = ojson::object();
  for (const auto& [name, hash] : m.files) files[name] = hash;
  j["outputs"] = files;
  atomic_write_file(ctx.out / ("manifest_" + command + ".json"), j.dump(2) + "\n");
}

TrainConfig train_config(const RunConfig& c, const std::string& s, TrainConfig t,
                         std::uint64_t seed) {
  t.learning_rate = c.real(s, "learning_rate", t.learning_rate);
  t.batch_size = static_cast<int>(c.integer(s, "batch_size", t.batch_size));
  t.epochs = static_cast<int>(c.integer(s, "epochs", t.epochs));
  t.clip_eps = c.real(s, "clip_eps", t.clip_eps);
  t.beta = c.real(s, "beta", t.beta);
  t.gamma = c.real(s, "gamma", t.gamma);
  t.rollout_size = static_cast<int>(c.integer(s, "rollout_size", t.rollout_size));
  t.ppo_epochs = static_cast<int>(c.integer(s, "ppo_epochs", t.ppo_epochs));
  t.rl_iterations = static_cast<int>(c.integer(s, "rl_iterations", t.rl_iterations));
  t.momentum = c.real(s, "momentum", t.momentum);
  t.grad_clip = c.real(s, "grad_clip", t.grad_clip);
  const std::string opt = c.str(s, "optimizer", t.optimizer == OptimizerKind::Adam ? "adam" : "sgd");
  if (opt == "sgd") {
    t.optimizer = OptimizerKind::Sgd;
  } else if (opt == "adam") {
    t.optimizer = OptimizerKind::Adam;
  } else {
    throw ConfigError(s + ".optimizer must be sgd or adam");
  }
  const std::string base =
      c.str(s, "baseline", t.baseline == BaselineMode::None ? "none" : "running_mean");
  if (base == "running_mean") {
    t.baseline = BaselineMode::RunningMean;
  } else if (base == "none") {
    t.baseline = BaselineMode::None;
  } else {
    throw ConfigError(s + ".baseline must be running_mean or none");
  }
  t.seed = seed;
  t.validate();
  return t;
}

Architecture architecture(const RunConfig& c) {
  const std::string a = c.str("model", "arch", "mlp");
  if (a == "mlp") return Architecture::Mlp;
  if (a == "linear") return Architecture::Linear;
  throw ConfigError("model.arch must be linear or mlp");
}

FeatureEncoder encoder(const RunConfig& c) {
  FeatureConfig f;
  f.context_depth = static_cast<int>(c.integer("dataset", "context_depth", f.context_depth));
  f.use_context = c.flag("features", "use_context", f.use_context);
  f.news_dim = static_cast<int>(
      c.integer("features", "news_dim", c.integer("dataset", "news_dim", f.news_dim)));
  return FeatureEncoder(f);
}

std::vector<Example> read_split(const Context& ctx, const std::string& name) {
  const fs::path p = ctx.data_dir / (name + ".jsonl");
  if (!fs::exists(p)) throw DataError("missing dataset split " + p.string() + " (run build-dataset)");
  std::istringstream in(read_file(p));
  return read_examples(in);
}

std::vector<LabeledFeature> encode_all(const FeatureEncoder& enc, std::span<const Example> xs) {
  std::vector<LabeledFeature> out;
  out.reserve(xs.size());
  for (const auto& x : xs) {
    if (!is_policy_label(x.response)) {
      throw DataError("example " + x.id + " has label " + std::string(label_name(x.response)) +
                      " outside the policy vocabulary");
    }
    out.push_back({enc.encode(x), x.response});
  }
  return out;
}

std::uint64_t stage_seed(const Context& ctx, std::uint64_t k) { return derive_seed(ctx.seed, k); }

// Seed slots per pipeline stage.
enum SeedSlot : std::uint64_t {
  kSeedPath = 1,
  kSeedShocks = 2,
  kSeedOhlcv = 3,
  kSeedWorld = 4,
  kSeedPreferences = 5,
  kSeedSplit = 6,
  kSeedSft = 10,
  kSeedRm = 11,
  kSeedRl = 12,
  kSeedDeploy = 13,
  kSeedIg = 14,
};

std::vector<RegimeParams> regime_params(const RunConfig& c, const std::string& mu_key,
                                        const std::string& phi_key,
                                        const std::string& sigma_key,
                                        const std::vector<RegimeParams>& fallback) {
  std::vector<double> mu, phi, sigma;
  for (const auto& p : fallback) {
    mu.push_back(p.mu);
    phi.push_back(p.phi);
    sigma.push_back(p.sigma);
  }
  mu = c.reals("sim", mu_key, mu);
  phi = c.reals("sim", phi_key, phi);
  sigma = c.reals("sim", sigma_key, sigma);
  if (mu.size() != phi.size() || mu.size() != sigma.size() || mu.empty()) {
    throw ConfigError("sim." + mu_key + ", " + phi_key + ", " + sigma_key +
                      " must list one value per regime");
  }
  std::vector<RegimeParams> out;
  for (std::size_t i = 0; i < mu.size(); ++i) out.push_back({mu[i], phi[i], sigma[i]});
  return out;
}

RegimeSchedule schedule_from_config(const RunConfig& c) {
  const std::vector<RegimeParams> defaults = {{0.08, 0.05, 0.9}, {-0.08, 0.05, 1.4}};
  const auto params = regime_params(c, "mu", "phi", "sigma", defaults);
  const auto k = static_cast<Eigen::Index>(params.size());
  std::vector<double> tr;
  if (k == 2) tr = {0.98, 0.02, 0.03, 0.97};
  tr = c.reals("sim", "transition", tr);
  if (static_cast<Eigen::Index>(tr.size()) != k * k) {
    throw ConfigError("sim.transition must list " + std::to_string(k * k) + " row-major entries");
  }
  Eigen::MatrixXd t(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) t(i, j) = tr[static_cast<std::size_t>(i * k + j)];
  }
  std::vector<double> init(static_cast<std::size_t>(k), 1.0 / static_cast<double>(k));
  init = c.reals("sim", "initial", init);
  if (static_cast<Eigen::Index>(init.size()) != k) throw ConfigError("sim.initial must have one entry per regime");
  const std::string shocks = c.str("sim", "shocks", "normal");
  ShockDistribution dist;
  if (shocks == "normal") {
    dist = ShockDistribution::Normal;
  } else if (shocks == "uniform") {
    dist = ShockDistribution::Uniform;
  } else {
    throw ConfigError("sim.shocks must be normal or uniform");
  }
  RegimeSpec spec(params, t, Eigen::Map<Eigen::VectorXd>(init.data(), k), dist);
  RegimeSchedule schedule(spec);
  const long long shift = c.integer("sim", "shift_at", -1);
  if (shift >= 0) {
    schedule.add_shift(shift, regime_params(c, "shift_mu", "shift_phi", "shift_sigma", params));
  }
  return schedule;
}

std::string schedule_hash(const RegimeSchedule& s) {
  std::string text;
  for (std::size_t i = 0; i < s.num_segments(); ++i) {
    text += std::to_string(s.segment_start(i)) + ":" + s.segment_spec(i).content_hash() + ";";
  }
  return fnv1a_hex(text);
}

int cmd_simulate(Context& ctx) {
  const RunConfig& c = ctx.config;
  const long long horizon = c.integer("sim", "horizon", 2200);
  if (horizon <= 0) throw ConfigError("sim.horizon must be positive");
  const RegimeSchedule schedule = schedule_from_config(c);
  const double init_price = c.real("sim", "init_price", 100.0);
  if (!(init_price > 0.0)) throw ConfigError("sim.init_price must be positive");

  IndicatorConfig ic;
  ic.macd_fast = static_cast<int>(c.integer("indicators", "macd_fast", ic.macd_fast));
  ic.macd_slow = static_cast<int>(c.integer("indicators", "macd_slow", ic.macd_slow));
  ic.bollinger_window = static_cast<int>(c.integer("indicators", "bollinger_window", ic.bollinger_window));
  ic.bollinger_k = c.real("indicators", "bollinger_k", ic.bollinger_k);
  ic.rsi_window = static_cast<int>(c.integer("indicators", "rsi_window", ic.rsi_window));
  ic.cci_window = static_cast<int>(c.integer("indicators", "cci_window", ic.cci_window));
  ic.dx_window = static_cast<int>(c.integer("indicators", "dx_window", ic.dx_window));
  ic.sma_short = static_cast<int>(c.integer("indicators", "sma_short", ic.sma_short));
  ic.sma_long = static_cast<int>(c.integer("indicators", "sma_long", ic.sma_long));

  Manifest m;
  m.seeds["regime_path"] = stage_seed(ctx, kSeedPath);
  m.seeds["shocks"] = stage_seed(ctx, kSeedShocks);
  m.seeds["ohlcv"] = stage_seed(ctx, kSeedOhlcv);

  const RegimePath path = sample_regime_path(schedule, horizon, stage_seed(ctx, kSeedPath));
  const auto returns = simulate_returns(schedule, path, stage_seed(ctx, kSeedShocks));
  const PriceSeries series = returns_to_ohlcv(returns, init_price, stage_seed(ctx, kSeedOhlcv));
  const auto indicators = compute_indicators(series, ic);

  std::ostringstream prices, ind, regimes;
  write_price_csv(prices, series);
  write_indicator_csv(ind, indicators);
  regimes << "date,regime\n";
  for (std::size_t t = 0; t < series.size(); ++t) {
    regimes << day_to_iso(series.dates[t]) << ',' << path.states[t] << '\n';
  }
  emit(ctx, m, "prices.csv", prices.str());
  emit(ctx, m, "indicators.csv", ind.str());
  emit(ctx, m, "regimes.csv", regimes.str());
  m.extra["spec_hash"] = schedule_hash(schedule);
  m.extra["horizon"] = horizon;
  write_manifest(ctx, "simulate", m);
  *ctx.log << "simulated " << horizon << " steps over " << schedule.base().num_regimes()
           << " regimes\n";
  return 0;
}

std::map<std::string, int> read_regimes(const fs::path& p) {
  std::map<std::string, int> out;
  if (!fs::exists(p)) return out;
  std::istringstream in(read_file(p));
  std::string line;
  std::getline(in, line);
  if (trim(line) != "date,regime") throw DataError(p.string() + ": unexpected header");
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    if (cells.size() != 2) throw DataError(p.string() + ": malformed row '" + line + "'");
    try {
      out[cells[0]] = static_cast<int>(parse_int(cells[1]));
    } catch (const std::invalid_argument& e) {
      throw DataError(p.string() + ": " + e.what());
    }
  }
  return out;
}

int cmd_build_dataset(Context& ctx) {
  const RunConfig& c = ctx.config;
  const fs::path prices_path = ctx.data_dir / "prices.csv";
  if (!fs::exists(prices_path)) throw DataError("missing " + prices_path.string() + " (run simulate)");
  std::istringstream prices(read_file(prices_path));
  const PriceSeries series = read_price_csv(prices);
  const auto regime_by_date = read_regimes(ctx.data_dir / "regimes.csv");
  std::vector<int> regimes;
  if (!regime_by_date.empty()) {
    for (auto d : series.dates) {
      const auto it = regime_by_date.find(day_to_iso(d));
      if (it == regime_by_date.end()) throw DataError("regimes.csv lacks date " + day_to_iso(d));
      regimes.push_back(it->second);
    }
  }

  WorldConfig w;
  w.context_depth = static_cast<int>(c.integer("dataset", "context_depth", w.context_depth));
  w.label_threshold = c.real("dataset", "label_threshold", w.label_threshold);
  w.news.dim = static_cast<int>(c.integer("dataset", "news_dim", w.news.dim));
  w.news.signal = c.real("dataset", "news_signal", w.news.signal);
  w.news.noise = c.real("dataset", "news_noise", w.news.noise);
  w.news.seed = static_cast<std::uint64_t>(c.integer("dataset", "news_seed", static_cast<long long>(w.news.seed)));
  w.news.inverted_regimes = c.integers("dataset", "inverted_regimes", {});
  w.seed = stage_seed(ctx, kSeedWorld);

  std::vector<std::string> instructions;
  if (const auto p = c.raw("dataset", "instructions")) instructions = load_instructions(*p);

  SplitRatios ratios;
  ratios.train = c.real("dataset", "train_ratio", ratios.train);
  ratios.test = c.real("dataset", "test_ratio", ratios.test);
  ratios.eval = c.real("dataset", "eval_ratio", ratios.eval);
  if (ratios.test < 0 || ratios.eval < 0 || ratios.train < 0 ||
      std::abs(ratios.train + ratios.test + ratios.eval - 1.0) > 1e-9) {
    throw ConfigError("dataset ratios must be non-negative and sum to 1");
  }

  auto examples = build_examples(series, regimes, w, instructions);
  const std::size_t total = examples.size();
  const DatasetSplit split = split_dataset(std::move(examples), ratios, stage_seed(ctx, kSeedSplit),
                                           c.flag("dataset", "shuffle", false));
  std::vector<PreferencePair> prefs;
  const std::uint64_t pref_seed = stage_seed(ctx, kSeedPreferences);
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    prefs.push_back(make_preference_pair(split.train[i], derive_seed(pref_seed, i)));
  }

  Manifest m;
  m.seeds["world"] = w.seed;
  m.seeds["split"] = stage_seed(ctx, kSeedSplit);
  m.seeds["preferences"] = pref_seed;
  const auto write_split = [&](const std::string& name, const std::vector<Example>& xs) {
    std::ostringstream s;
    write_examples(s, xs);
    emit(ctx, m, name + ".jsonl", s.str());
  };
  write_split("train", split.train);
  write_split("eval", split.eval);
  write_split("test", split.test);
  std::ostringstream ps;
  write_preferences(ps, prefs);
  emit(ctx, m, "preferences.jsonl", ps.str());

  std::vector<Example> all = split.train;
  all.insert(all.end(), split.test.begin(), split.test.end());
  all.insert(all.end(), split.eval.begin(), split.eval.end());
  const auto counts = label_counts(all);
  ojson stats;
  stats["number_of_data_points"] = total;
  stats["labels"] = {{"Rise", counts[0]}, {"Fall", counts[1]}, {"Neutral", counts[2]}};
  stats["splits"] = {{"train", split.train.size()}, {"test", split.test.size()},
                     {"eval", split.eval.size()}};
  m.extra["stats"] = stats;
  write_manifest(ctx, "build-dataset", m);
  *ctx.log << "examples " << total << " (rise " << counts[0] << ", fall " << counts[1]
           << ", neutral " << counts[2] << ")\n"
           << "split train " << split.train.size() << ", test " << split.test.size()
           << ", eval " << split.eval.size() << "\n";
  return 0;
}

std::vector<PreferenceFeature> join_preferences(const Context& ctx, const FeatureEncoder& enc,
                                                std::span<const Example> train) {
  const fs::path p = ctx.data_dir / "preferences.jsonl";
  if (!fs::exists(p)) throw DataError("missing " + p.string() + " (run build-dataset)");
  std::istringstream in(read_file(p));
  const auto pairs = read_preferences(in);
  std::map<std::string, const Example*> by_id;
  for (const auto& x : train) by_id[x.id] = &x;
  std::vector<PreferenceFeature> out;
  for (const auto& pp : pairs) {
    const auto it = by_id.find(pp.prompt_id);
    if (it == by_id.end()) throw DataError("preference references unknown prompt " + pp.prompt_id);
    out.push_back({enc.encode(*it->second), pp.chosen, pp.rejected});
  }
  return out;
}

std::string metrics_csv_from_curve(const std::vector<double>& curve) {
  std::ostringstream s;
  write_metrics_header(s);
  for (std::size_t i = 0; i < curve.size(); ++i) {
    write_metrics_row(s, static_cast<int>(i), curve[i], 0.0, 0.0, 0.0, 0.0);
  }
  return s.str();
}

Policy require_policy(const Context& ctx, const std::string& name, int dim) {
  const fs::path p = ctx.checkpoint_dir / name;
  if (!fs::exists(p)) {
    throw DataError("missing prerequisite checkpoint " + p.string());
  }
  return load_policy(p, dim);
}

RewardModel require_rm(const Context& ctx, int dim) {
  const fs::path p = ctx.checkpoint_dir / "rm.ckpt";
  if (!fs::exists(p)) throw DataError("missing prerequisite checkpoint " + p.string());
  RewardModel rm = load_reward_model(p);
  if (rm.feature_dim() != dim) {
    throw DataError("rm.ckpt expects " + std::to_string(rm.feature_dim()) +
                    " features but the data encodes " + std::to_string(dim));
  }
  return rm;
}

int cmd_train(Context& ctx, const std::string& stage) {
  const RunConfig& c = ctx.config;
  const FeatureEncoder enc = encoder(c);
  const int dim = enc.dimension();
  const auto train = read_split(ctx, "train");
  if (train.empty()) throw DataError("training split is empty");
  const auto data = encode_all(enc, train);
  const Architecture arch = architecture(c);
  const int hidden = static_cast<int>(c.integer("model", "hidden", 16));
  Manifest m;
  fs::create_directories(ctx.checkpoint_dir);

  if (stage == "sft") {
    const TrainConfig tc = train_config(c, "sft", TrainConfig{}, stage_seed(ctx, kSeedSft));
    m.seeds["init"] = derive_seed(tc.seed, 1);
    m.seeds["train"] = tc.seed;
    Policy init = Policy::initialized(arch, dim, hidden, derive_seed(tc.seed, 1));
    SftResult r = train_sft(std::move(init), data, tc);
    save_checkpoint(ctx.checkpoint_dir / "sft.ckpt", r.policy);
    emit(ctx, m, "sft_metrics.csv", metrics_csv_from_curve(r.loss_curve));
    m.extra["train_accuracy"] = policy_accuracy(r.policy, data);
    m.extra["checkpoint_hash"] = content_hash(r.policy.network());
  } else if (stage == "rm") {
    const Policy sft = require_policy(ctx, "sft.ckpt", dim);
    const TrainConfig tc = train_config(c, "rm", TrainConfig{}, stage_seed(ctx, kSeedRm));
    m.seeds["init"] = derive_seed(tc.seed, 1);
    m.seeds["train"] = tc.seed;
    const auto prefs = join_preferences(ctx, enc, train);
    if (prefs.empty()) throw DataError("no preference pairs");
    RewardModel init = RewardModel::from_policy(
        sft, derive_seed(tc.seed, 1), static_cast<int>(c.integer("model", "rm_fallback_hidden", 32)));
    RmResult r = train_reward_model(std::move(init), prefs, tc);
    save_checkpoint(ctx.checkpoint_dir / "rm.ckpt", r.rm);
    emit(ctx, m, "rm_metrics.csv", metrics_csv_from_curve(r.loss_curve));
    m.extra["ranking_accuracy"] = ranking_accuracy(r.rm, prefs);
    m.extra["checkpoint_hash"] = content_hash(r.rm.network());
  } else if (stage == "rlmf") {
    const Policy sft = require_policy(ctx, "sft.ckpt", dim);
    const RewardModel rm = require_rm(ctx, dim);
    const TrainConfig tc = train_config(c, "rl", TrainConfig{}, stage_seed(ctx, kSeedRl));
    m.seeds["train"] = tc.seed;
    const ReferencePolicy ref(sft);
    RlResult r = train_rl(sft, ref, rm, data, tc, c.flag("rl", "market_feedback", false));
    save_checkpoint(ctx.checkpoint_dir / "rlmf.ckpt", r.policy);
    std::ostringstream s;
    write_metrics_header(s);
    for (const auto& h : r.history) {
      const auto& d = h.diagnostics;
      write_metrics_row(s, h.step, d.loss, d.reward_mean, d.kl_mean, d.clip_fraction, d.accuracy);
    }
    emit(ctx, m, "rlmf_metrics.csv", s.str());
    m.extra["train_accuracy"] = policy_accuracy(r.policy, data);
    m.extra["checkpoint_hash"] = content_hash(r.policy.network());
  } else {
    throw ConfigError("--stage must be sft, rm or rlmf");
  }
  m.extra["stage"] = stage;
  write_manifest(ctx, "train_" + stage, m);
  *ctx.log << "trained " << stage << " on " << data.size() << " examples\n";
  return 0;
}

ojson window_json(const WindowRecord& w) {
  ojson j;
  j["window"] = w.window;
  j["start"] = w.start;
  j["length"] = w.length;
  j["accuracy"] = w.accuracy;
  j["updated"] = w.updated;
  if (w.updated) {
    j["rm_ranking_accuracy"] = w.rm_ranking_accuracy;
    j["kl_to_reference"] = w.kl_to_reference;
    j["kl_to_original"] = w.kl_to_original;
    j["post_update_accuracy"] = w.post_update_accuracy;
  }
  return j;
}

int cmd_deploy(Context& ctx) {
  const RunConfig& c = ctx.config;
  const FeatureEncoder enc = encoder(c);
  const int dim = enc.dimension();
  const std::string split = c.str("deploy", "split", "test");
  const auto examples = read_split(ctx, split);
  if (examples.empty()) throw DataError("deployment split '" + split + "' is empty");
  const Policy teacher = require_policy(ctx, c.str("deploy", "teacher", "rlmf.ckpt"), dim);
  const RewardModel rm = require_rm(ctx, dim);

  DeploymentConfig dc;
  dc.window = static_cast<int>(c.integer("deploy", "window", dc.window));
  dc.rm_epochs = static_cast<int>(c.integer("deploy", "rm_epochs", dc.rm_epochs));
  dc.rlmf_epochs = static_cast<int>(c.integer("deploy", "rlmf_epochs", dc.rlmf_epochs));
  dc.rollouts_per_prompt =
      static_cast<int>(c.integer("deploy", "rollouts_per_prompt", dc.rollouts_per_prompt));
  dc.fixed_reference = c.flag("deploy", "fixed_reference", dc.fixed_reference);
  dc.rm_replay = c.flag("deploy", "rm_replay", dc.rm_replay);
  dc.seed = stage_seed(ctx, kSeedDeploy);
  dc.rm_train = train_config(c, "deploy_rm", dc.rm_train, derive_seed(dc.seed, 1));
  dc.policy_train = train_config(c, "deploy_policy", dc.policy_train, derive_seed(dc.seed, 2));

  const auto data = encode_all(enc, examples);
  const auto regime_by_date = read_regimes(ctx.data_dir / "regimes.csv");
  std::vector<int> regimes;
  if (!regime_by_date.empty()) {
    for (const auto& x : examples) {
      const auto it = regime_by_date.find(x.date);
      if (it == regime_by_date.end()) {
        regimes.clear();
        break;
      }
      regimes.push_back(it->second);
    }
  }

  const DeploymentLog adaptive = run_deployment(teacher, rm, MarketStream(data, regimes), dc);
  const DeploymentLog frozen = run_frozen_baseline(teacher, MarketStream(data, regimes), dc.window);

  Manifest m;
  m.seeds["deploy"] = dc.seed;
  std::ostringstream a, f;
  write_deployment_csv(a, adaptive);
  write_deployment_csv(f, frozen);
  emit(ctx, m, "deploy_adaptive.csv", a.str());
  emit(ctx, m, "deploy_frozen.csv", f.str());

  ojson summary;
  summary["stream_length"] = data.size();
  summary["window"] = dc.window;
  summary["swaps"] = adaptive.swaps;
  summary["adaptive_accuracy"] = adaptive.accuracy();
  summary["frozen_accuracy"] = frozen.accuracy();
  summary["accuracy_delta"] = adaptive.accuracy() - frozen.accuracy();
  ojson aw = ojson::array(), fw = ojson::array();
  for (const auto& w : adaptive.windows) aw.push_back(window_json(w));
  for (const auto& w : frozen.windows) fw.push_back(window_json(w));
  summary["adaptive_windows"] = aw;
  summary["frozen_windows"] = fw;
  emit(ctx, m, "deploy_summary.json", summary.dump(2) + "\n");
  write_manifest(ctx, "deploy", m);
  *ctx.log << "adaptive " << fixed6(adaptive.accuracy()) << ", frozen " << fixed6(frozen.accuracy())
           << ", delta " << fixed6(adaptive.accuracy() - frozen.accuracy()) << "\n";
  return 0;
}

int cmd_eval(Context& ctx) {
  const RunConfig& c = ctx.config;
  const FeatureEncoder enc = encoder(c);
  const std::string split = c.str("eval", "split", "test");
  const auto examples = read_split(ctx, split);
  if (examples.empty()) throw DataError("evaluation split '" + split + "' is empty");
  const auto data = encode_all(enc, examples);
  const std::string ckpt = c.str("eval", "checkpoint", "rlmf.ckpt");
  const Policy policy = require_policy(ctx, ckpt, enc.dimension());
  if (policy.network().output_dim() != kNumPolicyLabels) {
    throw DataError(ckpt + " predicts " + std::to_string(policy.network().output_dim()) +
                    " labels; the policy vocabulary has " + std::to_string(kNumPolicyLabels));
  }
  ConfusionMatrix cm(kNumPolicyLabels);
  for (const auto& d : data) cm.add(label_index(policy.predict(d.features)), label_index(d.label));
  Manifest m;
  const std::string report = metrics_report_json(cm);
  emit(ctx, m, "eval_metrics.json", report);
  m.extra["checkpoint"] = ckpt;
  m.extra["split"] = split;
  write_manifest(ctx, "eval", m);
  *ctx.log << "accuracy " << fixed6(accuracy(cm)) << " on " << data.size() << " examples\n";
  return 0;
}

int cmd_ig(Context& ctx) {
  const RunConfig& c = ctx.config;
  const auto inputs_raw = c.raw("ig", "inputs");
  if (!inputs_raw || trim(*inputs_raw).empty()) throw ConfigError("ig.inputs must name embedding files");
  std::vector<std::string> tasks;
  for (const auto& t : split(c.str("ig", "tasks", "categorical"), ',')) tasks.push_back(trim(t));

  IgPipelineConfig pc;
  pc.tsne.perplexity = c.real("ig", "perplexity", pc.tsne.perplexity);
  pc.tsne.iterations = static_cast<int>(c.integer("ig", "iterations", pc.tsne.iterations));
  pc.tsne.exaggeration = c.real("ig", "exaggeration", pc.tsne.exaggeration);
  pc.tsne.exaggeration_iterations = static_cast<int>(
      c.integer("ig", "exaggeration_iterations", pc.tsne.exaggeration_iterations));
  if (c.raw("ig", "learning_rate")) pc.tsne.learning_rate = c.real("ig", "learning_rate", 0.0);
  pc.tsne.seed = stage_seed(ctx, kSeedIg);
  pc.cluster.min_cluster_size =
      static_cast<int>(c.integer("ig", "min_cluster_size", pc.cluster.min_cluster_size));
  if (c.raw("ig", "radius")) pc.cluster.radius = c.real("ig", "radius", 0.0);

  Manifest m;
  m.seeds["tsne"] = pc.tsne.seed;
  for (const auto& in : split(*inputs_raw, ',')) {
    const fs::path path = trim(in);
    if (!fs::exists(path)) throw ConfigError("ig input " + path.string() + " does not exist");
    const EmbeddingSet set = read_embeddings(path);
    for (const auto& task : tasks) {
      IgTask t;
      if (task == "categorical") {
        t = IgTask::Categorical;
      } else if (task == "movement") {
        t = IgTask::Movement;
      } else {
        throw ConfigError("ig.tasks entries must be categorical or movement");
      }
      const IGReport r = ig_report(set, t, pc);
      const std::string name = "ig_" + path.stem().string() + "_" + task + ".json";
      emit(ctx, m, name, ig_report_json(r));
      *ctx.log << name << ": IG " << fixed6(r.information_gain) << " bits, RV "
               << fixed6(r.variance_reduction) << ", clusters " << r.cluster_count << "\n";
    }
  }
  write_manifest(ctx, "ig", m);
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Regime-adaptive movement prediction toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<long long> seed_flag;
  std::string out_flag;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "INI configuration file");
  app.add_option("--seed", seed_flag, "Root seed");
  app.add_option("--out", out_flag, "Output directory");
  app.add_option("--set", overrides, "Override a config value: section.key=value");

  std::string stage;
  auto* sim = app.add_subcommand("simulate", "Simulate a regime-switching price series");
  auto* build = app.add_subcommand("build-dataset", "Build examples, splits and preference pairs");
  auto* train = app.add_subcommand("train", "Train one stage");
  train->add_option("--stage", stage, "sft, rm or rlmf")
      ->required()
      ->check(CLI::IsMember({"sft", "rm", "rlmf"}));
  auto* deploy = app.add_subcommand("deploy", "Run the adaptive and frozen deployment arms");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  auto* ig = app.add_subcommand("ig", "Information-gain report for embedding files");
  for (auto* sub : {sim, build, train, deploy, eval, ig}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    Context ctx;
    if (!config_path.empty()) ctx.config = RunConfig::load(config_path);
    for (const auto& o : overrides) ctx.config.set(o);
    const long long seed = seed_flag ? *seed_flag : ctx.config.integer("run", "seed", 0);
    if (seed < 0) throw ConfigError("seed must be non-negative");
    ctx.seed = static_cast<std::uint64_t>(seed);
    ctx.out = out_flag.empty() ? fs::path(ctx.config.str("run", "out", "out")) : fs::path(out_flag);
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec || !fs::is_directory(ctx.out)) {
      throw ConfigError("cannot create output directory " + ctx.out.string());
    }
    ctx.data_dir = ctx.config.str("paths", "data_dir", ctx.out.string());
    ctx.checkpoint_dir = ctx.config.str("paths", "checkpoint_dir", ctx.out.string());
    ctx.log = &out;

    if (sim->parsed()) return cmd_simulate(ctx);
    if (build->parsed()) return cmd_build_dataset(ctx);
    if (train->parsed()) return cmd_train(ctx, stage);
    if (deploy->parsed()) return cmd_deploy(ctx);
    if (eval->parsed()) return cmd_eval(ctx);
    if (ig->parsed()) return cmd_ig(ctx);
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace raeid::cli
