#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "raeid/cli.hpp"
#include "raeid/common.hpp"
#include "raeid/io.hpp"

using namespace raeid;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli_run(std::vector<std::string> args) {
  std::vector<const char*> argv = {"raeid"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int rc = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {rc, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Fresh directory per test with a small, fast configuration.
struct Workspace {
  fs::path dir;
  explicit Workspace(const std::string& name)
      : dir(fs::temp_directory_path() / ("raeid_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "run.ini") << "[sim]\nhorizon = 300\n"
                                      "[sft]\nepochs = 5\n"
                                      "[rm]\nepochs = 3\n"
                                      "[rl]\nrl_iterations = 2\nrollout_size = 32\n"
                                      "[deploy]\nrm_epochs = 1\nrlmf_epochs = 1\n";
  }
  ~Workspace() { fs::remove_all(dir); }

  Run run(std::vector<std::string> args, const std::vector<std::string>& extra = {}) const {
    args.insert(args.end(), {"--config", (dir / "run.ini").string(), "--out", dir.string(), "--seed", "5"});
    args.insert(args.end(), extra.begin(), extra.end());
    return cli_run(args);
  }
};

}  // namespace

TEST_CASE("config parsing and overrides") {
  auto c = cli::RunConfig::parse("[sim]\nhorizon = 12\nmu = 0.1, -0.1\n");
  CHECK(c.integer("sim", "horizon", 0) == 12);
  CHECK(c.reals("sim", "mu", {}) == std::vector<double>{0.1, -0.1});
  CHECK(c.real("sim", "sigma", 7.0) == 7.0);
  c.set("sim.horizon=40");
  CHECK(c.integer("sim", "horizon", 0) == 40);
  CHECK(c.canonical().find("sim.horizon=40") != std::string::npos);
  CHECK_THROWS_AS(cli::RunConfig::parse("[sim]\nhorizn = 3\n"), ConfigError);
  CHECK_THROWS_AS(cli::RunConfig::parse("[simulation]\nhorizon = 3\n"), ConfigError);
  CHECK_THROWS_AS(c.set("sim.bogus=1"), ConfigError);
  CHECK_THROWS_AS(c.set("nodot"), ConfigError);
  CHECK_THROWS_AS(c.integer("sim", "mu", 0), ConfigError);
  for (const auto& [section, keys] : cli::config_schema()) CHECK(!keys.empty());
}

TEST_CASE("argument and configuration errors exit with 2") {
  Workspace ws("args");
  CHECK(cli_run({}).code == 2);
  CHECK(cli_run({"frobnicate"}).code == 2);
  CHECK(ws.run({"train"}).code == 2);
  CHECK(ws.run({"simulate"}, {"--set", "sim.bogus=1"}).code == 2);
  CHECK(ws.run({"simulate"}, {"--set", "sim.horizon=0"}).code == 2);
  CHECK(ws.run({"simulate"}, {"--set", "sim.sigma=-1"}).code == 2);
  CHECK(ws.run({"train", "--stage", "ppo"}).code == 2);
  CHECK(cli_run({"simulate", "--config", (ws.dir / "missing.ini").string()}).code != 0);
}

TEST_CASE("pipeline dependencies and data errors exit with 3") {
  Workspace ws("deps");
  CHECK(ws.run({"build-dataset"}).code == 3);
  REQUIRE(ws.run({"simulate"}).code == 0);
  REQUIRE(ws.run({"build-dataset"}).code == 0);
  CHECK(ws.run({"train", "--stage", "rm"}).code == 3);
  REQUIRE(ws.run({"train", "--stage", "sft"}).code == 0);
  const auto r = ws.run({"train", "--stage", "rlmf"});
  CHECK(r.code == 3);
  CHECK(r.err.find("rm.ckpt") != std::string::npos);
  CHECK(ws.run({"eval"}).code == 3);
  CHECK(ws.run({"eval"}, {"--set", "eval.checkpoint=sft.ckpt"}).code == 0);

  std::ofstream(ws.dir / "test.jsonl", std::ios::trunc).flush();
  CHECK(ws.run({"eval"}, {"--set", "eval.checkpoint=sft.ckpt"}).code == 3);
  std::ofstream(ws.dir / "train.jsonl", std::ios::trunc).flush();
  CHECK(ws.run({"train", "--stage", "sft"}).code == 3);
}

TEST_CASE("simulation manifest hashes the market specification only") {
  Workspace ws("hash");
  auto spec_hash = [&](const std::vector<std::string>& extra) {
    REQUIRE(ws.run({"simulate"}, extra).code == 0);
    const auto j = nlohmann::json::parse(slurp(ws.dir / "manifest_simulate.json"));
    return j.at("spec_hash").get<std::string>();
  };
  const auto base = spec_hash({});
  CHECK(spec_hash({}) == base);
  CHECK(spec_hash({"--set", "sim.mu=0.07,-0.08"}) != base);
  CHECK(spec_hash({"--set", "sim.transition=0.97,0.03,0.03,0.97"}) != base);
  CHECK(spec_hash({"--set", "sim.shift_at=100"}) != base);

  const auto prices = slurp(ws.dir / "prices.csv");
  const auto manifest = slurp(ws.dir / "manifest_simulate.json");
  CHECK(manifest.find(ws.dir.string()) == std::string::npos);
  REQUIRE(cli_run({"simulate", "--config", (ws.dir / "run.ini").string(), "--out", ws.dir.string(),
                   "--seed", "6"}).code == 0);
  CHECK(slurp(ws.dir / "prices.csv") != prices);
  const auto other = nlohmann::json::parse(slurp(ws.dir / "manifest_simulate.json"));
  CHECK(other.at("spec_hash").get<std::string>() == base);
}

TEST_CASE("dataset command reports consistent counts") {
  Workspace ws("dataset");
  REQUIRE(ws.run({"simulate"}).code == 0);
  REQUIRE(ws.run({"build-dataset"}).code == 0);
  const auto m = nlohmann::json::parse(slurp(ws.dir / "manifest_build-dataset.json"));
  auto lines = [&](const char* name) {
    const auto s = slurp(ws.dir / name);
    return static_cast<long>(std::count(s.begin(), s.end(), '\n'));
  };
  const long train = lines("train.jsonl"), test = lines("test.jsonl"), eval = lines("eval.jsonl");
  CHECK(train + test + eval == 298);
  CHECK(test == static_cast<long>(298 * 317.0 / 2111.0));
  CHECK(lines("preferences.jsonl") == train);
  const auto before = slurp(ws.dir / "train.jsonl");
  REQUIRE(ws.run({"build-dataset"}).code == 0);
  CHECK(slurp(ws.dir / "train.jsonl") == before);
  CHECK(m.is_object());
}

TEST_CASE("deploy summary agrees with its logs") {
  Workspace ws("deploy");
  for (auto cmd : std::vector<std::vector<std::string>>{
           {"simulate"}, {"build-dataset"}, {"train", "--stage", "sft"}, {"train", "--stage", "rm"},
           {"train", "--stage", "rlmf"}, {"deploy"}}) {
    REQUIRE(ws.run(cmd).code == 0);
  }
  auto acc = [&](const char* name) {
    std::istringstream in(slurp(ws.dir / name));
    std::string line;
    std::getline(in, line);
    long n = 0, ok = 0;
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::stringstream ss(line);
      for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
      ++n;
      ok += f.at(4) == "1";
    }
    return static_cast<double>(ok) / n;
  };
  const auto s = nlohmann::json::parse(slurp(ws.dir / "deploy_summary.json"));
  const double a = acc("deploy_adaptive.csv"), f = acc("deploy_frozen.csv");
  CHECK(s.at("adaptive_accuracy").get<double>() == doctest::Approx(a).epsilon(1e-12));
  CHECK(s.at("frozen_accuracy").get<double>() == doctest::Approx(f).epsilon(1e-12));
  CHECK(s.at("accuracy_delta").get<double>() == doctest::Approx(a - f).epsilon(1e-12));
  CHECK(ws.run({"deploy"}, {"--set", "deploy.window=0"}).code == 2);
}

TEST_CASE("small end-to-end run memorizes an easy training split") {
  Workspace ws("e2e");
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::string> easy = {"--set", "sim.horizon=202", "--set", "dataset.news_signal=20",
                                         "--set", "dataset.news_noise=0.1", "--set", "sft.epochs=60",
                                         "--set", "sft.learning_rate=0.1"};
  for (auto cmd : std::vector<std::vector<std::string>>{
           {"simulate"}, {"build-dataset"}, {"train", "--stage", "sft"}, {"train", "--stage", "rm"},
           {"train", "--stage", "rlmf"}, {"deploy"}}) {
    REQUIRE(ws.run(cmd, easy).code == 0);
  }
  auto ev = easy;
  ev.insert(ev.end(), {"--set", "eval.split=train", "--set", "eval.checkpoint=sft.ckpt"});
  REQUIRE(ws.run({"eval"}, ev).code == 0);
  const auto j = nlohmann::json::parse(slurp(ws.dir / "eval_metrics.json"));
  CHECK(j.at("acc").get<double>() >= 0.99);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 60.0);
}
