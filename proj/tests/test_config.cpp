#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttd/config.hpp"

using namespace ttd;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("ttd_cfg_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

AgentConfig tiny_agent_config() {
  AgentConfig a;
  a.batch_size = 4;
  a.warmup_steps = 32;
  a.total_steps = 120;
  a.dyna_updates = 1;
  a.model_initial_steps = 5;
  a.model_burst_interval = 60;
  a.model_burst_steps = 2;
  a.model_batch_size = 16;
  a.eval_interval = 60;
  a.eval_episodes = 1;
  a.model_hidden = {16, 16};
  a.reward_hidden = {16};
  a.critic_hidden = {16, 16};
  a.actor_hidden = {16};
  return a;
}

std::vector<std::string> tiny_overrides() {
  return {"batch_size=4",      "warmup_steps=32",        "total_steps=120",
          "dyna_updates=1",    "model_initial_steps=5",  "model_burst_interval=60",
          "model_burst_steps=2", "model_batch_size=16",  "eval_interval=60",
          "eval_episodes=1",   "model_hidden=16,16",     "reward_hidden=16",
          "critic_hidden=16,16", "actor_hidden=16"};
}

}  // namespace

TEST_CASE("empty config yields the documented defaults") {
  auto cfg = parse_config_text("");
  CHECK(cfg.expansion.lambda_a == 0.25);
  CHECK(cfg.expansion.lambda_s == 1e-5);
  CHECK(cfg.agent_cfg.dyna_updates == 10);
  CHECK(cfg.agent_cfg.total_steps == 10000);
  CHECK(cfg.agent_cfg.gamma == cfg.expansion.gamma);
  CHECK(cfg.command == Command::Train);
  CHECK(cfg.agent == AgentKind::TaTD3);
  CHECK(cfg.env == "pendulum");
}

TEST_CASE("comments, blank lines, and overrides are honoured") {
  std::string text =
      "# experiment\n"
      "\n"
      "agent = dyna_td3   # trailing comment\n"
      "total_steps = 5000\n";
  auto cfg = parse_config_text(text, {"lambda_a=0.06", "similarity=dot"});
  CHECK(cfg.agent == AgentKind::DynaTD3);
  CHECK(cfg.agent_cfg.total_steps == 5000);
  CHECK(cfg.expansion.lambda_a == 0.06);
  CHECK(cfg.expansion.similarity == Similarity::Dot);
}

TEST_CASE("bad input is rejected with the offending key named") {
  auto message_of = [](const std::string& text) {
    try {
      parse_config_text(text);
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message_of("lambda_a = -1").find("lambda_a") != std::string::npos);
  CHECK(message_of("no_such_key = 3").find("no_such_key") != std::string::npos);
  CHECK(message_of("batch_size = soon").find("batch_size") != std::string::npos);
  CHECK(message_of("gamma = 1.5").find("gamma") != std::string::npos);
  CHECK(message_of("just a line").find("key = value") != std::string::npos);
  CHECK_THROWS_AS(parse_config_text("", {"command=fly"}), std::invalid_argument);
}

TEST_CASE("gamma key drives both the agent and the expansion") {
  auto cfg = parse_config_text("gamma = 0.9");
  CHECK(cfg.agent_cfg.gamma == 0.9);
  CHECK(cfg.expansion.gamma == 0.9);
}

TEST_CASE("TTD_SEED environment variable replaces the seed list") {
  setenv("TTD_SEED", "7,9", 1);
  auto cfg = parse_config_text("seeds = 1,2,3");
  unsetenv("TTD_SEED");
  CHECK(cfg.seeds == std::vector<std::uint64_t>{7, 9});
}

TEST_CASE("resolved keys round-trip through the parser") {
  auto cfg = parse_config_text("", {"lambda_a=0.06", "agent=sample_expected_td3",
                                    "critic_hidden=32,16", "seeds=3,5"});
  std::string text;
  for (const auto& [k, v] : cfg.to_keys()) text += k + " = " + v + "\n";
  auto cfg2 = parse_config_text(text);
  CHECK(cfg2.to_keys() == cfg.to_keys());
}

TEST_CASE("train command emits manifest, curves, checkpoints, and summary") {
  TempDir dir("train");
  auto cfg = parse_config_text("", tiny_overrides());
  cfg.command = Command::Train;
  cfg.seeds = {1};
  cfg.out_dir = (dir.path / "run").string();
  cfg.threads = 1;
  REQUIRE(run_experiment(cfg) == 0);

  fs::path out(cfg.out_dir);
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(fs::exists(out / "train_tatd3_seed1.csv"));
  CHECK(fs::exists(out / "checkpoint_tatd3_seed1.bin"));
  CHECK(fs::exists(out / "summary.json"));

  auto manifest = nlohmann::json::parse(read_file(out / "manifest.json"));
  CHECK(manifest["config"]["lambda_a"] == "0.25");
  CHECK(manifest["seeds"] == std::vector<std::uint64_t>{1});
  for (const auto& artifact : manifest["artifacts"])
    CHECK(fs::exists(out / artifact.get<std::string>()));

  auto summary = nlohmann::json::parse(read_file(out / "summary.json"));
  CHECK(summary["status"] == "ok");
  CHECK(summary["results"]["final_eval_return"].contains("1"));

  std::string csv = read_file(out / "train_tatd3_seed1.csv");
  CHECK(csv.rfind("step,eval_return,critic_loss,model_nll\n", 0) == 0);
}

TEST_CASE("rerunning the same seed reproduces the curve bitwise") {
  TempDir dir("repro");
  auto cfg = parse_config_text("", tiny_overrides());
  cfg.seeds = {4};
  cfg.threads = 1;
  cfg.out_dir = (dir.path / "a").string();
  REQUIRE(run_experiment(cfg) == 0);
  cfg.out_dir = (dir.path / "b").string();
  REQUIRE(run_experiment(cfg) == 0);
  CHECK(read_file(dir.path / "a" / "train_tatd3_seed4.csv") ==
        read_file(dir.path / "b" / "train_tatd3_seed4.csv"));
}

TEST_CASE("ablation matrix shares seeds across all three variants") {
  TempDir dir("ablation");
  auto cfg = parse_config_text("", tiny_overrides());
  cfg.seeds = {2, 6};
  cfg.threads = 1;
  cfg.out_dir = (dir.path / "run").string();
  REQUIRE(ablation_matrix(cfg) == 0);

  fs::path out(cfg.out_dir);
  std::string header;
  for (const char* variant : {"full", "no_state", "dot"})
    for (auto seed : cfg.seeds) {
      fs::path curve =
          out / ("ablation_" + std::string(variant) + "_seed" + std::to_string(seed) + ".csv");
      REQUIRE(fs::exists(curve));
      std::string text = read_file(curve);
      std::string first = text.substr(0, text.find('\n'));
      if (header.empty()) header = first;
      CHECK(first == header);  // comparable schema across variants
    }
  auto manifest = nlohmann::json::parse(read_file(out / "manifest.json"));
  CHECK(manifest["seeds"] == cfg.seeds);
}

TEST_CASE("toy command writes one row per dimension, regime, method, and seed") {
  TempDir dir("toy");
  ExperimentConfig cfg;
  cfg.command = Command::Toy;
  cfg.seeds = {1};
  cfg.threads = 1;
  cfg.toy_train_iters = 3;  // schema test only
  cfg.out_dir = (dir.path / "run").string();
  REQUIRE(run_experiment(cfg) == 0);

  std::string csv = read_file(fs::path(cfg.out_dir) / "toy.csv");
  REQUIRE(csv.rfind("seed,condition,metric,value\n", 0) == 0);
  std::int64_t rows = 0;
  for (char ch : csv)
    if (ch == '\n') ++rows;
  CHECK(rows - 1 == 6 * 2 * 2);  // dims x regimes x methods for one seed
  CHECK(csv.find("d100_low_taylor") != std::string::npos);
  CHECK(csv.find("d1_high_sample") != std::string::npos);
}

TEST_CASE("variance command on the lq testbed emits both conditions") {
  TempDir dir("variance");
  ExperimentConfig cfg;
  cfg.command = Command::Variance;
  cfg.env = "lq";
  cfg.seeds = {3};
  cfg.threads = 1;
  cfg.variance_states = 6;
  cfg.variance_repeats = 2;
  cfg.out_dir = (dir.path / "run").string();
  REQUIRE(run_experiment(cfg) == 0);

  std::string csv = read_file(fs::path(cfg.out_dir) / "variance.csv");
  CHECK(csv.find("taylor,update_variance,") != std::string::npos);
  CHECK(csv.find("sample,update_variance,") != std::string::npos);
  auto summary = nlohmann::json::parse(read_file(fs::path(cfg.out_dir) / "summary.json"));
  CHECK(summary["results"].contains("taylor_wins"));
}

TEST_CASE("agent config from keys matches the struct defaults") {
  // guards against the parser and the struct drifting apart
  auto cfg = parse_config_text("");
  AgentConfig expect;
  CHECK(cfg.agent_cfg.batch_size == expect.batch_size);
  CHECK(cfg.agent_cfg.critic_hidden == expect.critic_hidden);
  CHECK(cfg.agent_cfg.eval_interval == expect.eval_interval);
  (void)tiny_agent_config;
}
