#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ttd/agents.hpp"
#include "ttd/analysis.hpp"

namespace ttd {

enum class Command { Train, Variance, Stability, Toy, Ablation };

const char* command_name(Command c);

// Fully-resolved experiment description: what to run, with which agent and
// environment, at which seeds, and where to put the artifacts.  Produced by
// parse_config; every field has a default so an empty file is valid.
struct ExperimentConfig {
  Command command = Command::Train;
  AgentKind agent = AgentKind::TaTD3;
  std::string env = "pendulum";  // "pendulum" | "lq"
  AgentConfig agent_cfg;
  ExpansionConfig expansion;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::string out_dir = "runs";
  std::int64_t threads = 0;  // 0: one worker per hardware thread

  // variance command
  std::vector<std::int64_t> variance_checkpoints = {0, 5000, 10000};
  std::int64_t variance_states = 32;
  std::int64_t variance_repeats = 10;

  // stability command
  std::int64_t stability_features = 64;
  std::int64_t stability_samples = 256;
  double stability_dt = 1e-3;

  // toy command (full dimension sweep, both regimes)
  double toy_lambda_x = 0.1;
  std::int64_t toy_train_iters = 4000;
  double toy_lr = 1e-2;

  void validate() const;  // throws std::invalid_argument naming the bad key

  // The resolved key=value view: exactly the keys parse_config accepts.
  std::map<std::string, std::string> to_keys() const;
};

// Parses flat `key = value` text ('#' starts a comment, blank lines ignored),
// then applies `overrides` ("key=value" strings) on top.  Unknown keys, type
// errors, and constraint violations throw std::invalid_argument with a
// message naming the key and the expected domain.  The TTD_SEED environment
// variable, when set, replaces the seed list last.
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config(const std::string& path,
                              const std::vector<std::string>& overrides = {});

// Written to <out_dir>/manifest.json before any work starts and never touched
// again; end-of-run facts (timestamps, per-seed results) go to summary.json.
struct RunManifest {
  std::map<std::string, std::string> resolved_config;
  std::string version;
  std::vector<std::uint64_t> seeds;
  std::string started_at;  // ISO 8601 UTC
  std::vector<std::string> artifacts;  // paths relative to out_dir
};

RunManifest make_manifest(const ExperimentConfig& cfg);
void write_manifest(const std::string& path, const RunManifest& m);

// Runs the configured command, writing the manifest, per-seed CSV curves, a
// JSON summary, and (for training commands) final checkpoints under
// cfg.out_dir.  Returns 0 on success; on error writes the failure into
// summary.json and returns 1.
int run_experiment(const ExperimentConfig& cfg);

// The {full, no-state-expansion, dot-similarity} training matrix with a
// shared seed list; emits one curve CSV per (variant, seed) with the same
// schema as command=train.
int ablation_matrix(const ExperimentConfig& cfg);

}  // namespace ttd
