#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ttd/config.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Taylor TD experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::vector<std::int64_t> seeds;
  std::int64_t threads = -1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key = value config file");
    sub->add_option("--set", overrides, "override, e.g. --set lambda_a=0.06")
        ->take_all();
    sub->add_option("--out", out_dir, "output directory for artifacts");
    sub->add_option("--seeds", seeds, "seed list (overrides config)")->delimiter(',');
    sub->add_option("--threads", threads, "worker threads (0 = all hardware threads)");
    return sub;
  };

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train", "train one agent on the pendulum across seeds"},
      {"variance", "update-variance comparison (lq testbed or across training)"},
      {"stability", "linear-approximation stability diagnostics"},
      {"toy", "value-vs-gradient matching sweep over input dimensions"},
      {"ablation", "{full, no_state, dot} training matrix with shared seeds"},
  };
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help));

  CLI11_PARSE(app, argc, argv);

  try {
    std::string command = app.get_subcommands().front()->get_name();
    std::vector<std::string> resolved = {"command=" + command};
    for (const auto& o : overrides) resolved.push_back(o);
    if (!seeds.empty()) {
      std::string list;
      for (std::size_t i = 0; i < seeds.size(); ++i)
        list += (i ? "," : "") + std::to_string(seeds[i]);
      resolved.push_back("seeds=" + list);
    }
    if (!out_dir.empty()) resolved.push_back("out_dir=" + out_dir);
    if (threads >= 0) resolved.push_back("threads=" + std::to_string(threads));

    ttd::ExperimentConfig cfg = config_path.empty()
                                    ? ttd::parse_config_text("", resolved)
                                    : ttd::parse_config(config_path, resolved);
    return ttd::run_experiment(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
