#include "ttd/config.hpp"

#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "ttd/envs.hpp"

namespace ttd {
namespace {

// ----- scalar parsing with key-named diagnostics ---------------------------

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& domain) {
  throw std::invalid_argument("config key '" + key + "': value '" + value +
                              "' invalid, expected " + domain);
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) bad_value(key, v, "a real number");
    return d;
  } catch (const std::invalid_argument&) {
    bad_value(key, v, "a real number");
  } catch (const std::out_of_range&) {
    bad_value(key, v, "a representable real number");
  }
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long i = std::stoll(v, &pos);
    if (pos != v.size()) bad_value(key, v, "an integer");
    return i;
  } catch (const std::invalid_argument&) {
    bad_value(key, v, "an integer");
  } catch (const std::out_of_range&) {
    bad_value(key, v, "a representable integer");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& key, const std::string& v, F&& one) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) bad_value(key, v, "a comma-separated list");
    out.push_back(one(key, item));
  }
  if (out.empty()) bad_value(key, v, "a non-empty comma-separated list");
  return out;
}

std::vector<std::int64_t> parse_int_list(const std::string& key, const std::string& v) {
  return parse_list<std::int64_t>(key, v, parse_int);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& key, const std::string& v) {
  return parse_list<std::uint64_t>(key, v, [](const std::string& k, const std::string& s) {
    std::int64_t i = parse_int(k, s);
    if (i < 0) bad_value(k, s, "a non-negative seed");
    return static_cast<std::uint64_t>(i);
  });
}

double parse_nonneg(const std::string& key, const std::string& v) {
  double d = parse_double(key, v);
  if (!(d >= 0)) bad_value(key, v, "a non-negative real number");
  return d;
}

std::int64_t parse_pos_int(const std::string& key, const std::string& v) {
  std::int64_t i = parse_int(key, v);
  if (i < 1) bad_value(key, v, "a positive integer");
  return i;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out << ',';
    out << xs[i];
  }
  return out.str();
}

std::string fmt(double d) {
  std::ostringstream out;
  out.precision(17);
  out << d;
  return out.str();
}

// ----- key application -----------------------------------------------------

void apply_key(ExperimentConfig& c, const std::string& key, const std::string& v) {
  AgentConfig& a = c.agent_cfg;
  ExpansionConfig& e = c.expansion;
  if (key == "command") {
    if (v == "train") c.command = Command::Train;
    else if (v == "variance") c.command = Command::Variance;
    else if (v == "stability") c.command = Command::Stability;
    else if (v == "toy") c.command = Command::Toy;
    else if (v == "ablation") c.command = Command::Ablation;
    else bad_value(key, v, "train|variance|stability|toy|ablation");
  } else if (key == "agent") {
    if (v == "tatd3") c.agent = AgentKind::TaTD3;
    else if (v == "dyna_td3") c.agent = AgentKind::DynaTD3;
    else if (v == "sample_expected_td3") c.agent = AgentKind::SampleExpected;
    else bad_value(key, v, "tatd3|dyna_td3|sample_expected_td3");
  } else if (key == "env") {
    if (v != "pendulum" && v != "lq") bad_value(key, v, "pendulum|lq");
    c.env = v;
  } else if (key == "seeds") {
    c.seeds = parse_seed_list(key, v);
  } else if (key == "out_dir") {
    if (v.empty()) bad_value(key, v, "a non-empty path");
    c.out_dir = v;
  } else if (key == "threads") {
    std::int64_t i = parse_int(key, v);
    if (i < 0) bad_value(key, v, "0 (auto) or a positive integer");
    c.threads = i;
  } else if (key == "gamma") {
    double d = parse_double(key, v);
    if (!(d >= 0 && d <= 1)) bad_value(key, v, "a real number in [0, 1]");
    a.gamma = d;
    e.gamma = d;
  } else if (key == "tau") {
    double d = parse_double(key, v);
    if (!(d > 0 && d <= 1)) bad_value(key, v, "a real number in (0, 1]");
    a.tau = d;
  } else if (key == "lr_model") {
    a.lr_model = parse_nonneg(key, v);
  } else if (key == "lr_critic") {
    a.lr_critic = parse_nonneg(key, v);
  } else if (key == "lr_actor") {
    a.lr_actor = parse_nonneg(key, v);
  } else if (key == "batch_size") {
    a.batch_size = parse_pos_int(key, v);
  } else if (key == "explore_sigma_frac") {
    a.explore_sigma_frac = parse_nonneg(key, v);
  } else if (key == "policy_delay") {
    a.policy_delay = parse_pos_int(key, v);
  } else if (key == "dyna_updates") {
    std::int64_t i = parse_int(key, v);
    if (i < 0) bad_value(key, v, "a non-negative integer");
    a.dyna_updates = i;
  } else if (key == "warmup_steps") {
    a.warmup_steps = parse_pos_int(key, v);
  } else if (key == "total_steps") {
    a.total_steps = parse_pos_int(key, v);
  } else if (key == "buffer_capacity") {
    a.buffer_capacity = parse_pos_int(key, v);
  } else if (key == "state_perturbations") {
    a.state_perturbations = parse_pos_int(key, v);
  } else if (key == "action_perturbations") {
    a.action_perturbations = parse_pos_int(key, v);
  } else if (key == "model_initial_steps") {
    a.model_initial_steps = parse_pos_int(key, v);
  } else if (key == "model_burst_interval") {
    a.model_burst_interval = parse_pos_int(key, v);
  } else if (key == "model_burst_steps") {
    a.model_burst_steps = parse_pos_int(key, v);
  } else if (key == "model_batch_size") {
    a.model_batch_size = parse_pos_int(key, v);
  } else if (key == "reward_burst_factor") {
    a.reward_burst_factor = parse_pos_int(key, v);
  } else if (key == "eval_interval") {
    a.eval_interval = parse_pos_int(key, v);
  } else if (key == "eval_episodes") {
    a.eval_episodes = parse_pos_int(key, v);
  } else if (key == "model_hidden") {
    a.model_hidden = parse_int_list(key, v);
  } else if (key == "reward_hidden") {
    a.reward_hidden = parse_int_list(key, v);
  } else if (key == "critic_hidden") {
    a.critic_hidden = parse_int_list(key, v);
  } else if (key == "actor_hidden") {
    a.actor_hidden = parse_int_list(key, v);
  } else if (key == "lambda_a") {
    e.lambda_a = parse_nonneg(key, v);
  } else if (key == "lambda_s") {
    e.lambda_s = parse_nonneg(key, v);
  } else if (key == "action_expansion") {
    e.action_expansion = parse_bool(key, v);
  } else if (key == "state_expansion") {
    e.state_expansion = parse_bool(key, v);
  } else if (key == "similarity") {
    if (v == "cosine") e.similarity = Similarity::Cosine;
    else if (v == "dot") e.similarity = Similarity::Dot;
    else bad_value(key, v, "cosine|dot");
  } else if (key == "variance_checkpoints") {
    c.variance_checkpoints = parse_int_list(key, v);
  } else if (key == "variance_states") {
    c.variance_states = parse_pos_int(key, v);
  } else if (key == "variance_repeats") {
    std::int64_t i = parse_int(key, v);
    if (i < 2) bad_value(key, v, "an integer >= 2");
    c.variance_repeats = i;
  } else if (key == "stability_features") {
    c.stability_features = parse_pos_int(key, v);
  } else if (key == "stability_samples") {
    c.stability_samples = parse_pos_int(key, v);
  } else if (key == "stability_dt") {
    double d = parse_double(key, v);
    if (!(d > 0)) bad_value(key, v, "a positive real number");
    c.stability_dt = d;
  } else if (key == "toy_lambda_x") {
    c.toy_lambda_x = parse_nonneg(key, v);
  } else if (key == "toy_train_iters") {
    c.toy_train_iters = parse_pos_int(key, v);
  } else if (key == "toy_lr") {
    double d = parse_double(key, v);
    if (!(d > 0)) bad_value(key, v, "a positive real number");
    c.toy_lr = d;
  } else {
    throw std::invalid_argument("config key '" + key + "' is not recognized");
  }
}

std::pair<std::string, std::string> split_assignment(const std::string& text) {
  std::size_t eq = text.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("config line '" + text + "' is not of the form key = value");
  std::string key = trim(text.substr(0, eq));
  std::string value = trim(text.substr(eq + 1));
  if (key.empty())
    throw std::invalid_argument("config line '" + text + "' has an empty key");
  return {key, value};
}

std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers.  Each task owns its
// index exclusively; the first exception wins and is rethrown after join.
void run_pool(std::int64_t n, std::int64_t threads, const std::function<void(std::int64_t)>& fn) {
  if (threads <= 0) threads = static_cast<std::int64_t>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  if (threads > n) threads = n;
  if (threads <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (std::int64_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::int64_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

// ---------------------------------------------------------------------------

const char* command_name(Command c) {
  switch (c) {
    case Command::Train: return "train";
    case Command::Variance: return "variance";
    case Command::Stability: return "stability";
    case Command::Toy: return "toy";
    case Command::Ablation: return "ablation";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  agent_cfg.validate();
  expansion.validate();
  if (seeds.empty()) throw std::invalid_argument("config key 'seeds': list must be non-empty");
  if ((command == Command::Train || command == Command::Ablation) && env != "pendulum")
    throw std::invalid_argument("config key 'env': training commands support only 'pendulum'");
  if (command == Command::Variance)
    for (auto cp : variance_checkpoints)
      if (cp < 0 || cp > agent_cfg.total_steps)
        throw std::invalid_argument(
            "config key 'variance_checkpoints': entries must lie in [0, total_steps]");
}

std::map<std::string, std::string> ExperimentConfig::to_keys() const {
  const AgentConfig& a = agent_cfg;
  const ExpansionConfig& e = expansion;
  std::map<std::string, std::string> k;
  k["command"] = command_name(command);
  k["agent"] = agent_kind_name(agent);
  k["env"] = env;
  k["seeds"] = join(seeds);
  k["out_dir"] = out_dir;
  k["threads"] = std::to_string(threads);
  k["gamma"] = fmt(a.gamma);
  k["tau"] = fmt(a.tau);
  k["lr_model"] = fmt(a.lr_model);
  k["lr_critic"] = fmt(a.lr_critic);
  k["lr_actor"] = fmt(a.lr_actor);
  k["batch_size"] = std::to_string(a.batch_size);
  k["explore_sigma_frac"] = fmt(a.explore_sigma_frac);
  k["policy_delay"] = std::to_string(a.policy_delay);
  k["dyna_updates"] = std::to_string(a.dyna_updates);
  k["warmup_steps"] = std::to_string(a.warmup_steps);
  k["total_steps"] = std::to_string(a.total_steps);
  k["buffer_capacity"] = std::to_string(a.buffer_capacity);
  k["state_perturbations"] = std::to_string(a.state_perturbations);
  k["action_perturbations"] = std::to_string(a.action_perturbations);
  k["model_initial_steps"] = std::to_string(a.model_initial_steps);
  k["model_burst_interval"] = std::to_string(a.model_burst_interval);
  k["model_burst_steps"] = std::to_string(a.model_burst_steps);
  k["model_batch_size"] = std::to_string(a.model_batch_size);
  k["reward_burst_factor"] = std::to_string(a.reward_burst_factor);
  k["eval_interval"] = std::to_string(a.eval_interval);
  k["eval_episodes"] = std::to_string(a.eval_episodes);
  k["model_hidden"] = join(a.model_hidden);
  k["reward_hidden"] = join(a.reward_hidden);
  k["critic_hidden"] = join(a.critic_hidden);
  k["actor_hidden"] = join(a.actor_hidden);
  k["lambda_a"] = fmt(e.lambda_a);
  k["lambda_s"] = fmt(e.lambda_s);
  k["action_expansion"] = e.action_expansion ? "true" : "false";
  k["state_expansion"] = e.state_expansion ? "true" : "false";
  k["similarity"] = e.similarity == Similarity::Cosine ? "cosine" : "dot";
  k["variance_checkpoints"] = join(variance_checkpoints);
  k["variance_states"] = std::to_string(variance_states);
  k["variance_repeats"] = std::to_string(variance_repeats);
  k["stability_features"] = std::to_string(stability_features);
  k["stability_samples"] = std::to_string(stability_samples);
  k["stability_dt"] = fmt(stability_dt);
  k["toy_lambda_x"] = fmt(toy_lambda_x);
  k["toy_train_iters"] = std::to_string(toy_train_iters);
  k["toy_lr"] = fmt(toy_lr);
  return k;
}

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto [key, value] = split_assignment(line);
    apply_key(cfg, key, value);
  }
  for (const auto& o : overrides) {
    auto [key, value] = split_assignment(o);
    apply_key(cfg, key, value);
  }
  if (const char* env_seed = std::getenv("TTD_SEED"))
    cfg.seeds = parse_seed_list("TTD_SEED", env_seed);
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::string& path,
                              const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config file '" + path + "' cannot be opened");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), overrides);
}

// ---------------------------------------------------------------------------

namespace {

const char* kVersion = "ttd 1.0.0";

std::vector<std::string> planned_artifacts(const ExperimentConfig& cfg) {
  std::vector<std::string> files;
  auto curve = [&](const std::string& stem) {
    for (auto s : cfg.seeds) files.push_back(stem + "_seed" + std::to_string(s) + ".csv");
  };
  switch (cfg.command) {
    case Command::Train: {
      std::string agent = agent_kind_name(cfg.agent);
      curve("train_" + agent);
      for (auto s : cfg.seeds)
        files.push_back("checkpoint_" + agent + "_seed" + std::to_string(s) + ".bin");
      break;
    }
    case Command::Ablation:
      for (const char* variant : {"full", "no_state", "dot"}) curve(std::string("ablation_") + variant);
      break;
    case Command::Variance: files.push_back("variance.csv"); break;
    case Command::Stability: files.push_back("stability.csv"); break;
    case Command::Toy: files.push_back("toy.csv"); break;
  }
  files.push_back("summary.json");
  return files;
}

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "step,eval_return,critic_loss,model_nll\n";
  for (const auto& p : curve) {
    std::ostringstream line;
    line.precision(17);
    line << p.step << ',' << p.eval_return << ',' << p.critic_loss << ',' << p.model_nll
         << '\n';
    out << line.str();
  }
}

struct TrainOutcome {
  std::uint64_t seed;
  double final_eval;
};

// One full pendulum training run; the Agent is constructed on the calling
// thread so per-run state never crosses threads.
TrainOutcome run_train_seed(const ExperimentConfig& cfg, AgentKind kind,
                            const ExpansionConfig& expansion, std::uint64_t seed,
                            const std::string& curve_path, const std::string& ckpt_path) {
  Agent agent(kind, cfg.agent_cfg, expansion, 3, 1, 2.0, seed);
  auto curve = train_on_pendulum(agent, seed);
  write_curve_csv(curve_path, curve);
  if (!ckpt_path.empty()) agent.save_checkpoint(ckpt_path);
  return {seed, curve.empty() ? 0.0 : curve.back().eval_return};
}

nlohmann::json run_train(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::string agent = agent_kind_name(cfg.agent);
  std::vector<TrainOutcome> outcomes(cfg.seeds.size());
  run_pool(static_cast<std::int64_t>(cfg.seeds.size()), cfg.threads, [&](std::int64_t i) {
    std::uint64_t seed = cfg.seeds[static_cast<std::size_t>(i)];
    std::string tag = agent + "_seed" + std::to_string(seed);
    outcomes[static_cast<std::size_t>(i)] =
        run_train_seed(cfg, cfg.agent, cfg.expansion, seed, (dir / ("train_" + tag + ".csv")).string(),
                       (dir / ("checkpoint_" + tag + ".bin")).string());
  });
  nlohmann::json per_seed = nlohmann::json::object();
  double mean = 0;
  for (const auto& o : outcomes) {
    per_seed[std::to_string(o.seed)] = o.final_eval;
    mean += o.final_eval;
  }
  mean /= static_cast<double>(outcomes.size());
  return {{"final_eval_return", per_seed}, {"mean_final_eval_return", mean}};
}

nlohmann::json run_ablation(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  struct Variant {
    const char* name;
    ExpansionConfig expansion;
  };
  ExpansionConfig no_state = cfg.expansion;
  no_state.state_expansion = false;
  ExpansionConfig dot = cfg.expansion;
  dot.similarity = Similarity::Dot;
  std::vector<Variant> variants = {{"full", cfg.expansion}, {"no_state", no_state}, {"dot", dot}};

  const auto n_seeds = static_cast<std::int64_t>(cfg.seeds.size());
  std::vector<TrainOutcome> outcomes(variants.size() * cfg.seeds.size());
  run_pool(static_cast<std::int64_t>(outcomes.size()), cfg.threads, [&](std::int64_t i) {
    const auto& variant = variants[static_cast<std::size_t>(i / n_seeds)];
    std::uint64_t seed = cfg.seeds[static_cast<std::size_t>(i % n_seeds)];
    std::string stem = "ablation_" + std::string(variant.name) + "_seed" + std::to_string(seed);
    outcomes[static_cast<std::size_t>(i)] = run_train_seed(
        cfg, AgentKind::TaTD3, variant.expansion, seed, (dir / (stem + ".csv")).string(), "");
  });
  nlohmann::json result = nlohmann::json::object();
  for (std::size_t v = 0; v < variants.size(); ++v) {
    nlohmann::json per_seed = nlohmann::json::object();
    double mean = 0;
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
      const auto& o = outcomes[v * cfg.seeds.size() + s];
      per_seed[std::to_string(o.seed)] = o.final_eval;
      mean += o.final_eval;
    }
    result[variants[v].name] = {{"final_eval_return", per_seed},
                                {"mean_final_eval_return", mean / static_cast<double>(cfg.seeds.size())}};
  }
  return result;
}

// Linear-quadratic testbed for the variance command: linear critic and target
// heads on a random LQ system, exact dynamics as the model.
nlohmann::json run_variance_lq(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::vector<CsvRow> rows;
  double taylor_mean = 0, sample_mean = 0;
  int taylor_wins = 0;
  for (std::uint64_t seed : cfg.seeds) {
    const std::int64_t ds = 8, da = 8;
    Rng spec_rng(seed, 61);
    LqSpec spec = LqSpec::random(ds, da, spec_rng);
    Rng critic_rng(seed, 62);
    MlpParams critic = MlpParams::create({ds + da, 1}, Activation::Relu, critic_rng);
    Rng tc_rng(seed, 63);
    MlpParams tcritic = MlpParams::create({ds + da, 1}, Activation::Relu, tc_rng).target_copy();
    Rng ta_rng(seed, 64);
    MlpParams tactor = MlpParams::create({ds, da}, Activation::Relu, ta_rng).target_copy();
    TargetSet targets{&tcritic, nullptr, &tactor};
    ModelFn model = [&spec, ds](const Node& s, const Node& a) -> Prediction {
      auto r = lq_step_nodes(s, a, spec, Tensor::zeros({ds}));
      return {reshape(r.reward, {1, 1}), r.s_next};
    };
    Rng state_rng(seed, 65);
    Tensor states = state_rng.normal_tensor({cfg.variance_states, ds});
    Rng rng(seed, 66);
    auto rep = measure_update_variance(critic, targets, model, states, cfg.expansion,
                                       cfg.variance_repeats, rng);
    rows.push_back({static_cast<std::int64_t>(seed), "taylor", "update_variance", rep.taylor_mean});
    rows.push_back({static_cast<std::int64_t>(seed), "taylor", "update_variance_se", rep.taylor_se});
    rows.push_back({static_cast<std::int64_t>(seed), "sample", "update_variance", rep.sample_mean});
    rows.push_back({static_cast<std::int64_t>(seed), "sample", "update_variance_se", rep.sample_se});
    taylor_mean += rep.taylor_mean;
    sample_mean += rep.sample_mean;
    if (rep.taylor_mean < rep.sample_mean) ++taylor_wins;
  }
  write_long_csv((dir / "variance.csv").string(), rows);
  const auto n = static_cast<double>(cfg.seeds.size());
  return {{"taylor_mean", taylor_mean / n},
          {"sample_mean", sample_mean / n},
          {"taylor_wins", taylor_wins},
          {"seeds", cfg.seeds.size()}};
}

nlohmann::json run_variance_pendulum(const ExperimentConfig& cfg,
                                     const std::filesystem::path& dir) {
  std::vector<CsvRow> rows;
  for (std::uint64_t seed : cfg.seeds) {
    Agent agent(cfg.agent, cfg.agent_cfg, cfg.expansion, 3, 1, 2.0, seed);
    auto reports = variance_across_training(agent, seed, cfg.variance_checkpoints,
                                            cfg.variance_states, cfg.variance_repeats);
    for (const auto& rep : reports) {
      std::string step = "step" + std::to_string(rep.step);
      rows.push_back({static_cast<std::int64_t>(seed), step + "_taylor", "update_variance", rep.taylor_mean});
      rows.push_back({static_cast<std::int64_t>(seed), step + "_taylor", "update_variance_se", rep.taylor_se});
      rows.push_back({static_cast<std::int64_t>(seed), step + "_sample", "update_variance", rep.sample_mean});
      rows.push_back({static_cast<std::int64_t>(seed), step + "_sample", "update_variance_se", rep.sample_se});
    }
  }
  write_long_csv((dir / "variance.csv").string(), rows);
  return {{"checkpoints", cfg.variance_checkpoints}, {"seeds", cfg.seeds.size()}};
}

nlohmann::json run_stability(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::vector<CsvRow> rows;
  bool all_psd = true, all_converged = true;
  for (std::uint64_t seed : cfg.seeds) {
    const std::int64_t ds = 32, da = 32;
    Rng frng(seed, 80);
    MlpParams features = MlpParams::create({ds + da, 64, cfg.stability_features},
                                           Activation::Tanh, frng, /*tanh_output=*/true);
    Rng prng(seed, 81);
    MlpParams policy = MlpParams::create({ds, 32, da}, Activation::Tanh, prng, true);
    Rng drng(seed, 82);
    Tensor F = drng.normal_tensor({ds, ds}, 0.1);
    Tensor G = drng.normal_tensor({ds, da}, 0.1);
    DriftFn drift = [F, G](const Node& s, const Node& a) {
      return add(matmul(s, transpose(constant(F))), matmul(a, transpose(constant(G))));
    };
    Rng xrng(seed, 83);
    Tensor states = xrng.normal_tensor({cfg.stability_samples, ds});
    Tensor actions;
    {
      NoGradGuard ng;
      actions = policy.forward(constant(states)).value();
    }
    for (auto& v : actions.data()) v += 0.05 * xrng.normal();
    auto rep = stability_matrices(features, drift, policy, states, actions,
                                  cfg.expansion.gamma, cfg.expansion.lambda_a,
                                  cfg.stability_dt);
    double threshold = stable_step_threshold(rep, cfg.expansion.lambda_a);
    Rng urng(seed, 84);
    Tensor u = urng.normal_tensor({1, cfg.stability_features});
    IterationResult iter{};
    if (threshold > 0)
      iter = expected_update_iteration(rep, cfg.expansion.lambda_a, u, 0.9 * threshold,
                                       100000, 1e-8);
    rows.push_back({static_cast<std::int64_t>(seed), "stability", "min_eig_sym_a_tilde", rep.min_eig_sym_A_tilde});
    rows.push_back({static_cast<std::int64_t>(seed), "stability", "min_eig_sym_combined", rep.min_eig_sym_combined});
    rows.push_back({static_cast<std::int64_t>(seed), "stability", "step_threshold", threshold});
    rows.push_back({static_cast<std::int64_t>(seed), "stability", "iterations", static_cast<double>(iter.iterations)});
    rows.push_back({static_cast<std::int64_t>(seed), "stability", "converged", iter.converged ? 1.0 : 0.0});
    all_psd = all_psd && rep.a_tilde_psd();
    all_converged = all_converged && iter.converged;
  }
  write_long_csv((dir / "stability.csv").string(), rows);
  return {{"all_a_tilde_psd", all_psd}, {"all_converged", all_converged}};
}

nlohmann::json run_toy(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  const std::vector<std::int64_t> dims = {1, 5, 10, 25, 50, 100};
  struct Regime {
    const char* name;
    std::int64_t points;
  };
  const std::vector<Regime> regimes = {{"low", 15}, {"high", 128}};

  struct Task {
    std::int64_t d;
    Regime regime;
    ToyMethod method;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (auto d : dims)
    for (const auto& regime : regimes)
      for (ToyMethod m : {ToyMethod::Taylor, ToyMethod::SampleBased})
        for (auto seed : cfg.seeds) tasks.push_back({d, regime, m, seed});

  std::vector<double> mse(tasks.size());
  run_pool(static_cast<std::int64_t>(tasks.size()), cfg.threads, [&](std::int64_t i) {
    const Task& t = tasks[static_cast<std::size_t>(i)];
    ToyConfig tc;
    tc.d = t.d;
    tc.train_points = t.regime.points;
    tc.lambda_x = cfg.toy_lambda_x;
    tc.train_iters = cfg.toy_train_iters;
    tc.lr = cfg.toy_lr;
    mse[static_cast<std::size_t>(i)] = toy_experiment(tc, t.method, t.seed);
  });

  std::vector<CsvRow> rows;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& t = tasks[i];
    std::string condition = "d" + std::to_string(t.d) + "_" + t.regime.name + "_" +
                            (t.method == ToyMethod::Taylor ? "taylor" : "sample");
    rows.push_back({static_cast<std::int64_t>(t.seed), condition, "test_mse", mse[i]});
  }
  write_long_csv((dir / "toy.csv").string(), rows);
  return {{"dimensions", dims}, {"seeds", cfg.seeds.size()}};
}

}  // namespace

RunManifest make_manifest(const ExperimentConfig& cfg) {
  return {cfg.to_keys(), kVersion, cfg.seeds, utc_now(), planned_artifacts(cfg)};
}

void write_manifest(const std::string& path, const RunManifest& m) {
  nlohmann::json j = {{"config", m.resolved_config},
                      {"version", m.version},
                      {"seeds", m.seeds},
                      {"started_at", m.started_at},
                      {"artifacts", m.artifacts}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << '\n';
}

int run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  write_manifest((dir / "manifest.json").string(), make_manifest(cfg));

  nlohmann::json summary = {{"command", command_name(cfg.command)}, {"status", "ok"}};
  int exit_code = 0;
  try {
    switch (cfg.command) {
      case Command::Train: summary["results"] = run_train(cfg, dir); break;
      case Command::Ablation: summary["results"] = run_ablation(cfg, dir); break;
      case Command::Variance:
        summary["results"] =
            cfg.env == "lq" ? run_variance_lq(cfg, dir) : run_variance_pendulum(cfg, dir);
        break;
      case Command::Stability: summary["results"] = run_stability(cfg, dir); break;
      case Command::Toy: summary["results"] = run_toy(cfg, dir); break;
    }
  } catch (const std::exception& e) {
    summary["status"] = "failed";
    summary["error"] = e.what();
    exit_code = 1;
  }
  summary["finished_at"] = utc_now();
  std::ofstream out(dir / "summary.json");
  if (out) out << summary.dump(2) << '\n';
  return exit_code;
}

int ablation_matrix(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.command = Command::Ablation;
  return run_experiment(c);
}

}  // namespace ttd
