// Command-line driver: train / eval / params / sweep.

#include "dbgfqn/config_io.hpp"
#include "dbgfqn/gridverse.hpp"
#include "dbgfqn/harness.hpp"
#include "dbgfqn/param_report.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace {

using namespace dbgfqn;

// Published defaults: embedding 64 for the low-dimensional tasks, 128 for the
// grid and card tasks.
int default_embed_dim(const std::string& env_name) {
  return env_name == "carflag" ? 64 : 128;
}

struct CommonFlags {
  std::string env_name;
  std::string variant;
  int ffn_layers = 1;
  std::vector<uint64_t> seeds;
  long steps = -1;
  std::string config_path;
  std::string out_dir;
  bool deterministic = false;

  int embed_dim = 0;
  int heads = 0;
  int layers = 0;
  int context = 0;
  int batch_size = 0;
  double early_stop = -1.0;
  long checkpoint_period = -1;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--env", f.env_name, "environment name (see `params --envs` for the list)");
  cmd->add_option("--variant", f.variant, "dtqn|drfqn|dlfqn|dgfqn|dbrfqn|dblfqn|dbgfqn");
  cmd->add_option("--ffn-layers", f.ffn_layers, "FFN expansion stages for the dtqn variant (1..4)");
  cmd->add_option("--seed", f.seeds, "training seed(s); repeatable");
  cmd->add_option("--steps", f.steps, "total environment steps");
  cmd->add_option("--config", f.config_path, "experiment config JSON; flags override its fields");
  cmd->add_option("--out", f.out_dir, "output directory");
  cmd->add_flag("--deterministic", f.deterministic, "bit-reproducible single-threaded mode");
  cmd->add_option("--embed-dim", f.embed_dim, "embedding dimension override");
  cmd->add_option("--heads", f.heads, "attention heads override");
  cmd->add_option("--layers", f.layers, "encoder layers override");
  cmd->add_option("--context", f.context, "context length override");
  cmd->add_option("--batch-size", f.batch_size, "train batch size override");
  cmd->add_option("--early-stop", f.early_stop, "stop once running success rate reaches this");
  cmd->add_option("--checkpoint-period", f.checkpoint_period, "steps between snapshots");
}

ExperimentConfig build_config(const CommonFlags& f) {
  ExperimentConfig cfg;
  if (!f.config_path.empty()) cfg = load_experiment_config(f.config_path);

  if (!f.env_name.empty()) cfg.env_name = f.env_name;
  if (cfg.env_name.empty()) cfg.env_name = "carflag";
  if (!f.variant.empty()) {
    cfg.encoder.sublayer_variant = variant_from_flag(f.variant);
    if (cfg.encoder.sublayer_variant == SublayerVariant::Ffn) {
      cfg.encoder.ffn.stages = f.ffn_layers;
      cfg.encoder.ffn.hidden_mult = 4;
    }
  }
  if (f.embed_dim > 0) {
    cfg.encoder.embed_dim = f.embed_dim;
  } else if (f.config_path.empty()) {
    cfg.encoder.embed_dim = default_embed_dim(cfg.env_name);
  }
  if (f.heads > 0) cfg.encoder.heads = f.heads;
  if (f.layers > 0) cfg.encoder.encoder_layers = f.layers;
  if (f.context > 0) cfg.encoder.context_length = f.context;
  cfg.encoder.recurrent_hidden = is_bidirectional(cfg.encoder.sublayer_variant)
                                     ? cfg.encoder.embed_dim / 2
                                     : cfg.encoder.embed_dim;
  cfg.encoder.obs_width = 0;  // resolved from the environment
  cfg.encoder.action_count = 0;

  if (f.steps >= 0) cfg.train.total_steps = f.steps;
  if (f.batch_size > 0) cfg.train.batch_size = f.batch_size;
  if (!f.seeds.empty()) cfg.seeds = f.seeds;
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  if (f.early_stop >= 0) cfg.early_stop_success = f.early_stop;
  if (f.checkpoint_period >= 0) cfg.checkpoint_period = f.checkpoint_period;
  cfg.deterministic = cfg.deterministic || f.deterministic;
  return cfg;
}

int cmd_train(const CommonFlags& f) {
  ExperimentConfig cfg = build_config(f);
  std::filesystem::create_directories(cfg.out_dir);
  save_experiment_config(cfg, (std::filesystem::path(cfg.out_dir) / "config.json").string());
  const ExperimentSummary summary = run_experiment(cfg);
  std::cout << "seed,final_rate,best_rate,episodes,steps\n";
  for (const auto& r : summary.seeds)
    std::cout << r.seed << "," << r.final_rate << "," << r.best_rate << "," << r.episodes << ","
              << r.steps << "\n";
  std::cout << "mean_final," << summary.mean_final << "\nmean_best," << summary.mean_best << "\n";
  return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& checkpoint, int episodes) {
  ExperimentConfig cfg = build_config(f);
  auto env = make_env(cfg.env_name);
  cfg.resolve(*env);
  QNetwork<float> net(cfg.encoder);
  Archive a = Archive::load(checkpoint);
  net.load(a, a.contains("online.embed.w") ? "online." : "");

  const uint64_t seed = cfg.seeds.empty() ? 1 : cfg.seeds[0];
  Rng rng(seed);
  const int K = cfg.encoder.context_length;
  long wins = 0;
  double total_return = 0;
  for (int e = 0; e < episodes; ++e) {
    std::vector<float> obs = env->reset(rng.next_u32());
    std::vector<std::vector<float>> history{obs};
    while (env->episode_open()) {
      const int valid = static_cast<int>(history.size());
      Tensor<float> x = Tensor<float>::zeros({K, cfg.encoder.obs_width});
      for (int t = 0; t < valid; ++t)
        std::copy(history[t].begin(), history[t].end(),
                  &x.values()[static_cast<size_t>(t) * cfg.encoder.obs_width]);
      Tensor<float> q = net.forward(std::move(x), 1, {valid});
      std::vector<float> last(
          q.values().begin() + static_cast<size_t>(valid - 1) * cfg.encoder.action_count,
          q.values().begin() + static_cast<size_t>(valid) * cfg.encoder.action_count);
      StepResult sr = env->step(select_action(last));
      total_return += sr.reward;
      history.push_back(sr.obs);
      if (static_cast<int>(history.size()) > K) history.erase(history.begin());
      if (sr.done && sr.success) wins++;
    }
  }
  std::cout << "episodes," << episodes << "\nsuccess_rate," << static_cast<double>(wins) / episodes
            << "\nmean_return," << total_return / episodes << "\n";
  return 0;
}

int cmd_params(const CommonFlags& f, bool list_envs) {
  if (list_envs) {
    for (const auto& name : known_env_names()) std::cout << name << "\n";
    return 0;
  }
  ExperimentConfig cfg = build_config(f);
  auto env = make_env(cfg.env_name);
  cfg.resolve(*env);
  std::cout << report_parameters_csv(&cfg.encoder);
  return 0;
}

int cmd_sweep(const CommonFlags& f, const std::vector<std::string>& variants) {
  std::cout << "env,variant,seed,final_rate,best_rate,episodes,steps\n";
  for (const auto& v : variants) {
    CommonFlags vf = f;
    vf.variant = v;
    vf.out_dir = (std::filesystem::path(f.out_dir.empty() ? "runs" : f.out_dir) / v).string();
    ExperimentConfig cfg = build_config(vf);
    std::filesystem::create_directories(cfg.out_dir);
    save_experiment_config(cfg, (std::filesystem::path(cfg.out_dir) / "config.json").string());
    const ExperimentSummary summary = run_experiment(cfg);
    for (const auto& r : summary.seeds)
      std::cout << cfg.env_name << "," << v << "," << r.seed << "," << r.final_rate << "," << r.best_rate
                << "," << r.episodes << "," << r.steps << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("DBGFQN_THREADS")) {
    Eigen::setNbThreads(std::max(1, std::atoi(threads)));
  } else {
    Eigen::setNbThreads(1);
  }

  CLI::App app{"DBGFQN training and analysis driver"};
  app.require_subcommand(1);

  CommonFlags train_f, eval_f, params_f, sweep_f;
  std::string checkpoint;
  int eval_episodes = 10;
  bool list_envs = false;
  std::vector<std::string> sweep_variants = {"dtqn", "dgfqn", "dbgfqn"};

  CLI::App* train = app.add_subcommand("train", "train one or more seeds");
  add_common(train, train_f);

  CLI::App* eval = app.add_subcommand("eval", "greedy evaluation from a checkpoint");
  add_common(eval, eval_f);
  eval->add_option("--checkpoint", checkpoint, "snapshot or model archive")->required();
  eval->add_option("--episodes", eval_episodes, "number of greedy episodes");

  CLI::App* params = app.add_subcommand("params", "parameter-count report (CSV)");
  add_common(params, params_f);
  params->add_flag("--envs", list_envs, "list known environment names and exit");

  CLI::App* sweep = app.add_subcommand("sweep", "train several variants back to back");
  add_common(sweep, sweep_f);
  sweep->add_option("--variants", sweep_variants, "variant flags to sweep");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_f);
    if (eval->parsed()) return cmd_eval(eval_f, checkpoint, eval_episodes);
    if (params->parsed()) return cmd_params(params_f, list_envs);
    if (sweep->parsed()) return cmd_sweep(sweep_f, sweep_variants);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
