#include "dbgfqn/harness.hpp"

#include "dbgfqn/gridverse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dbgfqn {

namespace fs = std::filesystem;

void ExperimentConfig::resolve(const PomdpEnv& env) {
  if (encoder.obs_width == 0) {
    encoder.obs_width = env.obs_width();
  } else if (encoder.obs_width != env.obs_width()) {
    throw DimensionError("config obs_width " + std::to_string(encoder.obs_width) + " != environment " +
                         env.name() + " obs_width " + std::to_string(env.obs_width()));
  }
  if (encoder.action_count == 0) {
    encoder.action_count = env.action_count();
  } else if (encoder.action_count != env.action_count()) {
    throw DimensionError("config action_count " + std::to_string(encoder.action_count) +
                         " != environment " + env.name() + " action_count " +
                         std::to_string(env.action_count()));
  }
  validate();
}

void ExperimentConfig::validate() const {
  encoder.validate();
  train.validate();
  if (seeds.empty()) throw ReplayError("experiment needs at least one seed");
  if (checkpoint_period < 0 || success_window < 1) throw ReplayError("bad harness periods");
}

double running_success_rate(const std::deque<uint8_t>& history, int window) {
  if (history.empty()) return 0.0;
  const size_t n = std::min<size_t>(history.size(), static_cast<size_t>(window));
  long hits = 0;
  for (size_t i = history.size() - n; i < history.size(); ++i) hits += history[i];
  return static_cast<double>(hits) / static_cast<double>(n);
}

SublayerVariant variant_from_flag(const std::string& flag) {
  if (flag == "dtqn") return SublayerVariant::Ffn;
  if (flag == "drfqn") return SublayerVariant::Rnn;
  if (flag == "dlfqn") return SublayerVariant::Lstm;
  if (flag == "dgfqn") return SublayerVariant::Gru;
  if (flag == "dbrfqn") return SublayerVariant::BiRnn;
  if (flag == "dblfqn") return SublayerVariant::BiLstm;
  if (flag == "dbgfqn") return SublayerVariant::BiGru;
  throw ReplayError("unknown variant flag: " + flag +
                    " (expected dtqn|drfqn|dlfqn|dgfqn|dbrfqn|dblfqn|dbgfqn)");
}

std::string flag_from_variant(SublayerVariant v) {
  switch (v) {
    case SublayerVariant::Ffn: return "dtqn";
    case SublayerVariant::Rnn: return "drfqn";
    case SublayerVariant::Lstm: return "dlfqn";
    case SublayerVariant::Gru: return "dgfqn";
    case SublayerVariant::BiRnn: return "dbrfqn";
    case SublayerVariant::BiLstm: return "dblfqn";
    case SublayerVariant::BiGru: return "dbgfqn";
  }
  return "?";
}

namespace {

constexpr const char* kMetricsHeader =
    "global_step,episode_index,episode_return,success,running_success_rate,epsilon,loss_avg\n";

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_record(const MetricsRecord& r) {
  std::ostringstream os;
  os << r.global_step << "," << r.episode_index << "," << format_double(r.episode_return) << ","
     << (r.success ? 1 : 0) << "," << format_double(r.running_success_rate) << ","
     << format_double(r.epsilon) << "," << format_double(r.loss_avg) << "\n";
  return os.str();
}

// Per-seed loop state that must round-trip through snapshots exactly.
struct LoopState {
  long step = 0;
  long episode_index = 0;
  double episode_return = 0;
  double best_rate = 0;
  std::vector<float> obs;
  std::vector<std::vector<float>> history;  // trailing window of observations, <= K
  std::deque<uint8_t> successes;
  std::deque<double> losses;
};

int greedy_action(QNetwork<float>& net, const std::vector<std::vector<float>>& history) {
  const int K = net.config().context_length;
  const int ow = net.config().obs_width;
  const int A = net.config().action_count;
  const int valid = static_cast<int>(history.size());
  Tensor<float> obs = Tensor<float>::zeros({K, ow});
  for (int t = 0; t < valid; ++t)
    std::copy(history[t].begin(), history[t].end(), &obs.values()[static_cast<size_t>(t) * ow]);
  NoGrad<float> guard;
  Tensor<float> q = net.forward(std::move(obs), 1, {valid});
  std::vector<float> last(q.values().begin() + static_cast<size_t>(valid - 1) * A,
                          q.values().begin() + static_cast<size_t>(valid) * A);
  return select_action(last);
}

double loss_average(const std::deque<double>& losses) {
  if (losses.empty()) return 0.0;
  double s = 0;
  for (double v : losses) s += v;
  return s / static_cast<double>(losses.size());
}

void save_snapshot(const std::string& path, const ExperimentConfig& cfg, const QNetwork<float>& online,
                   const QNetwork<float>& target, const AdamState<float>& opt, const ReplayBuffer& buffer,
                   const PomdpEnv& env, const Rng& rng, const LoopState& st) {
  Archive a;
  online.save(a, "online.");
  target.save(a, "target.");
  a.put_scalar_i64("opt.step", opt.step);
  for (size_t i = 0; i < opt.m.size(); ++i) {
    a.put_f32("opt.m" + std::to_string(i), {static_cast<int64_t>(opt.m[i].size())}, opt.m[i].data(),
              opt.m[i].size());
    a.put_f32("opt.v" + std::to_string(i), {static_cast<int64_t>(opt.v[i].size())}, opt.v[i].data(),
              opt.v[i].size());
  }
  buffer.save_state(a, "buffer.");
  env.save_state(a, "env.");
  a.put_bytes("rng", rng.serialize());

  a.put_scalar_i64("loop.step", st.step);
  a.put_scalar_i64("loop.episode_index", st.episode_index);
  a.put_f64("loop.episode_return", {1}, &st.episode_return, 1);
  a.put_f64("loop.best_rate", {1}, &st.best_rate, 1);
  a.put_f32("loop.obs", {static_cast<int64_t>(st.obs.size())}, st.obs.data(), st.obs.size());
  const int64_t h = static_cast<int64_t>(st.history.size());
  const int64_t ow = cfg.encoder.obs_width;
  std::vector<float> flat(static_cast<size_t>(h) * ow);
  for (int64_t i = 0; i < h; ++i)
    std::copy(st.history[i].begin(), st.history[i].end(), flat.begin() + i * ow);
  a.put_f32("loop.history", {h, ow}, flat.data(), flat.size());
  std::vector<int64_t> succ(st.successes.begin(), st.successes.end());
  a.put_i64("loop.successes", succ);
  std::vector<double> losses(st.losses.begin(), st.losses.end());
  a.put_f64("loop.losses", {static_cast<int64_t>(losses.size())}, losses.data(), losses.size());

  const std::string tmp = path + ".tmp";
  a.save(tmp);
  fs::rename(tmp, path);
}

void load_snapshot(const std::string& path, const ExperimentConfig& cfg, QNetwork<float>& online,
                   QNetwork<float>& target, AdamState<float>& opt, ReplayBuffer& buffer, PomdpEnv& env,
                   Rng& rng, LoopState& st) {
  Archive a = Archive::load(path);
  online.load(a, "online.");
  target.load(a, "target.");
  opt.step = a.get_scalar_i64("opt.step");
  for (size_t i = 0; i < opt.m.size(); ++i) {
    opt.m[i] = a.get_f32("opt.m" + std::to_string(i));
    opt.v[i] = a.get_f32("opt.v" + std::to_string(i));
  }
  buffer.load_state(a, "buffer.");
  env.load_state(a, "env.");
  rng.deserialize(a.get_bytes("rng"));

  st.step = a.get_scalar_i64("loop.step");
  st.episode_index = a.get_scalar_i64("loop.episode_index");
  st.episode_return = a.get_f64("loop.episode_return")[0];
  st.best_rate = a.get_f64("loop.best_rate")[0];
  st.obs = a.get_f32("loop.obs");
  const int ow = cfg.encoder.obs_width;
  auto flat = a.get_f32("loop.history");
  st.history.clear();
  for (size_t i = 0; i + ow <= flat.size(); i += ow)
    st.history.emplace_back(flat.begin() + i, flat.begin() + i + ow);
  st.successes.clear();
  for (int64_t v : a.get_i64("loop.successes")) st.successes.push_back(static_cast<uint8_t>(v));
  st.losses.clear();
  for (double v : a.get_f64("loop.losses")) st.losses.push_back(v);
}

// Drops metrics rows from after the snapshot step so a resumed run appends
// exactly where the snapshot left off.
void truncate_metrics(const std::string& path, long step) {
  if (!fs::exists(path)) {
    std::ofstream f(path, std::ios::trunc);
    f << kMetricsHeader;
    return;
  }
  auto records = import_metrics(path);
  std::ofstream f(path, std::ios::trunc);
  f << kMetricsHeader;
  for (const auto& r : records)
    if (r.global_step <= step) f << format_record(r);
}

}  // namespace

void export_metrics(const std::vector<MetricsRecord>& records, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ReplayError("cannot write metrics file: " + path);
  f << kMetricsHeader;
  for (const auto& r : records) f << format_record(r);
  f.flush();
  if (!f) throw ReplayError("metrics write failed: " + path);
}

std::vector<MetricsRecord> import_metrics(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ReplayError("cannot read metrics file: " + path);
  std::string line;
  std::getline(f, line);  // header
  std::vector<MetricsRecord> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    MetricsRecord r;
    int success = 0;
    if (std::sscanf(line.c_str(), "%ld,%ld,%lf,%d,%lf,%lf,%lf", &r.global_step, &r.episode_index,
                    &r.episode_return, &success, &r.running_success_rate, &r.epsilon, &r.loss_avg) != 7)
      throw ReplayError("malformed metrics row in " + path + ": " + line);
    r.success = success != 0;
    out.push_back(r);
  }
  return out;
}

SeedResult run_single_seed(const ExperimentConfig& raw_cfg, uint64_t seed) {
  auto env = make_env(raw_cfg.env_name);
  ExperimentConfig cfg = raw_cfg;
  cfg.resolve(*env);
  const TrainConfig& tc = cfg.train;

  const fs::path dir = fs::path(cfg.out_dir) / ("seed" + std::to_string(seed));
  fs::create_directories(dir);
  const std::string metrics_path = (dir / "metrics.csv").string();
  const std::string snapshot_path = (dir / "checkpoint.bin").string();

  QNetwork<float> online(cfg.encoder), target(cfg.encoder);
  Rng rng(seed);
  online.init_params(rng);
  sync_target(online, target);
  online.set_requires_grad(true);
  AdamState<float> opt;
  opt.lr = static_cast<float>(tc.lr);
  opt.init(online.parameters());
  ReplayBuffer buffer(env->obs_width(), tc.buffer_capacity);

  LoopState st;
  if (fs::exists(snapshot_path)) {
    load_snapshot(snapshot_path, cfg, online, target, opt, buffer, *env, rng, st);
    truncate_metrics(metrics_path, st.step);
  } else {
    st.obs = env->reset(rng.next_u32());
    st.history = {st.obs};
    std::ofstream f(metrics_path, std::ios::trunc);
    f << kMetricsHeader;
  }

  std::ofstream metrics(metrics_path, std::ios::app);
  if (!metrics) throw ReplayError("cannot open metrics file: " + metrics_path);

  const int K = cfg.encoder.context_length;
  const int A = cfg.encoder.action_count;
  bool stopped_early = false;

  while (st.step < tc.total_steps && !stopped_early) {
    const double eps = epsilon_at(tc, st.step);
    int action;
    if (st.step < tc.warmup_steps || rng.uniform() < eps) {
      action = rng.uniform_int(A);
    } else {
      action = greedy_action(online, st.history);
    }
    StepResult sr = env->step(action);
    buffer.record_step(st.obs, action, static_cast<float>(sr.reward), sr.done);
    st.episode_return += sr.reward;
    st.obs = sr.obs;
    st.history.push_back(st.obs);
    if (static_cast<int>(st.history.size()) > K) st.history.erase(st.history.begin());
    st.step++;

    if (st.step > tc.warmup_steps) {
      const double loss = train_step(online, target, buffer, opt, tc, rng);
      st.losses.push_back(loss);
      if (st.losses.size() > 100) st.losses.pop_front();
    }
    if (st.step % tc.target_sync_period == 0) sync_target(online, target);

    if (sr.done) {
      st.successes.push_back(sr.success ? 1 : 0);
      if (static_cast<int>(st.successes.size()) > cfg.success_window) st.successes.pop_front();
      const double rate = running_success_rate(st.successes, cfg.success_window);
      st.best_rate = std::max(st.best_rate, rate);
      MetricsRecord r{st.step,
                      st.episode_index,
                      st.episode_return,
                      sr.success,
                      rate,
                      eps,
                      loss_average(st.losses)};
      metrics << format_record(r);
      if (cfg.metrics_flush_period <= 1 || st.episode_index % cfg.metrics_flush_period == 0)
        metrics.flush();
      st.episode_index++;
      st.episode_return = 0;
      st.obs = env->reset(rng.next_u32());
      st.history = {st.obs};
      if (cfg.early_stop_success >= 0 &&
          static_cast<int>(st.successes.size()) >= cfg.success_window &&
          rate >= cfg.early_stop_success)
        stopped_early = true;
    }

    if (cfg.checkpoint_period > 0 && st.step % cfg.checkpoint_period == 0) {
      metrics.flush();
      save_snapshot(snapshot_path, cfg, online, target, opt, buffer, *env, rng, st);
    }
  }
  metrics.flush();

  SeedResult res;
  res.seed = seed;
  res.final_rate = running_success_rate(st.successes, cfg.success_window);
  res.best_rate = st.best_rate;
  res.episodes = st.episode_index;
  res.steps = st.step;
  res.metrics_path = metrics_path;

  std::ofstream summary((dir / "summary.csv").string(), std::ios::trunc);
  summary << "seed,final_rate,best_rate,episodes,steps\n"
          << seed << "," << format_double(res.final_rate) << "," << format_double(res.best_rate) << ","
          << res.episodes << "," << res.steps << "\n";
  return res;
}

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
  {
    auto env = make_env(cfg.env_name);
    ExperimentConfig probe = cfg;
    probe.resolve(*env);  // fail fast on inconsistent configs
  }
  ExperimentSummary summary;
  for (uint64_t seed : cfg.seeds) {
    const fs::path done = fs::path(cfg.out_dir) / ("seed" + std::to_string(seed)) / "summary.csv";
    if (fs::exists(done)) {
      // completed earlier (possibly by a parallel sweep); reuse the result
      std::ifstream f(done.string());
      std::string header, line;
      std::getline(f, header);
      std::getline(f, line);
      SeedResult r;
      unsigned long long s = 0;
      if (std::sscanf(line.c_str(), "%llu,%lf,%lf,%ld,%ld", &s, &r.final_rate, &r.best_rate, &r.episodes,
                      &r.steps) == 5) {
        r.seed = s;
        r.metrics_path = (fs::path(cfg.out_dir) / ("seed" + std::to_string(seed)) / "metrics.csv").string();
        summary.seeds.push_back(r);
        continue;
      }
    }
    summary.seeds.push_back(run_single_seed(cfg, seed));
  }
  for (const auto& r : summary.seeds) {
    summary.mean_final += r.final_rate;
    summary.mean_best += r.best_rate;
  }
  if (!summary.seeds.empty()) {
    summary.mean_final /= static_cast<double>(summary.seeds.size());
    summary.mean_best /= static_cast<double>(summary.seeds.size());
  }
  return summary;
}

}  // namespace dbgfqn
