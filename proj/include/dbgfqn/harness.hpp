#pragma once

// Experiment driver: wires config -> environment -> trainer, tracks the
// running success-rate metric, streams per-episode metrics to CSV, and
// writes snapshots that support byte-identical resume.

#include "dbgfqn/envs.hpp"
#include "dbgfqn/model.hpp"
#include "dbgfqn/trainer.hpp"

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

namespace dbgfqn {

struct ExperimentConfig {
  std::string env_name = "carflag";
  EncoderConfig encoder;
  TrainConfig train;
  std::vector<uint64_t> seeds = {1};
  std::string out_dir = "runs";
  long checkpoint_period = 50000;
  long metrics_flush_period = 1;      // episodes per flush
  double early_stop_success = -1.0;   // stop a seed once running rate reaches this
  int success_window = 100;
  bool deterministic = true;

  // Fills encoder obs_width/action_count from the environment (when left 0)
  // and rejects explicit mismatches with a diagnostic naming both values.
  void resolve(const PomdpEnv& env);
  void validate() const;
};

struct MetricsRecord {
  long global_step = 0;
  long episode_index = 0;
  double episode_return = 0;
  bool success = false;
  double running_success_rate = 0;
  double epsilon = 0;
  double loss_avg = 0;

  bool operator==(const MetricsRecord&) const = default;
};

struct SeedResult {
  uint64_t seed = 0;
  double final_rate = 0;
  double best_rate = 0;
  long episodes = 0;
  long steps = 0;
  std::string metrics_path;
};

struct ExperimentSummary {
  std::vector<SeedResult> seeds;
  double mean_final = 0;
  double mean_best = 0;
};

// Mean of the most recent min(window, n) flags; 0.0 for empty history.
double running_success_rate(const std::deque<uint8_t>& history, int window = 100);

// CSV with a fixed header matching MetricsRecord field names.
void export_metrics(const std::vector<MetricsRecord>& records, const std::string& path);
std::vector<MetricsRecord> import_metrics(const std::string& path);

// Trains each configured seed; metrics land in <out_dir>/seed<k>/metrics.csv,
// snapshots in <out_dir>/seed<k>/checkpoint.bin. A run whose snapshot exists
// resumes from it; a run whose summary file exists is reused as-is.
ExperimentSummary run_experiment(const ExperimentConfig& cfg);
SeedResult run_single_seed(const ExperimentConfig& cfg, uint64_t seed);

SublayerVariant variant_from_flag(const std::string& flag);  // dtqn|drfqn|...|dbgfqn
std::string flag_from_variant(SublayerVariant v);

}  // namespace dbgfqn
