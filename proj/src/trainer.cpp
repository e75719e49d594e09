#include "dbgfqn/trainer.hpp"

#include <algorithm>

namespace dbgfqn {

double epsilon_at(const TrainConfig& cfg, long step) {
  const double span = cfg.epsilon_fraction * static_cast<double>(cfg.total_steps);
  if (span <= 0 || step >= span) return cfg.epsilon_final;
  const double frac = static_cast<double>(std::max(0L, step)) / span;
  return cfg.epsilon_start + frac * (cfg.epsilon_final - cfg.epsilon_start);
}

}  // namespace dbgfqn
