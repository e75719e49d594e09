#pragma once

// DQN-style optimization over context windows: per-timestep TD targets from a
// hard-synced target network, epsilon-greedy exploration, and the Adam step.

#include "dbgfqn/model.hpp"
#include "dbgfqn/replay.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dbgfqn {

struct TrainConfig {
  long total_steps = 2000000;
  long target_sync_period = 10000;
  double lr = 3e-4;
  int batch_size = 32;
  double gamma = 0.99;
  double epsilon_start = 1.0;
  double epsilon_final = 0.1;
  double epsilon_fraction = 0.1;  // linear decay over this fraction of total_steps
  long warmup_steps = 1000;       // pure exploration, no optimization
  long buffer_capacity = 500000;
  double grad_clip = 1.0;
  bool huber_loss = false;
  uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;

  void validate() const {
    if (total_steps < 0 || target_sync_period < 1 || lr <= 0 || batch_size < 1 || buffer_capacity < 1 ||
        warmup_steps < 0 || grad_clip <= 0)
      throw ReplayError("train config has non-positive extents");
    if (gamma <= 0 || gamma > 1) throw ReplayError("gamma must be in (0, 1]");
    if (epsilon_start < 0 || epsilon_start > 1 || epsilon_final < 0 || epsilon_final > 1 ||
        epsilon_fraction < 0 || epsilon_fraction > 1)
      throw ReplayError("epsilon schedule out of range");
  }
};

// Linear decay from epsilon_start to epsilon_final over the first
// epsilon_fraction of total_steps, then constant.
double epsilon_at(const TrainConfig& cfg, long step);

template <typename T>
int epsilon_greedy(const std::vector<T>& q_last, double epsilon, Rng& rng) {
  if (epsilon < 0 || epsilon > 1) throw ReplayError("epsilon must be in [0, 1]");
  if (rng.uniform() < epsilon) return rng.uniform_int(static_cast<int>(q_last.size()));
  return select_action(q_last);
}

template <typename T>
void sync_target(const QNetwork<T>& online, QNetwork<T>& target) {
  if (!(online.config() == target.config())) throw DimensionError("sync_target config mismatch");
  target.copy_from(online);
}

// y_t = r_t for terminal steps, else r_t + gamma * max_a Q_target(next_obs_t).
// Returns a flat (batch*K) vector; pad timesteps carry 0 and are excluded by
// the loss mask.
template <typename T>
std::vector<T> td_targets(const std::vector<TransitionSequence>& batch, QNetwork<T>& target, T gamma) {
  const int K = target.config().context_length;
  const int ow = target.config().obs_width;
  const int A = target.config().action_count;
  const int B = static_cast<int>(batch.size());

  Tensor<T> next = Tensor<T>::zeros({B * K, ow});
  std::vector<int> valid(B);
  for (int b = 0; b < B; ++b) {
    valid[b] = batch[b].valid_len;
    for (int i = 0; i < K * ow; ++i)
      next.values()[static_cast<size_t>(b) * K * ow + i] = static_cast<T>(batch[b].next_obs[i]);
  }
  NoGrad<T> guard;
  Tensor<T> q_next = target.forward(std::move(next), B, valid);

  std::vector<T> y(static_cast<size_t>(B) * K, T(0));
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < batch[b].valid_len; ++t) {
      T v = static_cast<T>(batch[b].rewards[t]);
      if (!batch[b].dones[t]) {
        const T* row = &q_next.values()[(static_cast<size_t>(b) * K + t) * A];
        T mx = row[0];
        for (int a = 1; a < A; ++a) mx = std::max(mx, row[a]);
        v += gamma * mx;
      }
      y[static_cast<size_t>(b) * K + t] = v;
    }
  }
  return y;
}

// One optimization step: sample, build targets, mean squared (or Huber) TD
// error over valid timesteps, backprop, clip, Adam. Returns the loss.
template <typename T>
T train_step(QNetwork<T>& online, QNetwork<T>& target, const ReplayBuffer& buffer, AdamState<T>& opt,
             const TrainConfig& cfg, Rng& rng) {
  const int K = online.config().context_length;
  const int ow = online.config().obs_width;
  const int B = cfg.batch_size;

  auto batch = buffer.sample_batch(B, K, rng);
  std::vector<T> y = td_targets(batch, target, static_cast<T>(cfg.gamma));

  Tensor<T> obs = Tensor<T>::zeros({B * K, ow});
  std::vector<int> valid(B), actions(static_cast<size_t>(B) * K, 0);
  Tensor<T> mask = Tensor<T>::zeros({B * K, 1});
  long valid_count = 0;
  for (int b = 0; b < B; ++b) {
    valid[b] = batch[b].valid_len;
    valid_count += batch[b].valid_len;
    for (int i = 0; i < K * ow; ++i)
      obs.values()[static_cast<size_t>(b) * K * ow + i] = static_cast<T>(batch[b].obs[i]);
    for (int t = 0; t < K; ++t) {
      actions[static_cast<size_t>(b) * K + t] = batch[b].actions[t];
      if (t < batch[b].valid_len) mask.values()[static_cast<size_t>(b) * K + t] = T(1);
    }
  }
  Tensor<T> y_t = Tensor<T>::from({B * K, 1}, std::move(y));

  T loss_value;
  {
    Tape<T> tape;
    Tensor<T> q = online.forward(std::move(obs), B, valid);
    Tensor<T> qa = select_columns(std::move(q), std::move(actions));
    Tensor<T> err = mul(sub(std::move(qa), std::move(y_t)), std::move(mask));
    Tensor<T> per = cfg.huber_loss ? huber(std::move(err), T(1)) : mul(err, err);
    Tensor<T> loss = scale(sum(std::move(per)), T(1) / static_cast<T>(valid_count));
    loss_value = loss.item();
    tape.backward(loss);
  }
  clip_grad_norm(online.parameters(), static_cast<T>(cfg.grad_clip));
  opt.lr = static_cast<T>(cfg.lr);
  adam_step(online.parameters(), opt);
  return loss_value;
}

}  // namespace dbgfqn
