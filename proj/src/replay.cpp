#include "dbgfqn/replay.hpp"

#include <algorithm>
#include <cstring>

namespace dbgfqn {

void ReplayBuffer::record_step(const std::vector<float>& obs, int action, float reward, bool done) {
  if (static_cast<int>(obs.size()) != obs_width_)
    throw ReplayError("record_step obs width " + std::to_string(obs.size()) + " != " +
                      std::to_string(obs_width_));
  if (!episode_open_) {
    episodes_.emplace_back();
    episode_open_ = true;
  }
  Episode& ep = episodes_.back();
  ep.obs.insert(ep.obs.end(), obs.begin(), obs.end());
  ep.actions.push_back(action);
  ep.rewards.push_back(reward);
  ep.dones.push_back(done ? 1 : 0);
  size_++;
  if (done) {
    ep.closed = true;
    episode_open_ = false;
  }
  while (size_ > capacity_) evict_one();
}

void ReplayBuffer::evict_one() {
  Episode& ep = episodes_.front();
  ep.start++;
  size_--;
  if (ep.steps() == 0) episodes_.pop_front();
}

TransitionSequence ReplayBuffer::sample_sequence(int K, Rng& rng) const {
  if (episodes_.empty() || size_ == 0) throw ReplayError("sample from empty replay buffer");
  if (K < 1) throw ReplayError("context length must be positive");

  const Episode& ep = episodes_[rng.uniform_int(static_cast<int>(episodes_.size()))];
  const int n = ep.steps();
  // the freshest step of an open episode has no successor observation yet, so
  // keep it out of the window unless it is all the episode has
  const int ends = (!ep.closed && n > 1) ? n - 1 : n;
  const int end = ep.start + rng.uniform_int(ends);  // inclusive, in raw indices
  const int begin = std::max(ep.start, end - K + 1);
  const int len = end - begin + 1;

  TransitionSequence seq;
  seq.valid_len = len;
  seq.obs.assign(static_cast<size_t>(K) * obs_width_, 0.f);
  seq.next_obs.assign(static_cast<size_t>(K) * obs_width_, 0.f);
  seq.actions.assign(K, 0);
  seq.rewards.assign(K, 0.f);
  seq.dones.assign(K, 0);
  const int total = static_cast<int>(ep.actions.size());
  for (int t = 0; t < len; ++t) {
    const int i = begin + t;
    std::memcpy(&seq.obs[static_cast<size_t>(t) * obs_width_], &ep.obs[static_cast<size_t>(i) * obs_width_],
                obs_width_ * sizeof(float));
    if (i + 1 < total)
      std::memcpy(&seq.next_obs[static_cast<size_t>(t) * obs_width_],
                  &ep.obs[static_cast<size_t>(i + 1) * obs_width_], obs_width_ * sizeof(float));
    seq.actions[t] = ep.actions[i];
    seq.rewards[t] = ep.rewards[i];
    seq.dones[t] = ep.dones[i];
  }
  return seq;
}

std::vector<TransitionSequence> ReplayBuffer::sample_batch(int batch_size, int K, Rng& rng) const {
  std::vector<TransitionSequence> out;
  out.reserve(batch_size);
  for (int b = 0; b < batch_size; ++b) out.push_back(sample_sequence(K, rng));
  return out;
}

void ReplayBuffer::save_state(Archive& a, const std::string& p) const {
  a.put_scalar_i64(p + "obs_width", obs_width_);
  a.put_scalar_i64(p + "capacity", capacity_);
  a.put_scalar_i64(p + "episode_count", static_cast<int64_t>(episodes_.size()));
  a.put_scalar_i64(p + "open", episode_open_ ? 1 : 0);
  int idx = 0;
  for (const auto& ep : episodes_) {
    const std::string q = p + "ep" + std::to_string(idx++) + ".";
    // persist only the live span
    const int n = ep.steps();
    std::vector<float> obs(ep.obs.begin() + static_cast<size_t>(ep.start) * obs_width_, ep.obs.end());
    a.put_f32(q + "obs", {n, obs_width_}, obs.data(), obs.size());
    std::vector<int64_t> meta;
    meta.push_back(ep.closed ? 1 : 0);
    for (int i = ep.start; i < static_cast<int>(ep.actions.size()); ++i) {
      meta.push_back(ep.actions[i]);
      meta.push_back(ep.dones[i]);
    }
    a.put_i64(q + "meta", meta);
    std::vector<float> rew(ep.rewards.begin() + ep.start, ep.rewards.end());
    a.put_f32(q + "rewards", {n}, rew.data(), rew.size());
  }
}

void ReplayBuffer::load_state(const Archive& a, const std::string& p) {
  if (a.get_scalar_i64(p + "obs_width") != obs_width_) throw ReplayError("replay checkpoint width mismatch");
  capacity_ = a.get_scalar_i64(p + "capacity");
  episode_open_ = a.get_scalar_i64(p + "open") != 0;
  const int count = static_cast<int>(a.get_scalar_i64(p + "episode_count"));
  episodes_.clear();
  size_ = 0;
  for (int e = 0; e < count; ++e) {
    const std::string q = p + "ep" + std::to_string(e) + ".";
    Episode ep;
    ep.obs = a.get_f32(q + "obs");
    auto meta = a.get_i64(q + "meta");
    ep.closed = meta[0] != 0;
    const int n = static_cast<int>((meta.size() - 1) / 2);
    for (int i = 0; i < n; ++i) {
      ep.actions.push_back(static_cast<int>(meta[1 + 2 * i]));
      ep.dones.push_back(static_cast<uint8_t>(meta[2 + 2 * i]));
    }
    ep.rewards = a.get_f32(q + "rewards");
    size_ += n;
    episodes_.push_back(std::move(ep));
  }
}

}  // namespace dbgfqn
