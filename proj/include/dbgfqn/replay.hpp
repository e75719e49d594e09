#pragma once

// Sequence replay: episodes recorded step by step into a bounded ring, then
// sampled as fixed-length context windows that never cross episode
// boundaries. Windows shorter than the context length are zero-padded on the
// right, with valid_len marking the real rows.

#include "dbgfqn/checkpoint.hpp"
#include "dbgfqn/rng.hpp"

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

namespace dbgfqn {

struct ReplayError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TransitionSequence {
  std::vector<float> obs;       // K x obs_width, rows >= valid_len are zero
  std::vector<int> actions;     // K
  std::vector<float> rewards;   // K
  std::vector<uint8_t> dones;   // K
  std::vector<float> next_obs;  // K x obs_width (obs shifted by one step)
  int valid_len = 0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(int obs_width, long capacity = 500000)
      : obs_width_(obs_width), capacity_(capacity) {
    if (obs_width < 1 || capacity < 1) throw ReplayError("replay buffer needs positive extents");
  }

  int obs_width() const { return obs_width_; }
  long capacity() const { return capacity_; }
  long size() const { return size_; }
  long episode_count() const { return static_cast<long>(episodes_.size()); }

  // Appends one step of the open episode; `obs` is the observation the
  // action was taken from. done=true closes the episode.
  void record_step(const std::vector<float>& obs, int action, float reward, bool done);

  // Uniform over episodes, then uniform over window end positions within the
  // chosen episode.
  TransitionSequence sample_sequence(int K, Rng& rng) const;
  std::vector<TransitionSequence> sample_batch(int batch_size, int K, Rng& rng) const;

  void save_state(Archive& a, const std::string& prefix) const;
  void load_state(const Archive& a, const std::string& prefix);

 private:
  struct Episode {
    std::vector<float> obs;  // flattened, one row per recorded step
    std::vector<int> actions;
    std::vector<float> rewards;
    std::vector<uint8_t> dones;
    int start = 0;  // steps before `start` are evicted
    bool closed = false;
    int steps() const { return static_cast<int>(actions.size()) - start; }
  };

  void evict_one();

  int obs_width_;
  long capacity_;
  long size_ = 0;
  std::deque<Episode> episodes_;
  bool episode_open_ = false;
};

}  // namespace dbgfqn
