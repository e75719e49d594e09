#pragma once

// Episodic POMDP environments behind one interface: Car Flag, Memory Cards,
// and the gridverse-style memory grids (see gridverse.hpp).

#include "dbgfqn/checkpoint.hpp"
#include "dbgfqn/rng.hpp"

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dbgfqn {

struct EnvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StepResult {
  std::vector<float> obs;
  float reward = 0.f;
  bool done = false;
  bool success = false;
};

class PomdpEnv {
 public:
  virtual ~PomdpEnv() = default;

  virtual int obs_width() const = 0;
  virtual int action_count() const = 0;
  virtual int max_episode_steps() const = 0;
  virtual std::string name() const = 0;

  virtual std::vector<float> reset(uint64_t seed) = 0;
  virtual StepResult step(int action) = 0;
  virtual bool episode_open() const = 0;

  // Full state snapshot for exact-resume checkpoints.
  virtual void save_state(Archive& a, const std::string& prefix) const = 0;
  virtual void load_state(const Archive& a, const std::string& prefix) = 0;
};

// 1-D car that must visit the oracle zone around x=0 to learn which boundary
// pays out, then drive there. Observation: (x, v, hint).
class CarFlagEnv : public PomdpEnv {
 public:
  static constexpr double kAccel = 0.01;
  static constexpr double kVMax = 0.07;
  static constexpr double kOracleHalfWidth = 0.2;
  static constexpr int kTimeout = 200;

  int obs_width() const override { return 3; }
  int action_count() const override { return 3; }  // left, coast, right
  int max_episode_steps() const override { return kTimeout; }
  std::string name() const override { return "carflag"; }

  std::vector<float> reset(uint64_t seed) override;
  StepResult step(int action) override;
  bool episode_open() const override { return open_; }

  void save_state(Archive& a, const std::string& prefix) const override;
  void load_state(const Archive& a, const std::string& prefix) override;

  int goal_side() const { return goal_side_; }
  double x() const { return x_; }

 private:
  std::vector<float> observe() const;
  double x_ = 0, v_ = 0;
  int goal_side_ = 1;
  int steps_ = 0;
  bool open_ = false;
};

// Children's memory game: one unsolved card is revealed each step; the agent
// guesses the position of its pair. Observation: one-hot(position, 2P) ++
// one-hot(value, P).
class MemoryCardsEnv : public PomdpEnv {
 public:
  static constexpr int kTimeout = 50;

  explicit MemoryCardsEnv(int pairs = 5) : pairs_(pairs) {
    if (pairs < 1) throw EnvError("memory cards needs at least one pair");
  }

  int obs_width() const override { return 3 * pairs_; }
  int action_count() const override { return 2 * pairs_; }
  int max_episode_steps() const override { return kTimeout; }
  std::string name() const override { return "memory_cards_p" + std::to_string(pairs_); }

  std::vector<float> reset(uint64_t seed) override;
  StepResult step(int action) override;
  bool episode_open() const override { return open_; }

  void save_state(Archive& a, const std::string& prefix) const override;
  void load_state(const Archive& a, const std::string& prefix) override;

  int pairs() const { return pairs_; }
  // hidden layout, exposed for oracle policies in tests
  const std::vector<int>& partner() const { return partner_; }
  int revealed_position() const { return revealed_pos_; }

 private:
  std::vector<float> observe() const;
  void reveal_next();

  int pairs_;
  std::vector<int> partner_;  // partner_[pos] = paired position
  std::vector<int> value_;    // value_[pos] in [0, P)
  std::vector<bool> solved_;  // per position
  int revealed_pos_ = -1;
  int steps_ = 0;
  int solved_pairs_ = 0;
  bool open_ = false;
  Rng rng_;
};

// Factory for every supported environment name; see README for the grammar.
std::unique_ptr<PomdpEnv> make_env(const std::string& name);
std::vector<std::string> known_env_names();

}  // namespace dbgfqn
