#pragma once

// Gridverse-style memory grids: an N x N bordered world where the agent sees
// only a 2x3 egocentric window. Variants: open memory (beacon -> colored
// flag), rooms with door gaps, multi-beacon majority color, keydoor, and a
// hallucinated-rooms overlay whose walls are visible but never block.

#include "dbgfqn/envs.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dbgfqn {

enum class GridLayout { Open, Rooms, Keydoor };

struct GridConfig {
  int size = 5;              // odd, 5..21
  GridLayout layout = GridLayout::Open;
  int rooms_per_side = 0;    // for Rooms layout
  int beacon_count = 1;      // 1..3
  bool hallucinated = false; // rooms pattern visible but passable (Open only)

  void validate() const;
};

// Cell contents. Beacons and flags carry one of two colors used by the task;
// the third color channel exists in the observation encoding but is unused.
enum class Cell : uint8_t {
  Empty = 0,
  Wall,
  BeaconA,
  BeaconB,
  BeaconC,
  FlagA,
  FlagB,
  FlagC,
  Key,
  Door,
  Goal,
};

inline constexpr int kCellChannels = 11;
inline constexpr int kGridObsCells = 6;
inline constexpr int kGridObsWidth = kGridObsCells * kCellChannels;  // 66

enum class Heading : uint8_t { North = 0, East, South, West };

struct GridPose {
  int row = 0, col = 0;
  Heading heading = Heading::North;
  bool operator==(const GridPose&) const = default;
};

class GridverseEnv : public PomdpEnv {
 public:
  enum Action { TurnLeft = 0, TurnRight = 1, Forward = 2 };

  explicit GridverseEnv(GridConfig cfg, std::string name);

  int obs_width() const override { return kGridObsWidth; }
  int action_count() const override { return 3; }
  int max_episode_steps() const override { return 4 * cfg_.size * cfg_.size; }
  std::string name() const override { return name_; }

  std::vector<float> reset(uint64_t seed) override;
  StepResult step(int action) override;
  bool episode_open() const override { return open_; }

  void save_state(Archive& a, const std::string& prefix) const override;
  void load_state(const Archive& a, const std::string& prefix) override;

  const GridConfig& config() const { return cfg_; }
  const GridPose& pose() const { return pose_; }
  void set_pose(const GridPose& p) { pose_ = p; }  // for exhaustive kernel tests
  Cell cell(int r, int c) const { return map_[r * cfg_.size + c]; }
  bool overlay_wall(int r, int c) const { return overlay_[r * cfg_.size + c] != 0; }
  bool key_held() const { return key_held_; }
  Cell correct_flag() const { return correct_flag_; }

  // True when `forward` from this pose would move (used by kernel tests).
  bool blocked_ahead(const GridPose& p) const;
  std::vector<float> observe_at(const GridPose& p) const;
  std::vector<float> observe() const { return observe_at(pose_); }

  // Plain-text layout dump with a structured header (seed + config).
  std::string dump_layout() const;

  // BFS over (row, col) through passable cells from the agent start.
  bool reachable_from_start(int row, int col) const;

 private:
  void generate(uint64_t seed);
  bool passable(int r, int c) const;

  GridConfig cfg_;
  std::string name_;
  std::vector<Cell> map_;
  std::vector<uint8_t> overlay_;  // hallucinated wall pattern
  GridPose pose_;
  GridPose start_pose_;
  Cell correct_flag_ = Cell::FlagA;
  bool key_held_ = false;
  int steps_ = 0;
  bool open_ = false;
  uint64_t seed_ = 0;
};

// Overlays the rooms wall pattern on an open-layout config, flagged passable.
GridConfig hallucinate_rooms(const GridConfig& cfg, int rooms_per_side);

}  // namespace dbgfqn
