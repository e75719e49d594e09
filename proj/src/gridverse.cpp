#include "dbgfqn/gridverse.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace dbgfqn {

void GridConfig::validate() const {
  if (size < 5 || size > 21 || size % 2 == 0) throw EnvError("grid size must be odd in 5..21");
  if (beacon_count < 1 || beacon_count > 3) throw EnvError("beacon count must be 1..3");
  if (layout == GridLayout::Rooms && (rooms_per_side < 2 || rooms_per_side > size / 2))
    throw EnvError("rooms_per_side out of range");
  if (hallucinated && layout != GridLayout::Open) throw EnvError("hallucination requires an open layout");
  if (hallucinated && (rooms_per_side < 2 || rooms_per_side > size / 2))
    throw EnvError("hallucinated overlay needs rooms_per_side in range");
}

GridConfig hallucinate_rooms(const GridConfig& cfg, int rooms_per_side) {
  if (cfg.layout != GridLayout::Open) throw EnvError("hallucinate_rooms: layout must be open");
  GridConfig out = cfg;
  out.hallucinated = true;
  out.rooms_per_side = rooms_per_side;
  return out;
}

namespace {

struct Delta {
  int dr, dc;
};
// forward and right vectors per heading (N, E, S, W)
constexpr Delta kForward[4] = {{-1, 0}, {0, 1}, {1, 0}, {0, -1}};
constexpr Delta kRight[4] = {{0, 1}, {1, 0}, {0, -1}, {-1, 0}};

// Splits the interior span into `rooms` parts separated by single wall lines,
// widths as equal as possible (larger rooms first). Returns wall coordinates.
std::vector<int> wall_lines(int interior, int rooms) {
  const int total_room = interior - (rooms - 1);
  std::vector<int> widths(rooms, total_room / rooms);
  for (int i = 0; i < total_room % rooms; ++i) widths[i]++;
  std::vector<int> walls;
  int pos = 1;  // interior starts at coordinate 1
  for (int i = 0; i + 1 < rooms; ++i) {
    pos += widths[i];
    walls.push_back(pos);
    pos += 1;
  }
  return walls;
}

// Row/col bands between wall lines (inclusive ranges of non-wall coordinates).
std::vector<std::pair<int, int>> bands(const std::vector<int>& walls, int size) {
  std::vector<std::pair<int, int>> out;
  int lo = 1;
  for (int w : walls) {
    out.emplace_back(lo, w - 1);
    lo = w + 1;
  }
  out.emplace_back(lo, size - 2);
  return out;
}

}  // namespace

GridverseEnv::GridverseEnv(GridConfig cfg, std::string name) : cfg_(cfg), name_(std::move(name)) {
  cfg_.validate();
}

bool GridverseEnv::passable(int r, int c) const {
  if (r < 0 || c < 0 || r >= cfg_.size || c >= cfg_.size) return false;
  const Cell cell = map_[r * cfg_.size + c];
  if (cell == Cell::Wall) return false;
  if (cell == Cell::Door && !key_held_) return false;
  return true;
}

bool GridverseEnv::blocked_ahead(const GridPose& p) const {
  const Delta f = kForward[static_cast<int>(p.heading)];
  return !passable(p.row + f.dr, p.col + f.dc);
}

bool GridverseEnv::reachable_from_start(int row, int col) const {
  const int n = cfg_.size;
  std::vector<uint8_t> seen(n * n, 0);
  std::deque<std::pair<int, int>> q;
  q.emplace_back(start_pose_.row, start_pose_.col);
  seen[start_pose_.row * n + start_pose_.col] = 1;
  while (!q.empty()) {
    auto [r, c] = q.front();
    q.pop_front();
    if (r == row && c == col) return true;
    const Cell cell = map_[r * n + c];
    // terminal cells can be entered but not crossed
    const bool terminal = cell == Cell::FlagA || cell == Cell::FlagB || cell == Cell::FlagC ||
                          cell == Cell::Goal;
    if (terminal && !(r == start_pose_.row && c == start_pose_.col)) continue;
    for (const Delta& d : kForward) {
      const int nr = r + d.dr, nc = c + d.dc;
      if (nr < 0 || nc < 0 || nr >= n || nc >= n || seen[nr * n + nc]) continue;
      const Cell target = map_[nr * n + nc];
      if (target == Cell::Wall) continue;  // doors count as passable for reachability
      seen[nr * n + nc] = 1;
      q.emplace_back(nr, nc);
    }
  }
  return false;
}

void GridverseEnv::generate(uint64_t seed) {
  const int n = cfg_.size;
  Rng rng(seed);
  for (int attempt = 0; attempt < 256; ++attempt) {
    map_.assign(n * n, Cell::Empty);
    overlay_.assign(n * n, 0);
    key_held_ = false;
    for (int i = 0; i < n; ++i) {
      map_[i] = map_[(n - 1) * n + i] = Cell::Wall;
      map_[i * n] = map_[i * n + n - 1] = Cell::Wall;
    }

    auto place_room_walls = [&](bool as_overlay, Rng& wrng) {
      const auto vwalls = wall_lines(n - 2, cfg_.rooms_per_side);
      const auto hwalls = vwalls;  // square partition
      auto mark = [&](int r, int c) {
        if (as_overlay)
          overlay_[r * n + c] = 1;
        else
          map_[r * n + c] = Cell::Wall;
      };
      for (int wc : vwalls)
        for (int r = 1; r <= n - 2; ++r) mark(r, wc);
      for (int wr : hwalls)
        for (int c = 1; c <= n - 2; ++c) mark(wr, c);
      // one door gap per wall segment between crossings
      const auto rbands = bands(hwalls, n);
      const auto cbands = bands(vwalls, n);
      auto open_gap = [&](int r, int c) {
        if (as_overlay)
          overlay_[r * n + c] = 0;
        else
          map_[r * n + c] = Cell::Empty;
      };
      for (int wc : vwalls)
        for (const auto& [lo, hi] : rbands) open_gap(lo + wrng.uniform_int(hi - lo + 1), wc);
      for (int wr : hwalls)
        for (const auto& [lo, hi] : cbands) open_gap(wr, lo + wrng.uniform_int(hi - lo + 1));
    };

    if (cfg_.layout == GridLayout::Rooms) place_room_walls(false, rng);
    if (cfg_.hallucinated) {
      // imagined walls draw from their own stream so the underlying layout,
      // flags, and start pose match the open variant for the same seed
      Rng wall_rng(seed * 0x9e3779b97f4a7c15ULL + 1);
      place_room_walls(true, wall_rng);
    }

    auto free_cells = [&]() {
      std::vector<int> cells;
      for (int r = 1; r <= n - 2; ++r)
        for (int c = 1; c <= n - 2; ++c)
          if (map_[r * n + c] == Cell::Empty) cells.push_back(r * n + c);
      return cells;
    };

    if (cfg_.layout == GridLayout::Keydoor) {
      // single dividing wall with a locked door; key on the agent's side
      const int wc = n / 2;
      for (int r = 1; r <= n - 2; ++r) map_[r * n + wc] = Cell::Wall;
      const int door_row = 1 + rng.uniform_int(n - 2);
      map_[door_row * n + wc] = Cell::Door;
      auto pick = [&](int c_lo, int c_hi) {
        int r, c;
        do {
          r = 1 + rng.uniform_int(n - 2);
          c = c_lo + rng.uniform_int(c_hi - c_lo + 1);
        } while (map_[r * n + c] != Cell::Empty);
        return std::pair{r, c};
      };
      auto [kr, kc] = pick(1, wc - 1);
      map_[kr * n + kc] = Cell::Key;
      auto [gr, gc] = pick(wc + 1, n - 2);
      map_[gr * n + gc] = Cell::Goal;
      int ar, ac;
      do {
        std::tie(ar, ac) = pick(1, wc - 1);
      } while (map_[ar * n + ac] != Cell::Empty);
      start_pose_ = {ar, ac, static_cast<Heading>(rng.uniform_int(4))};
      correct_flag_ = Cell::Goal;
      pose_ = start_pose_;
      if (reachable_from_start(kr, kc) && reachable_from_start(gr, gc)) return;
      continue;
    }

    // memory task: two flags, k beacons whose majority color marks the payout flag
    const bool corner_placement = cfg_.layout == GridLayout::Open;  // plain + hallucinated variants
    const Cell correct_color = rng.bernoulli(0.5) ? Cell::BeaconA : Cell::BeaconB;
    correct_flag_ = correct_color == Cell::BeaconA ? Cell::FlagA : Cell::FlagB;
    std::vector<Cell> beacon_colors(cfg_.beacon_count, correct_color);
    if (cfg_.beacon_count == 3)
      beacon_colors[rng.uniform_int(3)] = correct_color == Cell::BeaconA ? Cell::BeaconB : Cell::BeaconA;

    int fa_r, fa_c, fb_r, fb_c;
    std::vector<std::pair<int, int>> beacon_pos(cfg_.beacon_count);
    if (corner_placement) {
      fa_r = 1, fa_c = 1;
      fb_r = 1, fb_c = n - 2;
      beacon_pos[0] = {n - 2, n / 2};
      if (cfg_.beacon_count > 1) beacon_pos[1] = {n - 2, 1};
      if (cfg_.beacon_count > 2) beacon_pos[2] = {n - 2, n - 2};
      start_pose_ = {n / 2, n / 2, Heading::North};
    } else {
      auto cells = free_cells();
      rng.shuffle(cells);
      if (cells.size() < static_cast<size_t>(3 + cfg_.beacon_count)) continue;
      size_t idx = 0;
      fa_r = cells[idx] / n, fa_c = cells[idx] % n;
      idx++;
      fb_r = cells[idx] / n, fb_c = cells[idx] % n;
      idx++;
      for (int i = 0; i < cfg_.beacon_count; ++i, ++idx)
        beacon_pos[i] = {cells[idx] / n, cells[idx] % n};
      start_pose_ = {cells[idx] / n, cells[idx] % n, static_cast<Heading>(rng.uniform_int(4))};
    }
    map_[fa_r * n + fa_c] = Cell::FlagA;
    map_[fb_r * n + fb_c] = Cell::FlagB;
    for (int i = 0; i < cfg_.beacon_count; ++i)
      map_[beacon_pos[i].first * n + beacon_pos[i].second] = beacon_colors[i];
    pose_ = start_pose_;

    bool ok = reachable_from_start(fa_r, fa_c) && reachable_from_start(fb_r, fb_c);
    for (const auto& [br, bc] : beacon_pos) ok = ok && reachable_from_start(br, bc);
    if (ok) return;
  }
  throw EnvError("failed to generate a connected layout for " + name_);
}

std::vector<float> GridverseEnv::reset(uint64_t seed) {
  seed_ = seed;
  generate(seed);
  steps_ = 0;
  open_ = true;
  return observe();
}

StepResult GridverseEnv::step(int action) {
  if (!open_) throw EnvError(name_ + ": step after episode end");
  if (action < 0 || action > 2) throw EnvError(name_ + ": bad action");
  const int n = cfg_.size;
  if (action == TurnLeft) {
    pose_.heading = static_cast<Heading>((static_cast<int>(pose_.heading) + 3) % 4);
  } else if (action == TurnRight) {
    pose_.heading = static_cast<Heading>((static_cast<int>(pose_.heading) + 1) % 4);
  } else {
    const Delta f = kForward[static_cast<int>(pose_.heading)];
    const int nr = pose_.row + f.dr, nc = pose_.col + f.dc;
    if (passable(nr, nc)) {
      pose_.row = nr;
      pose_.col = nc;
      Cell& here = map_[nr * n + nc];
      if (here == Cell::Key) {
        key_held_ = true;
        here = Cell::Empty;
      }
    }
  }
  steps_++;

  StepResult r;
  const Cell here = map_[pose_.row * n + pose_.col];
  const bool on_flag = here == Cell::FlagA || here == Cell::FlagB || here == Cell::FlagC;
  if (on_flag || here == Cell::Goal) {
    r.done = true;
    r.success = here == correct_flag_;
    r.reward = r.success ? 1.f : 0.f;
    open_ = false;
  } else if (steps_ >= max_episode_steps()) {
    r.done = true;
    open_ = false;
  }
  r.obs = observe();
  return r;
}

std::vector<float> GridverseEnv::observe_at(const GridPose& p) const {
  const int n = cfg_.size;
  const Delta f = kForward[static_cast<int>(p.heading)];
  const Delta rt = kRight[static_cast<int>(p.heading)];
  // window order: ahead-left, ahead, ahead-right, left, self, right
  const std::array<std::pair<int, int>, kGridObsCells> cells = {{
      {p.row + f.dr - rt.dr, p.col + f.dc - rt.dc},
      {p.row + f.dr, p.col + f.dc},
      {p.row + f.dr + rt.dr, p.col + f.dc + rt.dc},
      {p.row - rt.dr, p.col - rt.dc},
      {p.row, p.col},
      {p.row + rt.dr, p.col + rt.dc},
  }};
  std::vector<float> obs(kGridObsWidth, 0.f);
  for (int i = 0; i < kGridObsCells; ++i) {
    const auto [r, c] = cells[i];
    Cell cell = Cell::Wall;  // out of bounds encodes as wall
    if (r >= 0 && c >= 0 && r < n && c < n) {
      cell = map_[r * n + c];
      if (cell == Cell::Empty && overlay_[r * n + c]) cell = Cell::Wall;  // hallucinated walls look real
    }
    obs[i * kCellChannels + static_cast<int>(cell)] = 1.f;
  }
  return obs;
}

std::string GridverseEnv::dump_layout() const {
  const int n = cfg_.size;
  std::ostringstream os;
  os << "# env=" << name_ << "\n# seed=" << seed_ << "\n# size=" << n
     << " layout=" << (cfg_.layout == GridLayout::Open ? "open" : cfg_.layout == GridLayout::Rooms ? "rooms" : "keydoor")
     << " rooms_per_side=" << cfg_.rooms_per_side << " beacons=" << cfg_.beacon_count
     << " hallucinated=" << (cfg_.hallucinated ? 1 : 0) << "\n";
  static constexpr char kChars[] = {'.', '#', 'a', 'b', 'c', 'A', 'B', 'C', 'k', 'd', 'G'};
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      char ch = kChars[static_cast<int>(map_[r * n + c])];
      if (ch == '.' && overlay_[r * n + c]) ch = '~';
      if (r == start_pose_.row && c == start_pose_.col) ch = '@';
      os << ch;
    }
    os << "\n";
  }
  return os.str();
}

void GridverseEnv::save_state(Archive& a, const std::string& p) const {
  std::vector<int64_t> st;
  st.push_back(static_cast<int64_t>(seed_));
  st.push_back(pose_.row);
  st.push_back(pose_.col);
  st.push_back(static_cast<int>(pose_.heading));
  st.push_back(key_held_ ? 1 : 0);
  st.push_back(steps_);
  st.push_back(open_ ? 1 : 0);
  st.push_back(static_cast<int>(correct_flag_));
  for (Cell c : map_) st.push_back(static_cast<int>(c));
  a.put_i64(p + "state", st);
}

void GridverseEnv::load_state(const Archive& a, const std::string& p) {
  auto st = a.get_i64(p + "state");
  size_t i = 0;
  seed_ = static_cast<uint64_t>(st[i++]);
  generate(seed_);  // rebuild overlay + start pose deterministically
  pose_.row = static_cast<int>(st[i++]);
  pose_.col = static_cast<int>(st[i++]);
  pose_.heading = static_cast<Heading>(st[i++]);
  key_held_ = st[i++] != 0;
  steps_ = static_cast<int>(st[i++]);
  open_ = st[i++] != 0;
  correct_flag_ = static_cast<Cell>(st[i++]);
  for (auto& c : map_) c = static_cast<Cell>(st[i++]);
}

}  // namespace dbgfqn
