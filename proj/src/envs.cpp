#include "dbgfqn/envs.hpp"
#include "dbgfqn/gridverse.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dbgfqn {

// ---------------------------------------------------------------------------
// CarFlag

std::vector<float> CarFlagEnv::reset(uint64_t seed) {
  Rng rng(seed);
  goal_side_ = rng.bernoulli(0.5) ? 1 : -1;
  x_ = rng.uniform(-0.6, 0.6);
  v_ = 0.0;
  steps_ = 0;
  open_ = true;
  return observe();
}

std::vector<float> CarFlagEnv::observe() const {
  const float hint = std::abs(x_) <= kOracleHalfWidth ? static_cast<float>(goal_side_) : 0.f;
  return {static_cast<float>(x_), static_cast<float>(v_), hint};
}

StepResult CarFlagEnv::step(int action) {
  if (!open_) throw EnvError("carflag: step after episode end");
  if (action < 0 || action > 2) throw EnvError("carflag: bad action");
  const int dir = action - 1;  // left / coast / right
  v_ = std::clamp(v_ + kAccel * dir, -kVMax, kVMax);
  x_ = std::clamp(x_ + v_, -1.1, 1.1);
  steps_++;

  StepResult r;
  if (x_ >= 1.0 || x_ <= -1.0) {
    const int side = x_ >= 1.0 ? 1 : -1;
    r.done = true;
    r.success = side == goal_side_;
    r.reward = r.success ? 1.f : 0.f;
    open_ = false;
  } else if (steps_ >= kTimeout) {
    r.done = true;
    open_ = false;
  }
  r.obs = observe();
  return r;
}

void CarFlagEnv::save_state(Archive& a, const std::string& p) const {
  const double vals[4] = {x_, v_, static_cast<double>(goal_side_), static_cast<double>(steps_)};
  a.put_f64(p + "state", {4}, vals, 4);
  a.put_scalar_i64(p + "open", open_ ? 1 : 0);
}

void CarFlagEnv::load_state(const Archive& a, const std::string& p) {
  auto vals = a.get_f64(p + "state");
  x_ = vals[0];
  v_ = vals[1];
  goal_side_ = static_cast<int>(vals[2]);
  steps_ = static_cast<int>(vals[3]);
  open_ = a.get_scalar_i64(p + "open") != 0;
}

// ---------------------------------------------------------------------------
// Memory Cards

std::vector<float> MemoryCardsEnv::reset(uint64_t seed) {
  rng_.seed(seed);
  const int n = 2 * pairs_;
  std::vector<int> positions(n);
  for (int i = 0; i < n; ++i) positions[i] = i;
  rng_.shuffle(positions);
  partner_.assign(n, -1);
  value_.assign(n, -1);
  for (int p = 0; p < pairs_; ++p) {
    const int a = positions[2 * p], b = positions[2 * p + 1];
    partner_[a] = b;
    partner_[b] = a;
    value_[a] = value_[b] = p;
  }
  solved_.assign(n, false);
  solved_pairs_ = 0;
  steps_ = 0;
  open_ = true;
  reveal_next();
  return observe();
}

void MemoryCardsEnv::reveal_next() {
  std::vector<int> unsolved;
  for (int i = 0; i < 2 * pairs_; ++i)
    if (!solved_[i]) unsolved.push_back(i);
  revealed_pos_ = unsolved[rng_.uniform_int(static_cast<int>(unsolved.size()))];
}

std::vector<float> MemoryCardsEnv::observe() const {
  std::vector<float> obs(3 * pairs_, 0.f);
  obs[revealed_pos_] = 1.f;
  obs[2 * pairs_ + value_[revealed_pos_]] = 1.f;
  return obs;
}

StepResult MemoryCardsEnv::step(int action) {
  if (!open_) throw EnvError("memory_cards: step after episode end");
  if (action < 0 || action >= 2 * pairs_) throw EnvError("memory_cards: bad action");
  steps_++;
  StepResult r;
  if (action == partner_[revealed_pos_]) {
    r.reward = 1.f;
    solved_[revealed_pos_] = true;
    solved_[action] = true;
    solved_pairs_++;
  } else {
    r.reward = -1.f;
  }
  if (solved_pairs_ == pairs_) {
    r.done = true;
    r.success = true;
    open_ = false;
    r.obs.assign(3 * pairs_, 0.f);
    return r;
  }
  if (steps_ >= kTimeout) {
    r.done = true;
    open_ = false;
  }
  reveal_next();
  r.obs = observe();
  return r;
}

void MemoryCardsEnv::save_state(Archive& a, const std::string& p) const {
  std::vector<int64_t> st;
  st.push_back(pairs_);
  st.push_back(revealed_pos_);
  st.push_back(steps_);
  st.push_back(solved_pairs_);
  st.push_back(open_ ? 1 : 0);
  for (int v : partner_) st.push_back(v);
  for (int v : value_) st.push_back(v);
  for (bool v : solved_) st.push_back(v ? 1 : 0);
  a.put_i64(p + "state", st);
  a.put_bytes(p + "rng", rng_.serialize());
}

void MemoryCardsEnv::load_state(const Archive& a, const std::string& p) {
  auto st = a.get_i64(p + "state");
  size_t i = 0;
  pairs_ = static_cast<int>(st[i++]);
  revealed_pos_ = static_cast<int>(st[i++]);
  steps_ = static_cast<int>(st[i++]);
  solved_pairs_ = static_cast<int>(st[i++]);
  open_ = st[i++] != 0;
  const int n = 2 * pairs_;
  partner_.resize(n);
  value_.resize(n);
  solved_.resize(n);
  for (int j = 0; j < n; ++j) partner_[j] = static_cast<int>(st[i++]);
  for (int j = 0; j < n; ++j) value_[j] = static_cast<int>(st[i++]);
  for (int j = 0; j < n; ++j) solved_[j] = st[i++] != 0;
  rng_.deserialize(a.get_bytes(p + "rng"));
}

// ---------------------------------------------------------------------------
// Factory

namespace {

// Grammar: carflag | memory_cards[_pN] | gv_memory_NxN | gv_memory_RrRooms_NxN
// (optional _kB beacon suffix) | gv_memory_NxN_hallucinated | gv_keydoor_NxN.
std::unique_ptr<PomdpEnv> make_grid(const std::string& name) {
  GridConfig cfg;
  std::string rest = name.substr(3);  // strip "gv_"
  if (rest.rfind("keydoor_", 0) == 0) {
    cfg.layout = GridLayout::Keydoor;
    rest = rest.substr(8);
  } else if (rest.rfind("memory_", 0) == 0) {
    rest = rest.substr(7);
  } else {
    throw EnvError("unknown gridverse task in: " + name);
  }

  // optional "<R>rooms_" prefix
  if (auto pos = rest.find("rooms_"); pos != std::string::npos && cfg.layout != GridLayout::Keydoor) {
    cfg.layout = GridLayout::Rooms;
    cfg.rooms_per_side = static_cast<int>(std::lround(std::sqrt(std::stod(rest.substr(0, pos)))));
    if (cfg.rooms_per_side * cfg.rooms_per_side != std::stoi(rest.substr(0, pos)))
      throw EnvError("room count must be a perfect square in: " + name);
    rest = rest.substr(pos + 6);
  }

  // "NxN" size
  const auto x = rest.find('x');
  if (x == std::string::npos) throw EnvError("missing NxN size in: " + name);
  cfg.size = std::stoi(rest.substr(0, x));
  rest = rest.substr(x + 1);
  auto us = rest.find('_');
  std::string tail = us == std::string::npos ? "" : rest.substr(us + 1);

  while (!tail.empty()) {
    auto next = tail.find('_');
    std::string tok = tail.substr(0, next);
    tail = next == std::string::npos ? "" : tail.substr(next + 1);
    if (tok == "hallucinated") {
      if (cfg.layout != GridLayout::Open) throw EnvError("hallucination applies to open layouts only");
      cfg = hallucinate_rooms(cfg, 5);
    } else if (tok.size() == 2 && tok[1] == 'b' && tok[0] >= '1' && tok[0] <= '3') {
      cfg.beacon_count = tok[0] - '0';
    } else {
      throw EnvError("unknown env suffix '" + tok + "' in: " + name);
    }
  }
  return std::make_unique<GridverseEnv>(cfg, name);
}

}  // namespace

std::unique_ptr<PomdpEnv> make_env(const std::string& name) {
  if (name == "carflag") return std::make_unique<CarFlagEnv>();
  if (name == "memory_cards") return std::make_unique<MemoryCardsEnv>(5);
  if (name.rfind("memory_cards_p", 0) == 0)
    return std::make_unique<MemoryCardsEnv>(std::stoi(name.substr(14)));
  if (name.rfind("gv_", 0) == 0) return make_grid(name);
  throw EnvError("unknown environment: " + name);
}

std::vector<std::string> known_env_names() {
  return {
      "carflag",
      "memory_cards",
      "memory_cards_p2",
      "memory_cards_p3",
      "gv_memory_5x5",
      "gv_memory_7x7",
      "gv_memory_9x9",
      "gv_memory_11x11",
      "gv_memory_13x13",
      "gv_memory_13x13_hallucinated",
      "gv_memory_4rooms_7x7",
      "gv_memory_4rooms_13x13",
      "gv_memory_9rooms_13x13",
      "gv_memory_9rooms_13x13_2b",
      "gv_memory_9rooms_13x13_3b",
      "gv_memory_16rooms_13x13",
      "gv_memory_25rooms_13x13",
      "gv_memory_16rooms_15x15",
      "gv_memory_16rooms_17x17",
      "gv_memory_16rooms_21x21",
      "gv_keydoor_5x5",
      "gv_keydoor_7x7",
      "gv_keydoor_9x9",
  };
}

}  // namespace dbgfqn
