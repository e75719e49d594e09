#include "dbgfqn/envs.hpp"

#include <doctest.h>

#include <cmath>

using namespace dbgfqn;

TEST_CASE("carflag reset is deterministic per seed and balanced across seeds") {
  CarFlagEnv a, b;
  for (uint64_t s = 0; s < 20; ++s) {
    auto oa = a.reset(s);
    auto ob = b.reset(s);
    CHECK(oa == ob);
    CHECK(a.goal_side() == b.goal_side());
    CHECK(std::abs(oa[0]) <= 0.6f);
    CHECK(oa[1] == 0.f);
  }
  int plus = 0;
  for (uint64_t s = 0; s < 2000; ++s)
    if (a.reset(s), a.goal_side() == 1) plus++;
  CHECK(plus > 900);
  CHECK(plus < 1100);
}

TEST_CASE("carflag kinematics: clamped velocity integration") {
  CarFlagEnv env;
  env.reset(7);
  const double x0 = env.x();
  auto r = env.step(2);  // accelerate right
  CHECK(r.obs[1] == doctest::Approx(0.01));
  CHECK(r.obs[0] == doctest::Approx(x0 + 0.01));
  for (int i = 0; i < 20 && !r.done; ++i) r = env.step(2);
  if (!r.done) CHECK(r.obs[1] == doctest::Approx(0.07));  // vmax reached

  env.reset(7);
  r = env.step(1);  // coast from rest: nothing moves
  CHECK(r.obs[0] == doctest::Approx(x0));
  CHECK(r.obs[1] == doctest::Approx(0.0));
}

TEST_CASE("carflag hint appears exactly inside the oracle zone") {
  CarFlagEnv env;
  for (uint64_t s = 0; s < 200; ++s) {
    auto obs = env.reset(s);
    const bool inside = std::abs(env.x()) <= CarFlagEnv::kOracleHalfWidth;
    if (inside)
      CHECK(obs[2] == static_cast<float>(env.goal_side()));
    else
      CHECK(obs[2] == 0.f);
  }
}

namespace {

// drive to the oracle zone, read the hint, then drive to the paying boundary
bool run_scripted_carflag(CarFlagEnv& env, uint64_t seed) {
  auto obs = env.reset(seed);
  int known_side = obs[2] != 0.f ? static_cast<int>(obs[2]) : 0;
  for (int t = 0; t < CarFlagEnv::kTimeout; ++t) {
    int action;
    if (known_side != 0) {
      action = known_side > 0 ? 2 : 0;
    } else {
      action = obs[0] > 0.f ? 0 : 2;
    }
    auto r = env.step(action);
    obs = r.obs;
    if (obs[2] != 0.f) known_side = static_cast<int>(obs[2]);
    if (r.done) return r.success;
  }
  return false;
}

}  // namespace

TEST_CASE("scripted oracle policy wins every carflag episode") {
  CarFlagEnv env;
  int wins = 0;
  for (uint64_t s = 0; s < 100; ++s) wins += run_scripted_carflag(env, s) ? 1 : 0;
  CHECK(wins == 100);
}

TEST_CASE("carflag rejects steps after the episode ends and bad actions") {
  CarFlagEnv env;
  env.reset(3);
  CHECK_THROWS_AS(env.step(5), EnvError);
  StepResult r;
  while (!(r = env.step(2)).done) {
  }
  CHECK(!env.episode_open());
  CHECK_THROWS_AS(env.step(1), EnvError);
}

TEST_CASE("carflag state round-trips through an archive") {
  CarFlagEnv env;
  env.reset(11);
  for (int i = 0; i < 5; ++i) env.step(2);
  Archive a;
  env.save_state(a, "e.");
  CarFlagEnv other;
  other.load_state(a, "e.");
  CHECK(other.x() == env.x());
  CHECK(other.goal_side() == env.goal_side());
  // identical action streams stay identical afterwards
  for (int i = 0; i < 10; ++i) {
    auto r1 = env.step(0);
    auto r2 = other.step(0);
    CHECK(r1.obs == r2.obs);
    CHECK(r1.done == r2.done);
    if (r1.done) break;
  }
}

TEST_CASE("memory cards layout is a valid pairing and observation is two-hot") {
  MemoryCardsEnv env(4);
  auto obs = env.reset(5);
  const auto& partner = env.partner();
  REQUIRE(partner.size() == 8);
  for (int i = 0; i < 8; ++i) {
    CHECK(partner[i] != i);
    CHECK(partner[partner[i]] == i);
  }
  CHECK(obs.size() == 12);
  float pos_sum = 0, val_sum = 0;
  for (int i = 0; i < 8; ++i) pos_sum += obs[i];
  for (int i = 8; i < 12; ++i) val_sum += obs[i];
  CHECK(pos_sum == 1.f);
  CHECK(val_sum == 1.f);
}

TEST_CASE("memory cards oracle policy solves P pairs in at most 2P reveals worth of steps") {
  for (int pairs : {2, 3, 5}) {
    MemoryCardsEnv env(pairs);
    for (uint64_t s = 0; s < 50; ++s) {
      env.reset(s);
      int steps = 0;
      StepResult r;
      do {
        r = env.step(env.partner()[env.revealed_position()]);
        steps++;
      } while (!r.done);
      CHECK(r.success);
      CHECK(steps == pairs);  // every guess pairs the revealed card
      float total = 0;
      (void)total;
    }
  }
}

TEST_CASE("memory cards wrong guesses cost -1 and do not solve anything") {
  MemoryCardsEnv env(3);
  env.reset(9);
  const int revealed = env.revealed_position();
  int wrong = (env.partner()[revealed] + 1) % 6;
  if (wrong == revealed) wrong = (wrong + 1) % 6;
  if (wrong == env.partner()[revealed]) wrong = (wrong + 1) % 6;
  auto r = env.step(wrong);
  CHECK(r.reward == -1.f);
  CHECK(!r.done);
}

TEST_CASE("memory cards p2 random-policy success matches the exact closed form") {
  // each step pairs the revealed card with probability 1/4 independently,
  // success needs 2 hits within 50 steps
  const double p = 0.25;
  const double exact =
      1.0 - std::pow(1 - p, 50) - 50.0 * p * std::pow(1 - p, 49);
  const int trials = 4000;
  MemoryCardsEnv env(2);
  Rng policy_rng(99);
  int wins = 0;
  for (int t = 0; t < trials; ++t) {
    env.reset(1000 + t);
    StepResult r;
    do {
      r = env.step(policy_rng.uniform_int(4));
    } while (!r.done);
    wins += r.success ? 1 : 0;
  }
  const double mc = static_cast<double>(wins) / trials;
  const double sigma = std::sqrt(exact * (1 - exact) / trials);
  CHECK(std::abs(mc - exact) < 3 * sigma + 1e-12);
}

TEST_CASE("memory cards state round-trips with its rng stream") {
  MemoryCardsEnv env(3);
  env.reset(21);
  env.step(0);
  Archive a;
  env.save_state(a, "m.");
  MemoryCardsEnv other(3);
  other.load_state(a, "m.");
  Rng r1(5), r2(5);
  for (int i = 0; i < 30; ++i) {
    const int act1 = r1.uniform_int(6), act2 = r2.uniform_int(6);
    auto s1 = env.episode_open() ? env.step(act1) : StepResult{};
    auto s2 = other.episode_open() ? other.step(act2) : StepResult{};
    CHECK(s1.obs == s2.obs);
    CHECK(s1.reward == s2.reward);
    CHECK(s1.done == s2.done);
    if (s1.done) break;
  }
}

TEST_CASE("factory parses the documented name grammar") {
  for (const auto& name : known_env_names()) {
    auto env = make_env(name);
    if (name == "memory_cards")
      CHECK(env->name() == "memory_cards_p5");  // canonical alias
    else
      CHECK(env->name() == name);
    auto obs = env->reset(1);
    CHECK(static_cast<int>(obs.size()) == env->obs_width());
    CHECK(env->action_count() >= 2);
    CHECK(env->max_episode_steps() > 0);
  }
  CHECK(make_env("memory_cards_p7")->obs_width() == 21);
  CHECK(make_env("gv_memory_9rooms_13x13_3b")->obs_width() == 66);
  CHECK_THROWS_AS(make_env("bogus"), EnvError);
  CHECK_THROWS_AS(make_env("gv_memory_6x6"), EnvError);
  CHECK_THROWS_AS(make_env("gv_memory_5rooms_13x13"), EnvError);
  CHECK_THROWS_AS(make_env("gv_memory_4rooms_7x7_hallucinated"), EnvError);
}
