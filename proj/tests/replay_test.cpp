#include "dbgfqn/replay.hpp"

#include <doctest.h>

#include <cmath>
#include <map>

using namespace dbgfqn;

namespace {

// observation encoding (episode, step) so samples are traceable: obs[0] holds
// 100 * episode + step
std::vector<float> tagged(int episode, int step) { return {100.f * episode + step, -1.f}; }

void record_episode(ReplayBuffer& buf, int episode, int steps) {
  for (int t = 0; t < steps; ++t)
    buf.record_step(tagged(episode, t), t, static_cast<float>(episode), t + 1 == steps);
}

}  // namespace

TEST_CASE("record_step tracks size and episode boundaries") {
  ReplayBuffer buf(2, 100);
  CHECK(buf.size() == 0);
  CHECK_THROWS_AS(buf.record_step({1.f, 2.f, 3.f}, 0, 0.f, false), ReplayError);
  record_episode(buf, 0, 4);
  record_episode(buf, 1, 3);
  CHECK(buf.size() == 7);
  CHECK(buf.episode_count() == 2);
  buf.record_step(tagged(2, 0), 0, 0.f, false);  // open third episode
  CHECK(buf.episode_count() == 3);
}

TEST_CASE("windows never cross episode boundaries") {
  ReplayBuffer buf(2, 100);
  record_episode(buf, 0, 5);
  record_episode(buf, 1, 3);
  record_episode(buf, 2, 7);
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    auto seq = buf.sample_sequence(4, rng);
    REQUIRE(seq.valid_len >= 1);
    const int episode = static_cast<int>(seq.obs[0]) / 100;
    int prev_step = static_cast<int>(seq.obs[0]) % 100;
    for (int t = 1; t < seq.valid_len; ++t) {
      const int tag = static_cast<int>(seq.obs[t * 2]);
      CHECK(tag / 100 == episode);        // same episode throughout
      CHECK(tag % 100 == prev_step + 1);  // contiguous steps
      prev_step = tag % 100;
    }
  }
}

TEST_CASE("short windows are right-padded with zeros and valid_len marks the live rows") {
  ReplayBuffer buf(2, 100);
  record_episode(buf, 3, 2);  // shorter than K
  Rng rng(2);
  auto seq = buf.sample_sequence(5, rng);
  CHECK(seq.valid_len <= 2);
  for (int t = seq.valid_len; t < 5; ++t) {
    CHECK(seq.obs[t * 2] == 0.f);
    CHECK(seq.obs[t * 2 + 1] == 0.f);
    CHECK(seq.actions[t] == 0);
    CHECK(seq.rewards[t] == 0.f);
    CHECK(seq.dones[t] == 0);
  }
  // live rows carry the recorded payload, not padding
  CHECK(seq.obs[1] == -1.f);
}

TEST_CASE("next_obs is obs shifted by one step, zeros at the terminal step") {
  ReplayBuffer buf(2, 100);
  record_episode(buf, 1, 4);
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto seq = buf.sample_sequence(4, rng);
    for (int t = 0; t < seq.valid_len; ++t) {
      const int tag = static_cast<int>(seq.obs[t * 2]);
      if (tag % 100 == 3) {  // last step of the episode
        CHECK(seq.dones[t] == 1);
        CHECK(seq.next_obs[t * 2] == 0.f);
        CHECK(seq.next_obs[t * 2 + 1] == 0.f);
      } else {
        CHECK(static_cast<int>(seq.next_obs[t * 2]) == tag + 1);
      }
    }
  }
}

TEST_CASE("per-step eviction drops the oldest steps first") {
  ReplayBuffer buf(2, 6);
  record_episode(buf, 0, 4);
  record_episode(buf, 1, 4);  // evicts 2 steps of episode 0
  CHECK(buf.size() == 6);
  CHECK(buf.episode_count() == 2);
  record_episode(buf, 2, 2);  // evicts the rest of episode 0
  CHECK(buf.size() == 6);
  CHECK(buf.episode_count() == 2);
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    auto seq = buf.sample_sequence(4, rng);
    for (int t = 0; t < seq.valid_len; ++t)
      CHECK(static_cast<int>(seq.obs[t * 2]) / 100 >= 1);  // episode 0 fully gone
  }
}

TEST_CASE("a partially evicted episode still yields contiguous windows") {
  ReplayBuffer buf(2, 5);
  record_episode(buf, 0, 8);  // start offset 3 after eviction
  CHECK(buf.size() == 5);
  CHECK(buf.episode_count() == 1);
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto seq = buf.sample_sequence(10, rng);
    CHECK(static_cast<int>(seq.obs[0]) % 100 >= 3);  // evicted steps are unreachable
    for (int t = 1; t < seq.valid_len; ++t)
      CHECK(static_cast<int>(seq.obs[t * 2]) % 100 ==
            static_cast<int>(seq.obs[(t - 1) * 2]) % 100 + 1);
  }
}

TEST_CASE("the freshest step of an open episode is not a window end") {
  ReplayBuffer buf(2, 100);
  buf.record_step(tagged(0, 0), 0, 0.f, false);
  buf.record_step(tagged(0, 1), 1, 0.f, false);
  buf.record_step(tagged(0, 2), 2, 0.f, false);
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    auto seq = buf.sample_sequence(4, rng);
    const int last_tag = static_cast<int>(seq.obs[(seq.valid_len - 1) * 2]);
    CHECK(last_tag % 100 <= 1);  // step 2 has no successor observation yet
  }
  // unless the dangling step is all there is
  ReplayBuffer single(2, 100);
  single.record_step(tagged(0, 0), 0, 0.f, false);
  auto seq = single.sample_sequence(4, rng);
  CHECK(seq.valid_len == 1);
  for (int c = 0; c < 2; ++c) CHECK(seq.next_obs[c] == 0.f);
}

TEST_CASE("window ends are uniform within a closed episode") {
  ReplayBuffer buf(1, 100);
  for (int t = 0; t < 10; ++t) buf.record_step({static_cast<float>(t)}, 0, 0.f, t == 9);
  Rng rng(7);
  const int trials = 20000;
  std::map<int, int> counts;
  for (int i = 0; i < trials; ++i) {
    auto seq = buf.sample_sequence(3, rng);
    counts[static_cast<int>(seq.obs[seq.valid_len - 1])]++;
  }
  CHECK(counts.size() == 10);
  // chi-square against uniform over 10 ends; 99.9th percentile of chi2(9) = 27.9
  double chi2 = 0;
  const double expect = trials / 10.0;
  for (const auto& [end, count] : counts) chi2 += (count - expect) * (count - expect) / expect;
  CHECK(chi2 < 27.9);
}

TEST_CASE("sampling from an empty buffer or with bad K throws") {
  ReplayBuffer buf(2, 10);
  Rng rng(8);
  CHECK_THROWS_AS(buf.sample_sequence(4, rng), ReplayError);
  record_episode(buf, 0, 2);
  CHECK_THROWS_AS(buf.sample_sequence(0, rng), ReplayError);
  CHECK_THROWS_AS(ReplayBuffer(0, 10), ReplayError);
  CHECK_THROWS_AS(ReplayBuffer(2, 0), ReplayError);
}

TEST_CASE("sample_batch returns batch_size independent sequences") {
  ReplayBuffer buf(2, 100);
  record_episode(buf, 0, 6);
  record_episode(buf, 1, 6);
  Rng rng(9);
  auto batch = buf.sample_batch(8, 4, rng);
  CHECK(batch.size() == 8);
  for (const auto& seq : batch) CHECK(seq.valid_len >= 1);
}

TEST_CASE("state round-trips through an archive, including the open episode") {
  ReplayBuffer buf(2, 7);
  record_episode(buf, 0, 5);
  buf.record_step(tagged(1, 0), 3, 0.5f, false);
  buf.record_step(tagged(1, 1), 4, 0.5f, false);
  Archive a;
  buf.save_state(a, "r.");
  ReplayBuffer other(2, 7);
  other.load_state(a, "r.");
  CHECK(other.size() == buf.size());
  CHECK(other.episode_count() == buf.episode_count());
  // identical rng stream draws identical samples from both
  Rng r1(10), r2(10);
  for (int i = 0; i < 50; ++i) {
    auto s1 = buf.sample_sequence(4, r1);
    auto s2 = other.sample_sequence(4, r2);
    CHECK(s1.obs == s2.obs);
    CHECK(s1.actions == s2.actions);
    CHECK(s1.rewards == s2.rewards);
    CHECK(s1.dones == s2.dones);
    CHECK(s1.valid_len == s2.valid_len);
  }
  // the reloaded open episode keeps accepting steps
  other.record_step(tagged(1, 2), 5, 0.5f, true);
  CHECK(other.episode_count() == 2);

  ReplayBuffer narrow(1, 7);
  CHECK_THROWS_AS(narrow.load_state(a, "r."), ReplayError);
}
