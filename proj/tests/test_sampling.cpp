#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "fedsim/sampling.hpp"

using namespace fedsim;

namespace {

SamplerState uniform_sampler(uint64_t seed) {
  SamplerState s;
  s.strategy = SampleStrategy::uniform;
  s.rng_seed = seed;
  return s;
}

}  // namespace

TEST(Sample, UniformFullParticipationCoversEveryone) {
  auto s = uniform_sampler(1);
  auto ids = sample(s, 0, 20, 20);
  std::set<int> unique(ids.begin(), ids.end());
  EXPECT_EQ(unique.size(), 20u);
  EXPECT_EQ(*unique.begin(), 0);
  EXPECT_EQ(*unique.rbegin(), 19);
}

TEST(Sample, UniformNoDuplicatesAndInRange) {
  auto s = uniform_sampler(2);
  for (int t = 0; t < 50; ++t) {
    auto ids = sample(s, t, 10, 100);
    std::set<int> unique(ids.begin(), ids.end());
    EXPECT_EQ(unique.size(), 10u);
    for (int id : ids) {
      EXPECT_GE(id, 0);
      EXPECT_LT(id, 100);
    }
  }
}

TEST(Sample, DeterministicInSeedAndRound) {
  auto s = uniform_sampler(3);
  EXPECT_EQ(sample(s, 7, 10, 100), sample(s, 7, 10, 100));
  EXPECT_NE(sample(s, 7, 10, 100), sample(s, 8, 10, 100));
}

TEST(Sample, BadRatioThrows) {
  auto s = uniform_sampler(4);
  EXPECT_THROW(sample(s, 0, 11, 10), BadRatio);
  EXPECT_THROW(sample(s, 0, 0, 10), BadRatio);
}

TEST(Sample, MdDegenerateWeightRepeatsClient) {
  SamplerState s;
  s.strategy = SampleStrategy::md;
  s.rng_seed = 5;
  s.weights.assign(8, 0.0);
  s.weights[3] = 1.0;
  auto ids = sample(s, 0, 5, 8);
  EXPECT_EQ(ids, (std::vector<int>{3, 3, 3, 3, 3}));
}

TEST(Sample, UniformFrequencyIsRoughlyFlat) {
  auto s = uniform_sampler(6);
  std::vector<int> counts(100, 0);
  const int draws = 10000;
  for (int t = 0; t < draws; ++t)
    for (int id : sample(s, t, 10, 100)) counts[static_cast<size_t>(id)]++;
  for (int c : counts) {
    EXPECT_GT(c, 850);   // 0.1 * draws -15%
    EXPECT_LT(c, 1150);  // 0.1 * draws +15%
  }
}

TEST(Sample, ForcedScheduleIsVerbatimElseUniform) {
  SamplerState forced;
  forced.strategy = SampleStrategy::forced;
  forced.rng_seed = 7;
  forced.forced_schedule = {{3, {9, 2, 2, 5}}};
  EXPECT_EQ(sample(forced, 3, 4, 10), (std::vector<int>{9, 2, 2, 5}));

  auto plain = uniform_sampler(7);
  EXPECT_EQ(sample(forced, 4, 4, 10), sample(plain, 4, 4, 10));
}

TEST(Sample, AdaflDrawsDistinctIds) {
  SamplerState s;
  s.strategy = SampleStrategy::adafl;
  s.rng_seed = 8;
  s.weights.assign(30, 1.0 / 30.0);
  for (int t = 0; t < 20; ++t) {
    auto ids = sample(s, t, 12, 30);
    std::set<int> unique(ids.begin(), ids.end());
    EXPECT_EQ(unique.size(), 12u);
  }
}

TEST(AdaflUpdate, EqualNormsMoveTowardEqualShares) {
  SamplerState s;
  s.strategy = SampleStrategy::adafl;
  s.adafl_alpha = 0.5;
  s.weights = {0.7, 0.1, 0.1, 0.1};
  adafl_update(s, {0, 1}, {{0, 4.0}, {1, 4.0}});
  double total = 0.0;
  for (double w : s.weights) total += w;
  EXPECT_NEAR(total, 1.0, 1e-12);
  // both participants pulled toward share 1/2 before renormalization
  EXPECT_LT(s.weights[0], 0.7);
  EXPECT_GT(s.weights[1], 0.1);
}

TEST(AdaflUpdate, ZeroAlphaLeavesWeightsUnchanged) {
  SamplerState s;
  s.strategy = SampleStrategy::adafl;
  s.adafl_alpha = 0.0;
  s.weights = {0.4, 0.3, 0.3};
  auto before = s.weights;
  adafl_update(s, {0, 2}, {{0, 1.0}, {2, 9.0}});
  EXPECT_EQ(s.weights, before);
}

TEST(AdaflUpdate, ZeroNormParticipantLosesWeight) {
  SamplerState s;
  s.strategy = SampleStrategy::adafl;
  s.adafl_alpha = 0.5;
  s.weights = {0.5, 0.5};
  adafl_update(s, {0, 1}, {{0, 0.0}, {1, 4.0}});
  EXPECT_LT(s.weights[0], 0.5);
  double total = s.weights[0] + s.weights[1];
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(AdaflUpdate, WrongStrategyThrows) {
  auto s = uniform_sampler(9);
  EXPECT_THROW(adafl_update(s, {0}, {{0, 1.0}}), WrongStrategy);
}
