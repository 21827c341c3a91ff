#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "fedsim/client.hpp"
#include "fedsim/fedglad.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/server.hpp"

using namespace fedsim;

namespace {

ParamVector make_pv(std::vector<std::pair<std::string, std::vector<double>>> groups) {
  std::vector<ParamGroup> gs;
  for (auto& [name, values] : groups) {
    ParamGroup g{name, std::move(values), {}};
    g.shape = {g.values.size()};
    gs.push_back(std::move(g));
  }
  return ParamVector(std::move(gs));
}

std::vector<std::map<std::string, double>> norms_of(const std::vector<ParamVector>& grads) {
  std::vector<std::map<std::string, double>> out;
  for (const auto& g : grads) out.push_back(pseudo_grad_sq_norms(g));
  return out;
}

}  // namespace

TEST(ComputeGsi, IdenticalGradientsGiveOne) {
  auto g = make_pv({{"a", {0.3, -0.7}}, {"b", {1.1}}});
  std::vector<ParamVector> grads{g, g, g};
  auto gsi = compute_gsi(norms_of(grads), aggregate(grads), AdaptMode::groupwise);
  EXPECT_NEAR(gsi.at("a"), 1.0, 1e-12);
  EXPECT_NEAR(gsi.at("b"), 1.0, 1e-12);
  auto uni = compute_gsi(norms_of(grads), aggregate(grads), AdaptMode::universal);
  EXPECT_NEAR(uni.at("__all__"), 1.0, 1e-12);
}

TEST(ComputeGsi, TwoOrthogonalUnitGradients) {
  auto g1 = make_pv({{"g", {1.0, 0.0}}});
  auto g2 = make_pv({{"g", {0.0, 1.0}}});
  std::vector<ParamVector> grads{g1, g2};
  auto gsi = compute_gsi(norms_of(grads), aggregate(grads), AdaptMode::groupwise);
  EXPECT_NEAR(gsi.at("g"), std::sqrt(2.0), 1e-12);
}

TEST(ComputeGsi, OrthonormalGradientsGiveSqrtR) {
  for (int r : {2, 3, 5, 8}) {
    std::vector<ParamVector> grads;
    for (int k = 0; k < r; ++k) {
      std::vector<double> v(static_cast<size_t>(r), 0.0);
      v[static_cast<size_t>(k)] = 1.0;
      grads.push_back(make_pv({{"g", v}}));
    }
    auto gsi = compute_gsi(norms_of(grads), aggregate(grads), AdaptMode::groupwise);
    EXPECT_NEAR(gsi.at("g"), std::sqrt(static_cast<double>(r)), 1e-10);
  }
}

TEST(ComputeGsi, ScaleInvariant) {
  Rng rng(3);
  std::vector<ParamVector> grads;
  for (int k = 0; k < 4; ++k) {
    std::vector<double> v(6);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    grads.push_back(make_pv({{"g", v}}));
  }
  auto base = compute_gsi(norms_of(grads), aggregate(grads), AdaptMode::groupwise).at("g");
  for (double c : {1e-6, 1.0, 1e6}) {
    std::vector<ParamVector> scaled;
    for (const auto& g : grads) scaled.push_back(scale(c, g));
    auto gsi = compute_gsi(norms_of(scaled), aggregate(scaled), AdaptMode::groupwise).at("g");
    EXPECT_NEAR(gsi, base, 1e-9 * base);
  }
}

TEST(ComputeGsi, AtLeastOneUnderFuzz) {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const int r = 2 + static_cast<int>(rng.bounded(6));
    std::vector<ParamVector> grads;
    for (int k = 0; k < r; ++k) {
      std::vector<double> a(4), b(3);
      for (double& x : a) x = rng.uniform(-5.0, 5.0);
      for (double& x : b) x = rng.uniform(-5.0, 5.0);
      grads.push_back(make_pv({{"a", a}, {"b", b}}));
    }
    std::set<std::string> degenerate;
    auto gsi =
        compute_gsi(norms_of(grads), aggregate(grads), AdaptMode::groupwise, &degenerate);
    for (const auto& [key, value] : gsi) {
      if (degenerate.count(key)) continue;
      EXPECT_GE(value, 1.0 - 1e-9) << key;
    }
  }
}

TEST(ComputeGsi, NoClientsThrows) {
  auto g = make_pv({{"g", {1.0}}});
  EXPECT_THROW(compute_gsi({}, g, AdaptMode::groupwise), NoClients);
}

TEST(Step, RoundZeroMultiplierIsExactlyOne) {
  GsiState state;
  state.gamma = 0.02;
  auto report = step(state, {{"a", 3.7}, {"b", 1.2}});
  EXPECT_EQ(report.multiplier.at("a"), 1.0);
  EXPECT_EQ(report.multiplier.at("b"), 1.0);
  EXPECT_EQ(state.round, 1);
  EXPECT_DOUBLE_EQ(state.baseline.at("a"), 3.7);
}

TEST(Step, ZeroGammaAlwaysOne) {
  GsiState state;
  state.gamma = 0.0;
  for (int t = 0; t < 20; ++t) {
    auto report = step(state, {{"g", 1.0 + 0.3 * t}});
    EXPECT_EQ(report.multiplier.at("g"), 1.0) << "round " << t;
  }
}

TEST(Step, WorkedExample) {
  GsiState state;
  state.beta = 0.9;
  state.gamma = 0.02;
  state.baseline["g"] = 2.0;
  state.grouping = {"g"};
  state.round = 5;
  auto report = step(state, {{"g", 2.6}});
  EXPECT_NEAR(report.raw_ratio.at("g"), 1.3, 1e-12);
  EXPECT_NEAR(report.multiplier.at("g"), 1.1, 1e-12);
  EXPECT_NEAR(state.baseline.at("g"), 2.06, 1e-12);
}

TEST(Step, ConstantGsiConvergesToUnitMultiplier) {
  GsiState state;
  state.beta = 0.9;
  state.gamma = 0.02;
  state.baseline["g"] = 4.0;
  state.grouping = {"g"};
  state.round = 1;
  const double c = 1.5;
  double last_ratio_err = std::abs(4.0 / c - 1.0);
  for (int t = 0; t < 200; ++t) {
    auto report = step(state, {{"g", c}});
    const double err = std::abs(report.raw_ratio.at("g") - 1.0);
    EXPECT_LE(err, last_ratio_err + 1e-12);
    last_ratio_err = err;
  }
  EXPECT_NEAR(state.baseline.at("g"), c, 1e-8);
  auto report = step(state, {{"g", c}});
  EXPECT_NEAR(report.multiplier.at("g"), 1.0, 1e-8);
}

TEST(Step, BoundContainment) {
  Rng rng(9);
  GsiState state;
  state.gamma = 0.02;
  for (int t = 0; t < 300; ++t) {
    const double gsi = 1.0 + 5.0 * rng.uniform01();
    auto report = step(state, {{"g", gsi}});
    const double lo = 1.0 - 0.02 * t;
    const double hi = 1.0 + 0.02 * t;
    const double m = report.multiplier.at("g");
    EXPECT_GE(m, lo - 1e-15);
    EXPECT_LE(m, hi + 1e-15);
    EXPECT_GT(m, 0.0);
  }
}

TEST(Step, KeyMismatchThrows) {
  GsiState state;
  step(state, {{"a", 1.0}, {"b", 1.0}});
  EXPECT_THROW(step(state, {{"a", 1.0}}), KeyMismatch);
  EXPECT_THROW(step(state, {{"a", 1.0}, {"c", 1.0}}), KeyMismatch);
}

TEST(Adapt, DegenerateGroupFreezesBaseline) {
  auto g1 = make_pv({{"live", {1.0, 0.0}}, {"dead", {1.0}}});
  auto g2 = make_pv({{"live", {0.0, 1.0}}, {"dead", {-1.0}}});
  std::vector<ParamVector> grads{g1, g2};  // "dead" cancels in the mean

  GsiState state;
  state.gamma = 0.5;
  state.round = 2;  // wide-open bounds so the pinned ratio is visible
  state.grouping = {"live", "dead"};
  state.baseline["live"] = 1.2;
  state.baseline["dead"] = 1.4;
  auto report = adapt(state, norms_of(grads), aggregate(grads));

  EXPECT_TRUE(report.degenerate_groups.count("dead"));
  EXPECT_EQ(report.multiplier.at("dead"), 1.0);
  EXPECT_EQ(report.gsi.at("dead"), 1.4);          // reported at the frozen baseline
  EXPECT_DOUBLE_EQ(state.baseline.at("dead"), 1.4);  // unchanged
  EXPECT_NE(state.baseline.at("live"), 1.2);      // live group still updates
}

TEST(Adapt, UniversalMatchesGroupwiseForSingleGroup) {
  Rng rng(11);
  GsiState group_state;
  group_state.mode = AdaptMode::groupwise;
  GsiState uni_state;
  uni_state.mode = AdaptMode::universal;
  for (int t = 0; t < 30; ++t) {
    std::vector<ParamVector> grads;
    for (int k = 0; k < 5; ++k) {
      std::vector<double> v(8);
      for (double& x : v) x = rng.uniform(-1.0, 1.0);
      grads.push_back(make_pv({{"__all__", v}}));
    }
    auto g_bar = aggregate(grads);
    auto a = adapt(group_state, norms_of(grads), g_bar);
    auto b = adapt(uni_state, norms_of(grads), g_bar);
    EXPECT_EQ(a.multiplier.at("__all__"), b.multiplier.at("__all__"));
    EXPECT_EQ(a.gsi.at("__all__"), b.gsi.at("__all__"));
  }
}

TEST(OptimalLrOracle, Examples) {
  auto g = make_pv({{"g", {0.4, -0.2, 0.9}}});
  EXPECT_DOUBLE_EQ(optimal_lr_oracle(g, g, 2.5), 2.5);

  auto g_bar = make_pv({{"g", {2.0, 0.0}}});
  auto g_full = make_pv({{"g", {1.0, 1.0}}});
  EXPECT_DOUBLE_EQ(optimal_lr_oracle(g_bar, g_full, 1.0), 0.5);

  auto g_perp = make_pv({{"g", {0.0, 3.0}}});
  EXPECT_DOUBLE_EQ(optimal_lr_oracle(g_bar, g_perp, 1.0), 0.0);

  auto zero = make_pv({{"g", {0.0, 0.0}}});
  EXPECT_THROW(optimal_lr_oracle(zero, g_full, 1.0), ZeroAggregateGradient);
}
