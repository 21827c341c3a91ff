#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fedsim/models.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

ModelSpec logreg_spec(int in, int classes, uint64_t seed) {
  return {ModelKind::logreg, in, {}, classes, seed};
}

ModelSpec mlp_spec(int in, std::vector<int> hidden, int classes, uint64_t seed) {
  return {ModelKind::mlp, in, std::move(hidden), classes, seed};
}

Batch random_batch(Rng& rng, int rows, int cols, int classes) {
  Batch b;
  b.rows = rows;
  b.cols = cols;
  b.features.resize(static_cast<size_t>(rows) * cols);
  b.labels.resize(static_cast<size_t>(rows));
  for (double& x : b.features) x = rng.uniform(-1.5, 1.5);
  for (int& y : b.labels) y = static_cast<int>(rng.bounded(static_cast<size_t>(classes)));
  return b;
}

// Central finite differences of the batch loss, the independent gradient
// oracle for this suite.
ParamVector fd_gradient(const ParamVector& params, const Batch& batch, double eps) {
  ParamVector grad = zeros_like(params);
  for (size_t gi = 0; gi < params.groups().size(); ++gi) {
    for (size_t i = 0; i < params.groups()[gi].values.size(); ++i) {
      ParamVector plus = params;
      ParamVector minus = params;
      plus.group_at(gi).values[i] += eps;
      minus.group_at(gi).values[i] -= eps;
      const double f_plus = loss_and_grad(plus, batch).loss;
      const double f_minus = loss_and_grad(minus, batch).loss;
      grad.group_at(gi).values[i] = (f_plus - f_minus) / (2.0 * eps);
    }
  }
  return grad;
}

double max_abs_diff(const ParamVector& a, const ParamVector& b) {
  double m = 0.0;
  for (size_t gi = 0; gi < a.groups().size(); ++gi)
    for (size_t i = 0; i < a.groups()[gi].values.size(); ++i)
      m = std::max(m, std::abs(a.groups()[gi].values[i] - b.groups()[gi].values[i]));
  return m;
}

}  // namespace

TEST(InitParams, LogregShapes) {
  auto p = init_params(logreg_spec(4, 3, 1));
  ASSERT_EQ(p.groups().size(), 2u);
  EXPECT_EQ(p.groups()[0].name, "layer0.weight");
  EXPECT_EQ(p.groups()[0].shape, (std::vector<size_t>{4, 3}));
  EXPECT_EQ(p.groups()[1].name, "layer0.bias");
  EXPECT_EQ(p.groups()[1].shape, (std::vector<size_t>{3}));
  for (double b : p.groups()[1].values) EXPECT_EQ(b, 0.0);
}

TEST(InitParams, MlpShapes) {
  auto p = init_params(mlp_spec(4, {8}, 3, 1));
  ASSERT_EQ(p.groups().size(), 4u);
  EXPECT_EQ(p.groups()[0].shape, (std::vector<size_t>{4, 8}));
  EXPECT_EQ(p.groups()[1].shape, (std::vector<size_t>{8}));
  EXPECT_EQ(p.groups()[2].shape, (std::vector<size_t>{8, 3}));
  EXPECT_EQ(p.groups()[3].shape, (std::vector<size_t>{3}));
}

TEST(InitParams, DeterministicBySeed) {
  auto a = init_params(mlp_spec(6, {5}, 4, 42));
  auto b = init_params(mlp_spec(6, {5}, 4, 42));
  for (size_t gi = 0; gi < a.groups().size(); ++gi)
    EXPECT_EQ(a.groups()[gi].values, b.groups()[gi].values);
  auto c = init_params(mlp_spec(6, {5}, 4, 43));
  EXPECT_NE(a.groups()[0].values, c.groups()[0].values);
}

TEST(InitParams, InvalidSpecThrows) {
  EXPECT_THROW(init_params(logreg_spec(0, 3, 1)), InvalidSpec);
  EXPECT_THROW(init_params(logreg_spec(4, 1, 1)), InvalidSpec);
  EXPECT_THROW(init_params(mlp_spec(4, {0}, 3, 1)), InvalidSpec);
}

TEST(LossAndGrad, UniformLogitsGiveLogC) {
  auto params = zeros_like(init_params(logreg_spec(5, 4, 7)));
  Rng rng(3);
  Batch batch = random_batch(rng, 9, 5, 4);
  auto lg = loss_and_grad(params, batch);
  EXPECT_NEAR(lg.loss, std::log(4.0), 1e-12);
}

TEST(LossAndGrad, MatchesFiniteDifferencesSmall) {
  Rng rng(17);
  auto params = init_params(logreg_spec(4, 3, 99));
  Batch batch = random_batch(rng, 6, 4, 3);
  auto analytic = loss_and_grad(params, batch).grad;
  auto fd = fd_gradient(params, batch, 1e-5);
  EXPECT_LT(max_abs_diff(analytic, fd), 1e-6);
}

TEST(LossAndGrad, MatchesFiniteDifferencesRandomInstances) {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const bool use_mlp = trial % 2 == 1;
    auto params = use_mlp ? init_params(mlp_spec(4, {6}, 3, 100 + trial))
                          : init_params(logreg_spec(5, 4, 100 + trial));
    const int in = use_mlp ? 4 : 5;
    const int classes = use_mlp ? 3 : 4;
    Batch batch = random_batch(rng, 5, in, classes);
    auto analytic = loss_and_grad(params, batch).grad;
    auto fd = fd_gradient(params, batch, 1e-5);
    for (size_t gi = 0; gi < analytic.groups().size(); ++gi)
      for (size_t i = 0; i < analytic.groups()[gi].values.size(); ++i) {
        const double a = analytic.groups()[gi].values[i];
        const double f = fd.groups()[gi].values[i];
        const double rel = std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-8});
        EXPECT_LT(rel, 1e-4) << "group " << gi << " index " << i;
      }
  }
}

TEST(LossAndGrad, DuplicatedBatchIsInvariant) {
  Rng rng(29);
  auto params = init_params(mlp_spec(4, {5}, 3, 11));
  Batch batch = random_batch(rng, 7, 4, 3);
  Batch doubled = batch;
  doubled.rows = 2 * batch.rows;
  doubled.features.insert(doubled.features.end(), batch.features.begin(), batch.features.end());
  doubled.labels.insert(doubled.labels.end(), batch.labels.begin(), batch.labels.end());
  auto a = loss_and_grad(params, batch);
  auto b = loss_and_grad(params, doubled);
  EXPECT_NEAR(a.loss, b.loss, 1e-12);
  EXPECT_LT(max_abs_diff(a.grad, b.grad), 1e-12);
}

TEST(LossAndGrad, PermutationInvariantLoss) {
  Rng rng(31);
  auto params = init_params(logreg_spec(4, 3, 5));
  Batch batch = random_batch(rng, 8, 4, 3);
  Batch reversed;
  reversed.rows = batch.rows;
  reversed.cols = batch.cols;
  for (int r = batch.rows - 1; r >= 0; --r) {
    reversed.features.insert(reversed.features.end(),
                             batch.features.begin() + static_cast<size_t>(r) * batch.cols,
                             batch.features.begin() + static_cast<size_t>(r + 1) * batch.cols);
    reversed.labels.push_back(batch.labels[static_cast<size_t>(r)]);
  }
  EXPECT_NEAR(loss_and_grad(params, batch).loss, loss_and_grad(params, reversed).loss, 1e-12);
}

TEST(LossAndGrad, LogitShiftLeavesLossUnchanged) {
  Rng rng(37);
  auto params = init_params(mlp_spec(4, {6}, 3, 19));
  Batch batch = random_batch(rng, 10, 4, 3);
  const double base = loss_and_grad(params, batch).loss;
  // adding a constant to every output bias shifts each row's logits by it
  ParamVector shifted = params;
  for (double& b : shifted.group_at(3).values) b += 123.25;
  EXPECT_NEAR(loss_and_grad(shifted, batch).loss, base, 1e-10);
}

TEST(LossAndGrad, LabelOutOfRangeThrows) {
  auto params = init_params(logreg_spec(3, 2, 1));
  Batch batch;
  batch.rows = 1;
  batch.cols = 3;
  batch.features = {0.1, 0.2, 0.3};
  batch.labels = {2};
  EXPECT_THROW(loss_and_grad(params, batch), LabelOutOfRange);
}

TEST(Evaluate, PerfectAndWrongPredictions) {
  // logits = x * W: identity-ish weights make argmax follow the hot feature
  ParamVector params(
      {{"layer0.weight", {1.0, 0.0, 0.0, 1.0}, {2, 2}}, {"layer0.bias", {0.0, 0.0}, {2}}});
  LabeledDataset ds;
  ds.n = 2;
  ds.dim = 2;
  ds.num_classes = 2;
  ds.features = {3.0, 0.0, 0.0, 3.0};
  ds.labels = {0, 1};
  auto good = evaluate(params, ds);
  EXPECT_DOUBLE_EQ(good.accuracy, 1.0);

  LabeledDataset wrong = ds;
  wrong.n = 1;
  wrong.features = {3.0, 0.0};
  wrong.labels = {1};
  auto bad = evaluate(params, wrong);
  EXPECT_DOUBLE_EQ(bad.accuracy, 0.0);
}

TEST(Evaluate, DeterministicAndRejectsEmpty) {
  Rng rng(41);
  auto params = init_params(mlp_spec(4, {5}, 3, 2));
  LabeledDataset ds;
  ds.n = 50;
  ds.dim = 4;
  ds.num_classes = 3;
  ds.features.resize(200);
  for (double& x : ds.features) x = rng.uniform(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) ds.labels.push_back(i % 3);
  auto a = evaluate(params, ds);
  auto b = evaluate(params, ds);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.accuracy, b.accuracy);

  LabeledDataset empty;
  empty.dim = 4;
  empty.num_classes = 3;
  EXPECT_THROW(evaluate(params, empty), EmptyDataset);
}
