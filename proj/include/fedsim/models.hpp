#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/tensors.hpp"

namespace fedsim {

enum class ModelKind { logreg, mlp };

struct ModelSpec {
  ModelKind kind = ModelKind::logreg;
  int input_dim = 0;
  std::vector<int> hidden_dims;  // empty for logreg
  int num_classes = 0;
  uint64_t init_seed = 0;
};

struct Batch {
  int rows = 0;
  int cols = 0;
  std::vector<double> features;  // rows x cols, row-major
  std::vector<int> labels;
};

inline Batch gather_batch(const LabeledDataset& ds, std::span<const int> indices) {
  Batch b;
  b.rows = static_cast<int>(indices.size());
  b.cols = ds.dim;
  b.features.resize(indices.size() * static_cast<size_t>(ds.dim));
  b.labels.resize(indices.size());
  for (size_t r = 0; r < indices.size(); ++r) {
    const double* src = ds.features.data() + static_cast<size_t>(indices[r]) * ds.dim;
    std::copy(src, src + ds.dim, b.features.data() + r * static_cast<size_t>(ds.dim));
    b.labels[r] = ds.labels[static_cast<size_t>(indices[r])];
  }
  return b;
}

// Weights are uniform in the He range +-sqrt(6 / fan_in), biases zero.
// Groups are named "layer{i}.weight" (shape in x out) and "layer{i}.bias".
inline ParamVector init_params(const ModelSpec& spec) {
  if (spec.input_dim < 1 || spec.num_classes < 2)
    throw InvalidSpec("input_dim must be >= 1 and num_classes >= 2");
  if (spec.kind == ModelKind::logreg && !spec.hidden_dims.empty())
    throw InvalidSpec("logreg takes no hidden layers");
  for (int h : spec.hidden_dims)
    if (h < 1) throw InvalidSpec("hidden dims must be positive");

  std::vector<int> dims;
  dims.push_back(spec.input_dim);
  for (int h : spec.hidden_dims) dims.push_back(h);
  dims.push_back(spec.num_classes);

  Rng rng(spec.init_seed);
  std::vector<ParamGroup> groups;
  for (size_t layer = 0; layer + 1 < dims.size(); ++layer) {
    const int in = dims[layer];
    const int out = dims[layer + 1];
    const double limit = std::sqrt(6.0 / in);
    ParamGroup w;
    w.name = "layer" + std::to_string(layer) + ".weight";
    w.shape = {static_cast<size_t>(in), static_cast<size_t>(out)};
    w.values.resize(static_cast<size_t>(in) * out);
    for (double& v : w.values) v = rng.uniform(-limit, limit);
    ParamGroup b;
    b.name = "layer" + std::to_string(layer) + ".bias";
    b.shape = {static_cast<size_t>(out)};
    b.values.assign(static_cast<size_t>(out), 0.0);
    groups.push_back(std::move(w));
    groups.push_back(std::move(b));
  }
  return ParamVector(std::move(groups));
}

namespace detail {

// Layer layout recovered from the group list: consecutive (weight, bias)
// pairs, weight shape {in, out}.
struct LayerView {
  const double* w;
  const double* b;
  int in;
  int out;
};

inline std::vector<LayerView> layer_views(const ParamVector& params) {
  const auto& gs = params.groups();
  if (gs.empty() || gs.size() % 2 != 0)
    throw IncongruentShapes("params must hold (weight, bias) group pairs");
  std::vector<LayerView> layers;
  for (size_t i = 0; i < gs.size(); i += 2) {
    const auto& w = gs[i];
    const auto& b = gs[i + 1];
    if (w.shape.size() != 2 || b.shape.size() != 1 || w.shape[1] != b.shape[0])
      throw IncongruentShapes("group '" + w.name + "' is not a weight/bias pair");
    layers.push_back({w.values.data(), b.values.data(), static_cast<int>(w.shape[0]),
                      static_cast<int>(w.shape[1])});
  }
  return layers;
}

// z = x * W + b for a row-major batch.
inline void linear_forward(const double* x, int rows, const LayerView& L, double* z) {
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + static_cast<size_t>(r) * L.in;
    double* zr = z + static_cast<size_t>(r) * L.out;
    for (int j = 0; j < L.out; ++j) zr[j] = L.b[j];
    for (int i = 0; i < L.in; ++i) {
      const double xi = xr[i];
      const double* wrow = L.w + static_cast<size_t>(i) * L.out;
      for (int j = 0; j < L.out; ++j) zr[j] += xi * wrow[j];
    }
  }
}

}  // namespace detail

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

// Mean cross-entropy over the batch and its exact gradient. ReLU between
// hidden layers, softmax on the output, log-sum-exp shifted by the row max.
inline LossGrad loss_and_grad(const ParamVector& params, const Batch& batch) {
  const auto layers = detail::layer_views(params);
  const int rows = batch.rows;
  const int num_classes = layers.back().out;
  if (rows < 1) throw EmptyDataset("empty batch");
  if (batch.cols != layers.front().in)
    throw IncongruentShapes("batch width does not match model input");
  for (int y : batch.labels)
    if (y < 0 || y >= num_classes) throw LabelOutOfRange("label " + std::to_string(y));

  const size_t L = layers.size();
  // acts[l] feeds layer l; acts[L] holds the output logits.
  std::vector<std::vector<double>> acts(L + 1);
  std::vector<std::vector<double>> pre(L);  // pre-activation of each layer
  acts[0] = batch.features;
  for (size_t l = 0; l < L; ++l) {
    pre[l].resize(static_cast<size_t>(rows) * layers[l].out);
    detail::linear_forward(acts[l].data(), rows, layers[l], pre[l].data());
    if (l + 1 < L) {
      acts[l + 1] = pre[l];
      for (double& v : acts[l + 1])
        if (v < 0.0) v = 0.0;
    } else {
      acts[L] = pre[l];
    }
  }

  // Softmax + loss; delta starts as (p - onehot) / rows.
  double loss = 0.0;
  std::vector<double> delta = acts[L];
  for (int r = 0; r < rows; ++r) {
    double* zr = delta.data() + static_cast<size_t>(r) * num_classes;
    double zmax = zr[0];
    for (int j = 1; j < num_classes; ++j) zmax = std::max(zmax, zr[j]);
    double sum = 0.0;
    for (int j = 0; j < num_classes; ++j) {
      zr[j] = std::exp(zr[j] - zmax);
      sum += zr[j];
    }
    loss -= std::log(zr[batch.labels[static_cast<size_t>(r)]] / sum);
    for (int j = 0; j < num_classes; ++j) zr[j] /= sum;
    zr[batch.labels[static_cast<size_t>(r)]] -= 1.0;
    for (int j = 0; j < num_classes; ++j) zr[j] /= rows;
  }
  loss /= rows;

  ParamVector grad = zeros_like(params);
  for (size_t l = L; l-- > 0;) {
    auto& gw = grad.group_at(2 * l).values;
    auto& gb = grad.group_at(2 * l + 1).values;
    const auto& in_act = acts[l];
    const int in = layers[l].in;
    const int out = layers[l].out;
    for (int r = 0; r < rows; ++r) {
      const double* xr = in_act.data() + static_cast<size_t>(r) * in;
      const double* dr = delta.data() + static_cast<size_t>(r) * out;
      for (int i = 0; i < in; ++i) {
        const double xi = xr[i];
        double* grow = gw.data() + static_cast<size_t>(i) * out;
        for (int j = 0; j < out; ++j) grow[j] += xi * dr[j];
      }
      for (int j = 0; j < out; ++j) gb[static_cast<size_t>(j)] += dr[j];
    }
    if (l > 0) {
      // delta_prev = (delta * W^T) masked by relu'(pre[l-1])
      std::vector<double> prev(static_cast<size_t>(rows) * in, 0.0);
      for (int r = 0; r < rows; ++r) {
        const double* dr = delta.data() + static_cast<size_t>(r) * out;
        double* pr = prev.data() + static_cast<size_t>(r) * in;
        for (int i = 0; i < in; ++i) {
          const double* wrow = layers[l].w + static_cast<size_t>(i) * out;
          double s = 0.0;
          for (int j = 0; j < out; ++j) s += dr[j] * wrow[j];
          pr[i] = pre[l - 1][static_cast<size_t>(r) * in + i] > 0.0 ? s : 0.0;
        }
      }
      delta = std::move(prev);
    }
  }
  return {loss, std::move(grad)};
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Deterministic full-dataset evaluation; argmax ties break to the lowest
// class index.
inline EvalResult evaluate(const ParamVector& params, const LabeledDataset& ds) {
  if (ds.n < 1) throw EmptyDataset("evaluate on empty dataset");
  const auto layers = detail::layer_views(params);
  const int num_classes = layers.back().out;
  constexpr int kChunk = 512;

  double loss_sum = 0.0;
  long correct = 0;
  std::vector<double> cur, next;
  for (int start = 0; start < ds.n; start += kChunk) {
    const int rows = std::min(kChunk, ds.n - start);
    cur.assign(ds.features.begin() + static_cast<size_t>(start) * ds.dim,
               ds.features.begin() + (static_cast<size_t>(start) + rows) * ds.dim);
    for (size_t l = 0; l < layers.size(); ++l) {
      next.resize(static_cast<size_t>(rows) * layers[l].out);
      detail::linear_forward(cur.data(), rows, layers[l], next.data());
      if (l + 1 < layers.size())
        for (double& v : next)
          if (v < 0.0) v = 0.0;
      cur.swap(next);
    }
    for (int r = 0; r < rows; ++r) {
      const double* zr = cur.data() + static_cast<size_t>(r) * num_classes;
      const int y = ds.labels[static_cast<size_t>(start + r)];
      if (y < 0 || y >= num_classes) throw LabelOutOfRange("label " + std::to_string(y));
      int best = 0;
      double zmax = zr[0];
      for (int j = 1; j < num_classes; ++j)
        if (zr[j] > zmax) {
          zmax = zr[j];
          best = j;
        }
      double sum = 0.0;
      for (int j = 0; j < num_classes; ++j) sum += std::exp(zr[j] - zmax);
      loss_sum += -(zr[y] - zmax - std::log(sum));
      if (best == y) ++correct;
    }
  }
  return {loss_sum / ds.n, static_cast<double>(correct) / ds.n};
}

}  // namespace fedsim
