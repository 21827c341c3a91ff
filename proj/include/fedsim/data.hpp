#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct LabeledDataset {
  int n = 0;
  int dim = 0;
  int num_classes = 0;
  std::vector<double> features;  // n x dim, row-major
  std::vector<int> labels;       // n, each in [0, num_classes)
};

// Disjoint, equal-sized index lists into a dataset; n mod n_clients samples
// are dropped so every client holds exactly n / n_clients samples.
struct Partition {
  std::vector<std::vector<int>> assignments;
  double alpha = 0.0;
  uint64_t seed = 0;
};

struct LabelDistribution {
  std::vector<double> probs;
};

inline LabelDistribution global_label_distribution(const LabeledDataset& ds) {
  std::vector<double> counts(ds.num_classes, 0.0);
  for (int y : ds.labels) counts[static_cast<size_t>(y)] += 1.0;
  for (double& c : counts) c /= static_cast<double>(ds.n);
  return {std::move(counts)};
}

// num_classes Gaussian clusters with centers on a seeded sphere of radius 3;
// labels are assigned round-robin so class counts are exactly balanced
// whenever num_classes divides n.
inline LabeledDataset synth_clusters(int n, int dim, int num_classes, double spread,
                                     uint64_t seed) {
  if (dim < 1 || num_classes < 2 || n < num_classes)
    throw InvalidDims("synth_clusters: need dim >= 1, classes >= 2, n >= classes");
  constexpr double kRadius = 3.0;
  Rng rng(seed);
  std::vector<std::vector<double>> centers(static_cast<size_t>(num_classes));
  for (auto& c : centers) {
    c.resize(static_cast<size_t>(dim));
    double norm = 0.0;
    for (double& x : c) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) norm = 1.0;
    for (double& x : c) x = kRadius * x / norm;
  }

  LabeledDataset ds;
  ds.n = n;
  ds.dim = dim;
  ds.num_classes = num_classes;
  ds.features.resize(static_cast<size_t>(n) * dim);
  ds.labels.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    int y = i % num_classes;
    ds.labels[static_cast<size_t>(i)] = y;
    double* row = ds.features.data() + static_cast<size_t>(i) * dim;
    const auto& c = centers[static_cast<size_t>(y)];
    for (int j = 0; j < dim; ++j) row[j] = c[static_cast<size_t>(j)] + spread * rng.normal();
  }
  return ds;
}

namespace detail {

inline uint32_t read_be_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw TruncatedFile("unexpected end of file in " + path);
  return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
         (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

}  // namespace detail

// IDX image/label pair (the MNIST container format). Big-endian headers,
// image magic 0x00000803, label magic 0x00000801. Pixels are scaled to [0,1].
inline LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw TruncatedFile("cannot open " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw TruncatedFile("cannot open " + labels_path);

  uint32_t img_magic = detail::read_be_u32(img, images_path);
  if (img_magic != 0x00000803u)
    throw BadMagic("bad image magic in " + images_path);
  uint32_t n_img = detail::read_be_u32(img, images_path);
  uint32_t rows = detail::read_be_u32(img, images_path);
  uint32_t cols = detail::read_be_u32(img, images_path);

  uint32_t lab_magic = detail::read_be_u32(lab, labels_path);
  if (lab_magic != 0x00000801u)
    throw BadMagic("bad label magic in " + labels_path);
  uint32_t n_lab = detail::read_be_u32(lab, labels_path);

  if (n_img != n_lab)
    throw CountMismatch("image count " + std::to_string(n_img) + " != label count " +
                        std::to_string(n_lab));

  const size_t d = static_cast<size_t>(rows) * cols;
  LabeledDataset ds;
  ds.n = static_cast<int>(n_img);
  ds.dim = static_cast<int>(d);
  ds.features.resize(static_cast<size_t>(n_img) * d);
  ds.labels.resize(n_img);

  std::vector<unsigned char> buf(d);
  for (uint32_t i = 0; i < n_img; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(d)))
      throw TruncatedFile("image data truncated in " + images_path);
    double* row = ds.features.data() + static_cast<size_t>(i) * d;
    for (size_t j = 0; j < d; ++j) row[j] = buf[j] / 255.0;
  }
  int max_label = 0;
  for (uint32_t i = 0; i < n_lab; ++i) {
    unsigned char y;
    if (!lab.read(reinterpret_cast<char*>(&y), 1))
      throw TruncatedFile("label data truncated in " + labels_path);
    ds.labels[i] = y;
    max_label = std::max(max_label, static_cast<int>(y));
  }
  ds.num_classes = max_label + 1;
  return ds;
}

// Label-skewed partition: per client, q_k ~ Dir(alpha * p) over the global
// label distribution p, then the client's quota is filled by drawing classes
// from q_k and popping samples from the per-class pools. An exhausted class
// reassigns the slot to the non-empty class with the largest remaining pool
// (ties: lowest class index), which guarantees termination.
inline Partition dirichlet_partition(const LabeledDataset& ds, int n_clients, double alpha,
                                     uint64_t seed) {
  if (n_clients < 1) throw QuotaTooSmall("n_clients must be >= 1");
  const int quota = ds.n / n_clients;
  if (quota < 1) throw QuotaTooSmall("fewer samples than clients");
  if (!(alpha > 0.0)) throw InvalidDims("alpha must be > 0");

  const int C = ds.num_classes;
  LabelDistribution p = global_label_distribution(ds);

  Rng rng(seed);
  std::vector<std::vector<int>> pools(static_cast<size_t>(C));
  for (int i = 0; i < ds.n; ++i) pools[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])].push_back(i);
  for (auto& pool : pools) rng.shuffle(pool);

  Partition part;
  part.alpha = alpha;
  part.seed = seed;
  part.assignments.resize(static_cast<size_t>(n_clients));

  std::vector<double> q(static_cast<size_t>(C));
  for (int k = 0; k < n_clients; ++k) {
    double total = 0.0;
    for (int c = 0; c < C; ++c) {
      q[static_cast<size_t>(c)] = rng.gamma(alpha * p.probs[static_cast<size_t>(c)]);
      total += q[static_cast<size_t>(c)];
    }
    if (total <= 0.0) {
      q = p.probs;  // degenerate draw; fall back to the global distribution
      total = 1.0;
    }

    auto& shard = part.assignments[static_cast<size_t>(k)];
    shard.reserve(static_cast<size_t>(quota));
    for (int slot = 0; slot < quota; ++slot) {
      double u = rng.uniform01() * total;
      int c = 0;
      double acc = 0.0;
      for (; c < C - 1; ++c) {
        acc += q[static_cast<size_t>(c)];
        if (u <= acc) break;
      }
      if (pools[static_cast<size_t>(c)].empty()) {
        size_t best = 0;
        size_t best_size = 0;
        for (int j = 0; j < C; ++j) {
          size_t sz = pools[static_cast<size_t>(j)].size();
          if (sz > best_size) {
            best_size = sz;
            best = static_cast<size_t>(j);
          }
        }
        c = static_cast<int>(best);
      }
      shard.push_back(pools[static_cast<size_t>(c)].back());
      pools[static_cast<size_t>(c)].pop_back();
    }
  }
  return part;
}

inline LabelDistribution merged_label_distribution(const Partition& part,
                                                   const LabeledDataset& ds,
                                                   const std::vector<int>& clients) {
  if (clients.empty()) throw EmptyClientSet("no clients to merge");
  std::vector<double> counts(static_cast<size_t>(ds.num_classes), 0.0);
  double total = 0.0;
  for (int k : clients) {
    const auto& shard = part.assignments.at(static_cast<size_t>(k));
    for (int idx : shard) {
      counts[static_cast<size_t>(ds.labels[static_cast<size_t>(idx)])] += 1.0;
      total += 1.0;
    }
  }
  if (total <= 0.0) throw EmptyClientSet("selected clients hold no samples");
  for (double& c : counts) c /= total;
  return {std::move(counts)};
}

// Cosine similarity between two non-negative distributions; in [0, 1].
inline double similarity_score(const LabelDistribution& a, const LabelDistribution& b) {
  if (a.probs.size() != b.probs.size())
    throw InvalidDims("distributions have different class counts");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (size_t i = 0; i < a.probs.size(); ++i) {
    ab += a.probs[i] * b.probs[i];
    aa += a.probs[i] * a.probs[i];
    bb += b.probs[i] * b.probs[i];
  }
  if (aa <= 0.0 || bb <= 0.0) throw ZeroVector("cosine similarity of a zero vector");
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

inline double label_entropy(const LabelDistribution& d) {
  double h = 0.0;
  for (double p : d.probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

// Per-dimension zero mean / unit variance, fitted on train and applied to
// both splits. Constant dimensions are left unscaled.
inline void standardize_features(LabeledDataset& train, LabeledDataset* test) {
  const int d = train.dim;
  std::vector<double> mean(static_cast<size_t>(d), 0.0);
  std::vector<double> var(static_cast<size_t>(d), 0.0);
  for (int i = 0; i < train.n; ++i) {
    const double* row = train.features.data() + static_cast<size_t>(i) * d;
    for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += row[j];
  }
  for (double& m : mean) m /= static_cast<double>(train.n);
  for (int i = 0; i < train.n; ++i) {
    const double* row = train.features.data() + static_cast<size_t>(i) * d;
    for (int j = 0; j < d; ++j) {
      double delta = row[j] - mean[static_cast<size_t>(j)];
      var[static_cast<size_t>(j)] += delta * delta;
    }
  }
  std::vector<double> inv_std(static_cast<size_t>(d));
  for (int j = 0; j < d; ++j) {
    double s = std::sqrt(var[static_cast<size_t>(j)] / static_cast<double>(train.n));
    inv_std[static_cast<size_t>(j)] = s > 1e-12 ? 1.0 / s : 1.0;
  }
  auto apply = [&](LabeledDataset& ds) {
    for (int i = 0; i < ds.n; ++i) {
      double* row = ds.features.data() + static_cast<size_t>(i) * d;
      for (int j = 0; j < d; ++j)
        row[j] = (row[j] - mean[static_cast<size_t>(j)]) * inv_std[static_cast<size_t>(j)];
    }
  };
  apply(train);
  if (test != nullptr) apply(*test);
}

}  // namespace fedsim
