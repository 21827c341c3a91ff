#pragma once

#include <cstddef>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fedsim/errors.hpp"

namespace fedsim {

// One named weight matrix or bias vector. The flat value array is the unit
// of all arithmetic; the shape is bookkeeping only.
struct ParamGroup {
  std::string name;
  std::vector<double> values;
  std::vector<size_t> shape;

  size_t size() const { return values.size(); }
};

// Ordered collection of parameter groups. Shared representation for model
// weights, pseudo-gradients and optimizer accumulators. Congruence (same
// names, order and shapes) is required by every binary operation.
//
// All summations run in fixed group/index order so single- and multi-threaded
// runs agree bitwise.
class ParamVector {
 public:
  ParamVector() = default;

  explicit ParamVector(std::vector<ParamGroup> groups) : groups_(std::move(groups)) {
    std::set<std::string> names;
    for (const auto& g : groups_) {
      size_t prod = 1;
      for (size_t s : g.shape) prod *= s;
      if (prod != g.values.size())
        throw IncongruentShapes("group '" + g.name + "': shape product " +
                                std::to_string(prod) + " != value count " +
                                std::to_string(g.values.size()));
      if (!names.insert(g.name).second)
        throw IncongruentShapes("duplicate group name '" + g.name + "'");
    }
  }

  const std::vector<ParamGroup>& groups() const { return groups_; }
  bool empty() const { return groups_.empty(); }

  size_t total_size() const {
    size_t n = 0;
    for (const auto& g : groups_) n += g.size();
    return n;
  }

  bool congruent_with(const ParamVector& other) const {
    if (groups_.size() != other.groups_.size()) return false;
    for (size_t i = 0; i < groups_.size(); ++i) {
      if (groups_[i].name != other.groups_[i].name) return false;
      if (groups_[i].shape != other.groups_[i].shape) return false;
    }
    return true;
  }

  const ParamGroup& group(std::string_view name) const {
    for (const auto& g : groups_)
      if (g.name == name) return g;
    throw UnknownGroup("no group named '" + std::string(name) + "'");
  }

  // Single-owner in-place API, used inside local training on private copies.
  ParamGroup& group_at(size_t i) { return groups_[i]; }
  const ParamGroup& group_at(size_t i) const { return groups_[i]; }

  // this += a * x
  void add_scaled_in_place(double a, const ParamVector& x) {
    require_congruent(x);
    for (size_t gi = 0; gi < groups_.size(); ++gi) {
      auto& dst = groups_[gi].values;
      const auto& src = x.groups_[gi].values;
      for (size_t i = 0; i < dst.size(); ++i) dst[i] += a * src[i];
    }
  }

  void scale_in_place(double c) {
    for (auto& g : groups_)
      for (double& v : g.values) v *= c;
  }

  void fill(double c) {
    for (auto& g : groups_)
      for (double& v : g.values) v = c;
  }

  void require_congruent(const ParamVector& other) const {
    if (!congruent_with(other))
      throw IncongruentShapes("param vectors are not congruent");
  }

 private:
  std::vector<ParamGroup> groups_;
};

inline ParamVector zeros_like(const ParamVector& v) {
  std::vector<ParamGroup> gs;
  gs.reserve(v.groups().size());
  for (const auto& g : v.groups())
    gs.push_back({g.name, std::vector<double>(g.values.size(), 0.0), g.shape});
  return ParamVector(std::move(gs));
}

// a*x + y
inline ParamVector axpy(double a, const ParamVector& x, const ParamVector& y) {
  x.require_congruent(y);
  ParamVector out = y;
  out.add_scaled_in_place(a, x);
  return out;
}

inline ParamVector scale(double c, const ParamVector& v) {
  ParamVector out = v;
  out.scale_in_place(c);
  return out;
}

inline double group_sq_norm_values(const std::vector<double>& vals) {
  double s = 0.0;
  for (double v : vals) s += v * v;
  return s;
}

inline double group_sq_norm(const ParamVector& v, std::string_view name) {
  return group_sq_norm_values(v.group(name).values);
}

// Full inner product. Accumulated per group first, then across groups in
// order, so that dot(v, v) equals the sum of group_sq_norm over groups
// exactly.
inline double dot(const ParamVector& x, const ParamVector& y) {
  x.require_congruent(y);
  double total = 0.0;
  for (size_t gi = 0; gi < x.groups().size(); ++gi) {
    const auto& a = x.groups()[gi].values;
    const auto& b = y.groups()[gi].values;
    double partial = 0.0;
    for (size_t i = 0; i < a.size(); ++i) partial += a[i] * b[i];
    total += partial;
  }
  return total;
}

inline double sq_norm(const ParamVector& v) { return dot(v, v); }

}  // namespace fedsim
