#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class SampleStrategy { uniform, md, adafl, forced };

struct SamplerState {
  SampleStrategy strategy = SampleStrategy::uniform;
  std::vector<double> weights;  // simplex over N clients (md / adafl)
  double adafl_alpha = 0.3;
  std::map<int, std::vector<int>> forced_schedule;  // round -> verbatim id list
  uint64_t rng_seed = 0;
};

namespace detail {

inline std::vector<int> uniform_without_replacement(Rng& rng, int r, int n_clients) {
  std::vector<int> ids(static_cast<size_t>(n_clients));
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < r; ++i) {
    size_t j = static_cast<size_t>(i) + rng.bounded(static_cast<size_t>(n_clients - i));
    std::swap(ids[static_cast<size_t>(i)], ids[j]);
  }
  ids.resize(static_cast<size_t>(r));
  return ids;
}

}  // namespace detail

// Draws the round's participants. Deterministic in (rng_seed, t): each round
// gets its own derived stream, so sampling randomness never interleaves with
// shuffle randomness. Forced rounds return the scheduled list verbatim and
// unscheduled rounds fall back to uniform.
inline std::vector<int> sample(const SamplerState& state, int t, int r, int n_clients) {
  if (r < 1 || n_clients < 1) throw BadRatio("need r >= 1 and N >= 1");
  Rng rng(derive_seed(state.rng_seed, {kSamplerStream, static_cast<uint64_t>(t)}));

  switch (state.strategy) {
    case SampleStrategy::uniform:
      if (r > n_clients) throw BadRatio("cannot sample r > N without replacement");
      return detail::uniform_without_replacement(rng, r, n_clients);

    case SampleStrategy::md: {
      if (state.weights.size() != static_cast<size_t>(n_clients))
        throw BadRatio("md sampler weights must cover all clients");
      std::vector<int> out;
      out.reserve(static_cast<size_t>(r));
      for (int i = 0; i < r; ++i) {
        double u = rng.uniform01();
        double acc = 0.0;
        int pick = n_clients - 1;
        for (int k = 0; k < n_clients; ++k) {
          acc += state.weights[static_cast<size_t>(k)];
          if (u <= acc) {
            pick = k;
            break;
          }
        }
        out.push_back(pick);
      }
      return out;
    }

    case SampleStrategy::adafl: {
      if (r > n_clients) throw BadRatio("cannot sample r > N without replacement");
      if (state.weights.size() != static_cast<size_t>(n_clients))
        throw BadRatio("adafl sampler weights must cover all clients");
      std::vector<double> w = state.weights;
      std::vector<int> out;
      out.reserve(static_cast<size_t>(r));
      for (int i = 0; i < r; ++i) {
        double total = 0.0;
        for (double x : w) total += x;
        int pick = -1;
        if (total > 0.0) {
          double u = rng.uniform01() * total;
          double acc = 0.0;
          for (int k = 0; k < n_clients; ++k) {
            if (w[static_cast<size_t>(k)] <= 0.0) continue;
            acc += w[static_cast<size_t>(k)];
            if (u <= acc) {
              pick = k;
              break;
            }
          }
        }
        if (pick < 0) {
          // all remaining weight zero: lowest unused id
          for (int k = 0; k < n_clients; ++k)
            if (w[static_cast<size_t>(k)] >= 0.0 &&
                std::find(out.begin(), out.end(), k) == out.end()) {
              pick = k;
              break;
            }
        }
        out.push_back(pick);
        w[static_cast<size_t>(pick)] = 0.0;
      }
      return out;
    }

    case SampleStrategy::forced: {
      auto it = state.forced_schedule.find(t);
      if (it != state.forced_schedule.end()) return it->second;
      if (r > n_clients) throw BadRatio("cannot sample r > N without replacement");
      return detail::uniform_without_replacement(rng, r, n_clients);
    }
  }
  throw BadRatio("unreachable sampler strategy");
}

// Norm-proportional exponential update of the sampling weights: each
// participant's weight moves toward its share of the participants' gradient
// norms, then the whole vector is renormalized to the simplex.
inline void adafl_update(SamplerState& state, const std::vector<int>& participated,
                         const std::map<int, double>& local_sq_norms) {
  if (state.strategy != SampleStrategy::adafl)
    throw WrongStrategy("adafl_update on a non-adafl sampler");
  if (participated.empty()) return;

  double norm_sum = 0.0;
  for (int k : participated) norm_sum += std::sqrt(local_sq_norms.at(k));
  for (int k : participated) {
    const double share = norm_sum > 0.0
                             ? std::sqrt(local_sq_norms.at(k)) / norm_sum
                             : 1.0 / static_cast<double>(participated.size());
    double& w = state.weights.at(static_cast<size_t>(k));
    w = (1.0 - state.adafl_alpha) * w + state.adafl_alpha * share;
  }
  double total = 0.0;
  for (double w : state.weights) total += w;
  if (total > 0.0)
    for (double& w : state.weights) w /= total;
}

}  // namespace fedsim
