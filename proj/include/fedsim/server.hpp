#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/tensors.hpp"

namespace fedsim {

enum class ServerOpt { sgd, sgdm, adam };

struct ServerState {
  ParamVector theta;
  ServerOpt optimizer = ServerOpt::sgd;
  double eta0 = 1.0;
  double beta1 = 0.9;   // sgdm / adam first moment
  double beta2 = 0.999; // adam second moment
  double eps = 1e-8;
  ParamVector m;        // lazily sized on first round
  ParamVector v;
  std::optional<ParamVector> scaffold_c;
  int round = 0;
};

// Unweighted mean of the uploaded pseudo-gradients, summed in the order
// given (the harness passes them in ascending client-id order).
inline ParamVector aggregate(const std::vector<ParamVector>& grads) {
  if (grads.empty()) throw EmptyRound("no gradients to aggregate");
  ParamVector acc = grads.front();
  for (size_t k = 1; k < grads.size(); ++k) acc.add_scaled_in_place(1.0, grads[k]);
  const double r = static_cast<double>(grads.size());
  for (size_t gi = 0; gi < acc.groups().size(); ++gi)
    for (double& x : acc.group_at(gi).values) x /= r;
  return acc;
}

namespace detail {

inline double multiplier_for(const std::map<std::string, double>& multipliers,
                             const std::string& group) {
  auto it = multipliers.find(group);
  if (it == multipliers.end()) throw MissingMultiplier("no multiplier for group '" + group + "'");
  return it->second;
}

}  // namespace detail

// One server optimizer step on the aggregated pseudo-gradient, with a
// per-group scale applied to the gradient first. For the adam path the
// second-moment accumulator is fed the UNSCALED gradient: the scale adjusts
// the numerator only, so a down-scaled round cannot inflate later adaptive
// steps through a smaller denominator.
inline void apply_round(ServerState& state, const ParamVector& g_bar,
                        const std::map<std::string, double>& multipliers) {
  state.theta.require_congruent(g_bar);
  const size_t n_groups = state.theta.groups().size();

  switch (state.optimizer) {
    case ServerOpt::sgd:
      for (size_t gi = 0; gi < n_groups; ++gi) {
        const double mult = detail::multiplier_for(multipliers, state.theta.groups()[gi].name);
        auto& tv = state.theta.group_at(gi).values;
        const auto& gv = g_bar.groups()[gi].values;
        for (size_t i = 0; i < tv.size(); ++i) tv[i] -= state.eta0 * (mult * gv[i]);
      }
      break;
    case ServerOpt::sgdm:
      if (state.m.empty()) state.m = zeros_like(state.theta);
      for (size_t gi = 0; gi < n_groups; ++gi) {
        const double mult = detail::multiplier_for(multipliers, state.theta.groups()[gi].name);
        auto& tv = state.theta.group_at(gi).values;
        auto& mv = state.m.group_at(gi).values;
        const auto& gv = g_bar.groups()[gi].values;
        for (size_t i = 0; i < tv.size(); ++i) {
          mv[i] = state.beta1 * mv[i] + (1.0 - state.beta1) * (mult * gv[i]);
          tv[i] -= state.eta0 * mv[i];
        }
      }
      break;
    case ServerOpt::adam: {
      if (state.m.empty()) state.m = zeros_like(state.theta);
      if (state.v.empty()) state.v = zeros_like(state.theta);
      const double t = static_cast<double>(state.round + 1);
      const double bc1 = 1.0 - std::pow(state.beta1, t);
      const double bc2 = 1.0 - std::pow(state.beta2, t);
      for (size_t gi = 0; gi < n_groups; ++gi) {
        const double mult = detail::multiplier_for(multipliers, state.theta.groups()[gi].name);
        auto& tv = state.theta.group_at(gi).values;
        auto& mv = state.m.group_at(gi).values;
        auto& vv = state.v.group_at(gi).values;
        const auto& gv = g_bar.groups()[gi].values;
        for (size_t i = 0; i < tv.size(); ++i) {
          vv[i] = state.beta2 * vv[i] + (1.0 - state.beta2) * gv[i] * gv[i];
          mv[i] = state.beta1 * mv[i] + (1.0 - state.beta1) * (mult * gv[i]);
          tv[i] -= state.eta0 * (mv[i] / bc1) / (std::sqrt(vv[i] / bc2) + state.eps);
        }
      }
      break;
    }
  }
  state.round += 1;
}

// c <- c + (r/N) * mean over sampled clients of (c_k' - c_k).
inline void scaffold_server_update(ServerState& state, const ParamVector& mean_delta_c,
                                   int sampled, int n_clients) {
  if (!state.scaffold_c.has_value())
    throw ScaffoldDisabled("server has no global control variate");
  state.scaffold_c->add_scaled_in_place(
      static_cast<double>(sampled) / static_cast<double>(n_clients), mean_delta_c);
}

}  // namespace fedsim
