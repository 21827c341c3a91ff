#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/tensors.hpp"

namespace fedsim {

// Server learning-rate adaptation driven by the gradient similarity
// indicator
//
//   GSI_P = sqrt( sum_k ||g_{P,k}||^2 / (r * ||gbar_P||^2) ),
//
// which equals 1 when all sampled clients upload the same gradient and grows
// as their directions diverge. Each round every parameter group P gets the
// multiplier clamp(GSI_P / B_P, 1 - gamma*t, 1 + gamma*t) where B_P is an
// exponential moving average of past GSIs standing in for the unknown
// full-participation value; the bounds start collapsed at [1, 1] and relax
// as training stabilizes. The multiplier scales the aggregated gradient
// before the server optimizer consumes it.

enum class AdaptMode { groupwise, universal };

struct GsiState {
  AdaptMode mode = AdaptMode::groupwise;
  double beta = 0.9;    // baseline decay
  double gamma = 0.02;  // bounding factor
  std::map<std::string, double> baseline;  // B_P, empty before the first round
  std::set<std::string> grouping;          // fixed after the first round
  int round = 0;
};

struct RoundGsiReport {
  std::map<std::string, double> gsi;
  std::map<std::string, double> multiplier;
  std::map<std::string, double> raw_ratio;
  std::set<std::string> degenerate_groups;
};

namespace detail {

inline double client_norm_for(const std::map<std::string, double>& norms,
                              const std::string& key) {
  auto it = norms.find(key);
  if (it == norms.end())
    throw KeyMismatch("client norms are missing group '" + key + "'");
  return it->second;
}

}  // namespace detail

// Raw per-group GSI values. Groups whose aggregated gradient has collapsed
// (||gbar_P||^2 < 1e-24) are flagged degenerate and carry NaN here; step()
// pins their ratio to 1 and freezes their baseline, since the quotient is
// meaningless when the mean gradient cancels to zero.
inline std::map<std::string, double> compute_gsi(
    const std::vector<std::map<std::string, double>>& per_client_group_sq_norms,
    const ParamVector& g_bar, AdaptMode mode,
    std::set<std::string>* degenerate_out = nullptr) {
  const size_t r = per_client_group_sq_norms.size();
  if (r == 0) throw NoClients("GSI needs at least one client");
  constexpr double kDegenerate = 1e-24;

  std::map<std::string, double> out;
  auto eval_group = [&](const std::string& key, double gbar_sq) {
    double sum = 0.0;
    for (const auto& norms : per_client_group_sq_norms)
      sum += detail::client_norm_for(norms, key);
    if (gbar_sq < kDegenerate) {
      if (degenerate_out != nullptr) degenerate_out->insert(key);
      out[key] = std::numeric_limits<double>::quiet_NaN();
    } else {
      out[key] = std::sqrt(sum / (static_cast<double>(r) * gbar_sq));
    }
  };

  if (mode == AdaptMode::universal) {
    double gbar_sq = 0.0;
    for (const auto& grp : g_bar.groups()) gbar_sq += group_sq_norm_values(grp.values);
    eval_group("__all__", gbar_sq);
  } else {
    for (const auto& grp : g_bar.groups())
      eval_group(grp.name, group_sq_norm_values(grp.values));
  }
  return out;
}

// One adaptation round: multiplier from the current baseline, then the
// baseline update B <- beta*B + (1-beta)*GSI. At the first sighting of a
// group the baseline is seeded with its GSI, so the ratio (and with the
// bounds [1,1] at t=0, the multiplier) is exactly 1.
inline RoundGsiReport step(GsiState& state, const std::map<std::string, double>& gsi_t,
                           const std::set<std::string>& degenerate = {}) {
  if (state.grouping.empty()) {
    for (const auto& [key, _] : gsi_t) state.grouping.insert(key);
  } else {
    if (gsi_t.size() != state.grouping.size()) throw KeyMismatch("GSI grouping changed");
    for (const auto& [key, _] : gsi_t)
      if (!state.grouping.count(key)) throw KeyMismatch("unexpected GSI group '" + key + "'");
  }

  const double t = static_cast<double>(state.round);
  const double lower = 1.0 - state.gamma * t;
  const double upper = 1.0 + state.gamma * t;

  RoundGsiReport report;
  report.degenerate_groups = degenerate;
  for (const auto& [key, raw_gsi] : gsi_t) {
    double gsi = raw_gsi;
    double ratio;
    if (degenerate.count(key)) {
      auto it = state.baseline.find(key);
      gsi = it != state.baseline.end() ? it->second : 1.0;
      ratio = 1.0;
      // baseline frozen: a cancelled mean gradient says nothing about GSI_c
    } else {
      auto [it, inserted] = state.baseline.try_emplace(key, gsi);
      ratio = gsi / it->second;
      it->second = state.beta * it->second + (1.0 - state.beta) * gsi;
    }
    report.gsi[key] = gsi;
    report.raw_ratio[key] = ratio;
    report.multiplier[key] = std::min(std::max(ratio, lower), upper);
  }
  state.round += 1;
  return report;
}

inline RoundGsiReport adapt(GsiState& state,
                            const std::vector<std::map<std::string, double>>& per_client_norms,
                            const ParamVector& g_bar) {
  std::set<std::string> degenerate;
  auto gsi = compute_gsi(per_client_norms, g_bar, state.mode, &degenerate);
  return step(state, gsi, degenerate);
}

// Least-squares optimal server scale eta_s * <gbar, g_full> / ||gbar||^2
// against the full-participation gradient. Diagnostics only: g_full is
// unknowable to a real server under partial participation.
inline double optimal_lr_oracle(const ParamVector& g_bar, const ParamVector& g_full,
                                double eta_s) {
  const double denom = dot(g_bar, g_bar);
  if (denom <= 0.0) throw ZeroAggregateGradient("aggregated gradient is zero");
  return eta_s * dot(g_bar, g_full) / denom;
}

}  // namespace fedsim
