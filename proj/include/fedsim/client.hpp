#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/models.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/tensors.hpp"

namespace fedsim {

enum class LocalOpt { sgd, sgdm, adam };

struct LocalConfig {
  LocalOpt optimizer = LocalOpt::sgd;
  double lr = 0.01;
  double momentum = 0.9;     // sgdm only
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 32;
  int epochs = 1;
  double prox_mu = 0.0;      // 0 disables the proximal term
  uint64_t shuffle_seed = 0; // hash(run_seed, round, client_id) in the harness
};

struct ClientShard {
  const LabeledDataset* data = nullptr;
  std::vector<int> indices;
};

// Control-variate pair broadcast to one client for a variance-reduced round.
struct ControlVariates {
  const ParamVector* global_c = nullptr;
  const ParamVector* local_c = nullptr;
};

struct LocalResult {
  ParamVector pseudo_grad;  // theta_t - theta_final
  double mean_step_loss = 0.0;
  std::optional<ParamVector> updated_local_c;
};

// Runs E epochs of seeded-shuffled minibatch steps from the broadcast model
// and returns the accumulated update as a pseudo-gradient. The proximal term
// mu * (theta - theta_t) and the control-variate correction (c - c_k) are
// added to the batch gradient before the optimizer step. Control variates
// follow the plain-SGD update rule only; other local optimizers refuse.
inline LocalResult local_train(const ParamVector& theta_t, const ClientShard& shard,
                               const LocalConfig& cfg, const ControlVariates* cv = nullptr) {
  if (shard.data == nullptr || shard.indices.empty()) throw EmptyShard("client shard is empty");
  if (cv != nullptr && cfg.optimizer != LocalOpt::sgd)
    throw ScaffoldRequiresSgd("control variates are defined for the sgd client only");

  ParamVector theta = theta_t;
  ParamVector m, v;
  if (cfg.optimizer != LocalOpt::sgd) m = zeros_like(theta);
  if (cfg.optimizer == LocalOpt::adam) v = zeros_like(theta);

  Rng rng(cfg.shuffle_seed);
  std::vector<int> order = shard.indices;
  const int B = cfg.batch_size;
  long steps = 0;
  double loss_sum = 0.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(B)) {
      const size_t count = std::min(static_cast<size_t>(B), order.size() - start);
      Batch batch = gather_batch(*shard.data, {order.data() + start, count});
      LossGrad lg = loss_and_grad(theta, batch);
      loss_sum += lg.loss;
      ++steps;

      if (cfg.prox_mu != 0.0) {
        // grad += mu * (theta - theta_t)
        for (size_t gi = 0; gi < theta.groups().size(); ++gi) {
          auto& g = lg.grad.group_at(gi).values;
          const auto& cur = theta.groups()[gi].values;
          const auto& anchor = theta_t.groups()[gi].values;
          for (size_t i = 0; i < g.size(); ++i)
            g[i] += cfg.prox_mu * (cur[i] - anchor[i]);
        }
      }
      if (cv != nullptr) {
        for (size_t gi = 0; gi < theta.groups().size(); ++gi) {
          auto& g = lg.grad.group_at(gi).values;
          const auto& gc = cv->global_c->groups()[gi].values;
          const auto& lc = cv->local_c->groups()[gi].values;
          for (size_t i = 0; i < g.size(); ++i) g[i] += gc[i] - lc[i];
        }
      }

      switch (cfg.optimizer) {
        case LocalOpt::sgd:
          theta.add_scaled_in_place(-cfg.lr, lg.grad);
          break;
        case LocalOpt::sgdm:
          for (size_t gi = 0; gi < theta.groups().size(); ++gi) {
            auto& tv = theta.group_at(gi).values;
            auto& mv = m.group_at(gi).values;
            const auto& gv = lg.grad.groups()[gi].values;
            for (size_t i = 0; i < tv.size(); ++i) {
              mv[i] = cfg.momentum * mv[i] + gv[i];
              tv[i] -= cfg.lr * mv[i];
            }
          }
          break;
        case LocalOpt::adam: {
          const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(steps));
          const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(steps));
          for (size_t gi = 0; gi < theta.groups().size(); ++gi) {
            auto& tv = theta.group_at(gi).values;
            auto& mv = m.group_at(gi).values;
            auto& vv = v.group_at(gi).values;
            const auto& gv = lg.grad.groups()[gi].values;
            for (size_t i = 0; i < tv.size(); ++i) {
              mv[i] = cfg.adam_beta1 * mv[i] + (1.0 - cfg.adam_beta1) * gv[i];
              vv[i] = cfg.adam_beta2 * vv[i] + (1.0 - cfg.adam_beta2) * gv[i] * gv[i];
              tv[i] -= cfg.lr * (mv[i] / bc1) / (std::sqrt(vv[i] / bc2) + cfg.adam_eps);
            }
          }
          break;
        }
      }
    }
  }

  LocalResult result;
  result.pseudo_grad = axpy(-1.0, theta, theta_t);
  result.mean_step_loss = loss_sum / static_cast<double>(steps);
  if (cv != nullptr) {
    // c_k' = c_k - c + (theta_t - theta_final) / (K * lr), K = local steps
    ParamVector c_new = axpy(-1.0, *cv->global_c, *cv->local_c);
    c_new.add_scaled_in_place(1.0 / (static_cast<double>(steps) * cfg.lr),
                              result.pseudo_grad);
    result.updated_local_c = std::move(c_new);
  }
  return result;
}

// Per-group squared norms of a pseudo-gradient, plus a "__all__" entry that
// sums the groups in their stored order.
inline std::map<std::string, double> pseudo_grad_sq_norms(const ParamVector& g) {
  std::map<std::string, double> out;
  double total = 0.0;
  for (const auto& grp : g.groups()) {
    double s = group_sq_norm_values(grp.values);
    out[grp.name] = s;
    total += s;
  }
  out["__all__"] = total;
  return out;
}

}  // namespace fedsim
