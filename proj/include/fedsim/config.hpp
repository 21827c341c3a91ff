#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/client.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/fedglad.hpp"
#include "fedsim/models.hpp"
#include "fedsim/sampling.hpp"
#include "fedsim/server.hpp"

namespace fedsim {

enum class Algorithm { fedavg, fedprox, fedavgm, fedadam, scaffold };

enum class DatasetKind { synth, mnist_idx };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::synth;
  // synth
  int n = 2000;
  int dim = 16;
  int classes = 10;
  double spread = 1.0;
  uint64_t seed = 1;
  int test_n = 1000;
  // mnist_idx
  std::string images, labels, test_images, test_labels;
};

struct ModelConfig {
  ModelKind kind = ModelKind::mlp;
  std::vector<int> hidden_dims;
};

struct PartitionConfig {
  double alpha = 0.1;
};

struct FedgladConfig {
  bool enabled = false;
  AdaptMode mode = AdaptMode::groupwise;
  double beta = 0.9;
  double gamma = 0.02;
};

struct SamplerConfig {
  SampleStrategy strategy = SampleStrategy::uniform;
  double adafl_alpha = 0.3;
  std::map<int, std::vector<int>> forced_schedule;
};

struct DiagnosticsConfig {
  bool oracle_mode = false;
  bool sim_score = false;
  bool scale_ratio = false;
};

struct ServerConfig {
  ServerOpt optimizer = ServerOpt::sgd;
  bool optimizer_given = false;
  double eta0 = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct RunConfig {
  DatasetConfig dataset;
  ModelConfig model;
  int n_clients = 100;
  int sample_count = 10;
  int rounds = 100;
  PartitionConfig partition;
  LocalConfig local;  // shuffle_seed is filled per (round, client) by the harness
  ServerConfig server;
  Algorithm algorithm = Algorithm::fedavg;
  FedgladConfig fedglad;
  SamplerConfig sampler;
  DiagnosticsConfig diagnostics;
  std::vector<uint64_t> seeds{1};
  std::string output_dir = "out";
  int eval_every = 1;
  int workers = 1;
};

namespace cfgdetail {

using nlohmann::json;

inline void expect_keys(const json& j, const std::string& path,
                        const std::set<std::string>& allowed) {
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw ConfigError("unknown key '" + (path.empty() ? key : path + "." + key) + "'");
}

template <typename T>
inline T get_as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value at '" + path + "': " + e.what());
  }
}

template <typename T>
inline void read(const json& j, const std::string& path, const char* key, T& out) {
  if (j.contains(key)) out = get_as<T>(j.at(key), path + "." + key);
}

template <typename T>
inline void read_required(const json& j, const std::string& path, const char* key, T& out) {
  if (!j.contains(key)) throw ConfigError("missing required key '" + path + "." + key + "'");
  out = get_as<T>(j.at(key), path + "." + key);
}

inline std::string read_enum(const json& j, const std::string& path, const char* key,
                             const std::vector<std::string>& allowed,
                             const std::string& fallback) {
  std::string s = fallback;
  read(j, path, key, s);
  for (const auto& a : allowed)
    if (s == a) return s;
  throw ConfigError("bad value '" + s + "' at '" + path + "." + key + "'");
}

}  // namespace cfgdetail

inline LocalOpt parse_local_opt(const std::string& s) {
  if (s == "sgd") return LocalOpt::sgd;
  if (s == "sgdm") return LocalOpt::sgdm;
  return LocalOpt::adam;
}

inline ServerOpt parse_server_opt(const std::string& s) {
  if (s == "sgd") return ServerOpt::sgd;
  if (s == "sgdm") return ServerOpt::sgdm;
  return ServerOpt::adam;
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "fedavg") return Algorithm::fedavg;
  if (s == "fedprox") return Algorithm::fedprox;
  if (s == "fedavgm") return Algorithm::fedavgm;
  if (s == "fedadam") return Algorithm::fedadam;
  return Algorithm::scaffold;
}

inline ServerOpt server_opt_for(Algorithm a) {
  switch (a) {
    case Algorithm::fedavgm: return ServerOpt::sgdm;
    case Algorithm::fedadam: return ServerOpt::adam;
    default: return ServerOpt::sgd;
  }
}

inline const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::fedavg: return "fedavg";
    case Algorithm::fedprox: return "fedprox";
    case Algorithm::fedavgm: return "fedavgm";
    case Algorithm::fedadam: return "fedadam";
    case Algorithm::scaffold: return "scaffold";
  }
  return "?";
}

// Resolves a dataset path against FEDSIM_DATA_ROOT when one is set and the
// path is relative.
inline std::string resolve_data_path(const std::string& path) {
  if (path.empty()) return path;
  const char* root = std::getenv("FEDSIM_DATA_ROOT");
  if (root == nullptr || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(root) / path).string();
}

inline RunConfig parse_config(const nlohmann::json& j) {
  using namespace cfgdetail;
  if (!j.is_object()) throw ConfigError("config root must be an object");
  expect_keys(j, "",
              {"dataset", "model", "n_clients", "sample_count", "rounds", "partition",
               "local", "server", "algorithm", "fedglad", "sampler", "diagnostics",
               "seeds", "output_dir", "eval_every", "workers"});

  RunConfig cfg;

  {
    if (!j.contains("dataset")) throw ConfigError("missing required key 'dataset'");
    const json& d = j.at("dataset");
    std::string kind = read_enum(d, "dataset", "kind", {"synth", "mnist_idx"}, "synth");
    if (kind == "synth") {
      cfg.dataset.kind = DatasetKind::synth;
      expect_keys(d, "dataset", {"kind", "n", "dim", "classes", "spread", "seed", "test_n"});
      read(d, "dataset", "n", cfg.dataset.n);
      read(d, "dataset", "dim", cfg.dataset.dim);
      read(d, "dataset", "classes", cfg.dataset.classes);
      read(d, "dataset", "spread", cfg.dataset.spread);
      read(d, "dataset", "seed", cfg.dataset.seed);
      read(d, "dataset", "test_n", cfg.dataset.test_n);
    } else {
      cfg.dataset.kind = DatasetKind::mnist_idx;
      expect_keys(d, "dataset", {"kind", "images", "labels", "test_images", "test_labels"});
      read_required(d, "dataset", "images", cfg.dataset.images);
      read_required(d, "dataset", "labels", cfg.dataset.labels);
      read_required(d, "dataset", "test_images", cfg.dataset.test_images);
      read_required(d, "dataset", "test_labels", cfg.dataset.test_labels);
    }
  }

  {
    if (!j.contains("model")) throw ConfigError("missing required key 'model'");
    const json& m = j.at("model");
    expect_keys(m, "model", {"kind", "hidden_dims"});
    std::string kind = read_enum(m, "model", "kind", {"logreg", "mlp"}, "mlp");
    cfg.model.kind = kind == "logreg" ? ModelKind::logreg : ModelKind::mlp;
    read(m, "model", "hidden_dims", cfg.model.hidden_dims);
    if (cfg.model.kind == ModelKind::logreg && !cfg.model.hidden_dims.empty())
      throw ConfigError("model.hidden_dims must be empty for logreg");
  }

  read_required(j, "", "n_clients", cfg.n_clients);
  read_required(j, "", "sample_count", cfg.sample_count);
  read_required(j, "", "rounds", cfg.rounds);
  if (cfg.n_clients < 1) throw ConfigError("n_clients must be >= 1");
  if (cfg.sample_count < 1 || cfg.sample_count > cfg.n_clients)
    throw ConfigError("sample_count must lie in [1, n_clients]");
  if (cfg.rounds < 0) throw ConfigError("rounds must be >= 0");

  {
    if (!j.contains("partition")) throw ConfigError("missing required key 'partition'");
    const json& p = j.at("partition");
    expect_keys(p, "partition", {"alpha"});
    read_required(p, "partition", "alpha", cfg.partition.alpha);
    if (!(cfg.partition.alpha > 0.0)) throw ConfigError("partition.alpha must be > 0");
  }

  {
    if (!j.contains("local")) throw ConfigError("missing required key 'local'");
    const json& l = j.at("local");
    expect_keys(l, "local",
                {"optimizer", "lr", "momentum", "adam_beta1", "adam_beta2", "adam_eps",
                 "batch_size", "epochs", "prox_mu"});
    cfg.local.optimizer =
        parse_local_opt(read_enum(l, "local", "optimizer", {"sgd", "sgdm", "adam"}, "sgd"));
    read_required(l, "local", "lr", cfg.local.lr);
    read(l, "local", "momentum", cfg.local.momentum);
    read(l, "local", "adam_beta1", cfg.local.adam_beta1);
    read(l, "local", "adam_beta2", cfg.local.adam_beta2);
    read(l, "local", "adam_eps", cfg.local.adam_eps);
    read_required(l, "local", "batch_size", cfg.local.batch_size);
    read_required(l, "local", "epochs", cfg.local.epochs);
    read(l, "local", "prox_mu", cfg.local.prox_mu);
    if (!(cfg.local.lr > 0.0)) throw ConfigError("local.lr must be > 0");
    if (cfg.local.batch_size < 1) throw ConfigError("local.batch_size must be >= 1");
    if (cfg.local.epochs < 1) throw ConfigError("local.epochs must be >= 1");
    if (cfg.local.prox_mu < 0.0) throw ConfigError("local.prox_mu must be >= 0");
    if (cfg.local.momentum < 0.0 || cfg.local.momentum >= 1.0)
      throw ConfigError("local.momentum must lie in [0, 1)");
  }

  {
    std::string alg = "fedavg";
    read_required(j, "", "algorithm", alg);
    cfg.algorithm = parse_algorithm(
        [&] {
          for (const char* a : {"fedavg", "fedprox", "fedavgm", "fedadam", "scaffold"})
            if (alg == a) return alg;
          throw ConfigError("bad value '" + alg + "' at 'algorithm'");
        }());
  }

  {
    if (!j.contains("server")) throw ConfigError("missing required key 'server'");
    const json& s = j.at("server");
    expect_keys(s, "server", {"optimizer", "eta0", "beta1", "beta2", "eps"});
    if (s.contains("optimizer")) {
      cfg.server.optimizer = parse_server_opt(
          read_enum(s, "server", "optimizer", {"sgd", "sgdm", "adam"}, "sgd"));
      cfg.server.optimizer_given = true;
    } else {
      cfg.server.optimizer = server_opt_for(cfg.algorithm);
    }
    read_required(s, "server", "eta0", cfg.server.eta0);
    read(s, "server", "beta1", cfg.server.beta1);
    read(s, "server", "beta2", cfg.server.beta2);
    read(s, "server", "eps", cfg.server.eps);
    if (!(cfg.server.eta0 > 0.0)) throw ConfigError("server.eta0 must be > 0");
  }

  // Only the pairings of the optimizer variants table are legal.
  if (cfg.server.optimizer != server_opt_for(cfg.algorithm))
    throw ConfigError(std::string("algorithm '") + algorithm_name(cfg.algorithm) +
                      "' requires the " +
                      (server_opt_for(cfg.algorithm) == ServerOpt::sgd
                           ? "sgd"
                           : server_opt_for(cfg.algorithm) == ServerOpt::sgdm ? "sgdm" : "adam") +
                      " server optimizer");
  if (cfg.algorithm == Algorithm::scaffold && cfg.local.optimizer != LocalOpt::sgd)
    throw ConfigError("scaffold requires local.optimizer = sgd");
  if (cfg.local.prox_mu > 0.0 && cfg.algorithm != Algorithm::fedprox)
    throw ConfigError("local.prox_mu > 0 requires algorithm fedprox");

  if (j.contains("fedglad")) {
    const json& f = j.at("fedglad");
    expect_keys(f, "fedglad", {"enabled", "mode", "beta", "gamma"});
    read(f, "fedglad", "enabled", cfg.fedglad.enabled);
    std::string mode = read_enum(f, "fedglad", "mode", {"groupwise", "universal"}, "groupwise");
    cfg.fedglad.mode = mode == "universal" ? AdaptMode::universal : AdaptMode::groupwise;
    read(f, "fedglad", "beta", cfg.fedglad.beta);
    read(f, "fedglad", "gamma", cfg.fedglad.gamma);
    if (cfg.fedglad.beta < 0.0 || cfg.fedglad.beta >= 1.0)
      throw ConfigError("fedglad.beta must lie in [0, 1)");
    if (cfg.fedglad.gamma < 0.0) throw ConfigError("fedglad.gamma must be >= 0");
  }

  if (j.contains("sampler")) {
    const json& s = j.at("sampler");
    expect_keys(s, "sampler",
                {"strategy", "adafl_alpha", "forced_schedule", "forced_schedule_file"});
    std::string strat =
        read_enum(s, "sampler", "strategy", {"uniform", "md", "adafl", "forced"}, "uniform");
    cfg.sampler.strategy = strat == "uniform"  ? SampleStrategy::uniform
                           : strat == "md"     ? SampleStrategy::md
                           : strat == "adafl"  ? SampleStrategy::adafl
                                               : SampleStrategy::forced;
    read(s, "sampler", "adafl_alpha", cfg.sampler.adafl_alpha);
    if (cfg.sampler.adafl_alpha <= 0.0 || cfg.sampler.adafl_alpha >= 1.0)
      throw ConfigError("sampler.adafl_alpha must lie in (0, 1)");
    if (s.contains("forced_schedule")) {
      const json& sched = s.at("forced_schedule");
      if (!sched.is_object()) throw ConfigError("sampler.forced_schedule must be an object");
      for (const auto& [round_str, ids] : sched.items()) {
        int round;
        try {
          round = std::stoi(round_str);
        } catch (...) {
          throw ConfigError("bad round '" + round_str + "' in sampler.forced_schedule");
        }
        auto list = get_as<std::vector<int>>(ids, "sampler.forced_schedule." + round_str);
        for (int id : list)
          if (id < 0 || id >= cfg.n_clients)
            throw ConfigError("forced_schedule client id " + std::to_string(id) +
                              " out of range");
        if (list.empty())
          throw ConfigError("forced_schedule round " + round_str + " lists no clients");
        cfg.sampler.forced_schedule[round] = std::move(list);
      }
    }
  }

  if (j.contains("diagnostics")) {
    const json& d = j.at("diagnostics");
    expect_keys(d, "diagnostics", {"oracle_mode", "sim_score", "scale_ratio"});
    read(d, "diagnostics", "oracle_mode", cfg.diagnostics.oracle_mode);
    read(d, "diagnostics", "sim_score", cfg.diagnostics.sim_score);
    read(d, "diagnostics", "scale_ratio", cfg.diagnostics.scale_ratio);
  }

  read_required(j, "", "seeds", cfg.seeds);
  if (cfg.seeds.empty()) throw ConfigError("seeds must list at least one seed");
  read_required(j, "", "output_dir", cfg.output_dir);
  read(j, "", "eval_every", cfg.eval_every);
  read(j, "", "workers", cfg.workers);
  if (cfg.eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (cfg.workers < 1) throw ConfigError("workers must be >= 1");

  return cfg;
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse '" + path + "': " + e.what());
  }
  return parse_config(j);
}

}  // namespace fedsim
