#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fedsim/client.hpp"
#include "fedsim/config.hpp"
#include "fedsim/data.hpp"
#include "fedsim/fedglad.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/models.hpp"
#include "fedsim/sampling.hpp"
#include "fedsim/server.hpp"
#include "fedsim/tensors.hpp"

namespace fedsim {

// Fans jobs out to a small pool. Job i writes only its own slot, so the
// worker count cannot influence results; with workers <= 1 everything runs
// inline on the caller's thread.
inline void parallel_for(int n_jobs, int workers, const std::function<void(int)>& fn) {
  if (workers <= 1 || n_jobs <= 1) {
    for (int i = 0; i < n_jobs; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n_jobs) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int k = std::min(workers, n_jobs);
  pool.reserve(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct PreparedData {
  LabeledDataset train;
  LabeledDataset test;
};

namespace detail {

inline LabeledDataset slice_dataset(const LabeledDataset& ds, int start, int count) {
  LabeledDataset out;
  out.n = count;
  out.dim = ds.dim;
  out.num_classes = ds.num_classes;
  out.features.assign(ds.features.begin() + static_cast<size_t>(start) * ds.dim,
                      ds.features.begin() + (static_cast<size_t>(start) + count) * ds.dim);
  out.labels.assign(ds.labels.begin() + start, ds.labels.begin() + start + count);
  return out;
}

}  // namespace detail

inline PreparedData prepare_dataset(const DatasetConfig& dc) {
  PreparedData out;
  if (dc.kind == DatasetKind::synth) {
    if (dc.test_n < 1) throw ConfigError("dataset.test_n must be >= 1");
    LabeledDataset all =
        synth_clusters(dc.n + dc.test_n, dc.dim, dc.classes, dc.spread, dc.seed);
    out.train = detail::slice_dataset(all, 0, dc.n);
    out.test = detail::slice_dataset(all, dc.n, dc.test_n);
  } else {
    out.train = load_idx(resolve_data_path(dc.images), resolve_data_path(dc.labels));
    out.test = load_idx(resolve_data_path(dc.test_images), resolve_data_path(dc.test_labels));
    const int classes = std::max(out.train.num_classes, out.test.num_classes);
    out.train.num_classes = classes;
    out.test.num_classes = classes;
  }
  standardize_features(out.train, &out.test);
  return out;
}

struct SeedRunResult {
  uint64_t seed = 0;
  std::vector<RoundRecord> records;
  ParamVector final_theta;
  std::optional<EvalResult> initial_eval;  // present when rounds == 0
  double final10_mean_acc = std::numeric_limits<double>::quiet_NaN();
};

// One full federated run for one seed. Per-round flow: sample clients, local
// training fan-out, aggregate in ascending client-id order, GSI adaptation,
// server step, control-variate bookkeeping, diagnostics, evaluation.
inline SeedRunResult run_single_seed(const RunConfig& cfg, uint64_t seed,
                                     const PreparedData& data,
                                     const std::string& csv_path = "") {
  const int N = cfg.n_clients;
  const int r = cfg.sample_count;

  ModelSpec spec;
  spec.kind = cfg.model.kind;
  spec.input_dim = data.train.dim;
  spec.hidden_dims = cfg.model.hidden_dims;
  spec.num_classes = data.train.num_classes;
  spec.init_seed = derive_seed(seed, {kModelInitStream});

  Partition part = dirichlet_partition(data.train, N, cfg.partition.alpha,
                                       derive_seed(seed, {kPartitionStream}));

  ServerState server;
  server.theta = init_params(spec);
  server.optimizer = cfg.server.optimizer;
  server.eta0 = cfg.server.eta0;
  server.beta1 = cfg.server.beta1;
  server.beta2 = cfg.server.beta2;
  server.eps = cfg.server.eps;

  const bool scaffold = cfg.algorithm == Algorithm::scaffold;
  std::vector<ParamVector> local_c;
  if (scaffold) {
    server.scaffold_c = zeros_like(server.theta);
    local_c.assign(static_cast<size_t>(N), zeros_like(server.theta));
  }

  SamplerState sampler;
  sampler.strategy = cfg.sampler.strategy;
  sampler.adafl_alpha = cfg.sampler.adafl_alpha;
  sampler.forced_schedule = cfg.sampler.forced_schedule;
  sampler.rng_seed = seed;
  if (sampler.strategy == SampleStrategy::md || sampler.strategy == SampleStrategy::adafl)
    sampler.weights.assign(static_cast<size_t>(N), 1.0 / static_cast<double>(N));

  GsiState gsi_state;
  gsi_state.mode = cfg.fedglad.mode;
  gsi_state.beta = cfg.fedglad.beta;
  gsi_state.gamma = cfg.fedglad.gamma;

  std::vector<std::string> adapt_groups;
  if (cfg.fedglad.enabled) {
    if (cfg.fedglad.mode == AdaptMode::universal) {
      adapt_groups = {"__all__"};
    } else {
      for (const auto& g : server.theta.groups()) adapt_groups.push_back(g.name);
    }
  }

  std::optional<MetricsWriter> writer;
  if (!csv_path.empty()) writer.emplace(csv_path, adapt_groups);

  const LabelDistribution d_global = [&] {
    std::vector<int> all(static_cast<size_t>(N));
    std::iota(all.begin(), all.end(), 0);
    return merged_label_distribution(part, data.train, all);
  }();

  SeedRunResult result;
  result.seed = seed;
  if (cfg.rounds == 0) {
    result.initial_eval = evaluate(server.theta, data.test);
    result.final_theta = server.theta;
    if (writer) writer->flush();
    return result;
  }

  for (int t = 0; t < cfg.rounds; ++t) {
    const auto round_start = std::chrono::steady_clock::now();

    std::vector<int> sampled = sample(sampler, t, r, N);
    std::sort(sampled.begin(), sampled.end());

    // Distinct ids to train this round; oracle mode trains everyone so the
    // full-participation gradient is available.
    std::vector<int> train_ids;
    if (cfg.diagnostics.oracle_mode) {
      train_ids.resize(static_cast<size_t>(N));
      std::iota(train_ids.begin(), train_ids.end(), 0);
    } else {
      train_ids = sampled;
      train_ids.erase(std::unique(train_ids.begin(), train_ids.end()), train_ids.end());
    }

    std::vector<LocalResult> trained(train_ids.size());
    parallel_for(static_cast<int>(train_ids.size()), cfg.workers, [&](int i) {
      const int id = train_ids[static_cast<size_t>(i)];
      LocalConfig lc = cfg.local;
      lc.shuffle_seed = derive_seed(
          seed, {kClientShuffleStream, static_cast<uint64_t>(t), static_cast<uint64_t>(id)});
      ClientShard shard{&data.train, part.assignments[static_cast<size_t>(id)]};
      if (scaffold) {
        ControlVariates cv{&*server.scaffold_c, &local_c[static_cast<size_t>(id)]};
        trained[static_cast<size_t>(i)] = local_train(server.theta, shard, lc, &cv);
      } else {
        trained[static_cast<size_t>(i)] = local_train(server.theta, shard, lc, nullptr);
      }
    });

    auto result_for = [&](int id) -> const LocalResult& {
      const auto it = std::lower_bound(train_ids.begin(), train_ids.end(), id);
      return trained[static_cast<size_t>(it - train_ids.begin())];
    };

    // Round entries in ascending client-id order (duplicates kept for the
    // with-replacement sampler: each entry contributes to the mean).
    std::vector<ParamVector> grads;
    std::vector<std::map<std::string, double>> norms;
    grads.reserve(sampled.size());
    norms.reserve(sampled.size());
    double loss_sum = 0.0;
    for (int id : sampled) {
      const LocalResult& lr = result_for(id);
      grads.push_back(lr.pseudo_grad);
      norms.push_back(pseudo_grad_sq_norms(lr.pseudo_grad));
      loss_sum += lr.mean_step_loss;
    }

    ParamVector g_bar = aggregate(grads);

    RoundRecord rec;
    rec.round = t;
    rec.train_loss = loss_sum / static_cast<double>(sampled.size());
    rec.sampled = sampled;
    rec.whole_gsi = compute_gsi(norms, g_bar, AdaptMode::universal).at("__all__");

    std::map<std::string, double> group_multipliers;
    if (cfg.fedglad.enabled) {
      RoundGsiReport report = adapt(gsi_state, norms, g_bar);
      rec.gsi = report.gsi;
      rec.multiplier = report.multiplier;
      rec.raw_ratio = report.raw_ratio;
      if (cfg.fedglad.mode == AdaptMode::universal) {
        const double m = report.multiplier.at("__all__");
        for (const auto& g : server.theta.groups()) group_multipliers[g.name] = m;
      } else {
        group_multipliers = report.multiplier;
      }
    } else {
      for (const auto& g : server.theta.groups()) group_multipliers[g.name] = 1.0;
    }

    apply_round(server, g_bar, group_multipliers);

    if (scaffold) {
      ParamVector mean_delta = zeros_like(server.theta);
      for (int id : sampled) {
        const LocalResult& lr = result_for(id);
        ParamVector delta = axpy(-1.0, local_c[static_cast<size_t>(id)], *lr.updated_local_c);
        mean_delta.add_scaled_in_place(1.0 / static_cast<double>(sampled.size()), delta);
      }
      scaffold_server_update(server, mean_delta, static_cast<int>(sampled.size()), N);
      for (int id : sampled)
        local_c[static_cast<size_t>(id)] = *result_for(id).updated_local_c;
    }

    if (sampler.strategy == SampleStrategy::adafl) {
      std::vector<int> participated = sampled;
      participated.erase(std::unique(participated.begin(), participated.end()),
                         participated.end());
      std::map<int, double> id_norms;
      for (int id : participated)
        id_norms[id] = pseudo_grad_sq_norms(result_for(id).pseudo_grad).at("__all__");
      adafl_update(sampler, participated, id_norms);
    }

    if (cfg.diagnostics.sim_score) {
      std::vector<int> uniq = sampled;
      uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
      rec.sim_score =
          similarity_score(merged_label_distribution(part, data.train, uniq), d_global);
    }
    if (cfg.diagnostics.scale_ratio && sampled.size() >= 2) {
      std::vector<double> all_norms;
      for (const auto& nm : norms) all_norms.push_back(nm.at("__all__"));
      rec.scale_ratio = scale_ratio_diagnostic(all_norms);
    }
    if (cfg.diagnostics.oracle_mode) {
      std::vector<ParamVector> all_grads;
      all_grads.reserve(static_cast<size_t>(N));
      for (int id = 0; id < N; ++id) all_grads.push_back(result_for(id).pseudo_grad);
      ParamVector g_full = aggregate(all_grads);
      if (dot(g_bar, g_bar) > 0.0)
        rec.oracle_eta = optimal_lr_oracle(g_bar, g_full, cfg.server.eta0);
    }

    if ((t + 1) % cfg.eval_every == 0 || t == cfg.rounds - 1) {
      EvalResult ev = evaluate(server.theta, data.test);
      rec.eval_loss = ev.loss;
      rec.eval_acc = ev.accuracy;
    }

    rec.wall_time_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - round_start)
                           .count();
    if (writer) writer->write(rec);
    result.records.push_back(std::move(rec));
  }

  if (writer) writer->flush();
  result.final_theta = server.theta;
  result.final10_mean_acc = final_k_mean_accuracy(result.records);
  return result;
}

struct Summary {
  std::vector<uint64_t> seeds;
  std::vector<double> per_seed_final10;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stdev = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentResult {
  std::vector<SeedRunResult> runs;
  Summary summary;
};

// Runs every configured seed, writes metrics_seed<k>.csv per seed plus
// summary.json (mean and std across seeds of the mean accuracy over the
// final 10 evaluated rounds).
inline ExperimentResult run_experiment(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  PreparedData data = prepare_dataset(cfg.dataset);

  ExperimentResult out;
  nlohmann::json per_seed = nlohmann::json::array();
  for (uint64_t seed : cfg.seeds) {
    const std::string csv =
        (fs::path(cfg.output_dir) / ("metrics_seed" + std::to_string(seed) + ".csv")).string();
    SeedRunResult run = run_single_seed(cfg, seed, data, csv);
    nlohmann::json entry{{"seed", seed}};
    if (cfg.rounds == 0) {
      entry["initial_eval_loss"] = run.initial_eval->loss;
      entry["initial_eval_acc"] = run.initial_eval->accuracy;
    } else {
      entry["final10_mean_acc"] = run.final10_mean_acc;
      out.summary.per_seed_final10.push_back(run.final10_mean_acc);
    }
    per_seed.push_back(entry);
    out.summary.seeds.push_back(seed);
    out.runs.push_back(std::move(run));
  }

  nlohmann::json summary{{"rounds", cfg.rounds},
                         {"algorithm", algorithm_name(cfg.algorithm)},
                         {"fedglad_enabled", cfg.fedglad.enabled},
                         {"per_seed", per_seed}};
  if (!out.summary.per_seed_final10.empty()) {
    out.summary.mean = mean_of(out.summary.per_seed_final10);
    out.summary.stdev = population_std(out.summary.per_seed_final10);
    summary["final10_mean_acc"] = {{"mean", out.summary.mean}, {"std", out.summary.stdev}};
  }
  std::ofstream sj(fs::path(cfg.output_dir) / "summary.json");
  sj << summary.dump(2) << '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Extreme-bad-sampling scenario: force one near-single-class round and
// compare the accuracy drop with and without the adaptation.

struct ScenarioSeedResult {
  uint64_t seed = 0;
  int target_class = -1;
  std::vector<int> forced_clients;
  double baseline_drop = 0.0;
  double fedglad_drop = 0.0;
  double gsi_at_bad = std::numeric_limits<double>::quiet_NaN();
  double gsi_p10 = std::numeric_limits<double>::quiet_NaN();
};

struct ScenarioReport {
  bool active = true;
  int bad_round = -1;
  std::vector<ScenarioSeedResult> per_seed;
};

namespace detail {

inline int majority_class(const Partition& part, const LabeledDataset& ds, int client) {
  std::vector<int> counts(static_cast<size_t>(ds.num_classes), 0);
  for (int idx : part.assignments[static_cast<size_t>(client)])
    counts[static_cast<size_t>(ds.labels[static_cast<size_t>(idx)])]++;
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

inline double class_fraction(const Partition& part, const LabeledDataset& ds, int client,
                             int cls) {
  const auto& shard = part.assignments[static_cast<size_t>(client)];
  if (shard.empty()) return 0.0;
  int count = 0;
  for (int idx : shard)
    if (ds.labels[static_cast<size_t>(idx)] == cls) ++count;
  return static_cast<double>(count) / static_cast<double>(shard.size());
}

// The r clients most concentrated on `cls` among those whose majority class
// is `cls`; NoSuchClients when fewer than r qualify.
inline std::vector<int> pick_forced_clients(const Partition& part, const LabeledDataset& ds,
                                            int cls, int r) {
  std::vector<int> candidates;
  for (int k = 0; k < static_cast<int>(part.assignments.size()); ++k)
    if (majority_class(part, ds, k) == cls) candidates.push_back(k);
  if (static_cast<int>(candidates.size()) < r)
    throw NoSuchClients("only " + std::to_string(candidates.size()) +
                        " clients hold class " + std::to_string(cls) + " as majority");
  std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    return class_fraction(part, ds, a, cls) > class_fraction(part, ds, b, cls);
  });
  candidates.resize(static_cast<size_t>(r));
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

inline int auto_target_class(const Partition& part, const LabeledDataset& ds) {
  std::vector<int> majority_counts(static_cast<size_t>(ds.num_classes), 0);
  for (int k = 0; k < static_cast<int>(part.assignments.size()); ++k)
    majority_counts[static_cast<size_t>(majority_class(part, ds, k))]++;
  return static_cast<int>(
      std::max_element(majority_counts.begin(), majority_counts.end()) -
      majority_counts.begin());
}

inline double nearest_rank_p10(std::vector<double> xs) {
  xs.erase(std::remove_if(xs.begin(), xs.end(), [](double v) { return std::isnan(v); }),
           xs.end());
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const size_t k = std::max<size_t>(1, static_cast<size_t>(std::ceil(0.1 * xs.size())));
  return xs[k - 1];
}

}  // namespace detail

// Runs baseline and adapted training with identical seeds and a schedule
// that forces `bad_round` to draw only clients dominated by one class.
// target_class < 0 picks, per seed, the class with the most majority
// clients. With active == false both runs use the plain sampler.
inline ScenarioReport forced_bad_round_scenario(const RunConfig& base, int bad_round,
                                                int target_class, bool active = true) {
  namespace fs = std::filesystem;
  if (active && (bad_round < 1 || bad_round >= base.rounds))
    throw ConfigError("bad_round must lie in [1, rounds)");

  PreparedData data = prepare_dataset(base.dataset);
  fs::create_directories(fs::path(base.output_dir) / "baseline");
  fs::create_directories(fs::path(base.output_dir) / "fedglad");

  ScenarioReport report;
  report.active = active;
  report.bad_round = active ? bad_round : -1;

  for (uint64_t seed : base.seeds) {
    ScenarioSeedResult sr;
    sr.seed = seed;

    RunConfig cfg = base;
    if (active) {
      Partition part = dirichlet_partition(data.train, base.n_clients, base.partition.alpha,
                                           derive_seed(seed, {kPartitionStream}));
      sr.target_class = target_class >= 0 ? target_class
                                          : detail::auto_target_class(part, data.train);
      sr.forced_clients =
          detail::pick_forced_clients(part, data.train, sr.target_class, base.sample_count);
      cfg.sampler.strategy = SampleStrategy::forced;
      cfg.sampler.forced_schedule = {{bad_round, sr.forced_clients}};
    }

    RunConfig cfg_base = cfg;
    cfg_base.fedglad.enabled = false;
    RunConfig cfg_glad = cfg;
    cfg_glad.fedglad.enabled = true;

    const std::string csv_base =
        (fs::path(base.output_dir) / "baseline" / ("metrics_seed" + std::to_string(seed) + ".csv"))
            .string();
    const std::string csv_glad =
        (fs::path(base.output_dir) / "fedglad" / ("metrics_seed" + std::to_string(seed) + ".csv"))
            .string();
    SeedRunResult run_base = run_single_seed(cfg_base, seed, data, csv_base);
    SeedRunResult run_glad = run_single_seed(cfg_glad, seed, data, csv_glad);

    if (active) {
      auto drop = [&](const SeedRunResult& run) {
        const auto& before = run.records[static_cast<size_t>(bad_round - 1)].eval_acc;
        const auto& at = run.records[static_cast<size_t>(bad_round)].eval_acc;
        if (!before.has_value() || !at.has_value())
          throw InsufficientData("scenario needs per-round evaluation around bad_round");
        return *before - *at;
      };
      sr.baseline_drop = drop(run_base);
      sr.fedglad_drop = drop(run_glad);
      std::vector<double> gsis;
      for (const auto& rec : run_base.records) gsis.push_back(rec.whole_gsi);
      sr.gsi_at_bad = run_base.records[static_cast<size_t>(bad_round)].whole_gsi;
      sr.gsi_p10 = detail::nearest_rank_p10(gsis);
    }
    report.per_seed.push_back(std::move(sr));
  }

  nlohmann::json j{{"active", report.active}, {"bad_round", report.bad_round}};
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& sr : report.per_seed) {
    nlohmann::json e{{"seed", sr.seed}};
    if (report.active) {
      e["target_class"] = sr.target_class;
      e["forced_clients"] = sr.forced_clients;
      e["baseline_drop"] = sr.baseline_drop;
      e["fedglad_drop"] = sr.fedglad_drop;
      e["gsi_at_bad_round"] = sr.gsi_at_bad;
      e["gsi_p10"] = sr.gsi_p10;
    }
    seeds.push_back(e);
  }
  j["per_seed"] = seeds;
  std::ofstream out(fs::path(base.output_dir) / "scenario_report.json");
  out << j.dump(2) << '\n';
  return report;
}

// ---------------------------------------------------------------------------
// Offline diagnostics over written metrics directories.

struct DiagnoseRunStats {
  std::string dir;
  std::vector<std::string> csvs;
  std::vector<double> final10;
  std::optional<double> mean_scale_ratio;
  std::optional<double> gsi_sim_pearson;
};

struct DiagnoseReport {
  std::vector<DiagnoseRunStats> runs;
  std::optional<bool> equivalent;  // set when exactly two runs were compared
};

inline DiagnoseReport diagnose_records(const std::string& dir, std::ostream& os) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ConfigError("'" + dir + "' is not a directory");

  std::map<std::string, std::vector<std::string>> by_dir;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("metrics_seed", 0) == 0 && entry.path().extension() == ".csv")
      by_dir[entry.path().parent_path().string()].push_back(entry.path().string());
  }
  if (by_dir.empty()) throw InsufficientData("no metrics_seed*.csv found under '" + dir + "'");

  DiagnoseReport report;
  for (auto& [run_dir, files] : by_dir) {
    std::sort(files.begin(), files.end());
    DiagnoseRunStats stats;
    stats.dir = run_dir;
    stats.csvs = files;
    std::vector<double> scale_ratios;
    std::vector<double> pearsons;
    for (const auto& f : files) {
      LoadedRun run = load_metrics_csv(f);
      std::vector<double> acc;
      for (const auto& v : run.column("eval_acc"))
        if (v.has_value()) acc.push_back(*v);
      if (!acc.empty()) {
        const size_t take = std::min<size_t>(10, acc.size());
        std::vector<double> tail(acc.end() - static_cast<long>(take), acc.end());
        stats.final10.push_back(mean_of(tail));
      }
      if (run.column_index("scale_ratio") >= 0) {
        for (const auto& v : run.column("scale_ratio"))
          if (v.has_value()) scale_ratios.push_back(*v);
      }
      if (run.column_index("__all__.gsi") >= 0 && run.column_index("sim_score") >= 0) {
        std::vector<double> g, s;
        auto gc = run.column("__all__.gsi");
        auto sc = run.column("sim_score");
        for (size_t i = 0; i < gc.size(); ++i)
          if (gc[i].has_value() && sc[i].has_value()) {
            g.push_back(*gc[i]);
            s.push_back(*sc[i]);
          }
        if (g.size() >= 10) {
          try {
            pearsons.push_back(pearson(g, s));
          } catch (const ZeroVariance&) {
          }
        }
      }
    }
    if (!scale_ratios.empty()) stats.mean_scale_ratio = mean_of(scale_ratios);
    if (!pearsons.empty()) stats.gsi_sim_pearson = mean_of(pearsons);
    report.runs.push_back(std::move(stats));
  }

  for (const auto& run : report.runs) {
    os << "run " << run.dir << " (" << run.csvs.size() << " seed file"
       << (run.csvs.size() == 1 ? "" : "s") << ")\n";
    if (!run.final10.empty())
      os << "  final-10 mean accuracy: mean " << format_double(mean_of(run.final10)) << " std "
         << format_double(population_std(run.final10)) << "\n";
    if (run.mean_scale_ratio)
      os << "  mean scale ratio (std/mean of ||g_k||^2): "
         << format_double(*run.mean_scale_ratio) << "\n";
    if (run.gsi_sim_pearson)
      os << "  Pearson(GSI, sim_score): " << format_double(*run.gsi_sim_pearson) << "\n";
  }

  if (report.runs.size() == 2) {
    bool equivalent = report.runs[0].csvs.size() == report.runs[1].csvs.size();
    if (equivalent) {
      for (size_t i = 0; i < report.runs[0].csvs.size() && equivalent; ++i) {
        LoadedRun a = load_metrics_csv(report.runs[0].csvs[i]);
        LoadedRun b = load_metrics_csv(report.runs[1].csvs[i]);
        auto acc_a = a.column("eval_acc");
        auto acc_b = b.column("eval_acc");
        if (acc_a.size() != acc_b.size()) {
          equivalent = false;
          break;
        }
        for (size_t k = 0; k < acc_a.size(); ++k)
          if (acc_a[k] != acc_b[k]) {
            equivalent = false;
            break;
          }
      }
    }
    report.equivalent = equivalent;
    os << "verdict: " << (equivalent ? "EQUIVALENT" : "DIFFERENT")
       << " (per-round accuracy sequences " << (equivalent ? "match" : "do not match")
       << ")\n";
  }
  return report;
}

// ---------------------------------------------------------------------------
// Partition statistics for the config's first seed.

struct PartitionStats {
  int n_clients = 0;
  int quota = 0;
  int dropped = 0;
  double mean_entropy = 0.0;
  double min_entropy = 0.0;
  double max_entropy = 0.0;
  double merged_vs_global_linf = 0.0;
};

inline PartitionStats partition_stats(const RunConfig& cfg, std::ostream& os) {
  PreparedData data = prepare_dataset(cfg.dataset);
  const uint64_t seed = cfg.seeds.front();
  Partition part = dirichlet_partition(data.train, cfg.n_clients, cfg.partition.alpha,
                                       derive_seed(seed, {kPartitionStream}));

  PartitionStats stats;
  stats.n_clients = cfg.n_clients;
  stats.quota = data.train.n / cfg.n_clients;
  stats.dropped = data.train.n - stats.quota * cfg.n_clients;

  std::vector<double> entropies;
  for (int k = 0; k < cfg.n_clients; ++k)
    entropies.push_back(label_entropy(merged_label_distribution(part, data.train, {k})));
  stats.mean_entropy = mean_of(entropies);
  stats.min_entropy = *std::min_element(entropies.begin(), entropies.end());
  stats.max_entropy = *std::max_element(entropies.begin(), entropies.end());

  std::vector<int> all(static_cast<size_t>(cfg.n_clients));
  std::iota(all.begin(), all.end(), 0);
  LabelDistribution merged = merged_label_distribution(part, data.train, all);
  std::vector<double> retained_counts(static_cast<size_t>(data.train.num_classes), 0.0);
  double retained_total = 0.0;
  for (const auto& shard : part.assignments)
    for (int idx : shard) {
      retained_counts[static_cast<size_t>(data.train.labels[static_cast<size_t>(idx)])] += 1.0;
      retained_total += 1.0;
    }
  for (size_t c = 0; c < retained_counts.size(); ++c) {
    const double diff = std::abs(merged.probs[c] - retained_counts[c] / retained_total);
    stats.merged_vs_global_linf = std::max(stats.merged_vs_global_linf, diff);
  }

  os << "clients: " << stats.n_clients << ", quota: " << stats.quota
     << " samples/client, dropped: " << stats.dropped << "\n"
     << "alpha: " << format_double(cfg.partition.alpha) << " (seed " << seed << ")\n"
     << "client label entropy: mean " << format_double(stats.mean_entropy) << ", min "
     << format_double(stats.min_entropy) << ", max " << format_double(stats.max_entropy)
     << " (uniform over " << data.train.num_classes
     << " classes: " << format_double(std::log(static_cast<double>(data.train.num_classes)))
     << ")\n"
     << "merged-vs-retained-global Linf: " << format_double(stats.merged_vs_global_linf)
     << "\n";
  return stats;
}

}  // namespace fedsim
