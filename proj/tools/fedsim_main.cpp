#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedsim/config.hpp"
#include "fedsim/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;

nlohmann::json load_raw_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fedsim::ConfigError("cannot open config file '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw fedsim::ConfigError("cannot parse '" + path + "': " + e.what());
  }
}

// Sets a dotted path like "local.lr" or "sample_count" in a config object.
// Values parse as JSON literals first and fall back to strings.
void set_config_path(nlohmann::json& root, const std::string& key, const std::string& value) {
  nlohmann::json* node = &root;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw fedsim::ConfigError("empty sweep key");
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]))
      throw fedsim::ConfigError("sweep key '" + key + "' not present in config");
    node = &(*node)[parts[i]];
  }
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    parsed = value;
  }
  (*node)[parts.back()] = parsed;
}

void print_summary(const fedsim::ExperimentResult& result, const std::string& output_dir) {
  for (const auto& run : result.runs) {
    std::cout << "seed " << run.seed;
    if (run.initial_eval.has_value())
      std::cout << ": initial eval acc " << fedsim::format_double(run.initial_eval->accuracy);
    else
      std::cout << ": final-10 mean acc " << fedsim::format_double(run.final10_mean_acc);
    std::cout << "\n";
  }
  if (!result.summary.per_seed_final10.empty())
    std::cout << "final-10 mean acc over seeds: " << fedsim::format_double(result.summary.mean)
              << " +- " << fedsim::format_double(result.summary.stdev) << "\n";
  std::cout << "metrics written to " << output_dir << "\n";
}

int run_command(const std::string& config_path, int workers_override) {
  fedsim::RunConfig cfg = fedsim::load_config_file(config_path);
  if (workers_override > 0) cfg.workers = workers_override;
  fedsim::ExperimentResult result = fedsim::run_experiment(cfg);
  print_summary(result, cfg.output_dir);
  return kExitOk;
}

int sweep_command(const std::string& config_path, const std::string& param) {
  const auto eq = param.find('=');
  if (eq == std::string::npos)
    throw fedsim::ConfigError("--param expects key=v1,v2,... (got '" + param + "')");
  const std::string key = param.substr(0, eq);
  std::vector<std::string> values;
  std::stringstream ss(param.substr(eq + 1));
  std::string v;
  while (std::getline(ss, v, ',')) values.push_back(v);
  if (values.empty()) throw fedsim::ConfigError("--param lists no values");

  nlohmann::json raw = load_raw_config(config_path);
  const std::string base_out = raw.contains("output_dir")
                                   ? raw.at("output_dir").get<std::string>()
                                   : std::string("out");
  for (const auto& value : values) {
    nlohmann::json variant = raw;
    set_config_path(variant, key, value);
    variant["output_dir"] =
        (std::filesystem::path(base_out) / (key + "=" + value)).string();
    fedsim::RunConfig cfg = fedsim::parse_config(variant);
    std::cout << "=== " << key << "=" << value << " ===\n";
    fedsim::ExperimentResult result = fedsim::run_experiment(cfg);
    print_summary(result, cfg.output_dir);
  }
  return kExitOk;
}

int scenario_command(const std::string& config_path, int round, int target_class,
                     bool disable_force) {
  fedsim::RunConfig cfg = fedsim::load_config_file(config_path);
  fedsim::ScenarioReport report =
      fedsim::forced_bad_round_scenario(cfg, round, target_class, !disable_force);
  if (!report.active) {
    std::cout << "scenario inactive: no forced schedule; both runs use identical configs\n";
  } else {
    std::cout << "forced one-class round at t=" << report.bad_round << "\n";
    for (const auto& sr : report.per_seed) {
      std::cout << "seed " << sr.seed << ": class " << sr.target_class << ", baseline drop "
                << fedsim::format_double(sr.baseline_drop) << ", adapted drop "
                << fedsim::format_double(sr.fedglad_drop) << ", GSI at round "
                << fedsim::format_double(sr.gsi_at_bad) << " (run p10 "
                << fedsim::format_double(sr.gsi_p10) << ")\n";
    }
  }
  std::cout << "report written to " << cfg.output_dir << "/scenario_report.json\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with GSI-driven server learning-rate adaptation"};
  app.require_subcommand(1);

  std::string config_path;
  int workers_override = 0;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "JSON config file")->required();
  run->add_option("--workers", workers_override, "override the worker thread count");

  std::string sweep_config, sweep_param;
  auto* sweep = app.add_subcommand("sweep", "Run one config once per value of a swept key");
  sweep->add_option("config", sweep_config, "JSON config file")->required();
  sweep->add_option("--param", sweep_param, "key=v1,v2,... (e.g. sample_count=5,10,20)")
      ->required();

  auto* scenario = app.add_subcommand("scenario", "Special experiment scenarios");
  scenario->require_subcommand(1);
  std::string scen_config;
  int scen_round = 40;
  int scen_class = -1;
  bool scen_disable = false;
  auto* bad_round = scenario->add_subcommand(
      "bad-round", "Force one near-single-class round and compare the accuracy drop");
  bad_round->add_option("config", scen_config, "JSON config file")->required();
  bad_round->add_option("--round", scen_round, "round to force")->required();
  bad_round->add_option("--class", scen_class,
                        "target class (-1 picks the class with the most majority clients)");
  bad_round->add_flag("--disable-force", scen_disable,
                      "run the comparison without the forced schedule");

  std::string diagnose_dir;
  auto* diagnose = app.add_subcommand("diagnose", "Summarize written metrics directories");
  diagnose->add_option("records-dir", diagnose_dir, "directory holding metrics_seed*.csv files")
      ->required();

  std::string pstats_config;
  auto* pstats =
      app.add_subcommand("partition-stats", "Report label statistics of the data partition");
  pstats->add_option("config", pstats_config, "JSON config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_command(config_path, workers_override);
    if (sweep->parsed()) return sweep_command(sweep_config, sweep_param);
    if (scenario->parsed())
      return scenario_command(scen_config, scen_round, scen_class, scen_disable);
    if (diagnose->parsed()) {
      fedsim::diagnose_records(diagnose_dir, std::cout);
      return kExitOk;
    }
    if (pstats->parsed()) {
      fedsim::RunConfig cfg = fedsim::load_config_file(pstats_config);
      fedsim::partition_stats(cfg, std::cout);
      return kExitOk;
    }
  } catch (const fedsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return kExitOk;
}
