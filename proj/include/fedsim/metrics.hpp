#pragma once

#include <charconv>
#include <limits>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"

namespace fedsim {

struct RoundRecord {
  int round = 0;
  double train_loss = 0.0;
  std::optional<double> eval_loss;
  std::optional<double> eval_acc;
  std::optional<double> sim_score;
  std::optional<double> scale_ratio;
  std::optional<double> oracle_eta;
  // Whole-model GSI, recorded for every run (baselines included); NaN when
  // the aggregated gradient degenerated.
  double whole_gsi = std::numeric_limits<double>::quiet_NaN();
  // Adaptation-mode grouping; empty when the adaptation is disabled.
  std::map<std::string, double> gsi;
  std::map<std::string, double> multiplier;
  std::map<std::string, double> raw_ratio;
  std::vector<int> sampled;
  double wall_time_ms = 0.0;  // never serialized; breaks byte-level determinism
};

// Shortest round-trip decimal form; locale-independent.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string format_optional(const std::optional<double>& v) {
  return v.has_value() ? format_double(*v) : std::string();
}

// Fixed-prefix CSV: round,train_loss,eval_loss,eval_acc,sim_score,
// scale_ratio,oracle_eta,__all__.gsi, then <group>.gsi,<group>.multiplier for
// every adaptation group (the universal mode's single group is "__all__", in
// which case only its multiplier column is appended).
class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, const std::vector<std::string>& adapt_groups)
      : out_(path), groups_(adapt_groups) {
    if (!out_) throw SimError("cannot open metrics file '" + path + "'");
    out_ << "round,train_loss,eval_loss,eval_acc,sim_score,scale_ratio,oracle_eta,__all__.gsi";
    for (const auto& g : groups_) {
      if (g != "__all__") out_ << ',' << g << ".gsi";
      out_ << ',' << g << ".multiplier";
    }
    out_ << '\n';
  }

  void write(const RoundRecord& r) {
    out_ << r.round << ',' << format_double(r.train_loss) << ','
         << format_optional(r.eval_loss) << ',' << format_optional(r.eval_acc) << ','
         << format_optional(r.sim_score) << ',' << format_optional(r.scale_ratio) << ','
         << format_optional(r.oracle_eta) << ','
         << (std::isnan(r.whole_gsi) ? std::string() : format_double(r.whole_gsi));
    for (const auto& g : groups_) {
      if (g != "__all__") {
        auto it = r.gsi.find(g);
        out_ << ',' << (it != r.gsi.end() ? format_double(it->second) : std::string());
      }
      auto mt = r.multiplier.find(g);
      out_ << ',' << (mt != r.multiplier.end() ? format_double(mt->second) : std::string());
    }
    out_ << '\n';
  }

  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  std::vector<std::string> groups_;
};

struct LoadedRun {
  std::vector<std::string> columns;
  std::vector<std::vector<std::optional<double>>> rows;  // rows x columns

  int column_index(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    return -1;
  }

  std::vector<std::optional<double>> column(const std::string& name) const {
    int idx = column_index(name);
    if (idx < 0) throw InsufficientData("metrics file has no column '" + name + "'");
    std::vector<std::optional<double>> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(row[static_cast<size_t>(idx)]);
    return out;
  }
};

inline LoadedRun load_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SimError("cannot open metrics file '" + path + "'");
  LoadedRun run;
  std::string line;
  if (!std::getline(in, line)) throw InsufficientData("metrics file '" + path + "' is empty");
  std::stringstream header(line);
  std::string cell;
  while (std::getline(header, cell, ',')) run.columns.push_back(cell);
  while (std::getline(in, line)) {
    std::vector<std::optional<double>> row;
    size_t start = 0;
    for (size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        if (i == start) {
          row.push_back(std::nullopt);
        } else {
          double v;
          auto [ptr, ec] = std::from_chars(line.data() + start, line.data() + i, v);
          row.push_back(ec == std::errc() ? std::optional<double>(v) : std::nullopt);
        }
        start = i + 1;
      }
    }
    row.resize(run.columns.size());
    run.rows.push_back(std::move(row));
  }
  return run;
}

inline double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double population_std(const std::vector<double>& xs) {
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw InsufficientData("pearson needs two equally sized series");
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw ZeroVariance("a series is constant");
  return sxy / (std::sqrt(sxx) * std::sqrt(syy));
}

// Population std of the clients' squared gradient norms over their mean. A
// small value means the scale component of the round is barely affected by
// which clients were sampled.
inline double scale_ratio_diagnostic(const std::vector<double>& client_sq_norms) {
  if (client_sq_norms.size() < 2) throw TooFewClients("scale ratio needs >= 2 clients");
  const double m = mean_of(client_sq_norms);
  if (m == 0.0) return 0.0;
  return population_std(client_sq_norms) / m;
}

// Pearson correlation between the whole-model GSI trace and the label
// similarity of each round's sampled clients against the global
// distribution.
inline double gsi_sim_correlation(const std::vector<RoundRecord>& records) {
  std::vector<double> gsi, sim;
  for (const auto& r : records) {
    if (!std::isnan(r.whole_gsi) && r.sim_score.has_value()) {
      gsi.push_back(r.whole_gsi);
      sim.push_back(*r.sim_score);
    }
  }
  if (gsi.size() < 10)
    throw InsufficientData("need >= 10 rounds with both GSI and sim_score");
  return pearson(gsi, sim);
}

inline double final_k_mean_accuracy(const std::vector<RoundRecord>& records, int k = 10) {
  std::vector<double> acc;
  for (const auto& r : records)
    if (r.eval_acc.has_value()) acc.push_back(*r.eval_acc);
  if (acc.empty()) throw InsufficientData("no evaluated rounds");
  const size_t take = std::min<size_t>(static_cast<size_t>(k), acc.size());
  std::vector<double> tail(acc.end() - static_cast<long>(take), acc.end());
  return mean_of(tail);
}

}  // namespace fedsim
