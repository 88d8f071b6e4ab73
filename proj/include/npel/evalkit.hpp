#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "npel/datagen.hpp"
#include "npel/em.hpp"
#include "npel/npmc.hpp"

namespace npel {

/// One (method, repetition) outcome. Binary runs populate type1/type2;
/// multiclass runs populate the per-class errors and the weighted objective.
/// `metrics` holds the emission-ready rows for the long CSV.
struct RepetitionResult {
  std::string method;
  int rep = 0;
  std::uint64_t seed = 0;
  VectorXd per_class_error;  // R_k on the clean evaluation set
  double objective = 0.0;    // sum_k rho_k R_k
  double type1 = 0.0;
  double type2 = 0.0;
  bool binary = false;
  std::vector<std::pair<std::string, double>> metrics;
  bool failed = false;
  std::string error;
};

struct SummaryRow {
  std::string method;
  std::string metric;
  double mean = 0.0;
  double sd = 0.0;
  Index count = 0;
};

struct ExperimentConfig {
  Index n = 1000;  // per noisy class for confusion-row scenarios, total otherwise
  int reps = 50;
  std::vector<std::string> methods;  // ours, vanilla, oracle, naive, npc, npc_star, npc_plus
  double alpha = 0.05;               // binary type-I target
  double delta = 0.05;               // umbrella tolerance
  std::uint64_t seed = 0;
  int threads = 1;
  EmConfig em;
  HjConfig hj;
};

struct ExperimentTable {
  std::vector<RepetitionResult> rows;
};

/// Misclassification rate per class; every class must appear in the test set.
VectorXd class_errors(const VectorXi& predictions, const VectorXi& y_true, Index K);

/// Monte Carlo repetition harness over one scenario. Each repetition draws a
/// fresh training sample and clean evaluation set from seeds fanned out of the
/// root seed, runs every requested method, and records per-method metrics.
/// Repetition failures are recorded and excluded from summaries.
ExperimentTable run_experiment(const ScenarioSpec& scenario, const ExperimentConfig& config);

std::vector<SummaryRow> summarize(const ExperimentTable& table);

/// Long format: method,rep,metric,value (one row per metric).
void write_long_csv(const std::string& path, const ExperimentTable& table);
void write_summary_csv(const std::string& path, const ExperimentTable& table);
void write_failures_csv(const std::string& path, const ExperimentTable& table);

}  // namespace npel
