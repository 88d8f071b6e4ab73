#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "npel/evalkit.hpp"
#include "npel/np_binary.hpp"
#include "test_support.hpp"

using namespace npel;
using namespace npel::testing;

TEST_CASE("class_errors") {
  VectorXi truth(4), pred(4);
  truth << 0, 1, 1, 2;

  pred = truth;
  CHECK(class_errors(pred, truth, 3).isZero());

  pred.setZero();
  const VectorXd constant = class_errors(pred, truth, 3);
  CHECK(constant(0) == 0.0);
  CHECK(constant(1) == 1.0);
  CHECK(constant(2) == 1.0);

  pred << 0, 1, 0, 2;  // one error among the two class-1 samples
  CHECK(class_errors(pred, truth, 3)(1) == doctest::Approx(0.5));

  VectorXi missing(2), also(2);
  missing << 0, 0;
  also << 0, 1;
  CHECK_THROWS_WITH_AS(class_errors(also, missing, 3), doctest::Contains("class 1"),
                       ValidationError);
}

TEST_CASE("run_experiment with one repetition equals the manual pipeline") {
  const ScenarioSpec scenario = case_a();
  ExperimentConfig config;
  config.n = 500;
  config.reps = 1;
  config.methods = {"ours"};
  config.alpha = 0.1;
  config.seed = 99;
  config.em.n_restarts = 2;

  const ExperimentTable table = run_experiment(scenario, config);
  REQUIRE(table.rows.size() == 1);
  REQUIRE_FALSE(table.rows[0].failed);

  // Manual pipeline with the same fanned-out seeds (train=0x01, eval=0x02,
  // fit=0x03).
  Rng train_rng(derive_seed(99, 0x01, 0));
  const Sample clean = sample_clean(scenario, 1000, train_rng);
  const NoisySample noisy = inject_noise(scenario, clean, train_rng);
  const Dataset data(noisy.x, noisy.y_noisy, 2, Basis::identity(3));

  EmConfig em = config.em;
  em.seed = derive_seed(99, 0x03, 0);
  const BinaryNpClassifier clf = fit_np_binary(data, 0.1, em);

  Rng eval_rng(derive_seed(99, 0x02, 0));
  ScenarioSpec eval_spec = scenario;
  eval_spec.fixed_counts = true;
  Sample eval = sample_clean(eval_spec, scenario.eval_per_class * 2, eval_rng);
  const VectorXi pred = classify_binary_all(clf, eval.x);
  const VectorXd errors = class_errors(pred, eval.y, 2);

  CHECK(table.rows[0].type1 == errors(0));
  CHECK(table.rows[0].type2 == errors(1));
}

TEST_CASE("summaries agree with the emitted long csv and ignore row order") {
  const ScenarioSpec scenario = case_a();
  ExperimentConfig config;
  config.n = 300;
  config.reps = 3;
  config.methods = {"vanilla", "npc_star"};
  config.seed = 5;
  config.em.n_restarts = 1;

  ExperimentTable table = run_experiment(scenario, config);
  const std::vector<SummaryRow> summary = summarize(table);

  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "npel_long.csv";
  write_long_csv(path.string(), table);

  // Recompute means from the parsed CSV.
  std::ifstream in(path.string());
  std::string line;
  std::getline(in, line);
  std::map<std::pair<std::string, std::string>, std::pair<double, Index>> acc;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string method, rep, metric, value;
    std::getline(ss, method, ',');
    std::getline(ss, rep, ',');
    std::getline(ss, metric, ',');
    std::getline(ss, value, ',');
    auto& slot = acc[{method, metric}];
    slot.first += std::stod(value);
    slot.second += 1;
  }
  fs::remove(path);

  for (const SummaryRow& row : summary) {
    const auto& slot = acc.at({row.method, row.metric});
    CHECK(row.count == slot.second);
    CHECK(std::abs(row.mean - slot.first / static_cast<double>(slot.second)) <= 1e-12);
  }

  // Permuting repetition rows leaves the aggregate untouched.
  ExperimentTable shuffled = table;
  std::reverse(shuffled.rows.begin(), shuffled.rows.end());
  const std::vector<SummaryRow> summary2 = summarize(shuffled);
  REQUIRE(summary.size() == summary2.size());
  for (const SummaryRow& row : summary) {
    bool found = false;
    for (const SummaryRow& other : summary2) {
      if (other.method == row.method && other.metric == row.metric) {
        found = true;
        CHECK(std::abs(other.mean - row.mean) <= 1e-12);
        CHECK(std::abs(other.sd - row.sd) <= 1e-12);
      }
    }
    CHECK(found);
  }
}

TEST_CASE("oracle and ours coincide on noise-free data within fit tolerance") {
  ScenarioSpec scenario = case_a();
  scenario.noise = TransitionEtaNoise{0.0};

  ExperimentConfig config;
  config.n = 2000;  // per noisy class => 4000 samples
  config.reps = 2;
  config.methods = {"ours", "oracle"};
  config.alpha = 0.1;
  config.seed = 31;
  config.em.n_restarts = 2;

  const ExperimentTable table = run_experiment(scenario, config);
  for (int rep = 0; rep < 2; ++rep) {
    const RepetitionResult& ours = table.rows[static_cast<std::size_t>(rep) * 2];
    const RepetitionResult& oracle = table.rows[static_cast<std::size_t>(rep) * 2 + 1];
    REQUIRE(ours.method == "ours");
    REQUIRE(oracle.method == "oracle");
    REQUIRE_FALSE(ours.failed);
    REQUIRE_FALSE(oracle.failed);
    CHECK(std::abs(ours.type1 - oracle.type1) <= 0.01);
    CHECK(std::abs(ours.type2 - oracle.type2) <= 0.015);
  }
}

TEST_CASE("multiclass experiment smoke with all methods") {
  const ScenarioSpec scenario = case_ma(0.1);
  ExperimentConfig config;
  config.n = 1500;
  config.reps = 2;
  config.methods = {"ours", "vanilla", "oracle", "naive"};
  config.seed = 77;
  config.em.n_restarts = 2;
  config.hj.seed = 78;

  const ExperimentTable table = run_experiment(scenario, config);
  CHECK(table.rows.size() == 8);
  for (const RepetitionResult& row : table.rows) {
    REQUIRE_FALSE(row.failed);
    CHECK(row.per_class_error.size() == 3);
    CHECK((row.per_class_error.array() >= 0.0).all());
    CHECK((row.per_class_error.array() <= 1.0).all());
    // objective recomputes from the per-class errors
    CHECK(std::abs(row.objective -
                   scenario.npmc->rho.dot(row.per_class_error)) <= 1e-12);
  }

  // Vanilla's noise-blind dual collapses toward the constrained classes and
  // pays for it in the objective.
  const auto find_row = [&](const std::string& method, int rep) {
    for (const auto& row : table.rows) {
      if (row.method == method && row.rep == rep) return row;
    }
    REQUIRE(false);
    return table.rows[0];
  };
  for (int rep = 0; rep < 2; ++rep) {
    CHECK(find_row("vanilla", rep).objective >= find_row("ours", rep).objective);
    // Naive has no error control at all; it cannot beat ours on the
    // constrained classes jointly.
    const VectorXd naive = find_row("naive", rep).per_class_error;
    const VectorXd ours = find_row("ours", rep).per_class_error;
    CHECK(naive(0) + naive(1) >= ours(0) + ours(1) - 0.05);
  }
}

TEST_CASE("failures are recorded per repetition and excluded from summaries") {
  const ScenarioSpec scenario = case_a(0.5, 0.5);  // m0 = m1 breaks the umbrella
  ExperimentConfig config;
  config.n = 300;
  config.reps = 2;
  config.methods = {"npc_star", "vanilla"};
  config.seed = 12;
  config.em.n_restarts = 1;

  const ExperimentTable table = run_experiment(scenario, config);
  Index failures = 0;
  for (const auto& row : table.rows) {
    if (row.failed) {
      ++failures;
      CHECK(row.method == "npc_star");
      CHECK_FALSE(row.error.empty());
    }
  }
  CHECK(failures == 2);

  for (const SummaryRow& row : summarize(table)) CHECK(row.method == "vanilla");

  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "npel_failures.csv";
  write_failures_csv(path.string(), table);
  std::ifstream in(path.string());
  std::string line;
  Index lines = 0;
  while (std::getline(in, line)) ++lines;
  fs::remove(path);
  CHECK(lines == 3);  // header + two failures
}

TEST_CASE("unknown methods are rejected up front") {
  const ScenarioSpec binary = case_a();
  ExperimentConfig config;
  config.methods = {"nope"};
  CHECK_THROWS_AS(run_experiment(binary, config), ValidationError);

  const ScenarioSpec multi = case_ma(0.1);
  config.methods = {"npc_star"};  // binary-only method on a multiclass scenario
  CHECK_THROWS_AS(run_experiment(multi, config), ValidationError);
}
