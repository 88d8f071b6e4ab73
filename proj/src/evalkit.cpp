#include "npel/evalkit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "npel/np_binary.hpp"
#include "npel/numeric.hpp"
#include "npel/umbrella.hpp"
#include "npel/wml.hpp"

namespace npel {

namespace {

// Seed-derivation purposes.
constexpr std::uint64_t kSeedTrain = 0x01;
constexpr std::uint64_t kSeedEval = 0x02;
constexpr std::uint64_t kSeedFit = 0x03;
constexpr std::uint64_t kSeedSplit = 0x04;

bool uses_confusion_rows(const ScenarioSpec& scenario) {
  return std::holds_alternative<ConfusionRowsNoise>(scenario.noise);
}

// Plain multinomial logistic posterior packed as ModelParams with T = I.
ModelParams plain_wml_params(const MatrixXd& basis_view, const VectorXi& labels,
                             Index K, double ridge) {
  VectorXd freq = VectorXd::Zero(K);
  MatrixXd hard = MatrixXd::Zero(basis_view.rows(), K);
  for (Index i = 0; i < labels.size(); ++i) {
    hard(i, labels(i)) = 1.0;
    freq(labels(i)) += 1.0;
  }
  freq /= static_cast<double>(labels.size());
  if ((freq.array() == 0.0).any()) {
    throw ValidationError("experiment: a class is absent from the training labels");
  }

  WmlProblem problem =
      WmlProblem::from_basis(basis_view, std::move(hard), std::max(ridge, 1e-6));
  WmlConfig config;
  config.tol = 1e-8 * std::max<double>(1.0, static_cast<double>(basis_view.rows()));
  WmlSolution solution = wml_fit(problem, config);

  ModelParams params;
  params.w = freq;
  params.gamma.resize(K);
  params.gamma(0) = 0.0;
  for (Index k = 1; k < K; ++k) {
    params.gamma(k) = solution.coeffs(k, 0) - std::log(freq(k) / freq(0));
  }
  params.beta = solution.coeffs.rightCols(basis_view.cols());
  params.beta.row(0).setZero();
  params.T = MatrixXd::Identity(K, K);
  return params;
}

struct RepData {
  Dataset noisy;      // training features with noisy labels
  Dataset clean;      // same features with the true labels
  Sample eval;        // large clean evaluation set
  MatrixXd eval_view; // basis-expanded evaluation features
  NoiseMatrices truth;
};

RepData make_rep_data(const ScenarioSpec& scenario, const ExperimentConfig& config,
                      int rep) {
  const Index K = scenario.num_classes();
  const Index n_train = uses_confusion_rows(scenario) ? config.n * K : config.n;

  Rng train_rng(derive_seed(config.seed, kSeedTrain, static_cast<std::uint64_t>(rep)));
  const Sample clean = sample_clean(scenario, n_train, train_rng);
  const NoisySample noisy = inject_noise(scenario, clean, train_rng);

  Rng eval_rng(derive_seed(config.seed, kSeedEval, static_cast<std::uint64_t>(rep)));
  ScenarioSpec eval_spec = scenario;
  Sample eval;
  if (scenario.npmc) {
    // Multiclass design: one clean test set drawn from the true marginal.
    eval_spec.fixed_counts = false;
    eval = sample_clean(eval_spec, scenario.eval_total, eval_rng);
  } else {
    // Binary design: equal-sized clean sets per true class.
    eval_spec.fixed_counts = true;
    eval_spec.class_probs = VectorXd::Constant(K, 1.0 / static_cast<double>(K));
    eval = sample_clean(eval_spec, scenario.eval_per_class * K, eval_rng);
  }

  const Basis basis = scenario.basis_kind == Basis::Kind::quadratic_diagonal
                          ? Basis::quadratic_diagonal(noisy.x.cols())
                          : Basis::identity(noisy.x.cols());
  RepData data{Dataset(noisy.x, noisy.y_noisy, K, basis),
               Dataset(noisy.x, noisy.y_true, K, basis), std::move(eval), {},
               noisy.truth};
  data.eval_view = basis.expand(data.eval.x);
  return data;
}

void fill_binary_metrics(RepetitionResult& result, const VectorXd& errors, double alpha) {
  result.per_class_error = errors;
  result.type1 = errors(0);
  result.type2 = errors(1);
  result.objective = errors(1);  // rho = (0, 1)
  result.binary = true;
  result.metrics = {{"type1", errors(0)},
                    {"type2", errors(1)},
                    {"objective", result.objective},
                    {"type1_violation", errors(0) > alpha ? 1.0 : 0.0}};
}

void fill_multiclass_metrics(RepetitionResult& result, const VectorXd& errors,
                             const NpmcSpec& spec) {
  result.per_class_error = errors;
  result.objective = spec.rho.dot(errors);
  result.binary = false;
  result.metrics.clear();
  for (Index k = 0; k < errors.size(); ++k) {
    result.metrics.emplace_back("err" + std::to_string(k), errors(k));
  }
  for (Index k : spec.constrained) {
    result.metrics.emplace_back("excess" + std::to_string(k),
                                errors(k) - spec.alpha.at(k));
  }
  result.metrics.emplace_back("objective", result.objective);
}

RepetitionResult run_method(const ScenarioSpec& scenario, const ExperimentConfig& config,
                            const std::string& method, int rep, const RepData& data) {
  RepetitionResult result;
  result.method = method;
  result.rep = rep;
  result.seed = derive_seed(config.seed, kSeedFit, static_cast<std::uint64_t>(rep));

  const Index K = scenario.num_classes();
  const bool multiclass = scenario.npmc.has_value();

  EmConfig em = config.em;
  em.seed = result.seed;

  if (multiclass) {
    const NpmcSpec& spec = *scenario.npmc;
    VectorXi pred;
    if (method == "ours") {
      const NpmcClassifier clf = fit_npmc(data.noisy, spec, em, config.hj);
      pred = classify_npmc_all(clf, data.eval_view);
    } else if (method == "vanilla" || method == "oracle" || method == "naive") {
      const Dataset& train = method == "oracle" ? data.clean : data.noisy;
      const ModelParams params =
          plain_wml_params(train.basis_view, train.labels, K, em.ridge);
      if (method == "naive") {
        const MatrixXd post = posterior_matrix(params, data.eval_view);
        pred.resize(post.rows());
        for (Index i = 0; i < post.rows(); ++i) {
          Index best = 0;
          post.row(i).maxCoeff(&best);
          pred(i) = static_cast<int>(best);
        }
      } else {
        const NpmcClassifier clf = npmc_from_params(params, train, spec, config.hj);
        pred = classify_npmc_all(clf, data.eval_view);
      }
    } else {
      throw ValidationError("experiment: method '" + method +
                            "' is not a multiclass method");
    }
    fill_multiclass_metrics(result, class_errors(pred, data.eval.y, K), spec);
    return result;
  }

  // Binary scenario.
  VectorXi pred;
  if (method == "ours") {
    const BinaryNpClassifier clf = fit_np_binary(data.noisy, config.alpha, em);
    pred = classify_binary_all(clf, data.eval_view);
  } else if (method == "vanilla" || method == "oracle") {
    const Dataset& train = method == "oracle" ? data.clean : data.noisy;
    const ModelParams params =
        plain_wml_params(train.basis_view, train.labels, 2, em.ridge);
    const BinaryNpClassifier clf = np_binary_from_params(params, train, config.alpha);
    pred = classify_binary_all(clf, data.eval_view);
  } else if (method == "npc_star" || method == "npc" || method == "npc_plus") {
    UmbrellaConfig ucfg;
    ucfg.alpha = config.alpha;
    ucfg.delta = config.delta;
    ucfg.seed = derive_seed(config.seed, kSeedSplit, static_cast<std::uint64_t>(rep));
    const double m0_true = data.truth.M(0, 0);
    const double m1_true = data.truth.M(1, 0);
    if (method == "npc_star") {
      ucfg.corruption = UmbrellaConfig::Known{m0_true, m1_true};
    } else if (method == "npc") {
      // Only bounds are assumed known: an upper bound on m0, lower on m1.
      ucfg.corruption = UmbrellaConfig::Known{
          std::min(m0_true + config.delta / 3.0, 1.0),
          std::max(m1_true - config.delta / 3.0, 0.0)};
    }
    const UmbrellaClassifier clf = fit_umbrella(data.noisy, ucfg, em);
    pred = clf.classify_all(data.eval.x);
  } else {
    throw ValidationError("experiment: method '" + method + "' is not a binary method");
  }
  fill_binary_metrics(result, class_errors(pred, data.eval.y, 2), config.alpha);
  return result;
}

}  // namespace

VectorXd class_errors(const VectorXi& predictions, const VectorXi& y_true, Index K) {
  if (predictions.size() != y_true.size()) {
    throw ValidationError("class_errors: prediction/label size mismatch");
  }
  VectorXd wrong = VectorXd::Zero(K);
  VectorXd total = VectorXd::Zero(K);
  for (Index i = 0; i < y_true.size(); ++i) {
    total(y_true(i)) += 1.0;
    if (predictions(i) != y_true(i)) wrong(y_true(i)) += 1.0;
  }
  for (Index k = 0; k < K; ++k) {
    if (total(k) == 0.0) {
      throw ValidationError("class_errors: class " + std::to_string(k) +
                            " is absent from the test set");
    }
  }
  return wrong.cwiseQuotient(total);
}

ExperimentTable run_experiment(const ScenarioSpec& scenario, const ExperimentConfig& config) {
  if (config.reps < 1) throw ValidationError("experiment: need at least one repetition");
  if (config.methods.empty()) throw ValidationError("experiment: no methods requested");

  const std::vector<std::string> binary_methods = {"ours", "vanilla", "oracle",
                                                   "npc", "npc_star", "npc_plus"};
  const std::vector<std::string> multiclass_methods = {"ours", "vanilla", "oracle", "naive"};
  const auto& allowed = scenario.npmc ? multiclass_methods : binary_methods;
  for (const std::string& method : config.methods) {
    if (std::find(allowed.begin(), allowed.end(), method) == allowed.end()) {
      throw ValidationError("experiment: unknown method '" + method + "' for this scenario");
    }
  }

  ExperimentTable table;
  table.rows.resize(static_cast<std::size_t>(config.reps) * config.methods.size());

  const auto run_rep = [&](int rep) {
    RepetitionResult* slot =
        table.rows.data() + static_cast<std::size_t>(rep) * config.methods.size();
    try {
      const RepData data = make_rep_data(scenario, config, rep);
      for (std::size_t m = 0; m < config.methods.size(); ++m) {
        try {
          slot[m] = run_method(scenario, config, config.methods[m], rep, data);
        } catch (const std::exception& err) {
          slot[m] = RepetitionResult{};
          slot[m].method = config.methods[m];
          slot[m].rep = rep;
          slot[m].failed = true;
          slot[m].error = err.what();
        }
      }
    } catch (const std::exception& err) {
      for (std::size_t m = 0; m < config.methods.size(); ++m) {
        slot[m] = RepetitionResult{};
        slot[m].method = config.methods[m];
        slot[m].rep = rep;
        slot[m].failed = true;
        slot[m].error = err.what();
      }
    }
  };

  const int workers = std::max(1, std::min<int>(config.threads, config.reps));
  if (workers == 1) {
    for (int rep = 0; rep < config.reps; ++rep) run_rep(rep);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int wkr = 0; wkr < workers; ++wkr) {
      pool.emplace_back([&]() {
        for (int rep = next.fetch_add(1); rep < config.reps; rep = next.fetch_add(1)) {
          run_rep(rep);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }
  return table;
}

std::vector<SummaryRow> summarize(const ExperimentTable& table) {
  // (method, metric) -> running sums, in first-seen order.
  std::vector<SummaryRow> order;
  std::map<std::pair<std::string, std::string>, std::pair<double, double>> sums;
  std::map<std::pair<std::string, std::string>, Index> counts;

  for (const RepetitionResult& r : table.rows) {
    if (r.failed) continue;
    for (const auto& [metric, value] : r.metrics) {
      const auto key = std::make_pair(r.method, metric);
      if (!counts.count(key)) {
        order.push_back({r.method, metric, 0.0, 0.0, 0});
        sums[key] = {0.0, 0.0};
        counts[key] = 0;
      }
      sums[key].first += value;
      sums[key].second += value * value;
      counts[key] += 1;
    }
  }

  for (SummaryRow& row : order) {
    const auto key = std::make_pair(row.method, row.metric);
    const Index c = counts[key];
    const double mean = sums[key].first / static_cast<double>(c);
    row.mean = mean;
    row.count = c;
    if (c > 1) {
      const double var =
          (sums[key].second - static_cast<double>(c) * mean * mean) /
          static_cast<double>(c - 1);
      row.sd = std::sqrt(std::max(0.0, var));
    }
  }
  return order;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_long_csv(const std::string& path, const ExperimentTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "method,rep,metric,value\n";
  for (const RepetitionResult& r : table.rows) {
    if (r.failed) continue;
    for (const auto& [metric, value] : r.metrics) {
      out << r.method << "," << r.rep << "," << metric << "," << format_double(value)
          << "\n";
    }
  }
}

void write_summary_csv(const std::string& path, const ExperimentTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "method,metric,mean,sd,count\n";
  for (const SummaryRow& row : summarize(table)) {
    out << row.method << "," << row.metric << "," << format_double(row.mean) << ","
        << format_double(row.sd) << "," << row.count << "\n";
  }
}

void write_failures_csv(const std::string& path, const ExperimentTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "method,rep,error\n";
  for (const RepetitionResult& r : table.rows) {
    if (!r.failed) continue;
    std::string msg = r.error;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out << r.method << "," << r.rep << "," << msg << "\n";
  }
}

}  // namespace npel
