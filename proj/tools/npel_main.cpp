// npel: estimation of clean class proportions, posteriors, and the label
// noise mechanism from noisy labels, plus error-controlled classifiers.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <thread>

#include "npel/datagen.hpp"
#include "npel/em.hpp"
#include "npel/evalkit.hpp"
#include "npel/io.hpp"
#include "npel/np_binary.hpp"
#include "npel/npmc.hpp"
#include "npel/umbrella.hpp"

namespace {

using namespace npel;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNoConvergence = 2;
constexpr int kExitPartialFailure = 3;

struct GlobalFlags {
  std::uint64_t seed = 0;
  int threads = 0;  // 0: hardware concurrency
  std::string log_level = "info";
  bool deterministic = false;
};

int resolved_threads(const GlobalFlags& flags) {
  if (flags.threads > 0) return flags.threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void log_info(const GlobalFlags& flags, const std::string& msg) {
  if (flags.log_level != "quiet") std::cerr << "[npel] " << msg << "\n";
}

void print_config(const json& config) { std::cerr << config.dump() << "\n"; }

std::string timestamp_comment() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return std::string("# generated ") + buf + "\n";
}

struct EmFlags {
  double epsilon = 1e-6;
  int max_iter = 2000;
  int restarts = 5;
  std::string t_update = "plain";
  double ridge = 0.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--epsilon", epsilon, "EM stopping threshold on the log-EL increment");
    cmd->add_option("--max-iter", max_iter, "EM iteration cap");
    cmd->add_option("--restarts", restarts, "random EM restarts");
    cmd->add_option("--t-update", t_update,
                    "plain | constrained=xi0,xi1,... | penalized=eta0,eta1,...");
    cmd->add_option("--ridge", ridge, "L2 penalty on slope coefficients");
  }

  EmConfig build(Index num_classes, std::uint64_t seed) const {
    EmConfig config;
    config.epsilon = epsilon;
    config.max_iter = max_iter;
    config.n_restarts = restarts;
    config.seed = seed;
    config.ridge = ridge;
    if (t_update == "plain") {
      config.t_update = TUpdate::plain();
    } else if (t_update.rfind("constrained=", 0) == 0 ||
               t_update.rfind("penalized=", 0) == 0) {
      const bool constrained = t_update.front() == 'c';
      std::vector<double> values;
      std::stringstream ss(t_update.substr(t_update.find('=') + 1));
      std::string field;
      while (std::getline(ss, field, ',')) values.push_back(std::stod(field));
      if (values.size() == 1) values.assign(static_cast<std::size_t>(num_classes), values[0]);
      if (values.size() != static_cast<std::size_t>(num_classes)) {
        throw ValidationError("--t-update needs one value or one per class");
      }
      VectorXd v(num_classes);
      for (Index k = 0; k < num_classes; ++k) v(k) = values[static_cast<std::size_t>(k)];
      config.t_update = constrained ? TUpdate::constrained(v) : TUpdate::penalized(v);
    } else {
      throw ValidationError("unknown --t-update '" + t_update + "'");
    }
    return config;
  }

  json to_json() const {
    return {{"epsilon", epsilon}, {"max_iter", max_iter}, {"restarts", restarts},
            {"t_update", t_update}, {"ridge", ridge}};
  }
};

struct HjFlags {
  double box_hi = 200.0;
  double tol_step = 1e-4;
  long max_evals = 200000;
  int starts = 8;
  double shrink = 0.5;

  void attach(CLI::App* cmd) {
    cmd->add_option("--box-hi", box_hi, "multiplier box upper bound");
    cmd->add_option("--tol-step", tol_step, "pattern-search step tolerance");
    cmd->add_option("--max-evals", max_evals, "dual evaluation budget");
    cmd->add_option("--hj-starts", starts, "pattern-search starts");
    cmd->add_option("--shrink", shrink, "step shrink factor");
  }

  HjConfig build(std::uint64_t seed) const {
    HjConfig config;
    config.box_hi = box_hi;
    config.init_step = box_hi / 10.0;
    config.shrink = shrink;
    config.tol_step = tol_step;
    config.max_evals = max_evals;
    config.n_starts = starts;
    config.seed = seed;
    return config;
  }

  json to_json() const {
    return {{"box_hi", box_hi}, {"tol_step", tol_step}, {"max_evals", max_evals},
            {"starts", starts}, {"shrink", shrink}};
  }
};

Basis::Kind parse_basis(const std::string& name) {
  if (name == "identity") return Basis::Kind::identity;
  if (name == "quad") return Basis::Kind::quadratic_diagonal;
  throw ValidationError("unknown --basis '" + name + "' (identity | quad)");
}

struct LoadedData {
  Dataset dataset;
  std::optional<Standardize> standardize;
};

LoadedData load_training_data(const std::string& path, Index num_classes,
                              Basis::Kind basis_kind, bool standardize_flag) {
  CsvData csv = load_csv(path);
  if (!csv.has_labels) throw IoError(path + ": fitting needs a label column y");

  std::optional<Standardize> standardize;
  if (standardize_flag) {
    Standardize s;
    s.mean = csv.features.colwise().mean();
    VectorXd var = ((csv.features.rowwise() - s.mean.transpose()).array().square())
                       .colwise()
                       .mean();
    s.scale = var.array().sqrt().max(1e-12);
    csv.features = s.apply(csv.features);
    standardize = std::move(s);
  }

  const Basis basis = basis_kind == Basis::Kind::quadratic_diagonal
                          ? Basis::quadratic_diagonal(csv.features.cols())
                          : Basis::identity(csv.features.cols());
  return {Dataset(std::move(csv.features), std::move(csv.labels), num_classes, basis),
          std::move(standardize)};
}

void write_trace_csv(const std::string& path, const EmTrace& trace, bool deterministic) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  if (!deterministic) out << timestamp_comment();
  out << "iter,logel\n";
  char buf[32];
  for (std::size_t t = 0; t < trace.profile_logel_per_iter.size(); ++t) {
    std::snprintf(buf, sizeof(buf), "%.17g", trace.profile_logel_per_iter[t]);
    out << (t + 1) << "," << buf << "\n";
  }
}

// ---- subcommand drivers ----------------------------------------------------

int run_fit(const GlobalFlags& globals, const std::string& data_path, Index k,
            const std::string& basis_name, const EmFlags& em_flags, bool standardize,
            const std::string& out_path, const std::string& trace_path) {
  print_config(json{{"cmd", "fit"}, {"data", data_path}, {"k", k},
                    {"basis", basis_name}, {"em", em_flags.to_json()},
                    {"standardize", standardize}, {"seed", globals.seed},
                    {"out", out_path}});
  const Basis::Kind basis_kind = parse_basis(basis_name);
  LoadedData loaded = load_training_data(data_path, k, basis_kind, standardize);

  const EmConfig config = em_flags.build(k, globals.seed);
  const EmResult result = em_fit(loaded.dataset, k, config);

  ModelDocument doc;
  doc.params = result.params;
  doc.basis_kind = basis_kind;
  doc.p = loaded.dataset.p();
  doc.standardize = loaded.standardize;
  doc.converged = result.trace.converged;
  save_model(out_path, doc);
  if (!trace_path.empty()) write_trace_csv(trace_path, result.trace, globals.deterministic);

  log_info(globals, "fit: " + std::to_string(result.trace.iterations) + " iterations, " +
                        (result.trace.converged ? "converged" : "NOT converged") +
                        ", model written to " + out_path);
  return result.trace.converged ? kExitOk : kExitNoConvergence;
}

int run_np_binary(const GlobalFlags& globals, const std::string& data_path, double alpha,
                  const std::string& basis_name, const EmFlags& em_flags,
                  bool standardize, const std::string& out_path) {
  print_config(json{{"cmd", "np-binary"}, {"data", data_path}, {"alpha", alpha},
                    {"basis", basis_name}, {"em", em_flags.to_json()},
                    {"seed", globals.seed}, {"out", out_path}});
  const Basis::Kind basis_kind = parse_basis(basis_name);
  LoadedData loaded = load_training_data(data_path, 2, basis_kind, standardize);

  const EmConfig config = em_flags.build(2, globals.seed);
  const EmResult fit = em_fit(loaded.dataset, 2, config);
  const BinaryNpClassifier clf = np_binary_from_params(fit.params, loaded.dataset, alpha);

  ModelDocument doc;
  doc.params = clf.params;
  doc.basis_kind = basis_kind;
  doc.p = loaded.dataset.p();
  doc.standardize = loaded.standardize;
  doc.converged = fit.trace.converged;
  doc.classifier = {{"type", "np-binary"},
                    {"lambda_hat", clf.lambda_hat},
                    {"alpha", alpha},
                    {"w_hat", clf.w_hat}};
  save_model(out_path, doc);
  log_info(globals, "np-binary: lambda_hat=" + std::to_string(clf.lambda_hat) +
                        ", written to " + out_path);
  return fit.trace.converged ? kExitOk : kExitNoConvergence;
}

int run_npmc(const GlobalFlags& globals, const std::string& data_path,
             const std::string& spec_path, const std::string& basis_name,
             const EmFlags& em_flags, const HjFlags& hj_flags, double feas_margin,
             bool standardize, const std::string& out_path) {
  print_config(json{{"cmd", "npmc"}, {"data", data_path}, {"spec", spec_path},
                    {"basis", basis_name}, {"em", em_flags.to_json()},
                    {"hj", hj_flags.to_json()}, {"feas_margin", feas_margin},
                    {"seed", globals.seed}, {"out", out_path}});
  const NpmcSpec spec = load_npmc_spec(spec_path);
  const Index k = spec.rho.size();
  const Basis::Kind basis_kind = parse_basis(basis_name);
  LoadedData loaded = load_training_data(data_path, k, basis_kind, standardize);

  const EmConfig em = em_flags.build(k, globals.seed);
  const HjConfig hj = hj_flags.build(derive_seed(globals.seed, 0x7a));
  const EmResult fit = em_fit(loaded.dataset, k, em);
  const NpmcClassifier clf = npmc_from_params(fit.params, loaded.dataset, spec, hj, feas_margin);

  json lambda = json::array();
  for (Index i = 0; i < clf.lambda_hat.lambda.size(); ++i) {
    lambda.push_back(clf.lambda_hat.lambda(i));
  }
  ModelDocument doc;
  doc.params = clf.params;
  doc.basis_kind = basis_kind;
  doc.p = loaded.dataset.p();
  doc.standardize = loaded.standardize;
  doc.converged = fit.trace.converged;
  doc.classifier = {{"type", "npmc"},
                    {"lambda_hat", lambda},
                    {"g_value", clf.lambda_hat.g_value},
                    {"box_hi", clf.lambda_hat.box_hi},
                    {"feasibility", clf.feasibility == Feasibility::feasible
                                        ? "feasible"
                                        : "suspect_infeasible"},
                    {"spec", npmc_spec_to_json(spec)}};
  save_model(out_path, doc);
  log_info(globals, std::string("npmc: ") +
                        (clf.feasibility == Feasibility::feasible ? "feasible"
                                                                  : "suspect_infeasible") +
                        ", written to " + out_path);
  return fit.trace.converged ? kExitOk : kExitNoConvergence;
}

int run_umbrella(const GlobalFlags& globals, const std::string& data_path, double alpha,
                 double delta, const std::string& corruption,
                 const std::string& basis_name, const EmFlags& em_flags,
                 bool standardize, const std::string& out_path) {
  print_config(json{{"cmd", "umbrella"}, {"data", data_path}, {"alpha", alpha},
                    {"delta", delta}, {"corruption", corruption},
                    {"em", em_flags.to_json()}, {"seed", globals.seed},
                    {"out", out_path}});
  const Basis::Kind basis_kind = parse_basis(basis_name);
  LoadedData loaded = load_training_data(data_path, 2, basis_kind, standardize);

  UmbrellaConfig config;
  config.alpha = alpha;
  config.delta = delta;
  config.seed = globals.seed;
  if (corruption.rfind("known=", 0) == 0) {
    const std::string values = corruption.substr(6);
    const auto comma = values.find(',');
    if (comma == std::string::npos) {
      throw ValidationError("--corruption known=m0,m1 needs two values");
    }
    config.corruption = UmbrellaConfig::Known{std::stod(values.substr(0, comma)),
                                              std::stod(values.substr(comma + 1))};
  } else if (corruption != "estimated") {
    throw ValidationError("--corruption must be estimated or known=m0,m1");
  }

  const EmConfig em = em_flags.build(2, derive_seed(globals.seed, 0x33));
  const UmbrellaClassifier clf = fit_umbrella(loaded.dataset, config, em);

  ModelDocument doc;
  doc.params = clf.score_params.value();
  doc.basis_kind = basis_kind;
  doc.p = loaded.dataset.p();
  doc.standardize = loaded.standardize;
  doc.classifier = {{"type", "umbrella"},       {"k_star", clf.k_star},
                    {"threshold", clf.threshold}, {"m0_used", clf.m0_used},
                    {"m1_used", clf.m1_used},     {"saturated", clf.saturated},
                    {"alpha", alpha},             {"delta", delta}};
  save_model(out_path, doc);
  log_info(globals, "umbrella: k*=" + std::to_string(clf.k_star) +
                        (clf.saturated ? " (saturated)" : "") + ", written to " + out_path);
  return kExitOk;
}

int run_predict(const GlobalFlags& globals, const std::string& model_path,
                const std::string& data_path, const std::string& out_path) {
  print_config(json{{"cmd", "predict"}, {"model", model_path}, {"data", data_path},
                    {"out", out_path}});
  const ModelDocument doc = load_model(model_path);
  CsvData csv = load_csv(data_path);
  if (csv.features.cols() != doc.p) {
    throw IoError("predict: model expects p=" + std::to_string(doc.p) + " features, data has " +
                  std::to_string(csv.features.cols()));
  }
  if (doc.standardize) csv.features = doc.standardize->apply(csv.features);
  const Basis basis = doc.make_basis();
  const MatrixXd view = basis.expand(csv.features);
  const MatrixXd post = posterior_matrix(doc.params, view);
  const Index n = view.rows();
  const Index k = doc.params.num_classes();

  VectorXi pred(n);
  const std::string type = doc.classifier.is_null()
                               ? ""
                               : doc.classifier.value("type", "");
  if (type == "np-binary") {
    BinaryNpClassifier clf;
    clf.params = doc.params;
    clf.lambda_hat = doc.classifier.at("lambda_hat").get<double>();
    clf.w_hat = doc.classifier.at("w_hat").get<double>();
    clf.alpha = doc.classifier.at("alpha").get<double>();
    pred = classify_binary_all(clf, view);
  } else if (type == "npmc") {
    NpmcClassifier clf;
    clf.params = doc.params;
    clf.spec = npmc_spec_from_json(doc.classifier.at("spec"));
    const auto& lambda = doc.classifier.at("lambda_hat");
    clf.lambda_hat.lambda.resize(static_cast<Index>(lambda.size()));
    for (Index i = 0; i < clf.lambda_hat.lambda.size(); ++i) {
      clf.lambda_hat.lambda(i) = lambda[static_cast<std::size_t>(i)].get<double>();
    }
    pred = classify_npmc_all(clf, view);
  } else if (type == "umbrella") {
    const double threshold = doc.classifier.at("threshold").get<double>();
    for (Index i = 0; i < n; ++i) pred(i) = post(i, 1) > threshold ? 1 : 0;
  } else {
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      post.row(i).maxCoeff(&best);
      pred(i) = static_cast<int>(best);
    }
  }

  std::ofstream out(out_path);
  if (!out) throw IoError("cannot open '" + out_path + "' for writing");
  if (!globals.deterministic) out << timestamp_comment();
  out << "pred";
  for (Index c = 0; c < k; ++c) out << ",p" << c;
  out << "\n";
  char buf[32];
  for (Index i = 0; i < n; ++i) {
    out << pred(i);
    for (Index c = 0; c < k; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", post(i, c));
      out << "," << buf;
    }
    out << "\n";
  }
  log_info(globals, "predict: wrote " + std::to_string(n) + " rows to " + out_path);
  return kExitOk;
}

int run_gen(const GlobalFlags& globals, const std::string& scenario_path, Index n,
            bool clean, const std::string& out_path) {
  print_config(json{{"cmd", "gen"}, {"scenario", scenario_path}, {"n", n},
                    {"clean", clean}, {"seed", globals.seed}, {"out", out_path}});
  const ScenarioSpec spec = load_scenario(scenario_path);
  Rng rng(derive_seed(globals.seed, 0x01));
  const Sample sample = sample_clean(spec, n, rng);
  if (clean) {
    save_csv(out_path, sample.x, &sample.y);
  } else {
    const NoisySample noisy = inject_noise(spec, sample, rng);
    save_csv(out_path, noisy.x, &noisy.y_noisy);
  }
  log_info(globals, "gen: wrote " + std::to_string(n) + " rows to " + out_path);
  return kExitOk;
}

int run_simulate(const GlobalFlags& globals, const std::string& scenario_path, Index n,
                 int reps, const std::string& methods_csv, double alpha, double delta,
                 const EmFlags& em_flags, const HjFlags& hj_flags,
                 const std::string& out_dir) {
  print_config(json{{"cmd", "simulate"}, {"scenario", scenario_path}, {"n", n},
                    {"reps", reps}, {"methods", methods_csv}, {"alpha", alpha},
                    {"delta", delta}, {"em", em_flags.to_json()},
                    {"hj", hj_flags.to_json()}, {"seed", globals.seed},
                    {"threads", resolved_threads(globals)}, {"out", out_dir}});
  const ScenarioSpec scenario = load_scenario(scenario_path);

  ExperimentConfig config;
  config.n = n;
  config.reps = reps;
  std::stringstream ss(methods_csv);
  std::string method;
  while (std::getline(ss, method, ',')) {
    if (!method.empty()) config.methods.push_back(method);
  }
  config.alpha = alpha;
  config.delta = delta;
  config.seed = globals.seed;
  config.threads = resolved_threads(globals);
  config.em = em_flags.build(scenario.num_classes(), 0);
  config.hj = hj_flags.build(derive_seed(globals.seed, 0x7a));

  const ExperimentTable table = run_experiment(scenario, config);

  std::filesystem::create_directories(out_dir);
  write_long_csv(out_dir + "/long.csv", table);
  write_summary_csv(out_dir + "/summary.csv", table);
  write_failures_csv(out_dir + "/failures.csv", table);

  Index failed = 0;
  for (const auto& row : table.rows) failed += row.failed ? 1 : 0;
  const double fail_rate =
      static_cast<double>(failed) / static_cast<double>(table.rows.size());
  log_info(globals, "simulate: " + std::to_string(table.rows.size() - failed) + "/" +
                        std::to_string(table.rows.size()) + " runs ok, output in " +
                        out_dir);
  return fail_rate <= 0.1 ? kExitOk : kExitPartialFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"empirical-likelihood estimation and error-controlled classification "
               "under label noise"};
  app.require_subcommand(1);

  GlobalFlags globals;
  app.add_option("--seed", globals.seed, "root seed");
  app.add_option("--threads", globals.threads, "worker threads (0 = hardware)");
  app.add_option("--log-level", globals.log_level, "quiet | info | debug");
  app.add_flag("--deterministic", globals.deterministic,
               "suppress timestamp comment lines in outputs");

  // fit
  auto* fit = app.add_subcommand("fit", "fit the noisy-label model by EM");
  std::string fit_data, fit_basis = "identity", fit_out = "model.json", fit_trace;
  Index fit_k = 2;
  bool fit_standardize = false;
  EmFlags fit_em;
  fit->add_option("--data", fit_data, "training CSV")->required();
  fit->add_option("--k", fit_k, "number of classes")->required();
  fit->add_option("--basis", fit_basis, "identity | quad");
  fit->add_flag("--standardize", fit_standardize, "standardize features before the basis");
  fit_em.attach(fit);
  fit->add_option("--out", fit_out, "model JSON path")->required();
  fit->add_option("--trace", fit_trace, "objective trace CSV path");

  // np-binary
  auto* npb = app.add_subcommand("np-binary", "binary classifier with type-I control");
  std::string npb_data, npb_basis = "identity", npb_out = "clf.json";
  double npb_alpha = 0.05;
  bool npb_standardize = false;
  EmFlags npb_em;
  npb->add_option("--data", npb_data, "training CSV")->required();
  npb->add_option("--alpha", npb_alpha, "type-I error target")->required();
  npb->add_option("--basis", npb_basis, "identity | quad");
  npb->add_flag("--standardize", npb_standardize, "standardize features before the basis");
  npb_em.attach(npb);
  npb->add_option("--out", npb_out, "classifier JSON path")->required();

  // npmc
  auto* npm = app.add_subcommand("npmc", "multiclass classifier with per-class control");
  std::string npm_data, npm_spec, npm_basis = "identity", npm_out = "clf.json";
  bool npm_standardize = false;
  double npm_feas_margin = 1e-6;
  EmFlags npm_em;
  HjFlags npm_hj;
  npm->add_option("--data", npm_data, "training CSV")->required();
  npm->add_option("--spec", npm_spec, "problem JSON: {rho, alpha, S}")->required();
  npm->add_option("--basis", npm_basis, "identity | quad");
  npm->add_flag("--standardize", npm_standardize, "standardize features before the basis");
  npm->add_option("--feas-margin", npm_feas_margin, "suspect-infeasible margin");
  npm_em.attach(npm);
  npm_hj.attach(npm);
  npm->add_option("--out", npm_out, "classifier JSON path")->required();

  // umbrella
  auto* umb = app.add_subcommand("umbrella", "noise-adjusted order-statistic classifier");
  std::string umb_data, umb_basis = "identity", umb_out = "clf.json";
  std::string umb_corruption = "estimated";
  double umb_alpha = 0.05, umb_delta = 0.05;
  bool umb_standardize = false;
  EmFlags umb_em;
  umb->add_option("--data", umb_data, "training CSV")->required();
  umb->add_option("--alpha", umb_alpha, "type-I error target")->required();
  umb->add_option("--delta", umb_delta, "violation tolerance")->required();
  umb->add_option("--corruption", umb_corruption, "estimated | known=m0,m1");
  umb->add_option("--basis", umb_basis, "identity | quad");
  umb->add_flag("--standardize", umb_standardize, "standardize features before the basis");
  umb_em.attach(umb);
  umb->add_option("--out", umb_out, "classifier JSON path")->required();

  // simulate
  auto* sim = app.add_subcommand("simulate", "repetition experiments over a scenario");
  std::string sim_scenario, sim_methods = "ours,vanilla,oracle", sim_out = "sim_out";
  Index sim_n = 1000;
  int sim_reps = 50;
  double sim_alpha = 0.05, sim_delta = 0.05;
  EmFlags sim_em;
  HjFlags sim_hj;
  sim->add_option("--scenario", sim_scenario, "scenario JSON")->required();
  sim->add_option("--n", sim_n, "training size (per noisy class for confusion rows)")
      ->required();
  sim->add_option("--reps", sim_reps, "repetitions");
  sim->add_option("--methods", sim_methods, "comma-separated method list");
  sim->add_option("--alpha", sim_alpha, "binary type-I target");
  sim->add_option("--delta", sim_delta, "umbrella tolerance");
  sim_em.attach(sim);
  sim_hj.attach(sim);
  sim->add_option("--out", sim_out, "output directory")->required();

  // predict
  auto* pre = app.add_subcommand("predict", "classify a CSV with a fitted model");
  std::string pre_model, pre_data, pre_out = "pred.csv";
  pre->add_option("--model", pre_model, "model JSON")->required();
  pre->add_option("--data", pre_data, "feature CSV")->required();
  pre->add_option("--out", pre_out, "prediction CSV path")->required();

  // gen
  auto* gen = app.add_subcommand("gen", "materialize a scenario draw as CSV");
  std::string gen_scenario, gen_out = "data.csv";
  Index gen_n = 1000;
  bool gen_clean = false;
  gen->add_option("--scenario", gen_scenario, "scenario JSON")->required();
  gen->add_option("--n", gen_n, "sample size")->required();
  gen->add_flag("--clean", gen_clean, "emit true labels without noise injection");
  gen->add_option("--out", gen_out, "CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) {
      return run_fit(globals, fit_data, fit_k, fit_basis, fit_em, fit_standardize,
                     fit_out, fit_trace);
    }
    if (npb->parsed()) {
      return run_np_binary(globals, npb_data, npb_alpha, npb_basis, npb_em,
                           npb_standardize, npb_out);
    }
    if (npm->parsed()) {
      return run_npmc(globals, npm_data, npm_spec, npm_basis, npm_em, npm_hj,
                      npm_feas_margin, npm_standardize, npm_out);
    }
    if (umb->parsed()) {
      return run_umbrella(globals, umb_data, umb_alpha, umb_delta, umb_corruption,
                          umb_basis, umb_em, umb_standardize, umb_out);
    }
    if (sim->parsed()) {
      return run_simulate(globals, sim_scenario, sim_n, sim_reps, sim_methods, sim_alpha,
                          sim_delta, sim_em, sim_hj, sim_out);
    }
    if (pre->parsed()) return run_predict(globals, pre_model, pre_data, pre_out);
    if (gen->parsed()) return run_gen(globals, gen_scenario, gen_n, gen_clean, gen_out);
  } catch (const EmError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitNoConvergence;
  } catch (const SolveError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitNoConvergence;
  } catch (const IoError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitInput;
  } catch (const ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitInput;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}
