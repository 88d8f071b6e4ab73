#pragma once

#include <json.hpp>
#include <optional>
#include <string>

#include "npel/model.hpp"

namespace npel {

/// Optional feature standardization applied by the CLI before basis
/// expansion; recorded in the model document so prediction can replay it.
struct Standardize {
  VectorXd mean;
  VectorXd scale;

  MatrixXd apply(const MatrixXd& x) const {
    return (x.rowwise() - mean.transpose()).array().rowwise() /
           scale.transpose().array();
  }
};

/// Versioned on-disk form of a fitted model. `classifier` carries the
/// subcommand-specific payload (threshold, multipliers, ...), if any.
struct ModelDocument {
  ModelParams params;
  Basis::Kind basis_kind = Basis::Kind::identity;
  Index p = 0;
  std::optional<Standardize> standardize;
  bool converged = true;
  nlohmann::json classifier;  // null when absent

  Basis make_basis() const;
};

nlohmann::json model_to_json(const ModelDocument& doc);
ModelDocument model_from_json(const nlohmann::json& j);

void save_model(const std::string& path, const ModelDocument& doc);
ModelDocument load_model(const std::string& path);

NpmcSpec npmc_spec_from_json(const nlohmann::json& j);
nlohmann::json npmc_spec_to_json(const NpmcSpec& spec);
NpmcSpec load_npmc_spec(const std::string& path);

/// CSV schema: header row with feature columns f0..f{p-1} and an optional
/// noisy-label column y. Missing or non-numeric values are rejected with a
/// line-numbered message.
struct CsvData {
  MatrixXd features;
  VectorXi labels;  // empty when the file has no y column
  bool has_labels = false;
};

CsvData load_csv(const std::string& path);
void save_csv(const std::string& path, const MatrixXd& features,
              const VectorXi* labels);

}  // namespace npel
