#include "npel/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace npel {

namespace {

using nlohmann::json;

json vector_to_json(const VectorXd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

VectorXd vector_from_json(const json& a, const char* what) {
  if (!a.is_array()) throw IoError(std::string("model json: ") + what + " is not an array");
  VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Index>(i)) = a[i].get<double>();
  return v;
}

json rows_to_json(const MatrixXd& m) {
  json a = json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(vector_to_json(m.row(i)));
  return a;
}

MatrixXd rows_from_json(const json& a, const char* what) {
  if (!a.is_array() || a.empty()) {
    throw IoError(std::string("model json: ") + what + " is not a non-empty array");
  }
  const Index rows = static_cast<Index>(a.size());
  VectorXd first = vector_from_json(a[0], what);
  MatrixXd m(rows, first.size());
  m.row(0) = first;
  for (Index i = 1; i < rows; ++i) {
    VectorXd r = vector_from_json(a[static_cast<std::size_t>(i)], what);
    if (r.size() != m.cols()) throw IoError(std::string("model json: ragged ") + what);
    m.row(i) = r;
  }
  return m;
}

std::string basis_kind_name(Basis::Kind kind) {
  switch (kind) {
    case Basis::Kind::identity: return "identity";
    case Basis::Kind::quadratic_diagonal: return "quad";
    case Basis::Kind::custom_table: return "custom-table";
  }
  return "identity";
}

Basis::Kind basis_kind_from_name(const std::string& name) {
  if (name == "identity") return Basis::Kind::identity;
  if (name == "quad") return Basis::Kind::quadratic_diagonal;
  throw IoError("model json: unsupported basis kind '" + name + "'");
}

}  // namespace

Basis ModelDocument::make_basis() const {
  switch (basis_kind) {
    case Basis::Kind::identity: return Basis::identity(p);
    case Basis::Kind::quadratic_diagonal: return Basis::quadratic_diagonal(p);
    case Basis::Kind::custom_table:
      throw ValidationError("model: custom-table basis is dataset-bound and not persistable");
  }
  return Basis::identity(p);
}

json model_to_json(const ModelDocument& doc) {
  if (doc.basis_kind == Basis::Kind::custom_table) {
    throw ValidationError("model: custom-table basis is dataset-bound and not persistable");
  }
  const Index K = doc.params.num_classes();
  json j;
  j["version"] = 1;
  j["K"] = K;
  j["d"] = doc.params.basis_dim();
  j["w"] = vector_to_json(doc.params.w);
  j["gamma"] = vector_to_json(doc.params.gamma);
  j["beta"] = rows_to_json(doc.params.beta);
  json cols = json::array();
  for (Index k = 0; k < K; ++k) cols.push_back(vector_to_json(doc.params.T.col(k)));
  j["T_colmajor"] = cols;
  j["basis"] = {{"kind", basis_kind_name(doc.basis_kind)}, {"p", doc.p}};
  if (doc.standardize) {
    j["standardize"] = {{"mean", vector_to_json(doc.standardize->mean)},
                        {"scale", vector_to_json(doc.standardize->scale)}};
  }
  j["converged"] = doc.converged;
  if (!doc.classifier.is_null()) j["classifier"] = doc.classifier;
  return j;
}

ModelDocument model_from_json(const json& j) {
  if (!j.contains("version") || j["version"].get<int>() != 1) {
    throw IoError("model json: missing or unsupported version");
  }
  ModelDocument doc;
  const Index K = j.at("K").get<Index>();
  const Index d = j.at("d").get<Index>();
  doc.params.w = vector_from_json(j.at("w"), "w");
  doc.params.gamma = vector_from_json(j.at("gamma"), "gamma");
  doc.params.beta = rows_from_json(j.at("beta"), "beta");
  const json& cols = j.at("T_colmajor");
  if (!cols.is_array() || cols.size() != static_cast<std::size_t>(K)) {
    throw IoError("model json: T_colmajor has wrong column count");
  }
  doc.params.T.resize(K, K);
  for (Index k = 0; k < K; ++k) {
    doc.params.T.col(k) = vector_from_json(cols[static_cast<std::size_t>(k)], "T_colmajor");
  }
  doc.basis_kind = basis_kind_from_name(j.at("basis").at("kind").get<std::string>());
  doc.p = j.at("basis").at("p").get<Index>();
  if (j.contains("standardize")) {
    Standardize s;
    s.mean = vector_from_json(j["standardize"].at("mean"), "standardize.mean");
    s.scale = vector_from_json(j["standardize"].at("scale"), "standardize.scale");
    doc.standardize = std::move(s);
  }
  doc.converged = j.value("converged", true);
  if (j.contains("classifier")) doc.classifier = j["classifier"];
  validate(doc.params, K, d);
  return doc;
}

void save_model(const std::string& path, const ModelDocument& doc) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << model_to_json(doc).dump(2) << "\n";
  if (!out) throw IoError("failed writing '" + path + "'");
}

ModelDocument load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("model json: " + std::string(e.what()));
  }
  return model_from_json(j);
}

NpmcSpec npmc_spec_from_json(const json& j) {
  NpmcSpec spec;
  spec.rho = vector_from_json(j.at("rho"), "rho");
  for (const auto& s : j.at("S")) spec.constrained.insert(s.get<Index>());
  for (const auto& [key, value] : j.at("alpha").items()) {
    spec.alpha[static_cast<Index>(std::stol(key))] = value.get<double>();
  }
  spec.validate(spec.rho.size());
  return spec;
}

json npmc_spec_to_json(const NpmcSpec& spec) {
  json j;
  j["rho"] = vector_to_json(spec.rho);
  json s = json::array();
  for (Index k : spec.constrained) s.push_back(k);
  j["S"] = s;
  json a = json::object();
  for (const auto& [k, level] : spec.alpha) a[std::to_string(k)] = level;
  j["alpha"] = a;
  return j;
}

NpmcSpec load_npmc_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("npmc spec json: " + std::string(e.what()));
  }
  return npmc_spec_from_json(j);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void csv_fail(const std::string& path, std::size_t line_no,
                           const std::string& msg) {
  std::ostringstream full;
  full << path << ":" << line_no << ": " << msg;
  throw IoError(full.str());
}

}  // namespace

CsvData load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");

  std::string line;
  do {  // tolerate leading '#' comment lines (timestamps and the like)
    if (!std::getline(in, line)) throw IoError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
  } while (!line.empty() && line.front() == '#');

  const std::vector<std::string> header = split_line(line);
  Index p = 0;
  int y_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& name = header[c];
    if (name == "y") {
      if (y_col >= 0) csv_fail(path, 1, "duplicate column y");
      y_col = static_cast<int>(c);
    } else if (name == "f" + std::to_string(p)) {
      ++p;
    } else {
      csv_fail(path, 1, "unexpected column '" + name + "' (want f0..f{p-1}, y)");
    }
  }
  if (p == 0) csv_fail(path, 1, "no feature columns f0..f{p-1}");

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size()) {
      csv_fail(path, line_no, "expected " + std::to_string(header.size()) +
                                  " fields, got " + std::to_string(fields.size()));
    }
    Index fi = 0;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string& field = fields[c];
      if (field.empty()) csv_fail(path, line_no, "missing value");
      if (static_cast<int>(c) == y_col) {
        std::size_t pos = 0;
        long label = 0;
        try {
          label = std::stol(field, &pos);
        } catch (...) {
          csv_fail(path, line_no, "label '" + field + "' is not an integer");
        }
        if (pos != field.size()) csv_fail(path, line_no, "label '" + field + "' is not an integer");
        labels.push_back(static_cast<int>(label));
      } else {
        std::size_t pos = 0;
        double v = 0;
        try {
          v = std::stod(field, &pos);
        } catch (...) {
          csv_fail(path, line_no, "value '" + field + "' is not numeric");
        }
        if (pos != field.size() || !std::isfinite(v)) {
          csv_fail(path, line_no, "value '" + field + "' is not a finite number");
        }
        values.push_back(v);
        ++fi;
      }
    }
    (void)fi;
  }

  const Index n = static_cast<Index>(y_col >= 0 ? labels.size() : values.size() / p);
  CsvData data;
  data.features.resize(n, p);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < p; ++c) data.features(i, c) = values[static_cast<std::size_t>(i * p + c)];
  }
  if (y_col >= 0) {
    data.has_labels = true;
    data.labels.resize(n);
    for (Index i = 0; i < n; ++i) data.labels(i) = labels[static_cast<std::size_t>(i)];
  }
  return data;
}

void save_csv(const std::string& path, const MatrixXd& features, const VectorXi* labels) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (Index c = 0; c < features.cols(); ++c) {
    if (c) out << ",";
    out << "f" << c;
  }
  if (labels) out << ",y";
  out << "\n";
  char buf[32];
  for (Index i = 0; i < features.rows(); ++i) {
    for (Index c = 0; c < features.cols(); ++c) {
      if (c) out << ",";
      std::snprintf(buf, sizeof(buf), "%.17g", features(i, c));
      out << buf;
    }
    if (labels) out << "," << (*labels)(i);
    out << "\n";
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace npel
