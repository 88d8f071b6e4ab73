#include "npel/datagen.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "npel/io.hpp"

namespace npel {

namespace {

using nlohmann::json;

Index family_classes(const Family& family) {
  return std::visit(
      [](const auto& f) -> Index {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, UniformCircleFamily>) {
          return static_cast<Index>(f.centers.size());
        } else {
          return static_cast<Index>(f.means.size());
        }
      },
      family);
}

Index family_dim(const Family& family) {
  return std::visit(
      [](const auto& f) -> Index {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, UniformCircleFamily>) {
          return f.centers.at(0).size();
        } else {
          return f.means.at(0).size();
        }
      },
      family);
}

// Per-class samplers with factorizations precomputed once.
class FamilySampler {
 public:
  explicit FamilySampler(const Family& family) : family_(family) {
    if (const auto* g = std::get_if<GaussianFamily>(&family_)) {
      const Index K = static_cast<Index>(g->means.size());
      chol_.reserve(static_cast<std::size_t>(K));
      for (Index k = 0; k < K; ++k) {
        const MatrixXd& cov = g->covs.empty() ? g->cov : g->covs[static_cast<std::size_t>(k)];
        Eigen::LLT<MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success) {
          throw ValidationError("datagen: covariance is not positive definite");
        }
        chol_.push_back(llt.matrixL());
      }
    } else if (const auto* t = std::get_if<StudentTFamily>(&family_)) {
      Eigen::LLT<MatrixXd> llt(t->shape);
      if (llt.info() != Eigen::Success) {
        throw ValidationError("datagen: shape matrix is not positive definite");
      }
      chol_.push_back(llt.matrixL());
    } else {
      const auto& u = std::get<UniformCircleFamily>(family_);
      if (family_dim(family_) != 2) {
        throw ValidationError("datagen: uniform circles are a 2-D family");
      }
      if (u.radius <= 0.0) throw ValidationError("datagen: radius must be positive");
    }
  }

  RowVectorXd draw(Index k, Rng& rng) const {
    if (const auto* g = std::get_if<GaussianFamily>(&family_)) {
      const VectorXd z = rng.normal_vector(g->means[0].size());
      return (g->means[static_cast<std::size_t>(k)] +
              chol_[g->covs.empty() ? 0 : static_cast<std::size_t>(k)] * z)
          .transpose();
    }
    if (const auto* t = std::get_if<StudentTFamily>(&family_)) {
      const VectorXd z = rng.normal_vector(t->means[0].size());
      const double scale = std::sqrt(t->dof / rng.chi_squared(t->dof));
      return (t->means[static_cast<std::size_t>(k)] + scale * (chol_[0] * z)).transpose();
    }
    const auto& u = std::get<UniformCircleFamily>(family_);
    const double r = u.radius * std::sqrt(rng.uniform());
    const double a = 2.0 * std::numbers::pi * rng.uniform();
    RowVectorXd x(2);
    x << u.centers[static_cast<std::size_t>(k)](0) + r * std::cos(a),
        u.centers[static_cast<std::size_t>(k)](1) + r * std::sin(a);
    return x;
  }

 private:
  const Family& family_;
  std::vector<MatrixXd> chol_;
};

// Largest-remainder apportionment of n among the classes.
std::vector<Index> exact_counts(const VectorXd& probs, Index n) {
  const Index K = probs.size();
  std::vector<Index> counts(static_cast<std::size_t>(K));
  std::vector<std::pair<double, Index>> rema;
  Index assigned = 0;
  for (Index k = 0; k < K; ++k) {
    const double ideal = probs(k) * static_cast<double>(n);
    counts[static_cast<std::size_t>(k)] = static_cast<Index>(std::floor(ideal));
    assigned += counts[static_cast<std::size_t>(k)];
    rema.emplace_back(ideal - std::floor(ideal), k);
  }
  std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (Index i = 0; assigned < n; ++i, ++assigned) {
    ++counts[static_cast<std::size_t>(rema[static_cast<std::size_t>(i)].second)];
  }
  return counts;
}

}  // namespace

Index ScenarioSpec::num_classes() const { return family_classes(family); }

Index ScenarioSpec::feature_dim() const { return family_dim(family); }

MatrixXd ScenarioSpec::transition_matrix() const {
  const Index K = num_classes();
  if (const auto* eta = std::get_if<TransitionEtaNoise>(&noise)) {
    MatrixXd T = MatrixXd::Constant(K, K, eta->eta / static_cast<double>(K));
    T.diagonal().setConstant(1.0 - static_cast<double>(K - 1) * eta->eta /
                                       static_cast<double>(K));
    return T;
  }
  if (const auto* rows = std::get_if<ConfusionRowsNoise>(&noise)) {
    return complete_from_confusion(rows->rows, class_probs).T;
  }
  return MatrixXd::Identity(K, K);
}

Sample sample_clean(const ScenarioSpec& spec, Index n, Rng& rng) {
  const Index K = spec.num_classes();
  if (spec.class_probs.size() != K) {
    throw ValidationError("datagen: class_probs length does not match family");
  }
  FamilySampler sampler(spec.family);

  VectorXi labels(n);
  if (spec.fixed_counts) {
    const std::vector<Index> counts = exact_counts(spec.class_probs, n);
    Index pos = 0;
    for (Index k = 0; k < K; ++k) {
      for (Index c = 0; c < counts[static_cast<std::size_t>(k)]; ++c) labels(pos++) = k;
    }
    const std::vector<Index> perm = rng.permutation(n);
    VectorXi shuffled(n);
    for (Index i = 0; i < n; ++i) shuffled(i) = labels(perm[static_cast<std::size_t>(i)]);
    labels = std::move(shuffled);
  } else {
    for (Index i = 0; i < n; ++i) labels(i) = static_cast<int>(rng.categorical(spec.class_probs));
  }

  Sample out;
  out.y = std::move(labels);
  out.x.resize(n, spec.feature_dim());
  for (Index i = 0; i < n; ++i) out.x.row(i) = sampler.draw(out.y(i), rng);
  return out;
}

NoisySample inject_noise(const ScenarioSpec& spec, const Sample& clean, Rng& rng) {
  const Index K = spec.num_classes();
  const Index n = clean.y.size();
  NoisySample out;

  if (const auto* eta = std::get_if<TransitionEtaNoise>(&spec.noise)) {
    if (eta->eta < 0.0 || eta->eta > 1.0) {
      throw ValidationError("datagen: eta outside [0,1]");
    }
    const MatrixXd T = spec.transition_matrix();
    out.x = clean.x;
    out.y_true = clean.y;
    out.y_noisy.resize(n);
    for (Index i = 0; i < n; ++i) {
      out.y_noisy(i) = eta->eta == 0.0
                           ? clean.y(i)
                           : static_cast<int>(rng.categorical(T.col(clean.y(i))));
    }
    out.truth = complete_noise_matrices(T, spec.class_probs);
    return out;
  }

  if (const auto* conf = std::get_if<ConfusionRowsNoise>(&spec.noise)) {
    const MatrixXd& M = conf->rows;
    if (M.rows() != K || M.cols() != K) {
      throw ValidationError("datagen: confusion rows have wrong shape");
    }
    if ((M.array() < 0.0).any() || (M.array() > 1.0).any()) {
      throw ValidationError("datagen: confusion probabilities outside [0,1]");
    }
    FamilySampler sampler(spec.family);
    out.x = clean.x;
    out.y_noisy = clean.y;  // incoming labels are the fixed noisy-class slots
    out.y_true.resize(n);
    for (Index i = 0; i < n; ++i) {
      const Index l = clean.y(i);
      const Index k = rng.categorical(M.row(l).transpose());
      out.y_true(i) = static_cast<int>(k);
      if (k != l) out.x.row(i) = sampler.draw(k, rng);
    }
    out.truth = complete_from_confusion(M, spec.class_probs);
    return out;
  }

  out.x = clean.x;
  out.y_true = clean.y;
  out.y_noisy = clean.y;
  out.truth = complete_noise_matrices(MatrixXd::Identity(K, K), spec.class_probs);
  return out;
}

OracleDrm oracle_drm_params(const ScenarioSpec& spec) {
  const auto* g = std::get_if<GaussianFamily>(&spec.family);
  if (!g) throw ValidationError("datagen: closed-form tilts exist only for Gaussian families");
  const Index K = static_cast<Index>(g->means.size());
  const Index p = g->means[0].size();

  OracleDrm oracle;
  oracle.gamma = VectorXd::Zero(K);

  if (g->covs.empty()) {
    oracle.required_basis = Basis::Kind::identity;
    oracle.beta = MatrixXd::Zero(K, p);
    Eigen::LLT<MatrixXd> llt(g->cov);
    if (llt.info() != Eigen::Success) {
      throw ValidationError("datagen: covariance is not positive definite");
    }
    const VectorXd a0 = llt.solve(g->means[0]);
    for (Index k = 1; k < K; ++k) {
      const VectorXd ak = llt.solve(g->means[static_cast<std::size_t>(k)]);
      oracle.beta.row(k) = (ak - a0).transpose();
      oracle.gamma(k) = -0.5 * (g->means[static_cast<std::size_t>(k)].dot(ak) -
                                g->means[0].dot(a0));
    }
    return oracle;
  }

  // Per-class covariances: supported in spherical form sigma_k^2 I only.
  VectorXd sigma2(K);
  for (Index k = 0; k < K; ++k) {
    const MatrixXd& cov = g->covs[static_cast<std::size_t>(k)];
    const double s2 = cov(0, 0);
    if ((cov - s2 * MatrixXd::Identity(p, p)).lpNorm<Eigen::Infinity>() > 1e-12 || s2 <= 0.0) {
      throw ValidationError(
          "datagen: closed-form tilts with unequal covariances need spherical covariances");
    }
    sigma2(k) = s2;
  }
  oracle.required_basis = Basis::Kind::quadratic_diagonal;
  oracle.beta = MatrixXd::Zero(K, 2 * p);
  for (Index k = 1; k < K; ++k) {
    const VectorXd& mu_k = g->means[static_cast<std::size_t>(k)];
    const VectorXd& mu_0 = g->means[0];
    oracle.beta.row(k).head(p) = (mu_k / sigma2(k) - mu_0 / sigma2(0)).transpose();
    oracle.beta.row(k).tail(p).setConstant(0.5 * (1.0 / sigma2(0) - 1.0 / sigma2(k)));
    oracle.gamma(k) = mu_0.squaredNorm() / (2.0 * sigma2(0)) -
                      mu_k.squaredNorm() / (2.0 * sigma2(k)) +
                      0.5 * static_cast<double>(p) * std::log(sigma2(0) / sigma2(k));
  }
  return oracle;
}

namespace {

VectorXd json_vector(const json& a) {
  VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Index>(i)) = a[i].get<double>();
  return v;
}

MatrixXd json_matrix(const json& a) {
  const Index rows = static_cast<Index>(a.size());
  VectorXd first = json_vector(a.at(0));
  MatrixXd m(rows, first.size());
  m.row(0) = first;
  for (Index i = 1; i < rows; ++i) m.row(i) = json_vector(a[static_cast<std::size_t>(i)]);
  return m;
}

std::vector<VectorXd> json_vector_list(const json& a) {
  std::vector<VectorXd> out;
  out.reserve(a.size());
  for (const auto& row : a) out.push_back(json_vector(row));
  return out;
}

}  // namespace

ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("scenario json: " + std::string(e.what()));
  }

  ScenarioSpec spec;
  spec.name = j.value("name", "scenario");
  const json& fam = j.at("family");
  const std::string kind = fam.at("kind").get<std::string>();
  if (kind == "gaussian") {
    GaussianFamily g;
    g.means = json_vector_list(fam.at("means"));
    if (fam.contains("covs")) {
      for (const auto& cov : fam["covs"]) g.covs.push_back(json_matrix(cov));
    } else {
      g.cov = json_matrix(fam.at("cov"));
    }
    spec.family = std::move(g);
  } else if (kind == "uniform_circle") {
    UniformCircleFamily u;
    u.centers = json_vector_list(fam.at("centers"));
    u.radius = fam.at("radius").get<double>();
    spec.family = std::move(u);
  } else if (kind == "student_t") {
    StudentTFamily t;
    t.means = json_vector_list(fam.at("means"));
    t.shape = json_matrix(fam.at("shape"));
    t.dof = fam.value("dof", 15.0);
    spec.family = std::move(t);
  } else {
    throw IoError("scenario json: unknown family kind '" + kind + "'");
  }

  spec.class_probs = json_vector(j.at("class_probs"));
  spec.fixed_counts = j.value("fixed_counts", false);

  if (j.contains("noise")) {
    const json& noise = j["noise"];
    const std::string nkind = noise.at("kind").get<std::string>();
    if (nkind == "confusion_rows") {
      ConfusionRowsNoise conf;
      if (noise.contains("rows")) {
        conf.rows = json_matrix(noise["rows"]);
      } else {
        // Binary shorthand: m_l = P(Y=0 | noisy = l).
        const VectorXd m = json_vector(noise.at("m"));
        conf.rows.resize(m.size(), 2);
        conf.rows.col(0) = m;
        conf.rows.col(1) = (1.0 - m.array()).matrix();
      }
      spec.noise = std::move(conf);
    } else if (nkind == "transition_eta") {
      spec.noise = TransitionEtaNoise{noise.at("eta").get<double>()};
    } else {
      throw IoError("scenario json: unknown noise kind '" + nkind + "'");
    }
  }

  const std::string basis = j.value("basis", "identity");
  if (basis == "identity") {
    spec.basis_kind = Basis::Kind::identity;
  } else if (basis == "quad") {
    spec.basis_kind = Basis::Kind::quadratic_diagonal;
  } else {
    throw IoError("scenario json: unknown basis '" + basis + "'");
  }

  if (j.contains("npmc")) spec.npmc = npmc_spec_from_json(j["npmc"]);
  if (j.contains("eval")) {
    spec.eval_per_class = j["eval"].value("per_class", spec.eval_per_class);
    spec.eval_total = j["eval"].value("total", spec.eval_total);
  }

  const Index K = spec.num_classes();
  if (spec.class_probs.size() != K) {
    throw IoError("scenario json: class_probs length does not match family");
  }
  if (spec.npmc) spec.npmc->validate(K);
  return spec;
}

}  // namespace npel
