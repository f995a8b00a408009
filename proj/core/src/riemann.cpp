#include "p300/riemann.hpp"

#include <Eigen/Cholesky>
#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>

namespace p300 {

namespace {

double logdet_llt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error(std::string(what) + ": matrix is not positive definite");
  }
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = j.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
    }
  }
  return m;
}

}  // namespace

SpdMatrix::SpdMatrix(Eigen::MatrixXd m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("SpdMatrix must be square");
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (asym > 1e-10 * scale) {
    throw std::invalid_argument("SpdMatrix: asymmetry " + std::to_string(asym) +
                                " exceeds tolerance");
  }
  m_ = 0.5 * (m + m.transpose());
}

FeatureMode feature_mode_from_string(std::string_view s) {
  if (s == "augmented") return FeatureMode::augmented;
  if (s == "plain") return FeatureMode::plain;
  throw std::invalid_argument("unknown feature mode '" + std::string(s) + "'");
}

std::string_view to_string(FeatureMode m) {
  return m == FeatureMode::augmented ? "augmented" : "plain";
}

SpdMatrix epoch_feature(const Eigen::MatrixXd& filtered_epoch, const Eigen::MatrixXd& prototype,
                        FeatureMode mode, double shrinkage) {
  Eigen::MatrixXd cov;
  const double t = static_cast<double>(filtered_epoch.cols());
  if (mode == FeatureMode::plain) {
    cov = filtered_epoch * filtered_epoch.transpose() / t;
  } else {
    if (prototype.rows() == 0 || prototype.cols() != filtered_epoch.cols()) {
      throw std::invalid_argument("augmented feature needs a prototype matching the epoch window");
    }
    Eigen::MatrixXd stacked(prototype.rows() + filtered_epoch.rows(), filtered_epoch.cols());
    stacked << prototype, filtered_epoch;
    cov = stacked * stacked.transpose() / t;
  }
  if (!(cov.trace() > 0.0)) {
    throw std::runtime_error("epoch_feature: degenerate (zero) epoch");
  }
  return SpdMatrix(shrink(0.5 * (cov + cov.transpose()), shrinkage));
}

double logdet_divergence_sq(const SpdMatrix& a, const SpdMatrix& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("logdet divergence: dimension mismatch");
  const double mid = logdet_llt(0.5 * (a.mat() + b.mat()), "logdet divergence");
  const double la = logdet_llt(a.mat(), "logdet divergence");
  const double lb = logdet_llt(b.mat(), "logdet divergence");
  return mid - 0.5 * (la + lb);
}

double logdet_divergence(const SpdMatrix& a, const SpdMatrix& b) {
  return std::sqrt(std::max(0.0, logdet_divergence_sq(a, b)));
}

SpdMatrix logdet_mean(std::span<const SpdMatrix> matrices, const LogdetMeanOptions& opt) {
  if (matrices.empty()) throw std::invalid_argument("logdet_mean: empty input");
  const Eigen::Index n = matrices.front().dim();
  for (const SpdMatrix& m : matrices) {
    if (m.dim() != n) throw std::invalid_argument("logdet_mean: dimension mismatch");
  }

  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  for (const SpdMatrix& m : matrices) g += m.mat();
  g /= static_cast<double>(matrices.size());

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
    for (const SpdMatrix& m : matrices) {
      Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (g + m.mat()));
      if (llt.info() != Eigen::Success) {
        throw std::runtime_error("logdet_mean: midpoint not positive definite");
      }
      acc += llt.solve(Eigen::MatrixXd::Identity(n, n));
    }
    acc /= static_cast<double>(matrices.size());
    Eigen::LLT<Eigen::MatrixXd> llt(acc);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("logdet_mean: iterate not positive definite");
    }
    Eigen::MatrixXd next = llt.solve(Eigen::MatrixXd::Identity(n, n));
    next = 0.5 * (next + next.transpose());
    const double rel = (next - g).norm() / g.norm();
    g = std::move(next);
    if (rel < opt.tolerance) return SpdMatrix(g);
  }
  throw std::runtime_error("logdet_mean did not converge in " +
                           std::to_string(opt.max_iterations) + " iterations");
}

MdmModel mdm_fit(std::span<const SpdMatrix> ta_features, std::span<const SpdMatrix> nt_features,
                 FeatureMode mode, const LogdetMeanOptions& opt) {
  if (ta_features.empty() || nt_features.empty()) {
    throw std::invalid_argument("mdm_fit needs features from both classes");
  }
  MdmModel model;
  model.mode = mode;
  model.mean_ta = logdet_mean(ta_features, opt);
  model.mean_nt = logdet_mean(nt_features, opt);
  return model;
}

double mdm_score(const MdmModel& model, const SpdMatrix& feature) {
  return logdet_divergence(feature, model.mean_nt) - logdet_divergence(feature, model.mean_ta);
}

EpochLabel mdm_classify(const MdmModel& model, const SpdMatrix& feature) {
  return mdm_score(model, feature) > 0.0 ? EpochLabel::TA : EpochLabel::NT;
}

std::string mdm_model_to_json(const MdmModel& model) {
  nlohmann::json j;
  j["filter"] = {{"w", matrix_json(model.filter.w)},
                 {"eigenvalues", std::vector<double>(model.filter.eigenvalues.data(),
                                                     model.filter.eigenvalues.data() +
                                                         model.filter.eigenvalues.size())},
                 {"n_components", model.filter.n_components}};
  j["prototype"] = matrix_json(model.prototype);
  j["mean_ta"] = matrix_json(model.mean_ta.mat());
  j["mean_nt"] = matrix_json(model.mean_nt.mat());
  j["mode"] = std::string(to_string(model.mode));
  return j.dump(2);
}

MdmModel mdm_model_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  MdmModel model;
  model.filter.w = matrix_from(j.at("filter").at("w"));
  const auto ev = j.at("filter").at("eigenvalues").get<std::vector<double>>();
  model.filter.eigenvalues =
      Eigen::Map<const Eigen::VectorXd>(ev.data(), static_cast<Eigen::Index>(ev.size()));
  model.filter.n_components = j.at("filter").at("n_components").get<int>();
  model.prototype = matrix_from(j.at("prototype"));
  model.mean_ta = SpdMatrix(matrix_from(j.at("mean_ta")));
  model.mean_nt = SpdMatrix(matrix_from(j.at("mean_nt")));
  model.mode = feature_mode_from_string(j.at("mode").get<std::string>());
  return model;
}

}  // namespace p300
