#include "p300/spatial.hpp"

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <stdexcept>

namespace p300 {

namespace {

void check_shapes(std::span<const Epoch> epochs, Eigen::Index& rows, Eigen::Index& cols) {
  for (const Epoch& e : epochs) {
    if (rows == 0) {
      rows = e.data.rows();
      cols = e.data.cols();
    } else if (e.data.rows() != rows || e.data.cols() != cols) {
      throw std::invalid_argument("epochs have inhomogeneous shapes");
    }
  }
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
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

Eigen::MatrixXd mean_covariance(std::span<const Epoch> ta, std::span<const Epoch> nt) {
  if (ta.empty() && nt.empty()) throw std::invalid_argument("mean_covariance: no epochs");
  Eigen::Index rows = 0, cols = 0;
  check_shapes(ta, rows, cols);
  check_shapes(nt, rows, cols);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(rows, rows);
  for (const Epoch& e : ta) c.noalias() += e.data * e.data.transpose();
  for (const Epoch& e : nt) c.noalias() += e.data * e.data.transpose();
  c /= static_cast<double>(ta.size() + nt.size());
  return 0.5 * (c + c.transpose());
}

Eigen::MatrixXd evoked_covariance(std::span<const Epoch> ta) {
  if (ta.empty()) throw std::invalid_argument("evoked_covariance: no target epochs");
  Eigen::Index rows = 0, cols = 0;
  check_shapes(ta, rows, cols);
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(rows, cols);
  for (const Epoch& e : ta) mean += e.data;
  mean /= static_cast<double>(ta.size());
  Eigen::MatrixXd c = mean * mean.transpose();
  return 0.5 * (c + c.transpose());
}

Eigen::MatrixXd shrink(const Eigen::MatrixXd& c, double gamma) {
  const double scale = c.trace() / static_cast<double>(c.rows());
  return (1.0 - gamma) * c +
         gamma * scale * Eigen::MatrixXd::Identity(c.rows(), c.cols());
}

Gevd gevd(const Eigen::MatrixXd& c, const Eigen::MatrixXd& c_ta) {
  if (c.rows() != c.cols() || c_ta.rows() != c_ta.cols() || c.rows() != c_ta.rows()) {
    throw std::invalid_argument("gevd: matrices must be square and of equal dimension");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> whitener(c);
  if (whitener.info() != Eigen::Success || whitener.eigenvalues().minCoeff() <= 0.0) {
    throw std::runtime_error("gevd: C is not positive definite");
  }
  // rows of white map C to the identity
  const Eigen::MatrixXd white = whitener.eigenvalues().array().rsqrt().matrix().asDiagonal() *
                                whitener.eigenvectors().transpose();
  Eigen::MatrixXd m = white * c_ta * white.transpose();
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> rot(m);
  if (rot.info() != Eigen::Success) throw std::runtime_error("gevd: eigendecomposition failed");

  // Eigen sorts ascending; flip to descending. Equal eigenvalues keep the
  // solver's order, so ties resolve by first occurrence.
  const Eigen::Index n = c.rows();
  Gevd out;
  out.u.resize(n, n);
  out.eigenvalues.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.eigenvalues(i) = rot.eigenvalues()(n - 1 - i);
    out.u.row(i) = rot.eigenvectors().col(n - 1 - i).transpose() * white;
  }
  return out;
}

SpatialFilter fit_spatial_filter(std::span<const Epoch> ta, std::span<const Epoch> nt,
                                 int n_components) {
  const Eigen::MatrixXd c = shrink(mean_covariance(ta, nt), kCovarianceShrinkage);
  if (n_components < 1 || n_components > c.rows()) {
    throw std::invalid_argument("n_components must be in [1, n_channels]");
  }
  const Eigen::MatrixXd c_ta = evoked_covariance(ta);
  const Gevd g = gevd(c, c_ta);

  const double whiten_residual = (g.u * c * g.u.transpose() -
                                  Eigen::MatrixXd::Identity(c.rows(), c.cols()))
                                     .norm();
  Eigen::MatrixXd joint = g.u * c_ta * g.u.transpose();
  joint.diagonal().setZero();
  if (whiten_residual >= 1e-8 || joint.norm() >= 1e-8) {
    throw std::runtime_error("gevd residuals out of tolerance (whitening " +
                             std::to_string(whiten_residual) + ", off-diagonal " +
                             std::to_string(joint.norm()) + ")");
  }

  SpatialFilter f;
  f.n_components = n_components;
  f.w = g.u.topRows(n_components);
  f.eigenvalues = g.eigenvalues.head(n_components);
  return f;
}

Eigen::MatrixXd apply_filter(const SpatialFilter& filter, const Eigen::MatrixXd& epoch) {
  if (filter.w.cols() != epoch.rows()) {
    throw std::invalid_argument("apply_filter: epoch has " + std::to_string(epoch.rows()) +
                                " channels, filter expects " + std::to_string(filter.w.cols()));
  }
  return filter.w * epoch;
}

std::string spatial_filter_to_json(const SpatialFilter& f) {
  nlohmann::json j;
  j["w"] = matrix_to_json(f.w);
  j["eigenvalues"] = std::vector<double>(f.eigenvalues.data(),
                                         f.eigenvalues.data() + f.eigenvalues.size());
  j["n_components"] = f.n_components;
  return j.dump(2);
}

SpatialFilter spatial_filter_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  SpatialFilter f;
  f.w = matrix_from_json(j.at("w"));
  const auto ev = j.at("eigenvalues").get<std::vector<double>>();
  f.eigenvalues = Eigen::Map<const Eigen::VectorXd>(ev.data(), static_cast<Eigen::Index>(ev.size()));
  f.n_components = j.at("n_components").get<int>();
  return f;
}

}  // namespace p300
