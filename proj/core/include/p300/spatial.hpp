#pragma once

#include "p300/types.hpp"

#include <span>

namespace p300 {

/// C = (1/(K+L)) sum over all epochs of X X^T.
Eigen::MatrixXd mean_covariance(std::span<const Epoch> ta, std::span<const Epoch> nt);

/// C_TA = Xbar Xbar^T with Xbar the arithmetic mean of the target epochs.
Eigen::MatrixXd evoked_covariance(std::span<const Epoch> ta);

/// (1-gamma) C + gamma tr(C)/n I.
Eigen::MatrixXd shrink(const Eigen::MatrixXd& c, double gamma);

inline constexpr double kCovarianceShrinkage = 1e-6;

struct Gevd {
  Eigen::MatrixXd u;            // rows are generalized eigenvectors, U C U^T = I
  Eigen::VectorXd eigenvalues;  // diag(U C_TA U^T), descending
};

/// Generalized eigenvalue decomposition via inverse-square-root whitening of
/// C followed by a symmetric eigendecomposition. Throws when C is not
/// strictly positive definite. The eigenvalues equal those of C^-1 C_TA.
Gevd gevd(const Eigen::MatrixXd& c, const Eigen::MatrixXd& c_ta);

struct SpatialFilter {
  Eigen::MatrixXd w;            // n_components x n_channels
  Eigen::VectorXd eigenvalues;  // the n_components retained eigenvalues, descending
  int n_components{0};
};

/// Fits the GEVD filter on training epochs: shrinkage-regularized mean
/// covariance against the evoked target covariance, keeping the n_components
/// eigenvectors of largest eigenvalue. Whitening and joint-diagonalization
/// residuals are checked (< 1e-8) on every fit.
SpatialFilter fit_spatial_filter(std::span<const Epoch> ta, std::span<const Epoch> nt,
                                 int n_components = 4);

/// W * data; dimensionality reduction of one epoch.
Eigen::MatrixXd apply_filter(const SpatialFilter& filter, const Eigen::MatrixXd& epoch);

std::string spatial_filter_to_json(const SpatialFilter& f);
SpatialFilter spatial_filter_from_json(const std::string& text);

}  // namespace p300
