#pragma once

#include "p300/spatial.hpp"

#include <span>
#include <string_view>

namespace p300 {

/// Dense symmetric positive-definite matrix. Construction symmetrizes and
/// rejects inputs whose asymmetry exceeds 1e-10; positive definiteness is
/// enforced where the matrix is factorized.
class SpdMatrix {
 public:
  SpdMatrix() = default;
  explicit SpdMatrix(Eigen::MatrixXd m);

  const Eigen::MatrixXd& mat() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }

 private:
  Eigen::MatrixXd m_;
};

enum class FeatureMode { augmented, plain };

FeatureMode feature_mode_from_string(std::string_view s);
std::string_view to_string(FeatureMode m);

/// Covariance feature of one spatially filtered epoch Z. plain: (1/T) Z Z^T.
/// augmented: (1/T) [P; Z][P; Z]^T with the target prototype P stacked above
/// Z, doubling the dimension. The result is shrinkage-regularized toward
/// scaled identity; a zero epoch (no trace to scale by) is an error.
SpdMatrix epoch_feature(const Eigen::MatrixXd& filtered_epoch, const Eigen::MatrixXd& prototype,
                        FeatureMode mode, double shrinkage = 1e-6);

/// Symmetric log-determinant divergence,
/// delta^2(A, B) = log det((A+B)/2) - 1/2 log det(A B).
double logdet_divergence_sq(const SpdMatrix& a, const SpdMatrix& b);

/// delta = sqrt(delta^2): nonnegative, zero iff A == B, symmetric, and
/// invariant under congruence A -> M A M^T.
double logdet_divergence(const SpdMatrix& a, const SpdMatrix& b);

struct LogdetMeanOptions {
  double tolerance{1e-9};  // relative Frobenius residual between iterates
  int max_iterations{100};
};

/// Log-det mean: the fixed point G = [ (1/N) sum ((G + C_i)/2)^-1 ]^-1,
/// iterated from the arithmetic mean. Throws on non-convergence.
SpdMatrix logdet_mean(std::span<const SpdMatrix> matrices, const LogdetMeanOptions& opt = {});

/// Minimum-distance-to-mean classifier state: spatial filter, target
/// prototype (class-mean filtered target ERP) and per-class divergence means.
struct MdmModel {
  SpatialFilter filter;       // empty when the model is used on precomputed features
  Eigen::MatrixXd prototype;  // n_components x n_window_samples
  SpdMatrix mean_ta;
  SpdMatrix mean_nt;
  FeatureMode mode{FeatureMode::augmented};
};

/// Class means from labeled features; filter and prototype are attached by
/// the training harness.
MdmModel mdm_fit(std::span<const SpdMatrix> ta_features, std::span<const SpdMatrix> nt_features,
                 FeatureMode mode = FeatureMode::augmented, const LogdetMeanOptions& opt = {});

/// delta(feature, G_NT) - delta(feature, G_TA); positive means target-like.
double mdm_score(const MdmModel& model, const SpdMatrix& feature);

/// TA iff mdm_score > 0; ties go to NT.
EpochLabel mdm_classify(const MdmModel& model, const SpdMatrix& feature);

std::string mdm_model_to_json(const MdmModel& model);
MdmModel mdm_model_from_json(const std::string& text);

}  // namespace p300
