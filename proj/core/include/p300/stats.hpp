#pragma once

#include "p300/layout.hpp"
#include "p300/types.hpp"

#include <cstdint>
#include <span>

namespace p300 {

/// Student-t CDF and quantile (regularized incomplete beta evaluation).
double student_t_cdf(double t, int df);
double student_t_quantile(double p, int df);

/// Per-cell paired t statistic of (A - B) across subjects. Throws on shape
/// mismatch, n < 2, and on cells with zero variance but nonzero mean (the
/// t value would be infinite).
Eigen::MatrixXd paired_tmap(std::span<const DifferenceWave> a, std::span<const DifferenceWave> b);

struct Cluster {
  std::vector<std::pair<int, int>> members;  // (channel, sample), sorted
  double mass{0.0};                          // sum of member t values
  int sign{0};                               // +1 or -1
  double p_value{1.0};
  bool significant{false};
};

/// Groups suprathreshold cells of each sign by spatiotemporal connectivity:
/// consecutive samples on one channel, or layout-adjacent channels at one
/// sample. Returned clusters are sorted by decreasing |mass|.
std::vector<Cluster> form_clusters(const Eigen::MatrixXd& tmap, const ElectrodeLayout& layout,
                                   double threshold);

struct PermutationConfig {
  int n_permutations{5000};
  double cluster_alpha{0.025};  // per-tail threshold quantile for cluster forming
  double alpha{0.05};           // family-wise significance level
  std::uint64_t seed{0};
};

struct ClusterResult {
  std::vector<Cluster> clusters;
  Eigen::MatrixXd tmap;
  double threshold{0.0};  // t critical value actually used
  double alpha{0.05};
  int n_permutations{0};
  int n_subjects{0};

  int n_significant() const;
};

/// Paired two-sided cluster-based permutation test: the null distribution of
/// the maximum absolute cluster mass is built from random per-subject sign
/// flips of (A - B); each observed cluster gets
/// p = (1 + #{null >= observed}) / (1 + n_permutations).
/// Deterministic for a fixed seed, for any worker count.
ClusterResult permutation_test(std::span<const DifferenceWave> a,
                               std::span<const DifferenceWave> b, const ElectrodeLayout& layout,
                               const PermutationConfig& cfg = {}, int n_workers = 1);

std::string cluster_result_to_json(const ClusterResult& result);

/// CSV mask: channel,label,sample,cluster_id,significant rows for every
/// member cell of every cluster.
std::string cluster_mask_csv(const ClusterResult& result, const ElectrodeLayout& layout);

}  // namespace p300
