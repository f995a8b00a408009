#pragma once

#include "p300/epochs.hpp"
#include "p300/riemann.hpp"

#include <cstdint>
#include <random>
#include <span>

namespace p300 {

/// One subject-condition session cut into epochs, keeping each epoch aligned
/// with the TagEvent that produced it (flash groups and targets are needed
/// for symbol selection).
struct SessionEpochs {
  std::string subject;
  Condition condition{Condition::PC};
  EpochSet set;
  std::vector<TagEvent> events;  // events[i] produced set.epochs[i]

  std::vector<int> block_ids() const;                 // sorted, unique
  std::vector<std::size_t> block_epochs(int b) const; // epoch indices, event order
};

SessionEpochs make_session_epochs(const Recording& preprocessed, double window_seconds,
                                  const LatencyTable& latency);

struct TimingConfig {
  double soa_ms{130.0};    // flash onset asynchrony
  double pause_ms{2000.0}; // feedback pause after each block
};

/// Seconds to select one symbol with r repetitions: r * 12 * SOA + pause.
double selection_seconds(const TimingConfig& timing, int r);

struct CvConfig {
  std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int n_random_sets{100};
  std::vector<int> repetitions{1, 2, 3, 4, 5};
  std::uint64_t seed{0};
  int n_components{4};
  FeatureMode feature_mode{FeatureMode::augmented};
  TimingConfig timing{};
};

/// Random block-granular partition. The train share is round-half-up of
/// fraction * n, clamped to [1, n-1]; throws when no valid split exists.
std::pair<std::vector<int>, std::vector<int>> split_blocks(const std::vector<int>& blocks,
                                                           double fraction, std::mt19937_64& rng);

/// Averages one block's epochs over its first r repetitions, pairing epochs
/// by within-repetition class order: the j-th target (j = 0,1) and the j-th
/// nontarget (j = 0..9) of each repetition are averaged together, preserving
/// the 2 TA + 10 NT structure.
std::vector<Epoch> repetition_average(std::span<const Epoch> block_epochs, int r);

/// Fitted pipeline with its training provenance; evaluation asserts that
/// test blocks never intersect train_blocks.
struct TrainedModel {
  MdmModel model;
  std::vector<int> train_blocks;  // sorted
};

TrainedModel train_model(const SessionEpochs& session, const std::vector<int>& train_blocks,
                         int n_components = 4, FeatureMode mode = FeatureMode::augmented);

SpdMatrix feature_of(const MdmModel& model, const Epoch& epoch);

/// Score-sum symbol decoder: each flash adds its score to the six symbols of
/// its group; returns the argmax symbol, lowest index on ties.
int select_symbol(std::span<const double> flash_scores,
                  std::span<const std::array<int, kGroupSize>> flash_groups);

/// Fraction of test blocks whose selected symbol equals the block target,
/// using the 12*r flashes of the first r repetitions.
double hit_rate(const TrainedModel& trained, const SessionEpochs& session,
                const std::vector<int>& test_blocks, int r);

/// 1/2 (A/(A+B) + C/(C+D)); A,B = correctly/incorrectly classified nontarget
/// flashes, C,D the same for target flashes.
double balanced_accuracy(long a, long b, long c, long d);

/// Mann-Whitney ROC-AUC: probability a random TA score exceeds a random NT
/// score, ties counted one half.
double roc_auc(std::span<const double> scores, std::span<const EpochLabel> labels);

struct ItrResult {
  double bits_per_minute{0.0};
  bool below_chance{false};  // accuracy below 1/N reports 0 with this flag set
};

ItrResult itr(int n_symbols, double accuracy, double seconds_per_selection);

struct SplitMetrics {
  double hr{0.0};
  double ba{0.0};
  double auc{0.0};
};

/// HR over raw flashes plus flash-level BA / ROC-AUC over the
/// repetition-averaged test epochs.
SplitMetrics evaluate_split(const TrainedModel& trained, const SessionEpochs& session,
                            const std::vector<int>& test_blocks, int r);

/// evaluate_split over several repetition counts at once; single-flash
/// scores are computed once per block and reused, the results are identical.
std::vector<SplitMetrics> evaluate_repetitions(const TrainedModel& trained,
                                               const SessionEpochs& session,
                                               const std::vector<int>& test_blocks,
                                               std::span<const int> repetitions);

struct MetricCell {
  double hr_mean{0.0}, hr_se{0.0};
  double ba_mean{0.0}, ba_se{0.0};
  double auc_mean{0.0}, auc_se{0.0};
  double itr_bits_per_minute{0.0};
};

struct CurveAuc {
  double hr{0.0}, ba{0.0}, auc{0.0};
};

struct MetricsReport {
  std::string subject;
  Condition condition{Condition::PC};
  std::vector<double> fractions;
  std::vector<int> repetitions;
  std::vector<std::vector<MetricCell>> cells;  // [fraction][repetition]
  std::vector<CurveAuc> repetition_curve_auc;  // per fraction: trapezoid over the r axis
  std::vector<CurveAuc> fraction_curve_auc;    // per repetition: trapezoid over the fraction axis
};

/// The cross-validation grid: for every training fraction, n_random_sets
/// seeded random splits, each evaluated at every repetition count. Means and
/// standard errors are over the random sets; results are bit-identical for a
/// fixed seed regardless of n_workers.
MetricsReport training_curve(const SessionEpochs& session, const CvConfig& cfg, int n_workers = 1);

std::string metrics_report_to_json(const MetricsReport& report);

}  // namespace p300
