#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace p300 {

/// Presentation condition of a session.
enum class Condition { PC, VR };

std::string_view to_string(Condition c);
Condition condition_from_string(std::string_view s);

inline constexpr int kSymbolCount = 36;      // 6x6 matrix, row-major indices 0..35
inline constexpr int kGroupSize = 6;         // symbols per flash
inline constexpr int kFlashesPerRepetition = 12;
inline constexpr int kRepetitionsPerBlock = 5;
inline constexpr int kBlocksPerSession = 12;
inline constexpr int kTargetFlashesPerRepetition = 2;

/// One tagged flash onset in the EEG stream.
struct TagEvent {
  std::int64_t sample_index{0};
  std::array<int, kGroupSize> flash_group{};  // sorted ascending, values in [0,35]
  int target_symbol{0};
  bool is_target{false};
  int block_index{0};       // [0,11]
  int repetition_index{0};  // [0,4]

  bool group_contains(int symbol) const;
};

/// Multichannel EEG recording of one session (one subject, one condition).
///
/// samples is n_channels x n_samples in microvolts. Raw values are kept in
/// float32, the storage precision of the on-disk formats; all downstream
/// math promotes to double.
struct Recording {
  std::string subject_id;
  Condition condition{Condition::PC};
  double sample_rate{0.0};  // Hz
  std::vector<std::string> channel_labels;
  Eigen::MatrixXf samples;
  std::vector<TagEvent> events;

  Eigen::Index n_channels() const { return samples.rows(); }
  Eigen::Index n_samples() const { return samples.cols(); }
};

/// Throws std::invalid_argument unless all Recording/TagEvent invariants hold:
/// unique labels matching the sample rows, positive sample rate, events
/// strictly increasing and in range, well-formed flash groups.
void validate_recording(const Recording& rec);

/// Session-structure accounting on top of validate_recording: 12 events per
/// (block, repetition), exactly 2 of them targets, all five repetitions of
/// all twelve blocks present (720 events, 120 targets).
void validate_session(const Recording& rec);

enum class EpochLabel { TA, NT };  // target / nontarget

std::string_view to_string(EpochLabel l);

/// Fixed-window channel x time slice cut after one tag.
struct Epoch {
  Eigen::MatrixXd data;  // n_channels x n_window_samples, microvolts
  EpochLabel label{EpochLabel::NT};
  int block_index{0};
  int repetition_index{0};
  Condition condition{Condition::PC};
};

struct EpochSet {
  std::vector<Epoch> epochs;
  double window_seconds{0.0};
  double sample_rate{0.0};
  std::vector<std::string> channel_labels;

  std::size_t count(EpochLabel l) const;
};

/// Per-condition mean display-to-tag latency, applied when cutting epochs.
struct LatencyTable {
  double pc_mean_ms{38.1};
  double pc_sd_ms{5.3};
  double vr_mean_ms{117.23};
  double vr_sd_ms{5.81};

  double mean_ms(Condition c) const { return c == Condition::PC ? pc_mean_ms : vr_mean_ms; }
};

/// mean(TA epochs) - mean(NT epochs) for one subject and condition.
struct DifferenceWave {
  Eigen::MatrixXd data;  // n_channels x n_window_samples
};

/// round-half-away-from-zero, the latency/window rounding rule.
std::int64_t round_half_away(double x);

}  // namespace p300
