#pragma once

#include "p300/types.hpp"

#include <optional>

namespace p300 {

struct EpochExtraction {
  EpochSet set;
  int dropped{0};                        // events whose window overran the recording
  std::vector<std::size_t> kept_events;  // indices into Recording.events, epoch i <- event kept_events[i]
};

/// Cuts one latency-corrected epoch per event: start = sample_index +
/// round_half_away(latency_ms * fs / 1000), length = round_half_away(window *
/// fs). Epochs overrunning the recording are dropped and counted, never
/// padded.
EpochExtraction extract_epochs(const Recording& rec, double window_seconds,
                               const LatencyTable& latency);

/// Elementwise arithmetic mean over the selected epochs (all epochs when
/// filter is empty). Throws on an empty selection.
Eigen::MatrixXd average_epochs(const EpochSet& set, std::optional<EpochLabel> filter);

/// mean(TA) - mean(NT); throws when either label is missing.
DifferenceWave difference_wave(const EpochSet& set);

struct GrandAverage {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd std_error;  // sd/sqrt(n) per cell; zeros when n == 1
  int n{0};
  bool std_error_valid{false};  // false for n == 1, where the variance is undefined
};

GrandAverage grand_average(const std::vector<DifferenceWave>& waves);

struct PeakWindow {
  std::string component;
  double t_start_ms{0.0};
  double t_end_ms{0.0};
  bool positive{true};  // max for positive components, min for negative ones
};

struct PeakRow {
  std::string component;
  std::string channel;
  double latency_ms{0.0};
  double amplitude_uv{0.0};
};

/// Per window and channel extremum with its latency. Ties resolve to the
/// earliest sample, so a flat wave reports the window start.
std::vector<PeakRow> peak_summary(const Eigen::MatrixXd& wave, double sample_rate,
                                  const std::vector<std::string>& channel_labels,
                                  const std::vector<PeakWindow>& windows);

}  // namespace p300
