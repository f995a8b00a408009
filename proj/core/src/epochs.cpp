#include "p300/epochs.hpp"

#include <cmath>
#include <stdexcept>

namespace p300 {

EpochExtraction extract_epochs(const Recording& rec, double window_seconds,
                               const LatencyTable& latency) {
  validate_recording(rec);
  if (latency.pc_mean_ms < 0 || latency.vr_mean_ms < 0) {
    throw std::invalid_argument("tag latencies must be nonnegative");
  }
  const double fs = rec.sample_rate;
  const std::int64_t shift = round_half_away(latency.mean_ms(rec.condition) * fs / 1000.0);
  const std::int64_t window = round_half_away(window_seconds * fs);
  if (window < 1) throw std::invalid_argument("epoch window is empty at this sample rate");

  EpochExtraction out;
  out.set.window_seconds = window_seconds;
  out.set.sample_rate = fs;
  out.set.channel_labels = rec.channel_labels;

  for (std::size_t i = 0; i < rec.events.size(); ++i) {
    const TagEvent& ev = rec.events[i];
    const std::int64_t start = ev.sample_index + shift;
    if (start < 0 || start + window > rec.n_samples()) {
      ++out.dropped;
      continue;
    }
    Epoch ep;
    ep.data = rec.samples.block(0, start, rec.n_channels(), window).cast<double>();
    ep.label = ev.is_target ? EpochLabel::TA : EpochLabel::NT;
    ep.block_index = ev.block_index;
    ep.repetition_index = ev.repetition_index;
    ep.condition = rec.condition;
    out.set.epochs.push_back(std::move(ep));
    out.kept_events.push_back(i);
  }
  return out;
}

Eigen::MatrixXd average_epochs(const EpochSet& set, std::optional<EpochLabel> filter) {
  Eigen::MatrixXd sum;
  int n = 0;
  for (const Epoch& ep : set.epochs) {
    if (filter && ep.label != *filter) continue;
    if (n == 0) {
      sum = ep.data;
    } else {
      sum += ep.data;
    }
    ++n;
  }
  if (n == 0) throw std::invalid_argument("average_epochs: empty selection");
  return sum / n;
}

DifferenceWave difference_wave(const EpochSet& set) {
  if (set.count(EpochLabel::TA) == 0 || set.count(EpochLabel::NT) == 0) {
    throw std::invalid_argument("difference_wave needs both TA and NT epochs");
  }
  return {average_epochs(set, EpochLabel::TA) - average_epochs(set, EpochLabel::NT)};
}

GrandAverage grand_average(const std::vector<DifferenceWave>& waves) {
  if (waves.empty()) throw std::invalid_argument("grand_average: empty input");
  const Eigen::Index rows = waves.front().data.rows();
  const Eigen::Index cols = waves.front().data.cols();
  for (const DifferenceWave& w : waves) {
    if (w.data.rows() != rows || w.data.cols() != cols) {
      throw std::invalid_argument("grand_average: inhomogeneous wave shapes");
    }
  }

  GrandAverage out;
  out.n = static_cast<int>(waves.size());
  out.mean = Eigen::MatrixXd::Zero(rows, cols);
  for (const DifferenceWave& w : waves) out.mean += w.data;
  out.mean /= out.n;

  out.std_error = Eigen::MatrixXd::Zero(rows, cols);
  out.std_error_valid = out.n > 1;
  if (out.std_error_valid) {
    for (const DifferenceWave& w : waves) {
      out.std_error.array() += (w.data - out.mean).array().square();
    }
    out.std_error = (out.std_error / (out.n - 1)).cwiseSqrt() / std::sqrt(double(out.n));
  }
  return out;
}

std::vector<PeakRow> peak_summary(const Eigen::MatrixXd& wave, double sample_rate,
                                  const std::vector<std::string>& channel_labels,
                                  const std::vector<PeakWindow>& windows) {
  if (static_cast<Eigen::Index>(channel_labels.size()) != wave.rows()) {
    throw std::invalid_argument("peak_summary: label count does not match wave rows");
  }
  const double span_ms = 1000.0 * wave.cols() / sample_rate;
  std::vector<PeakRow> rows;
  for (const PeakWindow& win : windows) {
    if (win.t_start_ms < 0 || win.t_end_ms > span_ms || win.t_start_ms > win.t_end_ms) {
      throw std::invalid_argument("peak window '" + win.component + "' outside epoch span");
    }
    const auto first = static_cast<Eigen::Index>(std::ceil(win.t_start_ms * sample_rate / 1000.0));
    auto last = static_cast<Eigen::Index>(std::floor(win.t_end_ms * sample_rate / 1000.0));
    last = std::min(last, wave.cols() - 1);
    for (Eigen::Index c = 0; c < wave.rows(); ++c) {
      Eigen::Index best = first;
      for (Eigen::Index s = first; s <= last; ++s) {
        const bool better = win.positive ? wave(c, s) > wave(c, best) : wave(c, s) < wave(c, best);
        if (better) best = s;
      }
      rows.push_back({win.component, channel_labels[static_cast<std::size_t>(c)],
                      1000.0 * best / sample_rate, wave(c, best)});
    }
  }
  return rows;
}

}  // namespace p300
