#include "p300/preprocess.hpp"

#include "p300/parallel.hpp"

#include <cmath>
#include <stdexcept>

namespace p300 {

Recording preprocess(const Recording& rec, const PreprocessConfig& cfg, int n_workers) {
  validate_recording(rec);
  if (cfg.decimation < 1 || std::fmod(rec.sample_rate, cfg.decimation) != 0.0) {
    throw std::invalid_argument("decimation factor " + std::to_string(cfg.decimation) +
                                " does not divide sample rate " + std::to_string(rec.sample_rate));
  }

  const IirFilter band = design_bandpass(cfg.band_low_hz, cfg.band_high_hz, cfg.band_order,
                                         rec.sample_rate);
  const IirFilter notch = design_notch(cfg.notch_hz, cfg.notch_q, rec.sample_rate);

  const Eigen::Index n_in = rec.n_samples();
  const Eigen::Index n_out = (n_in + cfg.decimation - 1) / cfg.decimation;

  Recording out;
  out.subject_id = rec.subject_id;
  out.condition = rec.condition;
  out.sample_rate = rec.sample_rate / cfg.decimation;
  out.channel_labels = rec.channel_labels;
  out.samples.resize(rec.n_channels(), n_out);

  parallel_for(static_cast<int>(rec.n_channels()), n_workers, [&](int c) {
    std::vector<double> channel(static_cast<std::size_t>(n_in));
    for (Eigen::Index s = 0; s < n_in; ++s) channel[static_cast<std::size_t>(s)] = rec.samples(c, s);
    std::vector<double> filtered = filtfilt(band, channel);
    filtered = filtfilt(notch, filtered);
    for (Eigen::Index s = 0; s < n_out; ++s) {
      out.samples(c, s) = static_cast<float>(filtered[static_cast<std::size_t>(s * cfg.decimation)]);
    }
  });

  out.events = rec.events;
  for (TagEvent& ev : out.events) ev.sample_index /= cfg.decimation;
  return out;
}

}  // namespace p300
