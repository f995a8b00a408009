#pragma once

#include "p300/iir.hpp"
#include "p300/types.hpp"

namespace p300 {

struct PreprocessConfig {
  double band_low_hz{1.0};
  double band_high_hz{20.0};
  int band_order{4};
  double notch_hz{50.0};
  double notch_q{35.0};
  int decimation{4};
};

/// Full preprocessing chain: zero-phase bandpass, zero-phase notch, then
/// decimation by keeping every decimation-th sample. Event indices are
/// remapped to floor(index / decimation); the sample rate divides by the
/// decimation factor, which must divide it evenly. Channels are filtered
/// independently, so n_workers never changes the result.
Recording preprocess(const Recording& rec, const PreprocessConfig& cfg = {}, int n_workers = 1);

}  // namespace p300
