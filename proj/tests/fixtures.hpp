#pragma once

#include "p300/eval.hpp"
#include "p300/preprocess.hpp"
#include "p300/rng.hpp"
#include "p300/sim.hpp"

#include <map>
#include <tuple>

namespace p300::testing {

/// Simulated, preprocessed, epoched session. Cached: building one costs a
/// few seconds of filtering. soa_ms above ~1400 makes the 600 ms epochs
/// non-overlapping (the default 130 ms overlaps neighbors, as the real
/// protocol does).
inline const SessionEpochs& synth_session(double snr, std::uint64_t seed,
                                          Condition cond = Condition::PC,
                                          double window_seconds = 0.6, double soa_ms = 130.0) {
  static std::map<std::tuple<double, std::uint64_t, Condition, double, double>, SessionEpochs>
      cache;
  const auto key = std::make_tuple(snr, seed, cond, window_seconds, soa_ms);
  auto it = cache.find(key);
  if (it == cache.end()) {
    std::mt19937_64 rng = make_rng(seed);
    FlashTiming timing;
    timing.soa_ms = soa_ms;
    const SessionSchedule schedule = gen_session(rng, timing);
    SynthOptions opt;
    opt.condition = cond;
    opt.subject = "sim" + std::to_string(seed);
    const Recording rec = synth_recording(schedule, default_templates(cond), snr, rng, opt);
    const Recording pre = preprocess(rec);
    // simulated templates are placed at the tag sample itself, so no latency shift
    const LatencyTable zero{0.0, 0.0, 0.0, 0.0};
    it = cache.emplace(key, make_session_epochs(pre, window_seconds, zero)).first;
  }
  return it->second;
}

}  // namespace p300::testing
