#pragma once

#include "p300/types.hpp"

#include <random>

namespace p300 {

using FlashGroup = std::array<int, kGroupSize>;

struct FlashTiming {
  double soa_ms{130.0};      // 100 ms flash + 30 ms gap
  double pause_ms{2000.0};   // feedback pause after each block
  double lead_in_ms{1000.0}; // quiet margin at both ends of the recording
};

struct ScheduledBlock {
  int target_symbol{0};
  std::array<std::array<FlashGroup, kFlashesPerRepetition>, kRepetitionsPerBlock> repetitions{};
};

struct SessionSchedule {
  std::array<ScheduledBlock, kBlocksPerSession> blocks{};
  FlashTiming timing{};
};

/// 12 flash groups covering every symbol exactly twice: two independent
/// uniform random partitions of the 36 symbols into groups of six, shuffled
/// into presentation order.
std::array<FlashGroup, kFlashesPerRepetition> gen_repetition(std::mt19937_64& rng);

/// 12 blocks of 5 repetitions with one uniform random target per block.
SessionSchedule gen_session(std::mt19937_64& rng, const FlashTiming& timing = {});

/// Throws unless every repetition flashes each symbol exactly twice and every
/// block flashes its target exactly 10 times.
void validate_schedule(const SessionSchedule& schedule);

enum class Feedback { correct, incorrect };

/// The random feedback of the protocol: Bernoulli(p_correct), 0.7 by default.
Feedback draw_feedback(std::mt19937_64& rng, double p_correct = 0.7);

/// Flash onsets of a schedule as TagEvents at the given sample rate.
std::vector<TagEvent> schedule_events(const SessionSchedule& schedule, double sample_rate);

struct ErpComponent {
  std::string name;
  double amplitude_uv{0.0};
  double latency_ms{0.0};
  double width_ms{0.0};             // gaussian sigma
  Eigen::VectorXd spatial_weights;  // one weight per channel
  bool on_nontarget{false};         // early sensory components fire on every flash
  double nontarget_scale{0.5};
};

struct ErpTemplates {
  std::vector<ErpComponent> components;
};

/// Gaussian-bump component set reproducing the qualitative peak structure of
/// the two conditions (N100, P200, P300, N700); VR gets a wider and larger
/// P200, a later and smaller P300, an earlier N100.
ErpTemplates default_templates(Condition condition);

struct SynthOptions {
  double sample_rate{512.0};
  double noise_uv{10.0};  // background RMS per channel
  std::string subject{"sim"};
  Condition condition{Condition::PC};
};

/// Synthetic 16-channel session: 1/f background noise plus the template
/// responses at every flash (all components on targets, early components
/// scaled down on nontargets), events embedded per schedule. snr scales the
/// templates against the fixed noise RMS; snr = 0 is pure noise and
/// snr = infinity is noiseless. Components reaching past the inter-flash
/// interval are reported through `warnings` when given.
Recording synth_recording(const SessionSchedule& schedule, const ErpTemplates& templates,
                          double snr, std::mt19937_64& rng, const SynthOptions& opt = {},
                          std::vector<std::string>* warnings = nullptr);

}  // namespace p300
