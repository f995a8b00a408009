#include "p300/sim.hpp"

#include "p300/layout.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace p300 {

namespace {

// One McCartney pink noise source: one octave-ranked white row is refreshed
// per sample (picked by the trailing zeros of a counter) plus a fresh white
// sample on top.
class PinkNoise {
 public:
  explicit PinkNoise(std::mt19937_64& rng) : rng_(rng) {
    for (double& r : rows_) r = white();
  }

  double operator()() {
    const unsigned idx = std::min<unsigned>(std::countr_zero(++counter_), kRows - 1);
    rows_[idx] = white();
    const double sum = std::accumulate(rows_.begin(), rows_.end(), 0.0);
    return (sum + white()) / (kRows + 1);
  }

 private:
  double white() { return dist_(rng_); }

  static constexpr unsigned kRows = 16;
  std::mt19937_64& rng_;
  std::normal_distribution<double> dist_{0.0, 1.0};
  std::array<double, kRows> rows_{};
  std::uint64_t counter_{0};
};

Eigen::VectorXd weights_by_label(const std::vector<std::string>& labels,
                                 const std::map<std::string, double>& named, double rest) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto it = named.find(labels[i]);
    w(static_cast<Eigen::Index>(i)) = it == named.end() ? rest : it->second;
  }
  return w;
}

double block_duration_ms(const FlashTiming& t) {
  return kRepetitionsPerBlock * kFlashesPerRepetition * t.soa_ms + t.pause_ms;
}

double flash_onset_ms(const FlashTiming& t, int block, int flash_in_block) {
  return t.lead_in_ms + block * block_duration_ms(t) + flash_in_block * t.soa_ms;
}

}  // namespace

std::array<FlashGroup, kFlashesPerRepetition> gen_repetition(std::mt19937_64& rng) {
  std::array<FlashGroup, kFlashesPerRepetition> groups;
  std::array<int, kSymbolCount> symbols;
  for (int half = 0; half < 2; ++half) {
    std::iota(symbols.begin(), symbols.end(), 0);
    std::shuffle(symbols.begin(), symbols.end(), rng);
    for (int g = 0; g < kFlashesPerRepetition / 2; ++g) {
      FlashGroup& group = groups[static_cast<std::size_t>(half * 6 + g)];
      std::copy_n(symbols.begin() + g * kGroupSize, kGroupSize, group.begin());
      std::sort(group.begin(), group.end());
    }
  }
  std::shuffle(groups.begin(), groups.end(), rng);
  return groups;
}

SessionSchedule gen_session(std::mt19937_64& rng, const FlashTiming& timing) {
  if (!(timing.soa_ms > 0) || timing.pause_ms < 0 || timing.lead_in_ms < 0) {
    throw std::invalid_argument("flash timing must be positive");
  }
  SessionSchedule schedule;
  schedule.timing = timing;
  std::uniform_int_distribution<int> target(0, kSymbolCount - 1);
  for (ScheduledBlock& block : schedule.blocks) {
    block.target_symbol = target(rng);
    for (auto& rep : block.repetitions) rep = gen_repetition(rng);
  }
  validate_schedule(schedule);
  return schedule;
}

void validate_schedule(const SessionSchedule& schedule) {
  for (std::size_t b = 0; b < schedule.blocks.size(); ++b) {
    const ScheduledBlock& block = schedule.blocks[b];
    int target_flashes = 0;
    for (const auto& rep : block.repetitions) {
      std::array<int, kSymbolCount> count{};
      for (const FlashGroup& group : rep) {
        for (int s : group) {
          if (s < 0 || s >= kSymbolCount) {
            throw std::invalid_argument("schedule symbol out of range");
          }
          ++count[static_cast<std::size_t>(s)];
        }
        if (std::find(group.begin(), group.end(), block.target_symbol) != group.end()) {
          ++target_flashes;
        }
      }
      for (int c : count) {
        if (c != 2) {
          throw std::invalid_argument("block " + std::to_string(b) +
                                      ": a repetition does not flash every symbol exactly twice");
        }
      }
    }
    if (target_flashes != kRepetitionsPerBlock * kTargetFlashesPerRepetition) {
      throw std::invalid_argument("block " + std::to_string(b) + ": target flashed " +
                                  std::to_string(target_flashes) + " times, expected 10");
    }
  }
}

Feedback draw_feedback(std::mt19937_64& rng, double p_correct) {
  if (p_correct < 0.0 || p_correct > 1.0) {
    throw std::invalid_argument("feedback probability must be in [0,1]");
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng) < p_correct ? Feedback::correct : Feedback::incorrect;
}

std::vector<TagEvent> schedule_events(const SessionSchedule& schedule, double sample_rate) {
  std::vector<TagEvent> events;
  events.reserve(kBlocksPerSession * kRepetitionsPerBlock * kFlashesPerRepetition);
  for (int b = 0; b < kBlocksPerSession; ++b) {
    const ScheduledBlock& block = schedule.blocks[static_cast<std::size_t>(b)];
    for (int rep = 0; rep < kRepetitionsPerBlock; ++rep) {
      for (int f = 0; f < kFlashesPerRepetition; ++f) {
        TagEvent ev;
        const double t = flash_onset_ms(schedule.timing, b, rep * kFlashesPerRepetition + f);
        ev.sample_index = round_half_away(t * sample_rate / 1000.0);
        ev.flash_group = block.repetitions[static_cast<std::size_t>(rep)][static_cast<std::size_t>(f)];
        ev.target_symbol = block.target_symbol;
        ev.is_target = ev.group_contains(block.target_symbol);
        ev.block_index = b;
        ev.repetition_index = rep;
        events.push_back(ev);
      }
    }
  }
  return events;
}

ErpTemplates default_templates(Condition condition) {
  const std::vector<std::string> labels = default_layout().labels;
  const bool vr = condition == Condition::VR;

  const Eigen::VectorXd occipital = weights_by_label(
      labels, {{"O1", 1.0}, {"OZ", 1.0}, {"O2", 1.0}, {"P7", 0.5}, {"P8", 0.5},
               {"P3", 0.3}, {"P4", 0.3}, {"PZ", 0.3}},
      0.05);
  const Eigen::VectorXd frontocentral = weights_by_label(
      labels, {{"FZ", 1.0}, {"CZ", 0.9}, {"FC5", 0.6}, {"FC6", 0.6}, {"FP1", 0.5},
               {"FP2", 0.5}, {"PZ", 0.3}},
      0.1);
  const Eigen::VectorXd centro_occipital = weights_by_label(
      labels, {{"CZ", 1.0}, {"PZ", 0.9}, {"OZ", 0.8}, {"O1", 0.6}, {"O2", 0.6},
               {"P3", 0.5}, {"P4", 0.5}, {"FZ", 0.4}},
      0.15);

  ErpTemplates t;
  // N100 peaks ~15 ms later and smaller on PC; P200 wider and larger in VR;
  // P300 later and smaller in VR; N700 larger in PC.
  t.components.push_back({"N100", vr ? -4.0 : -3.0, vr ? 100.0 : 115.0, 20.0, occipital, true, 0.5});
  t.components.push_back({"P200", vr ? 5.5 : 4.0, 200.0, vr ? 40.0 : 30.0, frontocentral, true, 0.5});
  t.components.push_back({"P300", vr ? 5.0 : 6.0, vr ? 400.0 : 380.0, 45.0, centro_occipital,
                          false, 0.0});
  t.components.push_back({"N700", vr ? -3.0 : -3.5, 540.0, 60.0, frontocentral, false, 0.0});
  return t;
}

Recording synth_recording(const SessionSchedule& schedule, const ErpTemplates& templates,
                          double snr, std::mt19937_64& rng, const SynthOptions& opt,
                          std::vector<std::string>* warnings) {
  if (!(snr >= 0.0)) throw std::invalid_argument("snr must be nonnegative");
  validate_schedule(schedule);

  const ElectrodeLayout layout = default_layout();
  const auto n_channels = static_cast<Eigen::Index>(layout.size());
  for (const ErpComponent& c : templates.components) {
    if (c.spatial_weights.size() != n_channels) {
      throw std::invalid_argument("component " + c.name + " has wrong spatial weight count");
    }
    if (!(c.width_ms > 0)) throw std::invalid_argument("component " + c.name + " width must be > 0");
    if (warnings && c.latency_ms > schedule.timing.soa_ms) {
      warnings->push_back("component " + c.name + " peaks at " + std::to_string(c.latency_ms) +
                          " ms, beyond the inter-flash interval of " +
                          std::to_string(schedule.timing.soa_ms) + " ms");
    }
  }

  const double fs = opt.sample_rate;
  const double total_ms = schedule.timing.lead_in_ms +
                          kBlocksPerSession * block_duration_ms(schedule.timing) +
                          schedule.timing.lead_in_ms;
  const auto n_samples = static_cast<Eigen::Index>(std::llround(total_ms * fs / 1000.0));

  Recording rec;
  rec.subject_id = opt.subject;
  rec.condition = opt.condition;
  rec.sample_rate = fs;
  rec.channel_labels = layout.labels;
  rec.samples = Eigen::MatrixXf::Zero(n_channels, n_samples);

  const bool noiseless = std::isinf(snr);
  if (!noiseless) {
    std::vector<double> channel(static_cast<std::size_t>(n_samples));
    for (Eigen::Index c = 0; c < n_channels; ++c) {
      PinkNoise pink(rng);
      double sum = 0.0, sum_sq = 0.0;
      for (double& v : channel) {
        v = pink();
        sum += v;
        sum_sq += v * v;
      }
      const double n = static_cast<double>(n_samples);
      const double mean = sum / n;
      const double sd = std::sqrt(std::max(1e-30, sum_sq / n - mean * mean));
      for (Eigen::Index s = 0; s < n_samples; ++s) {
        rec.samples(c, s) =
            static_cast<float>((channel[static_cast<std::size_t>(s)] - mean) / sd * opt.noise_uv);
      }
    }
  }

  rec.events = schedule_events(schedule, fs);
  const double gain = noiseless ? 1.0 : snr;
  if (gain > 0.0) {
    for (const TagEvent& ev : rec.events) {
      for (const ErpComponent& comp : templates.components) {
        if (!ev.is_target && !comp.on_nontarget) continue;
        const double amp = gain * comp.amplitude_uv * (ev.is_target ? 1.0 : comp.nontarget_scale);
        const double sigma_samples = comp.width_ms * fs / 1000.0;
        const double center = static_cast<double>(ev.sample_index) + comp.latency_ms * fs / 1000.0;
        const auto first = std::max<Eigen::Index>(
            0, static_cast<Eigen::Index>(std::floor(center - 4.0 * sigma_samples)));
        const auto last = std::min<Eigen::Index>(
            n_samples - 1, static_cast<Eigen::Index>(std::ceil(center + 4.0 * sigma_samples)));
        for (Eigen::Index s = first; s <= last; ++s) {
          const double dt = (static_cast<double>(s) - center) / sigma_samples;
          const double bump = amp * std::exp(-0.5 * dt * dt);
          for (Eigen::Index c = 0; c < n_channels; ++c) {
            rec.samples(c, s) += static_cast<float>(bump * comp.spatial_weights(c));
          }
        }
      }
    }
  }

  validate_session(rec);
  return rec;
}

}  // namespace p300
