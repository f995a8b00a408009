#include "p300/types.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace p300 {

std::string_view to_string(Condition c) { return c == Condition::PC ? "PC" : "VR"; }

Condition condition_from_string(std::string_view s) {
  if (s == "PC") return Condition::PC;
  if (s == "VR") return Condition::VR;
  throw std::invalid_argument("unknown condition '" + std::string(s) + "' (expected PC or VR)");
}

std::string_view to_string(EpochLabel l) { return l == EpochLabel::TA ? "TA" : "NT"; }

bool TagEvent::group_contains(int symbol) const {
  return std::find(flash_group.begin(), flash_group.end(), symbol) != flash_group.end();
}

std::int64_t round_half_away(double x) {
  return static_cast<std::int64_t>(x < 0 ? std::ceil(x - 0.5) : std::floor(x + 0.5));
}

std::size_t EpochSet::count(EpochLabel l) const {
  return static_cast<std::size_t>(
      std::count_if(epochs.begin(), epochs.end(), [l](const Epoch& e) { return e.label == l; }));
}

namespace {

void validate_event(const TagEvent& ev, std::int64_t n_samples, std::size_t pos) {
  std::ostringstream where;
  where << "event " << pos;
  if (ev.sample_index < 0 || ev.sample_index >= n_samples) {
    throw std::invalid_argument(where.str() + ": sample_index " + std::to_string(ev.sample_index) +
                                " outside recording of " + std::to_string(n_samples) + " samples");
  }
  std::set<int> group(ev.flash_group.begin(), ev.flash_group.end());
  if (group.size() != kGroupSize) {
    throw std::invalid_argument(where.str() + ": flash group must hold 6 distinct symbols");
  }
  for (int s : ev.flash_group) {
    if (s < 0 || s >= kSymbolCount) {
      throw std::invalid_argument(where.str() + ": symbol " + std::to_string(s) + " out of [0,35]");
    }
  }
  if (ev.target_symbol < 0 || ev.target_symbol >= kSymbolCount) {
    throw std::invalid_argument(where.str() + ": target symbol out of [0,35]");
  }
  if (ev.is_target != ev.group_contains(ev.target_symbol)) {
    throw std::invalid_argument(where.str() + ": is_target inconsistent with group membership");
  }
  if (ev.block_index < 0 || ev.block_index >= kBlocksPerSession) {
    throw std::invalid_argument(where.str() + ": block_index out of [0,11]");
  }
  if (ev.repetition_index < 0 || ev.repetition_index >= kRepetitionsPerBlock) {
    throw std::invalid_argument(where.str() + ": repetition_index out of [0,4]");
  }
}

}  // namespace

void validate_recording(const Recording& rec) {
  if (!(rec.sample_rate > 0)) {
    throw std::invalid_argument("sample_rate must be positive");
  }
  if (static_cast<std::size_t>(rec.samples.rows()) != rec.channel_labels.size()) {
    throw std::invalid_argument("channel count mismatch: " + std::to_string(rec.samples.rows()) +
                                " sample rows vs " + std::to_string(rec.channel_labels.size()) +
                                " labels");
  }
  std::set<std::string> seen(rec.channel_labels.begin(), rec.channel_labels.end());
  if (seen.size() != rec.channel_labels.size()) {
    throw std::invalid_argument("channel labels must be unique");
  }
  std::int64_t prev = -1;
  for (std::size_t i = 0; i < rec.events.size(); ++i) {
    const TagEvent& ev = rec.events[i];
    validate_event(ev, rec.n_samples(), i);
    if (ev.sample_index <= prev) {
      throw std::invalid_argument("events must be strictly increasing in sample_index (event " +
                                  std::to_string(i) + ")");
    }
    prev = ev.sample_index;
  }
}

void validate_session(const Recording& rec) {
  validate_recording(rec);
  std::map<std::pair<int, int>, std::pair<int, int>> counts;  // (block,rep) -> (events, targets)
  std::map<int, std::set<int>> block_targets;
  for (const TagEvent& ev : rec.events) {
    auto& c = counts[{ev.block_index, ev.repetition_index}];
    ++c.first;
    if (ev.is_target) ++c.second;
    block_targets[ev.block_index].insert(ev.target_symbol);
  }
  if (counts.size() != kBlocksPerSession * kRepetitionsPerBlock) {
    throw std::invalid_argument("session must cover 12 blocks x 5 repetitions, found " +
                                std::to_string(counts.size()) + " (block, repetition) groups");
  }
  for (const auto& [key, c] : counts) {
    if (c.first != kFlashesPerRepetition || c.second != kTargetFlashesPerRepetition) {
      throw std::invalid_argument(
          "block " + std::to_string(key.first) + " repetition " + std::to_string(key.second) +
          ": expected 12 flashes with 2 targets, found " + std::to_string(c.first) + "/" +
          std::to_string(c.second));
    }
  }
  for (const auto& [block, targets] : block_targets) {
    if (targets.size() != 1) {
      throw std::invalid_argument("block " + std::to_string(block) +
                                  " has more than one target symbol");
    }
  }
}

}  // namespace p300
