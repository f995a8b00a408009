#pragma once

#include "p300/types.hpp"

#include <filesystem>
#include <map>
#include <span>

namespace p300 {

enum class RecordingFormat { columnar_binary, csv };

RecordingFormat format_from_string(std::string_view s);
std::string_view to_string(RecordingFormat f);

/// Writes a Recording loss-lessly.
///
/// columnar_binary writes three files: `path` (JSON header), `path.f32`
/// (little-endian float32 sample block, channel-major) and `path.events.csv`
/// (one row per TagEvent). csv writes a single sample-per-row table with
/// `# key=value` metadata lines; event columns are empty except on onset
/// rows. Both formats are documented field-by-field in the README.
void save_recording(const Recording& rec, const std::filesystem::path& path, RecordingFormat fmt);

/// Inverse of save_recording. Throws std::runtime_error with a distinct
/// message for a malformed header, a channel-count mismatch, or an
/// out-of-range event index; the returned Recording passes
/// validate_recording.
Recording load_recording(const std::filesystem::path& path, RecordingFormat fmt);

/// What one stimulus code means; decode_stim_channel looks these up.
struct StimCode {
  std::array<int, kGroupSize> flash_group{};
  int target_symbol{0};
  int block_index{0};
  int repetition_index{0};
};

using StimSchedule = std::map<int, StimCode>;

/// Turns a sample-aligned code channel (nonzero at flash onsets) into
/// TagEvents. Throws on a code missing from the schedule and on two nonzero
/// codes at the same sample.
std::vector<TagEvent> decode_stim_channel(std::span<const int> codes, const StimSchedule& schedule);

}  // namespace p300
