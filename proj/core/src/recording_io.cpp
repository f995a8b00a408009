#include "p300/recording_io.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "sample blocks are little-endian float32; big-endian hosts are unsupported");

namespace p300 {

namespace {

using nlohmann::json;

std::string fmt_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr char kEventHeader[] =
    "sample_index,block,repetition,target_symbol,is_target,g0,g1,g2,g3,g4,g5";

void write_event_row(std::ostream& out, const TagEvent& ev) {
  out << ev.sample_index << ',' << ev.block_index << ',' << ev.repetition_index << ','
      << ev.target_symbol << ',' << (ev.is_target ? 1 : 0);
  for (int g : ev.flash_group) out << ',' << g;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

TagEvent parse_event_fields(const std::vector<std::string>& f, std::size_t offset,
                            const std::string& where) {
  if (f.size() < offset + 11) throw std::runtime_error(where + ": truncated event row");
  TagEvent ev;
  try {
    ev.sample_index = std::stoll(f[offset]);
    ev.block_index = std::stoi(f[offset + 1]);
    ev.repetition_index = std::stoi(f[offset + 2]);
    ev.target_symbol = std::stoi(f[offset + 3]);
    ev.is_target = std::stoi(f[offset + 4]) != 0;
    for (int g = 0; g < kGroupSize; ++g) {
      ev.flash_group[static_cast<std::size_t>(g)] = std::stoi(f[offset + 5 + g]);
    }
  } catch (const std::exception&) {
    throw std::runtime_error(where + ": unparseable event row");
  }
  std::sort(ev.flash_group.begin(), ev.flash_group.end());
  return ev;
}

void save_binary(const Recording& rec, const std::filesystem::path& path) {
  const std::filesystem::path samples_path = path.string() + ".f32";
  const std::filesystem::path events_path = path.string() + ".events.csv";

  json header;
  header["format"] = "p300-rec";
  header["version"] = 1;
  header["subject"] = rec.subject_id;
  header["condition"] = std::string(to_string(rec.condition));
  header["sample_rate"] = rec.sample_rate;
  header["channels"] = rec.channel_labels;
  header["n_samples"] = rec.n_samples();
  header["samples_file"] = samples_path.filename().string();
  header["events_file"] = events_path.filename().string();
  {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << header.dump(2) << "\n";
  }
  {
    std::ofstream out(samples_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + samples_path.string());
    std::vector<float> row(static_cast<std::size_t>(rec.n_samples()));
    for (Eigen::Index c = 0; c < rec.n_channels(); ++c) {
      Eigen::Map<Eigen::RowVectorXf>(row.data(), rec.n_samples()) = rec.samples.row(c);
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
  }
  {
    std::ofstream out(events_path);
    if (!out) throw std::runtime_error("cannot write " + events_path.string());
    out << kEventHeader << "\n";
    for (const TagEvent& ev : rec.events) {
      write_event_row(out, ev);
      out << "\n";
    }
  }
}

Recording load_binary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json header;
  try {
    header = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed header in " + path.string() + ": " + e.what());
  }
  if (header.value("format", "") != "p300-rec") {
    throw std::runtime_error("malformed header in " + path.string() + ": not a p300-rec file");
  }

  Recording rec;
  Eigen::Index n_samples = 0;
  std::filesystem::path samples_path, events_path;
  try {
    rec.subject_id = header.at("subject").get<std::string>();
    rec.condition = condition_from_string(header.at("condition").get<std::string>());
    rec.sample_rate = header.at("sample_rate").get<double>();
    rec.channel_labels = header.at("channels").get<std::vector<std::string>>();
    n_samples = header.at("n_samples").get<Eigen::Index>();
    samples_path = path.parent_path() / header.at("samples_file").get<std::string>();
    events_path = path.parent_path() / header.at("events_file").get<std::string>();
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed header in " + path.string() + ": " + e.what());
  }

  const Eigen::Index n_channels = static_cast<Eigen::Index>(rec.channel_labels.size());
  std::ifstream sin(samples_path, std::ios::binary);
  if (!sin) throw std::runtime_error("cannot open " + samples_path.string());
  sin.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::uint64_t>(sin.tellg());
  const std::uint64_t expected =
      static_cast<std::uint64_t>(n_channels) * static_cast<std::uint64_t>(n_samples) * sizeof(float);
  if (bytes != expected) {
    throw std::runtime_error("channel-count mismatch in " + samples_path.string() + ": header says " +
                             std::to_string(n_channels) + "x" + std::to_string(n_samples) +
                             " float32 (" + std::to_string(expected) + " bytes), file has " +
                             std::to_string(bytes));
  }
  sin.seekg(0);
  rec.samples.resize(n_channels, n_samples);
  std::vector<float> row(static_cast<std::size_t>(n_samples));
  for (Eigen::Index c = 0; c < n_channels; ++c) {
    sin.read(reinterpret_cast<char*>(row.data()),
             static_cast<std::streamsize>(row.size() * sizeof(float)));
    rec.samples.row(c) = Eigen::Map<Eigen::RowVectorXf>(row.data(), n_samples);
  }

  std::ifstream ein(events_path);
  if (!ein) throw std::runtime_error("cannot open " + events_path.string());
  std::string line;
  if (!std::getline(ein, line) || split_csv(line)[0] != "sample_index") {
    throw std::runtime_error("malformed event table in " + events_path.string());
  }
  while (std::getline(ein, line)) {
    if (line.empty()) continue;
    rec.events.push_back(parse_event_fields(split_csv(line), 0, events_path.string()));
  }

  try {
    validate_recording(rec);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("invalid recording " + path.string() + ": " + e.what());
  }
  return rec;
}

void save_csv(const Recording& rec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# p300-csv v1\n";
  out << "# subject=" << rec.subject_id << "\n";
  out << "# condition=" << to_string(rec.condition) << "\n";
  out << "# sample_rate=" << fmt_double(rec.sample_rate) << "\n";
  for (std::size_t c = 0; c < rec.channel_labels.size(); ++c) {
    out << rec.channel_labels[c] << ',';
  }
  out << kEventHeader << "\n";

  std::size_t next_event = 0;
  const std::string empty_event(",,,,,,,,,,");  // 11 empty fields
  for (Eigen::Index s = 0; s < rec.n_samples(); ++s) {
    for (Eigen::Index c = 0; c < rec.n_channels(); ++c) {
      out << fmt_float(rec.samples(c, s)) << ',';
    }
    if (next_event < rec.events.size() && rec.events[next_event].sample_index == s) {
      write_event_row(out, rec.events[next_event]);
      ++next_event;
    } else {
      out << empty_event;
    }
    out << "\n";
  }
}

Recording load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("# p300-csv", 0) != 0) {
    throw std::runtime_error("malformed header in " + path.string() + ": not a p300-csv file");
  }

  Recording rec;
  bool have_rate = false;
  while (in.peek() == '#') {
    std::getline(in, line);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(2, eq - 2);
    const std::string value = line.substr(eq + 1);
    if (key == "subject") {
      rec.subject_id = value;
    } else if (key == "condition") {
      rec.condition = condition_from_string(value);
    } else if (key == "sample_rate") {
      rec.sample_rate = std::stod(value);
      have_rate = true;
    }
  }
  if (!have_rate) throw std::runtime_error("malformed header in " + path.string() + ": no sample_rate");

  if (!std::getline(in, line)) {
    throw std::runtime_error("malformed header in " + path.string() + ": missing column row");
  }
  const std::vector<std::string> columns = split_csv(line);
  std::size_t n_channels = 0;
  while (n_channels < columns.size() && columns[n_channels] != "sample_index") ++n_channels;
  if (n_channels == columns.size() || columns.size() != n_channels + 11) {
    throw std::runtime_error("malformed header in " + path.string() + ": bad column row");
  }
  rec.channel_labels.assign(columns.begin(), columns.begin() + static_cast<long>(n_channels));

  std::vector<std::vector<float>> data(n_channels);
  std::int64_t row_index = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv(line);
    if (f.size() != columns.size()) {
      throw std::runtime_error(path.string() + ": row " + std::to_string(row_index) +
                               " has " + std::to_string(f.size()) + " fields, expected " +
                               std::to_string(columns.size()));
    }
    for (std::size_t c = 0; c < n_channels; ++c) {
      char* end = nullptr;
      const float v = std::strtof(f[c].c_str(), &end);
      if (end == f[c].c_str() || *end != '\0') {
        throw std::runtime_error(path.string() + ": row " + std::to_string(row_index) +
                                 " has an unparseable sample '" + f[c] + "'");
      }
      data[c].push_back(v);
    }
    if (!f[n_channels].empty()) {
      rec.events.push_back(parse_event_fields(f, n_channels, path.string()));
    }
    ++row_index;
  }

  rec.samples.resize(static_cast<Eigen::Index>(n_channels), row_index);
  for (std::size_t c = 0; c < n_channels; ++c) {
    rec.samples.row(static_cast<Eigen::Index>(c)) =
        Eigen::Map<Eigen::RowVectorXf>(data[c].data(), row_index);
  }

  try {
    validate_recording(rec);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("invalid recording " + path.string() + ": " + e.what());
  }
  return rec;
}

}  // namespace

RecordingFormat format_from_string(std::string_view s) {
  if (s == "columnar_binary" || s == "binary" || s == "rec") return RecordingFormat::columnar_binary;
  if (s == "csv") return RecordingFormat::csv;
  throw std::invalid_argument("unknown recording format '" + std::string(s) + "'");
}

std::string_view to_string(RecordingFormat f) {
  return f == RecordingFormat::columnar_binary ? "columnar_binary" : "csv";
}

void save_recording(const Recording& rec, const std::filesystem::path& path, RecordingFormat fmt) {
  validate_recording(rec);
  if (fmt == RecordingFormat::columnar_binary) {
    save_binary(rec, path);
  } else {
    save_csv(rec, path);
  }
}

Recording load_recording(const std::filesystem::path& path, RecordingFormat fmt) {
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("no such file: " + path.string());
  }
  return fmt == RecordingFormat::columnar_binary ? load_binary(path) : load_csv(path);
}

std::vector<TagEvent> decode_stim_channel(std::span<const int> codes,
                                          const StimSchedule& schedule) {
  std::vector<TagEvent> events;
  int prev_code = 0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const int code = codes[i];
    if (code != 0 && code == prev_code) {
      throw std::runtime_error("duplicate onset: code " + std::to_string(code) +
                               " repeated at sample " + std::to_string(i));
    }
    prev_code = code;
    if (code == 0) continue;
    const auto it = schedule.find(code);
    if (it == schedule.end()) {
      throw std::runtime_error("unknown stimulus code " + std::to_string(code) + " at sample " +
                               std::to_string(i));
    }
    const StimCode& sc = it->second;
    TagEvent ev;
    ev.sample_index = static_cast<std::int64_t>(i);
    ev.flash_group = sc.flash_group;
    std::sort(ev.flash_group.begin(), ev.flash_group.end());
    ev.target_symbol = sc.target_symbol;
    ev.is_target = ev.group_contains(sc.target_symbol);
    ev.block_index = sc.block_index;
    ev.repetition_index = sc.repetition_index;
    events.push_back(ev);
  }
  return events;
}

}  // namespace p300
