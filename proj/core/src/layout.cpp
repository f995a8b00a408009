#include "p300/layout.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

namespace p300 {

namespace {

using nlohmann::json;

struct PolarPos {
  const char* label;
  double theta_deg;  // 0 = nasion, positive clockwise (right hemisphere)
  double radius;     // EEGLAB convention, outer 10% ring at 0.511
};

// Standard 10-20 planar cap coordinates for the montage of the recording
// hardware, normalized so the outer ring sits on the unit circle.
constexpr PolarPos kMontage[] = {
    {"FP1", -18, 0.511}, {"FP2", 18, 0.511},  {"FC5", -69, 0.394}, {"FC6", 69, 0.394},
    {"FZ", 0, 0.256},    {"T7", -90, 0.511},  {"CZ", 0, 0.0},      {"T8", 90, 0.511},
    {"P7", -126, 0.511}, {"P3", -141, 0.333}, {"PZ", 180, 0.256},  {"P4", 141, 0.333},
    {"P8", 126, 0.511},  {"O1", -162, 0.511}, {"OZ", 180, 0.511},  {"O2", 162, 0.511},
};

// Reviewed neighbor graph: planar distance <= 0.62 on the normalized circle,
// FC5/FC6 joined to FZ (nearest electrode beyond the threshold, this montage
// leaves them only one neighbor otherwise), PZ trimmed of its two longest
// edges (O1, O2) to keep every degree in [2,5].
constexpr std::pair<const char*, const char*> kEdges[] = {
    {"FP1", "FP2"}, {"FP1", "FZ"}, {"FP2", "FZ"}, {"FC5", "T7"}, {"FC5", "FZ"},
    {"FC6", "T8"},  {"FC6", "FZ"}, {"FZ", "CZ"},  {"T7", "P7"},  {"CZ", "PZ"},
    {"T8", "P8"},   {"P7", "P3"},  {"P7", "O1"},  {"P3", "PZ"},  {"P3", "O1"},
    {"PZ", "P4"},   {"PZ", "OZ"},  {"P4", "P8"},  {"P4", "O2"},  {"P8", "O2"},
    {"O1", "OZ"},   {"OZ", "O2"},
};

}  // namespace

bool ElectrodeLayout::adjacent(int a, int b) const {
  const auto& n = neighbors.at(static_cast<std::size_t>(a));
  return std::binary_search(n.begin(), n.end(), b);
}

int ElectrodeLayout::index_of(const std::string& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  return it == labels.end() ? -1 : static_cast<int>(it - labels.begin());
}

void validate_layout(const ElectrodeLayout& layout) {
  const std::size_t n = layout.labels.size();
  if (layout.positions.size() != n || layout.neighbors.size() != n) {
    throw std::invalid_argument("layout: labels, positions and neighbors must align");
  }
  std::set<std::string> unique(layout.labels.begin(), layout.labels.end());
  if (unique.size() != n) throw std::invalid_argument("layout: duplicate labels");
  for (std::size_t i = 0; i < n; ++i) {
    for (int j : layout.neighbors[i]) {
      if (j < 0 || static_cast<std::size_t>(j) >= n) {
        throw std::invalid_argument("layout: neighbor index out of range");
      }
      if (static_cast<std::size_t>(j) == i) {
        throw std::invalid_argument("layout: self adjacency at " + layout.labels[i]);
      }
      if (!layout.adjacent(j, static_cast<int>(i))) {
        throw std::invalid_argument("layout: adjacency not symmetric between " + layout.labels[i] +
                                    " and " + layout.labels[static_cast<std::size_t>(j)]);
      }
    }
  }
}

ElectrodeLayout default_layout() {
  ElectrodeLayout layout;
  layout.version = 1;
  constexpr double kOuterRing = 0.511;
  for (const PolarPos& p : kMontage) {
    const double theta = p.theta_deg * std::numbers::pi / 180.0;
    const double r = p.radius / kOuterRing;
    layout.labels.emplace_back(p.label);
    layout.positions.emplace_back(r * std::sin(theta), r * std::cos(theta));
  }
  layout.neighbors.assign(layout.labels.size(), {});
  for (const auto& [a, b] : kEdges) {
    const int ia = layout.index_of(a);
    const int ib = layout.index_of(b);
    layout.neighbors[static_cast<std::size_t>(ia)].push_back(ib);
    layout.neighbors[static_cast<std::size_t>(ib)].push_back(ia);
  }
  for (auto& n : layout.neighbors) std::sort(n.begin(), n.end());
  validate_layout(layout);
  return layout;
}

ElectrodeLayout load_layout(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open layout file " + path.string());
  json j = json::parse(in);
  if (j.value("format", "") != "p300-layout") {
    throw std::runtime_error("not a layout file: " + path.string());
  }
  ElectrodeLayout layout;
  layout.version = j.at("version").get<int>();
  for (const auto& e : j.at("electrodes")) {
    layout.labels.push_back(e.at("label").get<std::string>());
    layout.positions.emplace_back(e.at("x").get<double>(), e.at("y").get<double>());
  }
  layout.neighbors.assign(layout.labels.size(), {});
  for (const auto& edge : j.at("adjacency")) {
    const int ia = layout.index_of(edge.at(0).get<std::string>());
    const int ib = layout.index_of(edge.at(1).get<std::string>());
    if (ia < 0 || ib < 0) throw std::runtime_error("layout adjacency names unknown electrode");
    layout.neighbors[static_cast<std::size_t>(ia)].push_back(ib);
    layout.neighbors[static_cast<std::size_t>(ib)].push_back(ia);
  }
  for (auto& n : layout.neighbors) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  validate_layout(layout);
  return layout;
}

void save_layout(const ElectrodeLayout& layout, const std::filesystem::path& path) {
  validate_layout(layout);
  json j;
  j["format"] = "p300-layout";
  j["version"] = layout.version;
  j["electrodes"] = json::array();
  for (std::size_t i = 0; i < layout.size(); ++i) {
    j["electrodes"].push_back({{"label", layout.labels[i]},
                               {"x", layout.positions[i].x()},
                               {"y", layout.positions[i].y()}});
  }
  j["adjacency"] = json::array();
  for (std::size_t i = 0; i < layout.size(); ++i) {
    for (int k : layout.neighbors[i]) {
      if (static_cast<std::size_t>(k) > i) {
        j["adjacency"].push_back({layout.labels[i], layout.labels[static_cast<std::size_t>(k)]});
      }
    }
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write layout file " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace p300
