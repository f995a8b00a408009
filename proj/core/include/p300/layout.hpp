#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace p300 {

/// Electrode montage: labels, planar 10-20 positions on the unit head
/// circle, and the symmetric neighbor relation used for spatial clustering.
struct ElectrodeLayout {
  int version{1};
  std::vector<std::string> labels;
  std::vector<Eigen::Vector2d> positions;     // x right, y front, outer ring at r = 1
  std::vector<std::vector<int>> neighbors;    // sorted index lists, symmetric, no self edges

  std::size_t size() const { return labels.size(); }
  bool adjacent(int a, int b) const;
  int index_of(const std::string& label) const;  // -1 when absent
};

/// Throws std::invalid_argument on asymmetric adjacency, self edges, or
/// mismatched label/position/neighbor sizes.
void validate_layout(const ElectrodeLayout& layout);

/// The 16-electrode montage (FP1 FP2 FC5 FC6 FZ T7 CZ T8 P7 P3 PZ P4 P8 O1
/// OZ O2) with its reviewed adjacency graph. Identical to configs/layout16.json.
ElectrodeLayout default_layout();

ElectrodeLayout load_layout(const std::filesystem::path& path);
void save_layout(const ElectrodeLayout& layout, const std::filesystem::path& path);

}  // namespace p300
