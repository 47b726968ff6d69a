#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "socnav/episodes.hpp"

namespace socnav {

/// Crop region and resolution of the occupancy grid, robot frame.
/// Intervals are half-open: [x_min, x_max) x [y_min, y_max) x [z_min, z_min + z_extent).
struct GridSpec {
  double voxel = 0.05;
  double x_min = 0.0;
  double x_max = 8.0;
  double y_min = -3.0;
  double y_max = 3.0;
  double z_min = -0.5;
  double z_extent = 2.5;

  /// Cell counts along x, y, z. Throws ValidationError when a range is not an
  /// integer multiple of the voxel size.
  std::array<int, 3> dims() const;
  void validate() const;
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

using VoxelIndex = std::array<int, 3>;

/// Binary occupancy over a GridSpec, stored as packed bits. Linear cell order
/// is i-major, then j, then k.
class VoxelGrid {
 public:
  VoxelGrid() : VoxelGrid(GridSpec{}) {}
  explicit VoxelGrid(const GridSpec& spec);

  const GridSpec& spec() const { return spec_; }
  const std::array<int, 3>& dims() const { return dims_; }
  std::size_t cell_count() const { return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2]; }

  std::size_t linear(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * dims_[1] + j) * dims_[2] + k;
  }
  bool at(int i, int j, int k) const { return test(linear(i, j, k)); }
  bool test(std::size_t cell) const { return (bits_[cell >> 6] >> (cell & 63)) & 1u; }
  void set(int i, int j, int k) { set(linear(i, j, k)); }
  void set(std::size_t cell) { bits_[cell >> 6] |= std::uint64_t{1} << (cell & 63); }

  std::size_t occupied_count() const;
  /// Linear indices of occupied cells in ascending order.
  std::vector<std::uint32_t> occupied() const;
  /// One byte (0/1) per cell in linear order.
  std::vector<std::uint8_t> to_bytes() const;

  friend bool operator==(const VoxelGrid& a, const VoxelGrid& b) {
    return a.spec_ == b.spec_ && a.bits_ == b.bits_;
  }

 private:
  GridSpec spec_;
  std::array<int, 3> dims_;
  std::vector<std::uint64_t> bits_;
};

/// Cell containing `p`, or nullopt when p lies outside the crop.
std::optional<VoxelIndex> point_to_index(double x, double y, double z, const GridSpec& spec);

struct VoxelizeStats {
  std::size_t in_bounds = 0;
  std::size_t out_of_bounds = 0;
  std::size_t non_finite = 0;
};

/// occ = 1 exactly for cells that contain at least one in-bounds point.
/// Non-finite points are skipped and counted.
VoxelGrid voxelize(std::span<const Point3f> points, const GridSpec& spec,
                   VoxelizeStats* stats = nullptr);

/// Debug dump: one byte per cell, i-major then j then k.
void write_grid_dump(const VoxelGrid& grid, const std::filesystem::path& path);

}  // namespace socnav
