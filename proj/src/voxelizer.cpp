#include "socnav/voxelizer.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "socnav/errors.hpp"

namespace socnav {

namespace {

int cells_along(double extent, double voxel, const char* axis) {
  const double n = extent / voxel;
  const double rounded = std::round(n);
  if (!(rounded >= 1.0) || std::abs(n - rounded) > 1e-6)
    throw ValidationError(std::string("grid ") + axis + " extent is not a positive multiple of the voxel size");
  return static_cast<int>(rounded);
}

}  // namespace

std::array<int, 3> GridSpec::dims() const {
  if (!(voxel > 0.0) || !std::isfinite(voxel)) throw ValidationError("voxel size must be positive");
  return {cells_along(x_max - x_min, voxel, "x"), cells_along(y_max - y_min, voxel, "y"),
          cells_along(z_extent, voxel, "z")};
}

void GridSpec::validate() const { (void)dims(); }

VoxelGrid::VoxelGrid(const GridSpec& spec) : spec_(spec), dims_(spec.dims()) {
  bits_.assign((cell_count() + 63) / 64, 0);
}

std::size_t VoxelGrid::occupied_count() const {
  std::size_t n = 0;
  for (auto w : bits_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::vector<std::uint32_t> VoxelGrid::occupied() const {
  std::vector<std::uint32_t> out;
  out.reserve(occupied_count());
  for (std::size_t w = 0; w < bits_.size(); ++w) {
    std::uint64_t word = bits_[w];
    while (word) {
      int bit = std::countr_zero(word);
      out.push_back(static_cast<std::uint32_t>(w * 64 + bit));
      word &= word - 1;
    }
  }
  return out;
}

std::vector<std::uint8_t> VoxelGrid::to_bytes() const {
  std::vector<std::uint8_t> out(cell_count(), 0);
  for (auto cell : occupied()) out[cell] = 1;
  return out;
}

std::optional<VoxelIndex> point_to_index(double x, double y, double z, const GridSpec& spec) {
  const auto dims = spec.dims();
  const double fi = std::floor((x - spec.x_min) / spec.voxel);
  const double fj = std::floor((y - spec.y_min) / spec.voxel);
  const double fk = std::floor((z - spec.z_min) / spec.voxel);
  if (!(fi >= 0 && fi < dims[0] && fj >= 0 && fj < dims[1] && fk >= 0 && fk < dims[2]))
    return std::nullopt;
  return VoxelIndex{static_cast<int>(fi), static_cast<int>(fj), static_cast<int>(fk)};
}

VoxelGrid voxelize(std::span<const Point3f> points, const GridSpec& spec, VoxelizeStats* stats) {
  VoxelGrid grid(spec);
  const auto dims = grid.dims();
  VoxelizeStats local;
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      ++local.non_finite;
      continue;
    }
    // Same arithmetic as point_to_index, hoisted out of the loop.
    const double fi = std::floor((p.x - spec.x_min) / spec.voxel);
    const double fj = std::floor((p.y - spec.y_min) / spec.voxel);
    const double fk = std::floor((p.z - spec.z_min) / spec.voxel);
    if (fi >= 0 && fi < dims[0] && fj >= 0 && fj < dims[1] && fk >= 0 && fk < dims[2]) {
      grid.set(static_cast<int>(fi), static_cast<int>(fj), static_cast<int>(fk));
      ++local.in_bounds;
    } else {
      ++local.out_of_bounds;
    }
  }
  if (stats) *stats = local;
  return grid;
}

void write_grid_dump(const VoxelGrid& grid, const std::filesystem::path& path) {
  auto bytes = grid.to_bytes();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw StorageError("write failed: " + path.string());
}

}  // namespace socnav
