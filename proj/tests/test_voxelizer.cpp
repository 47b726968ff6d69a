#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "socnav/errors.hpp"
#include "socnav/voxelizer.hpp"
#include "test_util.hpp"

namespace socnav {
namespace {

// Per-point reference: scan every cell index range explicitly.
std::vector<std::uint8_t> naive_grid(const std::vector<Point3f>& pts) {
  std::vector<std::uint8_t> occ(160 * 120 * 50, 0);
  for (const auto& p : pts) {
    const double x = p.x, y = p.y, z = p.z;
    if (!(x >= 0.0 && x < 8.0 && y >= -3.0 && y < 3.0 && z >= -0.5 && z < 2.0)) continue;
    const int i = static_cast<int>(std::floor(x / 0.05));
    const int j = static_cast<int>(std::floor((y + 3.0) / 0.05));
    const int k = static_cast<int>(std::floor((z + 0.5) / 0.05));
    if (i < 0 || i >= 160 || j < 0 || j >= 120 || k < 0 || k >= 50) continue;
    occ[(static_cast<std::size_t>(i) * 120 + j) * 50 + k] = 1;
  }
  return occ;
}

TEST(Voxelizer, DefaultDims) {
  EXPECT_EQ(GridSpec{}.dims(), (std::array<int, 3>{160, 120, 50}));
  EXPECT_EQ(VoxelGrid{}.cell_count(), 960000u);
}

TEST(Voxelizer, BadSpecRejected) {
  GridSpec s;
  s.voxel = 0.03;
  EXPECT_THROW(s.dims(), ValidationError);
  s = {};
  s.voxel = 0.0;
  EXPECT_THROW(s.validate(), ValidationError);
}

TEST(Voxelizer, PointToIndexExamples) {
  const GridSpec s;
  EXPECT_EQ(point_to_index(0.025, -2.975, s.z_min + 0.025, s), (VoxelIndex{0, 0, 0}));
  EXPECT_EQ(point_to_index(7.99, 2.99, s.z_min + 2.49, s), (VoxelIndex{159, 119, 49}));
  EXPECT_FALSE(point_to_index(8.0, 0.0, s.z_min + 1.0, s).has_value());
  EXPECT_FALSE(point_to_index(-1e-12, 0.0, 0.0, s).has_value());
  EXPECT_FALSE(point_to_index(1.0, 3.0, 0.0, s).has_value());
  EXPECT_FALSE(point_to_index(1.0, 0.0, s.z_min + 2.5, s).has_value());
  EXPECT_TRUE(point_to_index(0.0, -3.0, s.z_min, s).has_value());
}

TEST(Voxelizer, ZMinShiftsWindow) {
  GridSpec s;
  s.z_min = 0.0;
  EXPECT_EQ(point_to_index(0.01, 0.01, 0.01, s), (VoxelIndex{0, 60, 0}));
  EXPECT_FALSE(point_to_index(0.01, 0.01, -0.01, s).has_value());
}

TEST(Voxelizer, EmptyCloud) {
  const VoxelGrid g = voxelize({}, GridSpec{});
  EXPECT_EQ(g.occupied_count(), 0u);
}

TEST(Voxelizer, DuplicatesSetOneCell) {
  std::vector<Point3f> pts(10, Point3f{1.234f, -0.5f, 0.3f});
  EXPECT_EQ(voxelize(pts, GridSpec{}).occupied_count(), 1u);
}

TEST(Voxelizer, NonFiniteCounted) {
  const float nan = std::numeric_limits<float>::quiet_NaN();
  const float inf = std::numeric_limits<float>::infinity();
  std::vector<Point3f> pts{{1, 0, 0}, {nan, 0, 0}, {0, inf, 0}, {20, 0, 0}};
  VoxelizeStats st;
  const auto g = voxelize(pts, GridSpec{}, &st);
  EXPECT_EQ(g.occupied_count(), 1u);
  EXPECT_EQ(st.in_bounds, 1u);
  EXPECT_EQ(st.non_finite, 2u);
  EXPECT_EQ(st.out_of_bounds, 1u);
}

TEST(Voxelizer, MatchesNaiveOracle) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pts = testing::random_cloud(rng, 10000, -2, 10, -5, 5, -1, 3);
    const auto g = voxelize(pts, GridSpec{});
    ASSERT_EQ(g.to_bytes(), naive_grid(pts)) << "trial " << trial;
  }
}

TEST(Voxelizer, PermutationInvariant) {
  std::mt19937_64 rng(5);
  auto pts = testing::random_cloud(rng, 5000, -1, 9, -4, 4, -1, 3);
  const auto g = voxelize(pts, GridSpec{});
  std::shuffle(pts.begin(), pts.end(), rng);
  EXPECT_EQ(voxelize(pts, GridSpec{}), g);
}

TEST(Voxelizer, MonotoneAndBounded) {
  std::mt19937_64 rng(9);
  auto pts = testing::random_cloud(rng, 2000, 0, 8, -3, 3, -0.5, 2);
  const auto g1 = voxelize(pts, GridSpec{});
  EXPECT_LE(g1.occupied_count(), pts.size());
  const auto more = testing::random_cloud(rng, 2000, 0, 8, -3, 3, -0.5, 2);
  pts.insert(pts.end(), more.begin(), more.end());
  const auto g2 = voxelize(pts, GridSpec{});
  for (auto c : g1.occupied()) EXPECT_TRUE(g2.test(c));
  auto doubled = pts;
  doubled.insert(doubled.end(), pts.begin(), pts.end());
  EXPECT_EQ(voxelize(doubled, GridSpec{}), g2);
}

TEST(Voxelizer, OccupiedSortedLinear) {
  std::vector<Point3f> pts{{7.99f, 2.99f, 1.99f}, {0.01f, -2.99f, -0.49f}};
  const auto occ = voxelize(pts, GridSpec{}).occupied();
  ASSERT_EQ(occ.size(), 2u);
  EXPECT_EQ(occ[0], 0u);
  EXPECT_EQ(occ[1], 959999u);
}

TEST(Voxelizer, GridDump) {
  testing::TempDir dir("vox");
  std::vector<Point3f> pts{{0.01f, -2.99f, -0.49f}, {0.06f, -2.99f, -0.49f}};
  write_grid_dump(voxelize(pts, GridSpec{}), dir.path() / "grid.vox");
  std::ifstream in(dir.path() / "grid.vox", std::ios::binary);
  std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  ASSERT_EQ(bytes.size(), 960000u);
  EXPECT_EQ(bytes[0], 1);
  EXPECT_EQ(bytes[120 * 50], 1);
  EXPECT_EQ(std::count(bytes.begin(), bytes.end(), 1), 2);
}

}  // namespace
}  // namespace socnav
