#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "rowlab/sensor.hpp"

namespace rowlab::rowmap {

/// Half-open interval [lo, hi) in meters.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Voxel grid over a robot-centric region of interest. The z interval spans exactly
/// `height_levels` voxels and is the height band the channels hit inside the ROI.
struct VoxelGridSpec {
  Eigen::Vector3d delta{0.1, 0.1, 0.1};
  Interval roi_x{0.0, 3.0};
  Interval roi_y{-1.5, 1.5};
  Interval roi_z{-0.2, 0.2};
  int height_levels = 4;

  /// Number of voxels along x, y and z, and the index of the first ROI voxel per axis.
  std::array<int, 3> extent() const;
  std::array<int, 3> origin_index() const;
  int cell_count() const { return extent()[0] * extent()[1]; }
  void validate() const;
};

struct VoxelIndex {
  int x = 0;
  int y = 0;
  int z = 0;

  auto operator<=>(const VoxelIndex&) const = default;
};

/// Floor-binning of a point: (floor(x/dx), floor(y/dy), floor(z/dz)).
VoxelIndex voxel_of(const Eigen::Vector3d& p, const Eigen::Vector3d& delta);

/// Flattened occupancy grid. Cell (ix, iy) holds the fraction of occupied height levels;
/// ix runs forward (x), iy runs laterally (y). Storage is row-major with one row per iy.
struct RowMap {
  int size_x = 0;
  int size_y = 0;
  int height_levels = 1;
  std::vector<float> cells;

  float at(int ix, int iy) const { return cells[static_cast<std::size_t>(iy * size_x + ix)]; }
  float& at(int ix, int iy) { return cells[static_cast<std::size_t>(iy * size_x + ix)]; }
  double occupancy_fraction() const;

  bool operator==(const RowMap&) const = default;
};

/// Distinct voxels of the points that fall inside the ROI and height band, in ascending
/// (x, y, z) order. Indices are the raw floor-binned values.
std::vector<VoxelIndex> voxelize(const sensor::PointCloud& cloud, const VoxelGridSpec& spec);

/// Cell value = occupied height levels / H. Throws std::out_of_range for any voxel
/// outside the ROI index box.
RowMap flatten(const std::vector<VoxelIndex>& voxels, const VoxelGridSpec& spec);

RowMap transform(const sensor::PointCloud& cloud, const VoxelGridSpec& spec);

/// One text line per iy, `size_x` space-separated values per line.
std::string to_text(const RowMap& map);
RowMap from_text(std::string_view text, int height_levels);
/// Binary portable graymap (P5), occupied = white.
std::string to_pgm(const RowMap& map, int scale = 8);

}  // namespace rowlab::rowmap
