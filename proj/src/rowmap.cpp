#include "rowlab/rowmap.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "rowlab/text_io.hpp"

namespace rowlab::rowmap {

namespace {

int exact_ratio(double numerator, double delta, const char* what) {
  const double ratio = numerator / delta;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, std::abs(ratio))) {
    throw std::invalid_argument(std::string("voxel grid: ") + what +
                                " is not a multiple of the voxel size");
  }
  return static_cast<int>(rounded);
}

}  // namespace

std::array<int, 3> VoxelGridSpec::extent() const {
  return {exact_ratio(roi_x.hi - roi_x.lo, delta.x(), "roi_x extent"),
          exact_ratio(roi_y.hi - roi_y.lo, delta.y(), "roi_y extent"),
          exact_ratio(roi_z.hi - roi_z.lo, delta.z(), "roi_z extent")};
}

std::array<int, 3> VoxelGridSpec::origin_index() const {
  return {exact_ratio(roi_x.lo, delta.x(), "roi_x start"),
          exact_ratio(roi_y.lo, delta.y(), "roi_y start"),
          exact_ratio(roi_z.lo, delta.z(), "roi_z start")};
}

void VoxelGridSpec::validate() const {
  if (!(delta.x() > 0.0) || !(delta.y() > 0.0) || !(delta.z() > 0.0)) {
    throw std::invalid_argument("voxel grid: all voxel sizes must be > 0");
  }
  if (height_levels < 1 || height_levels > 32) {
    throw std::invalid_argument("voxel grid: height_levels must be in [1, 32]");
  }
  const auto size = extent();
  origin_index();
  if (size[0] < 1 || size[1] < 1) throw std::invalid_argument("voxel grid: empty ROI");
  if (size[2] != height_levels) {
    throw std::invalid_argument("voxel grid: roi_z must span exactly height_levels voxels");
  }
}

VoxelIndex voxel_of(const Eigen::Vector3d& p, const Eigen::Vector3d& delta) {
  return {static_cast<int>(std::floor(p.x() / delta.x())),
          static_cast<int>(std::floor(p.y() / delta.y())),
          static_cast<int>(std::floor(p.z() / delta.z()))};
}

double RowMap::occupancy_fraction() const {
  if (cells.empty()) return 0.0;
  const auto occupied = std::count_if(cells.begin(), cells.end(), [](float v) { return v > 0.0f; });
  return static_cast<double>(occupied) / static_cast<double>(cells.size());
}

std::vector<VoxelIndex> voxelize(const sensor::PointCloud& cloud, const VoxelGridSpec& spec) {
  const auto size = spec.extent();
  const auto origin = spec.origin_index();
  // Dense occupancy over the ROI box collapses duplicates and yields sorted output.
  std::vector<char> occupied(static_cast<std::size_t>(size[0] * size[1] * size[2]), 0);
  for (const auto& p : cloud.points) {
    if (!p.allFinite()) continue;
    const VoxelIndex v = voxel_of(p, spec.delta);
    const int ix = v.x - origin[0];
    const int iy = v.y - origin[1];
    const int iz = v.z - origin[2];
    if (ix < 0 || ix >= size[0] || iy < 0 || iy >= size[1] || iz < 0 || iz >= size[2]) continue;
    occupied[static_cast<std::size_t>((ix * size[1] + iy) * size[2] + iz)] = 1;
  }
  std::vector<VoxelIndex> voxels;
  for (int ix = 0; ix < size[0]; ++ix) {
    for (int iy = 0; iy < size[1]; ++iy) {
      for (int iz = 0; iz < size[2]; ++iz) {
        if (occupied[static_cast<std::size_t>((ix * size[1] + iy) * size[2] + iz)]) {
          voxels.push_back({ix + origin[0], iy + origin[1], iz + origin[2]});
        }
      }
    }
  }
  return voxels;
}

RowMap flatten(const std::vector<VoxelIndex>& voxels, const VoxelGridSpec& spec) {
  const auto size = spec.extent();
  const auto origin = spec.origin_index();
  RowMap map;
  map.size_x = size[0];
  map.size_y = size[1];
  map.height_levels = spec.height_levels;
  std::vector<std::uint32_t> levels(static_cast<std::size_t>(size[0] * size[1]), 0);
  for (const auto& v : voxels) {
    const int ix = v.x - origin[0];
    const int iy = v.y - origin[1];
    const int iz = v.z - origin[2];
    if (ix < 0 || ix >= size[0] || iy < 0 || iy >= size[1] || iz < 0 ||
        iz >= spec.height_levels) {
      throw std::out_of_range("voxel (" + std::to_string(v.x) + ", " + std::to_string(v.y) +
                              ", " + std::to_string(v.z) + ") lies outside the row map ROI");
    }
    levels[static_cast<std::size_t>(iy * size[0] + ix)] |= 1U << iz;
  }
  map.cells.resize(levels.size());
  const float inv_levels = 1.0f / static_cast<float>(spec.height_levels);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    map.cells[i] = static_cast<float>(std::popcount(levels[i])) * inv_levels;
  }
  return map;
}

RowMap transform(const sensor::PointCloud& cloud, const VoxelGridSpec& spec) {
  return flatten(voxelize(cloud, spec), spec);
}

std::string to_text(const RowMap& map) {
  std::ostringstream out;
  for (int iy = 0; iy < map.size_y; ++iy) {
    for (int ix = 0; ix < map.size_x; ++ix) {
      if (ix > 0) out << ' ';
      out << format_double(static_cast<double>(map.at(ix, iy)));
    }
    out << '\n';
  }
  return out.str();
}

RowMap from_text(std::string_view text, int height_levels) {
  RowMap map;
  map.height_levels = height_levels;
  TokenReader in(text);
  int row_width = -1;
  while (!in.at_end()) {
    int width = 0;
    do {
      const std::size_t at = in.offset();
      const double value = in.next_double("cell value");
      const double scaled = value * height_levels;
      if (!(value >= 0.0 && value <= 1.0) || std::abs(scaled - std::round(scaled)) > 1e-6) {
        throw ParseError("cell value is not a multiple of 1/H in [0, 1]", at);
      }
      map.cells.push_back(static_cast<float>(value));
      ++width;
    } while (!in.at_line_end());
    if (row_width >= 0 && width != row_width) {
      throw ParseError("ragged row map grid", in.offset());
    }
    row_width = width;
    ++map.size_y;
  }
  map.size_x = std::max(row_width, 0);
  return map;
}

std::string to_pgm(const RowMap& map, int scale) {
  scale = std::max(scale, 1);
  const int width = map.size_x * scale;
  const int height = map.size_y * scale;
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(width * height));
  for (int py = 0; py < height; ++py) {
    for (int px = 0; px < width; ++px) {
      const float value = map.at(px / scale, py / scale);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(value * 255.0f))));
    }
  }
  return out;
}

}  // namespace rowlab::rowmap
