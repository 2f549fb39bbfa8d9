#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ddppo/common/random.hpp"

namespace ddppo::envs {

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

// Occupancy grid. x grows to the east (columns), y to the south (rows);
// everything outside the bounds counts as occupied.
class GridWorld {
 public:
  GridWorld() = default;
  GridWorld(int width, int height, double cell_size = 0.25);

  int width() const { return width_; }
  int height() const { return height_; }
  double cell_size() const { return cell_size_; }

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
  bool is_free(Cell c) const { return in_bounds(c) && !occupied_[index(c)]; }
  void set_occupied(Cell c, bool occupied) { occupied_.at(index(c)) = occupied ? 1 : 0; }

  std::size_t index(Cell c) const {
    return static_cast<std::size_t>(c.y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(c.x);
  }
  Cell cell_at(std::size_t index) const {
    return Cell{static_cast<int>(index % static_cast<std::size_t>(width_)),
                static_cast<int>(index / static_cast<std::size_t>(width_))};
  }

  std::vector<Cell> free_cells() const;

  // Plain-text format: "width height" then one row per line of '.' / '#'.
  static GridWorld parse(std::istream& in, double cell_size = 0.25);
  static GridWorld load(const std::filesystem::path& path, double cell_size = 0.25);
  std::string to_text() const;

 private:
  int width_ = 0;
  int height_ = 0;
  double cell_size_ = 0.25;
  std::vector<std::uint8_t> occupied_;
};

// 4-connected BFS distances in cells.
class DistanceField {
 public:
  static constexpr int kUnreachable = -1;

  DistanceField(int width, int height)
      : width_(width), dist_(static_cast<std::size_t>(width) * height, kUnreachable) {}

  int at(Cell c) const {
    return dist_[static_cast<std::size_t>(c.y) * static_cast<std::size_t>(width_) +
                 static_cast<std::size_t>(c.x)];
  }
  int& at(Cell c) {
    return dist_[static_cast<std::size_t>(c.y) * static_cast<std::size_t>(width_) +
                 static_cast<std::size_t>(c.x)];
  }
  int max_distance() const;
  const std::vector<int>& raw() const { return dist_; }

 private:
  int width_;
  std::vector<int> dist_;
};

// Throws InvalidCellError when `from` is occupied or out of bounds.
DistanceField bfs_geodesic(const GridWorld& map, Cell from);

// Random obstacle fill; free cells outside the largest connected component
// are filled so every free pair is mutually reachable. Borders stay open.
GridWorld generate_random_map(int width, int height, double obstacle_density, Rng& rng,
                              double cell_size = 0.25);

enum class MapSplit { kTrain, kHeldOut };

struct MapSetSpec {
  int width = 16;
  int height = 16;
  double obstacle_density = 0.2;
  double cell_size = 0.25;
  std::uint64_t base_seed = 20191;
};

// Deterministic train / held-out splits: map i of a split depends only on
// (base_seed, split, i).
GridWorld make_split_map(const MapSetSpec& spec, MapSplit split, std::size_t i);

}  // namespace ddppo::envs
