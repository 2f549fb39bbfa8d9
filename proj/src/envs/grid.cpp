#include "ddppo/envs/grid.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>

#include "ddppo/common/error.hpp"

namespace ddppo::envs {

namespace {

constexpr Cell kNeighbors[4] = {{0, -1}, {1, 0}, {0, 1}, {-1, 0}};

}  // namespace

GridWorld::GridWorld(int width, int height, double cell_size)
    : width_(width), height_(height), cell_size_(cell_size) {
  if (width <= 0 || height <= 0) throw ConfigError("GridWorld: dimensions must be positive");
  if (!(cell_size > 0.0)) throw ConfigError("GridWorld: cell_size must be positive");
  occupied_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
}

std::vector<Cell> GridWorld::free_cells() const {
  std::vector<Cell> out;
  for (std::size_t i = 0; i < occupied_.size(); ++i) {
    if (!occupied_[i]) out.push_back(cell_at(i));
  }
  return out;
}

GridWorld GridWorld::parse(std::istream& in, double cell_size) {
  int w = 0, h = 0;
  if (!(in >> w >> h)) throw ConfigError("map: missing 'width height' header");
  GridWorld map(w, h, cell_size);
  std::string line;
  std::getline(in, line);
  for (int y = 0; y < h; ++y) {
    if (!std::getline(in, line)) throw ConfigError("map: expected " + std::to_string(h) + " rows");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (static_cast<int>(line.size()) != w) {
      throw ConfigError("map: row " + std::to_string(y) + " has " + std::to_string(line.size()) +
                        " cells, expected " + std::to_string(w));
    }
    for (int x = 0; x < w; ++x) {
      const char c = line[static_cast<std::size_t>(x)];
      if (c != '.' && c != '#') throw ConfigError(std::string("map: invalid cell character '") + c + "'");
      map.set_occupied({x, y}, c == '#');
    }
  }
  return map;
}

GridWorld GridWorld::load(const std::filesystem::path& path, double cell_size) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open map " + path.string());
  return parse(in, cell_size);
}

std::string GridWorld::to_text() const {
  std::ostringstream os;
  os << width_ << ' ' << height_ << '\n';
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) os << (is_free({x, y}) ? '.' : '#');
    os << '\n';
  }
  return os.str();
}

int DistanceField::max_distance() const {
  return dist_.empty() ? kUnreachable : *std::max_element(dist_.begin(), dist_.end());
}

DistanceField bfs_geodesic(const GridWorld& map, Cell from) {
  if (!map.is_free(from)) {
    throw InvalidCellError("bfs_geodesic: source (" + std::to_string(from.x) + ", " +
                           std::to_string(from.y) + ") is not a free cell");
  }
  DistanceField field(map.width(), map.height());
  std::deque<Cell> queue{from};
  field.at(from) = 0;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    const int d = field.at(c);
    for (const Cell& dir : kNeighbors) {
      const Cell n{c.x + dir.x, c.y + dir.y};
      if (map.is_free(n) && field.at(n) == DistanceField::kUnreachable) {
        field.at(n) = d + 1;
        queue.push_back(n);
      }
    }
  }
  return field;
}

GridWorld generate_random_map(int width, int height, double obstacle_density, Rng& rng,
                              double cell_size) {
  if (!(obstacle_density >= 0.0 && obstacle_density < 1.0)) {
    throw ConfigError("obstacle density must lie in [0, 1)");
  }
  GridWorld map(width, height, cell_size);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) map.set_occupied({x, y}, rng.uniform() < obstacle_density);
  }

  // Label components and keep only the largest.
  std::vector<int> label(static_cast<std::size_t>(width) * height, -1);
  std::vector<std::size_t> sizes;
  for (const Cell& c : map.free_cells()) {
    if (label[map.index(c)] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    const auto field = bfs_geodesic(map, c);
    std::size_t n = 0;
    for (std::size_t i = 0; i < label.size(); ++i) {
      if (field.raw()[i] != DistanceField::kUnreachable) {
        label[i] = id;
        ++n;
      }
    }
    sizes.push_back(n);
  }
  if (sizes.empty()) return map;
  const int keep = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (label[i] >= 0 && label[i] != keep) map.set_occupied(map.cell_at(i), true);
  }
  return map;
}

GridWorld make_split_map(const MapSetSpec& spec, MapSplit split, std::size_t i) {
  Rng rng(derive_seed(spec.base_seed, split == MapSplit::kTrain ? 0x7261696eULL : 0x74657374ULL, i));
  return generate_random_map(spec.width, spec.height, spec.obstacle_density, rng, spec.cell_size);
}

}  // namespace ddppo::envs
