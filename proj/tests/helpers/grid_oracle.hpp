#pragma once

// Dijkstra with a binary heap on the 4-connected grid: a second
// shortest-path implementation to check the BFS against.

#include <functional>
#include <limits>
#include <queue>
#include <vector>

#include "ddppo/envs/grid.hpp"

namespace oracle {

inline std::vector<int> dijkstra(const ddppo::envs::GridWorld& map, ddppo::envs::Cell src) {
  const int w = map.width();
  const int h = map.height();
  const int inf = std::numeric_limits<int>::max();
  std::vector<int> dist(static_cast<std::size_t>(w * h), inf);
  using Item = std::pair<int, int>;  // (distance, flat index)
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[static_cast<std::size_t>(src.y * w + src.x)] = 0;
  heap.push({0, src.y * w + src.x});
  while (!heap.empty()) {
    const auto [d, idx] = heap.top();
    heap.pop();
    if (d > dist[static_cast<std::size_t>(idx)]) continue;
    const int x = idx % w, y = idx / w;
    const int dx[4] = {1, -1, 0, 0};
    const int dy[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const ddppo::envs::Cell n{x + dx[k], y + dy[k]};
      if (!map.is_free(n)) continue;
      const int ni = n.y * w + n.x;
      if (d + 1 < dist[static_cast<std::size_t>(ni)]) {
        dist[static_cast<std::size_t>(ni)] = d + 1;
        heap.push({d + 1, ni});
      }
    }
  }
  for (int& d : dist) {
    if (d == inf) d = -1;
  }
  return dist;
}

}  // namespace oracle
