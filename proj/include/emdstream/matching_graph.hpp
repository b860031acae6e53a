#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "emdstream/exact_oracle.hpp"
#include "emdstream/geometry.hpp"

namespace emdstream {

/// Matching edges that cross a grid, collapsed to (from cell, to cell, length).
struct GammaEdge {
  CellId from;
  CellId to;
  std::int64_t length = 0;
  std::int64_t multiplicity = 1;

  friend auto operator<=>(const GammaEdge&, const GammaEdge&) = default;
};

/// Directed multigraph over the cells of a grid: one vertex per cell holding
/// an S or T point, one edge (S cell -> T cell) per unit of matched mass
/// whose endpoints fall in different cells.
class GammaGraph {
 public:
  GammaGraph() = default;
  GammaGraph(GridSpec grid, std::set<CellId> vertices, std::vector<GammaEdge> edges);

  const GridSpec& grid() const noexcept { return grid_; }
  const std::set<CellId>& vertices() const noexcept { return vertices_; }
  /// Sorted by (from, to, length); parallel units share one entry.
  const std::vector<GammaEdge>& edges() const noexcept { return edges_; }
  std::int64_t out_degree(CellId v) const;
  std::int64_t in_degree(CellId v) const;
  /// sum_v |deg+(v) - deg-(v)|.
  std::int64_t imbalance() const;
  std::int64_t edge_count() const;

 private:
  GridSpec grid_;
  std::set<CellId> vertices_;
  std::vector<GammaEdge> edges_;
  std::map<CellId, std::int64_t> out_;
  std::map<CellId, std::int64_t> in_;
};

/// Requires integral masses in the matching.
GammaGraph build_gamma(const Matching& matching, const GridSpec& grid);

/// k * 2^(level + 1): the length at which an edge counts as long.
std::int64_t long_edge_threshold(int level, std::int64_t k) noexcept;

/// True iff no directed cycle of the graph contains an edge of length >= threshold.
/// For each long edge u -> v this searches for a path v ~> u.
bool check_no_long_cycle(const GammaGraph& gamma, std::int64_t threshold);

struct GammaPath {
  std::vector<GammaEdge> edges;  // unit multiplicity, in walk order
  std::int64_t long_edges = 0;
};

/// Repeatedly takes the smallest remaining edge of length >= threshold and
/// grows it into a path: forward until a vertex with deg- > deg+, backward
/// until a vertex with deg+ > deg-, following the smallest available edge and
/// cutting any loop that does not contain the seed edge. Each extracted path
/// lowers imbalance() by exactly 2.
/// Throws CycleEncountered if the seed edge lies on a cycle.
std::vector<GammaPath> path_decompose(const GammaGraph& gamma, std::int64_t threshold);

/// True iff every path has at most k edges.
bool check_simple_path_length(const std::vector<GammaPath>& paths, std::int64_t k);

/// True iff no matching edge with 8 * k * length < 2^level crosses the grid.
bool is_good_grid(const GridSpec& grid, const Matching& matching, std::int64_t k);

/// Total matched mass on edges whose endpoints lie in different cells.
std::int64_t crossing_mass(const Matching& matching, const GridSpec& grid);

/// Total matched mass on edges of length >= threshold.
std::int64_t long_edge_mass(const Matching& matching, std::int64_t threshold);

}  // namespace emdstream
