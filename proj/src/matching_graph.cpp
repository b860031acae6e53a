#include "emdstream/matching_graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <tuple>
#include <string>

#include "emdstream/error.hpp"

namespace emdstream {

namespace {

std::int64_t integral_mass(double mass) {
  const double rounded = std::round(mass);
  if (std::abs(mass - rounded) > 1e-9) {
    throw Error(ErrorCode::invalid_argument, "matching mass must be integral");
  }
  return static_cast<std::int64_t>(rounded);
}

std::int64_t lookup(const std::map<CellId, std::int64_t>& m, CellId v) {
  const auto it = m.find(v);
  return it == m.end() ? 0 : it->second;
}

std::string describe(CellId c) {
  return "(" + std::to_string(c.ix) + "," + std::to_string(c.iy) + ")";
}

// Residual view of a GammaGraph used while extracting paths.
class Residual {
 public:
  explicit Residual(const GammaGraph& g) : edges_(g.edges()) {
    left_.reserve(edges_.size());
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      left_.push_back(edges_[i].multiplicity);
      out_[edges_[i].from].push_back(i);
      in_[edges_[i].to].push_back(i);
      out_deg_[edges_[i].from] += edges_[i].multiplicity;
      in_deg_[edges_[i].to] += edges_[i].multiplicity;
    }
    // edges_ is sorted by (from, to, length); incoming lists want (from, length).
    for (auto& [v, list] : in_) {
      std::sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(edges_[a].from, edges_[a].length) < std::tie(edges_[b].from, edges_[b].length);
      });
    }
  }

  std::optional<std::size_t> next_long(std::int64_t threshold) const {
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      if (left_[i] > 0 && edges_[i].length >= threshold) return i;
    }
    return std::nullopt;
  }

  GammaPath extract(std::size_t seed) {
    std::map<std::size_t, std::int64_t> used;
    auto available = [&](const std::vector<std::size_t>& list) -> std::size_t {
      for (std::size_t i : list) {
        if (left_[i] - used[i] > 0) return i;
      }
      throw Error(ErrorCode::invalid_argument, "degree bookkeeping broken: no edge to follow");
    };
    const CellId u = edges_[seed].from;
    const CellId v = edges_[seed].to;
    used[seed] = 1;

    // Forward: fwd_vertices[i] -> fwd_vertices[i+1] via fwd_edges[i].
    std::vector<CellId> fwd_vertices{u, v};
    std::vector<std::size_t> fwd_edges{seed};
    CellId w = v;
    while (lookup(in_deg_, w) <= lookup(out_deg_, w)) {
      const std::size_t e = available(out_[w]);
      ++used[e];
      const CellId x = edges_[e].to;
      if (x == u) {
        throw Error(ErrorCode::cycle_encountered, "long edge " + describe(u) + "->" + describe(v) +
                                                      " lies on a cycle");
      }
      const auto hit = std::find(fwd_vertices.begin() + 1, fwd_vertices.end(), x);
      if (hit != fwd_vertices.end()) {
        // Loop not through the seed edge: drop it, its units stay blocked.
        const auto pos = hit - fwd_vertices.begin();
        fwd_vertices.erase(hit + 1, fwd_vertices.end());
        fwd_edges.erase(fwd_edges.begin() + pos, fwd_edges.end());
      } else {
        fwd_vertices.push_back(x);
        fwd_edges.push_back(e);
      }
      w = x;
    }

    // Backward: bwd_vertices[i+1] -> bwd_vertices[i] via bwd_edges[i].
    std::vector<CellId> bwd_vertices{u};
    std::vector<std::size_t> bwd_edges;
    w = u;
    while (lookup(out_deg_, w) <= lookup(in_deg_, w)) {
      const std::size_t e = available(in_[w]);
      ++used[e];
      const CellId x = edges_[e].from;
      if (std::find(fwd_vertices.begin() + 1, fwd_vertices.end(), x) != fwd_vertices.end()) {
        throw Error(ErrorCode::cycle_encountered, "long edge " + describe(u) + "->" + describe(v) +
                                                      " lies on a cycle");
      }
      const auto hit = std::find(bwd_vertices.begin(), bwd_vertices.end(), x);
      if (hit != bwd_vertices.end()) {
        const auto pos = hit - bwd_vertices.begin();
        bwd_vertices.erase(hit + 1, bwd_vertices.end());
        bwd_edges.erase(bwd_edges.begin() + pos, bwd_edges.end());
      } else {
        bwd_vertices.push_back(x);
        bwd_edges.push_back(e);
      }
      w = x;
    }

    GammaPath path;
    std::vector<std::size_t> order(bwd_edges.rbegin(), bwd_edges.rend());
    order.insert(order.end(), fwd_edges.begin(), fwd_edges.end());
    for (std::size_t e : order) {
      GammaEdge unit = edges_[e];
      unit.multiplicity = 1;
      path.edges.push_back(unit);
      --left_[e];
      --out_deg_[unit.from];
      --in_deg_[unit.to];
    }
    return path;
  }

  std::int64_t imbalance() const {
    std::set<CellId> all;
    for (const auto& [c, d] : out_deg_) all.insert(c);
    for (const auto& [c, d] : in_deg_) all.insert(c);
    std::int64_t total = 0;
    for (CellId c : all) total += std::abs(lookup(out_deg_, c) - lookup(in_deg_, c));
    return total;
  }

 private:
  const std::vector<GammaEdge>& edges_;
  std::vector<std::int64_t> left_;
  std::map<CellId, std::vector<std::size_t>> out_;
  std::map<CellId, std::vector<std::size_t>> in_;
  std::map<CellId, std::int64_t> out_deg_;
  std::map<CellId, std::int64_t> in_deg_;
};

}  // namespace

GammaGraph::GammaGraph(GridSpec grid, std::set<CellId> vertices, std::vector<GammaEdge> edges)
    : grid_(grid), vertices_(std::move(vertices)) {
  std::sort(edges.begin(), edges.end());
  for (const auto& e : edges) {
    if (e.multiplicity <= 0) continue;
    if (e.from == e.to) throw Error(ErrorCode::invalid_argument, "gamma edges must cross cells");
    if (!edges_.empty() && edges_.back().from == e.from && edges_.back().to == e.to &&
        edges_.back().length == e.length) {
      edges_.back().multiplicity += e.multiplicity;
    } else {
      edges_.push_back(e);
    }
    out_[e.from] += e.multiplicity;
    in_[e.to] += e.multiplicity;
    vertices_.insert(e.from);
    vertices_.insert(e.to);
  }
}

std::int64_t GammaGraph::out_degree(CellId v) const { return lookup(out_, v); }
std::int64_t GammaGraph::in_degree(CellId v) const { return lookup(in_, v); }

std::int64_t GammaGraph::imbalance() const {
  std::int64_t total = 0;
  for (CellId v : vertices_) total += std::abs(out_degree(v) - in_degree(v));
  return total;
}

std::int64_t GammaGraph::edge_count() const {
  std::int64_t total = 0;
  for (const auto& e : edges_) total += e.multiplicity;
  return total;
}

GammaGraph build_gamma(const Matching& matching, const GridSpec& grid) {
  std::set<CellId> vertices;
  std::vector<GammaEdge> edges;
  for (const auto& m : matching.edges) {
    const std::int64_t mass = integral_mass(m.mass);
    if (mass == 0) continue;
    const CellId a = cell_of(m.from, grid);
    const CellId b = cell_of(m.to, grid);
    vertices.insert(a);
    vertices.insert(b);
    if (a != b) edges.push_back({a, b, m.l1_length, mass});
  }
  return GammaGraph(grid, std::move(vertices), std::move(edges));
}

std::int64_t long_edge_threshold(int level, std::int64_t k) noexcept {
  return k * (std::int64_t{1} << (level + 1));
}

bool check_no_long_cycle(const GammaGraph& gamma, std::int64_t threshold) {
  std::map<CellId, std::vector<CellId>> adjacency;
  for (const auto& e : gamma.edges()) adjacency[e.from].push_back(e.to);
  for (const auto& e : gamma.edges()) {
    if (e.length < threshold) continue;
    std::set<CellId> seen{e.to};
    std::deque<CellId> queue{e.to};
    while (!queue.empty()) {
      const CellId w = queue.front();
      queue.pop_front();
      if (w == e.from) return false;
      const auto it = adjacency.find(w);
      if (it == adjacency.end()) continue;
      for (CellId x : it->second) {
        if (seen.insert(x).second) queue.push_back(x);
      }
    }
  }
  return true;
}

std::vector<GammaPath> path_decompose(const GammaGraph& gamma, std::int64_t threshold) {
  Residual residual(gamma);
  std::vector<GammaPath> paths;
  std::int64_t imbalance = residual.imbalance();
  while (const auto seed = residual.next_long(threshold)) {
    GammaPath path = residual.extract(*seed);
    for (const auto& e : path.edges) {
      if (e.length >= threshold) ++path.long_edges;
    }
    const std::int64_t after = residual.imbalance();
    if (after != imbalance - 2) {
      throw Error(ErrorCode::invalid_argument, "path extraction did not lower the imbalance by 2");
    }
    imbalance = after;
    paths.push_back(std::move(path));
  }
  return paths;
}

bool check_simple_path_length(const std::vector<GammaPath>& paths, std::int64_t k) {
  return std::all_of(paths.begin(), paths.end(), [k](const GammaPath& p) {
    return static_cast<std::int64_t>(p.edges.size()) <= k;
  });
}

bool is_good_grid(const GridSpec& grid, const Matching& matching, std::int64_t k) {
  const std::int64_t cell = grid.cell_size();
  for (const auto& e : matching.edges) {
    if (e.mass <= 0.0) continue;
    if (e.l1_length * 8 * k < cell && edge_crosses(e.from, e.to, grid)) return false;
  }
  return true;
}

std::int64_t crossing_mass(const Matching& matching, const GridSpec& grid) {
  std::int64_t total = 0;
  for (const auto& e : matching.edges) {
    if (edge_crosses(e.from, e.to, grid)) total += integral_mass(e.mass);
  }
  return total;
}

std::int64_t long_edge_mass(const Matching& matching, std::int64_t threshold) {
  std::int64_t total = 0;
  for (const auto& e : matching.edges) {
    if (e.l1_length >= threshold) total += integral_mass(e.mass);
  }
  return total;
}

}  // namespace emdstream
