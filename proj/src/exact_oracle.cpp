#include "emdstream/exact_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <string>

#include "emdstream/error.hpp"

namespace emdstream {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double ground_distance(Point a, Point b, GroundMetric metric) {
  return metric == GroundMetric::l1 ? static_cast<double>(l1_distance(a, b)) : l2_distance(a, b);
}

// Successive shortest paths with Johnson potentials on the transportation
// network source -> S_i -> T_j -> sink. Node 0 is the source, 1..a the S
// supports, a+1..a+b the T supports, a+b+1 the sink.
class TransportSolver {
 public:
  TransportSolver(std::vector<std::int64_t> supply, std::vector<std::int64_t> demand,
                  std::vector<double> cost)
      : a_(static_cast<int>(supply.size())),
        b_(static_cast<int>(demand.size())),
        supply_left_(std::move(supply)),
        demand_left_(std::move(demand)),
        cost_(std::move(cost)),
        flow_(static_cast<std::size_t>(a_) * b_, 0),
        potential_(node_count(), 0.0) {}

  void solve() {
    std::int64_t remaining = std::accumulate(supply_left_.begin(), supply_left_.end(),
                                             std::int64_t{0});
    std::vector<double> dist(node_count());
    std::vector<int> parent(node_count());
    while (remaining > 0) {
      shortest_paths(dist, parent);
      const double to_sink = dist[sink()];
      if (!std::isfinite(to_sink)) {
        throw Error(ErrorCode::infeasible, "transportation network disconnected");
      }
      for (int v = 0; v < node_count(); ++v) potential_[v] += std::min(dist[v], to_sink);
      remaining -= augment(parent);
    }
  }

  std::int64_t flow(int i, int j) const { return flow_[index(i, j)]; }

 private:
  int node_count() const { return a_ + b_ + 2; }
  int sink() const { return a_ + b_ + 1; }
  static int source() { return 0; }
  int s_node(int i) const { return 1 + i; }
  int t_node(int j) const { return 1 + a_ + j; }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * b_ + j; }

  void shortest_paths(std::vector<double>& dist, std::vector<int>& parent) const {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(parent.begin(), parent.end(), -1);
    using Entry = std::pair<double, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    dist[source()] = 0.0;
    heap.emplace(0.0, source());

    auto relax = [&](int from, int to, double arc_cost) {
      double reduced = arc_cost + potential_[from] - potential_[to];
      if (reduced < 0.0) reduced = 0.0;  // rounding noise under the l2 metric
      const double candidate = dist[from] + reduced;
      if (candidate < dist[to]) {
        dist[to] = candidate;
        parent[to] = from;
        heap.emplace(candidate, to);
      }
    };

    while (!heap.empty()) {
      const auto [d, u] = heap.top();
      heap.pop();
      if (d > dist[u]) continue;
      if (u == source()) {
        for (int i = 0; i < a_; ++i) {
          if (supply_left_[i] > 0) relax(u, s_node(i), 0.0);
        }
      } else if (u <= a_) {
        const int i = u - 1;
        for (int j = 0; j < b_; ++j) relax(u, t_node(j), cost_[index(i, j)]);
      } else if (u != sink()) {
        const int j = u - 1 - a_;
        for (int i = 0; i < a_; ++i) {
          if (flow_[index(i, j)] > 0) relax(u, s_node(i), -cost_[index(i, j)]);
        }
        if (demand_left_[j] > 0) relax(u, sink(), 0.0);
      }
    }
  }

  std::int64_t augment(const std::vector<int>& parent) {
    std::int64_t bottleneck = std::numeric_limits<std::int64_t>::max();
    for (int v = sink(); v != source(); v = parent[v]) {
      const int u = parent[v];
      if (u == source()) {
        bottleneck = std::min(bottleneck, supply_left_[v - 1]);
      } else if (v == sink()) {
        bottleneck = std::min(bottleneck, demand_left_[u - 1 - a_]);
      } else if (u > a_) {  // backward arc T_j -> S_i cancels flow
        bottleneck = std::min(bottleneck, flow_[index(v - 1, u - 1 - a_)]);
      }
    }
    for (int v = sink(); v != source(); v = parent[v]) {
      const int u = parent[v];
      if (u == source()) {
        supply_left_[v - 1] -= bottleneck;
      } else if (v == sink()) {
        demand_left_[u - 1 - a_] -= bottleneck;
      } else if (u <= a_) {
        flow_[index(u - 1, v - 1 - a_)] += bottleneck;
      } else {
        flow_[index(v - 1, u - 1 - a_)] -= bottleneck;
      }
    }
    return bottleneck;
  }

  int a_;
  int b_;
  std::vector<std::int64_t> supply_left_;
  std::vector<std::int64_t> demand_left_;
  std::vector<double> cost_;
  std::vector<std::int64_t> flow_;
  std::vector<double> potential_;
};

std::vector<std::int64_t> scaled_weights(const std::vector<double>& weights, double scale) {
  std::vector<std::int64_t> out;
  out.reserve(weights.size());
  for (double w : weights) out.push_back(std::llround(w * scale));
  return out;
}

std::vector<Point> expand(const WeightedPointSet& set) {
  std::vector<Point> out;
  for (const auto& [p, w] : set) out.insert(out.end(), static_cast<std::size_t>(std::llround(w)), p);
  return out;
}

}  // namespace

Matching exact_emd(const WeightedPointSet& s, const WeightedPointSet& t, GroundMetric metric) {
  if (s.empty() || t.empty()) {
    throw Error(ErrorCode::empty_input, "exact_emd needs two nonempty sets");
  }
  const double tolerance = 1e-9 * std::max(1.0, std::max(s.total_weight(), t.total_weight()));
  if (std::abs(s.total_weight() - t.total_weight()) > tolerance) {
    throw Error(ErrorCode::weight_mismatch,
                "total weights differ: " + std::to_string(s.total_weight()) + " vs " +
                    std::to_string(t.total_weight()));
  }

  std::vector<Point> s_points, t_points;
  std::vector<double> s_weights, t_weights;
  for (const auto& [p, w] : s) {
    s_points.push_back(p);
    s_weights.push_back(w);
  }
  for (const auto& [p, w] : t) {
    t_points.push_back(p);
    t_weights.push_back(w);
  }

  const double scale = (s.integral() && t.integral()) ? 1.0 : kRealWeightScale;
  auto supply = scaled_weights(s_weights, scale);
  auto demand = scaled_weights(t_weights, scale);
  // Rounding may leave the scaled totals off by a few units; absorb the
  // difference in the heaviest demand.
  const std::int64_t gap = std::accumulate(supply.begin(), supply.end(), std::int64_t{0}) -
                           std::accumulate(demand.begin(), demand.end(), std::int64_t{0});
  if (gap != 0) {
    auto heaviest = std::max_element(demand.begin(), demand.end());
    *heaviest += gap;
    if (*heaviest < 0) throw Error(ErrorCode::weight_mismatch, "weights too small to scale");
  }

  const int a = static_cast<int>(s_points.size());
  const int b = static_cast<int>(t_points.size());
  std::vector<double> cost(static_cast<std::size_t>(a) * b);
  for (int i = 0; i < a; ++i) {
    for (int j = 0; j < b; ++j) {
      cost[static_cast<std::size_t>(i) * b + j] = ground_distance(s_points[i], t_points[j], metric);
    }
  }

  TransportSolver solver(std::move(supply), std::move(demand), cost);
  solver.solve();

  Matching matching;
  double scaled_cost = 0.0;
  for (int i = 0; i < a; ++i) {
    for (int j = 0; j < b; ++j) {
      const std::int64_t f = solver.flow(i, j);
      if (f == 0) continue;
      matching.edges.push_back({s_points[i], t_points[j], static_cast<double>(f) / scale,
                                l1_distance(s_points[i], t_points[j])});
      scaled_cost += static_cast<double>(f) * cost[static_cast<std::size_t>(i) * b + j];
    }
  }
  matching.cost = scaled_cost / scale;
  return matching;
}

double brute_force_emd(const WeightedPointSet& s, const WeightedPointSet& t, GroundMetric metric) {
  if (s.empty() || t.empty()) throw Error(ErrorCode::empty_input, "brute_force_emd: empty set");
  const std::int64_t n = s.multiplicity_total();
  if (n != t.multiplicity_total()) {
    throw Error(ErrorCode::weight_mismatch, "brute_force_emd: sizes differ");
  }
  if (n > 8) throw Error(ErrorCode::too_large, "brute_force_emd supports at most 8 points");

  const std::vector<Point> left = expand(s);
  const std::vector<Point> right = expand(t);
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = kInf;
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      total += ground_distance(left[i], right[static_cast<std::size_t>(perm[i])], metric);
    }
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double median_cost(const WeightedPointSet& p, const std::vector<Point>& centers) {
  double total = 0.0;
  for (const auto& [q, w] : p) {
    double nearest = kInf;
    for (const Point& c : centers) nearest = std::min(nearest, l2_distance(q, c));
    total += w * nearest;
  }
  return total;
}

std::vector<std::vector<Point>> center_subsets(const Domain& domain, int k) {
  std::vector<Point> cells;
  for (std::int64_t x = 1; x <= domain.side(); ++x) {
    for (std::int64_t y = 1; y <= domain.side(); ++y) cells.push_back({x, y});
  }
  std::vector<std::vector<Point>> subsets;
  if (k <= 0 || static_cast<std::size_t>(k) > cells.size()) return subsets;
  std::vector<std::size_t> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t m = cells.size();
  while (true) {
    std::vector<Point> subset;
    for (std::size_t i : idx) subset.push_back(cells[i]);
    subsets.push_back(std::move(subset));
    int pos = k - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == m - static_cast<std::size_t>(k - pos)) --pos;
    if (pos < 0) break;
    ++idx[static_cast<std::size_t>(pos)];
    for (std::size_t i = static_cast<std::size_t>(pos) + 1; i < idx.size(); ++i) idx[i] = idx[i - 1] + 1;
  }
  return subsets;
}

KMedianSolution exact_kmedian(const WeightedPointSet& p, int k, const Domain& domain) {
  if (domain.side() > 8 || k > 3) {
    throw Error(ErrorCode::too_large, "exact_kmedian supports side <= 8 and k <= 3");
  }
  if (k < 1) throw Error(ErrorCode::invalid_argument, "k must be positive");
  if (p.empty()) throw Error(ErrorCode::empty_input, "exact_kmedian: empty point set");
  KMedianSolution best{{}, kInf};
  for (auto& centers : center_subsets(domain, k)) {
    const double cost = median_cost(p, centers);
    if (cost < best.cost) best = {std::move(centers), cost};
  }
  return best;
}

std::vector<std::vector<std::int64_t>> capacity_vectors(int parts, std::int64_t cap,
                                                        std::int64_t total) {
  std::vector<std::vector<std::int64_t>> out;
  std::vector<std::int64_t> current;
  std::function<void(int, std::int64_t)> rec = [&](int left, std::int64_t rest) {
    if (left == 1) {
      if (rest <= cap) {
        current.push_back(rest);
        out.push_back(current);
        current.pop_back();
      }
      return;
    }
    for (std::int64_t v = 0; v <= std::min(cap, rest); ++v) {
      current.push_back(v);
      rec(left - 1, rest - v);
      current.pop_back();
    }
  };
  if (parts >= 1 && total >= 0) rec(parts, total);
  return out;
}

CapacitatedSolution exact_capacitated_kmedian(const WeightedPointSet& p, int k,
                                              std::int64_t capacity, const Domain& domain) {
  if (p.empty()) throw Error(ErrorCode::empty_input, "capacitated k-median: empty point set");
  const std::int64_t n = p.multiplicity_total();
  if (k < 1) throw Error(ErrorCode::invalid_argument, "k must be positive");
  if (capacity * k < n) {
    throw Error(ErrorCode::infeasible, "capacity " + std::to_string(capacity) + " x k=" +
                                           std::to_string(k) + " < n=" + std::to_string(n));
  }
  if (n > 8 || domain.side() > 4 || k > 2) {
    throw Error(ErrorCode::too_large, "exact capacitated k-median supports n<=8, side<=4, k<=2");
  }
  const auto vectors = capacity_vectors(k, capacity, n);
  CapacitatedSolution best{{}, {}, kInf};
  for (const auto& centers : center_subsets(domain, k)) {
    for (const auto& caps : vectors) {
      WeightedPointSet t;
      for (std::size_t r = 0; r < centers.size(); ++r) t.add(centers[r], static_cast<double>(caps[r]));
      const double cost = exact_emd(p, t).cost;
      if (cost < best.cost) best = {centers, caps, cost};
    }
  }
  return best;
}

}  // namespace emdstream
