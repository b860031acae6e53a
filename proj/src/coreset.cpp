#include "emdstream/coreset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <tuple>

#include "emdstream/error.hpp"
#include "emdstream/exact_oracle.hpp"

namespace emdstream {

namespace {

struct Nearest {
  std::size_t index = 0;
  double distance = std::numeric_limits<double>::infinity();
};

Nearest nearest(Point p, const std::vector<Point>& anchors) {
  Nearest best;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const double d = l2_distance(p, anchors[i]);
    if (d < best.distance) best = {i, d};
  }
  return best;
}

// Weighted D^1 seeding over the distinct points of the bucket.
std::vector<Point> seed_centers(const std::vector<std::pair<Point, double>>& pts, std::size_t m,
                                Rng& rng) {
  std::vector<Point> centers;
  std::vector<double> dist(pts.size(), std::numeric_limits<double>::infinity());
  std::vector<double> mass(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) mass[i] = pts[i].second;
  while (centers.size() < m) {
    std::discrete_distribution<std::size_t> pick(mass.begin(), mass.end());
    const Point c = pts[pick(rng)].first;
    centers.push_back(c);
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      dist[i] = std::min(dist[i], l2_distance(pts[i].first, c));
      mass[i] = pts[i].second * dist[i];
      total += mass[i];
    }
    if (total <= 0.0) break;  // every point is a center
  }
  return centers;
}

// (anchor, ring, cell x, cell y); ring -1 marks a point sitting on its anchor.
using CellKey = std::tuple<std::size_t, int, std::int64_t, std::int64_t>;

}  // namespace

double level_epsilon(double epsilon, int level) noexcept {
  const double l = static_cast<double>(level) + 1.0;
  return 3.0 * epsilon / (std::numbers::pi * std::numbers::pi * l * l);
}

ReduceResult reduce(const WeightedPointSet& bucket, int k, double epsilon, Rng& rng,
                    const std::vector<Point>& hints) {
  if (bucket.empty()) throw Error(ErrorCode::empty_input, "cannot reduce an empty bucket");
  if (k < 1) throw Error(ErrorCode::invalid_argument, "k must be positive");

  std::vector<std::pair<Point, double>> pts(bucket.begin(), bucket.end());
  const double total = bucket.total_weight();
  const auto budget = static_cast<std::size_t>(
      std::ceil(8.0 * k * std::log(std::max(total, 2.0))));
  ReduceResult out;
  out.centers = seed_centers(pts, std::min(pts.size(), budget), rng);

  std::vector<Point> anchors = out.centers;
  anchors.insert(anchors.end(), hints.begin(), hints.end());

  std::vector<Nearest> near(pts.size());
  double hint_cost = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    near[i] = nearest(pts[i].first, anchors);
    out.bicriteria_cost += pts[i].second * near[i].distance;
    if (!hints.empty()) hint_cost += pts[i].second * nearest(pts[i].first, hints).distance;
  }
  const std::vector<Point> first_k(
      out.centers.begin(),
      out.centers.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(k, out.centers.size())));
  out.upper_bound = median_cost(bucket, first_k);
  if (!hints.empty()) out.upper_bound = std::min(out.upper_bound, hint_cost);

  const double radius = out.bicriteria_cost / total;
  std::map<CellKey, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Point p = pts[i].first;
    const Point c = anchors[near[i].index];
    if (near[i].distance == 0.0 || radius == 0.0) {
      cells[{near[i].index, -1, p.x, p.y}].push_back(i);
      continue;
    }
    const int ring = std::max(0, static_cast<int>(std::ceil(std::log2(near[i].distance / radius))));
    const double side = epsilon * std::ldexp(radius, ring) / 5.0;
    const auto cx = static_cast<std::int64_t>(std::floor(static_cast<double>(p.x - c.x) / side));
    const auto cy = static_cast<std::int64_t>(std::floor(static_cast<double>(p.y - c.y) / side));
    cells[{near[i].index, ring, cx, cy}].push_back(i);
  }

  for (const auto& [key, members] : cells) {
    // pts is sorted by point, so the first maximum is the smallest heaviest point.
    std::size_t rep = members.front();
    double weight = 0.0;
    for (std::size_t i : members) {
      weight += pts[i].second;
      if (pts[i].second > pts[rep].second) rep = i;
    }
    double moved = 0.0;
    for (std::size_t i : members) moved += pts[i].second * l2_distance(pts[i].first, pts[rep].first);
    out.points.add(pts[rep].first, weight);
    out.movement += moved;
    if (moved > 0.0) out.movement_by_point[pts[rep].first] += moved;
  }
  return out;
}

// ---------------------------------------------------------------------------

CoresetState::CoresetState(const CoresetConfig& config)
    : config_(config), domain_(config.side), rng_(config.seed) {
  if (config.k < 1) throw Error(ErrorCode::invalid_argument, "k must be positive");
  if (!(config.epsilon > 0.0 && config.epsilon < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "epsilon must lie in (0,1)");
  }
  if (config.fan_in < 2) throw Error(ErrorCode::invalid_argument, "fan-in must be at least 2");
  bucket_size_ = config.bucket_size;
  if (bucket_size_ == 0) {
    bucket_size_ = std::max<std::size_t>(
        64, static_cast<std::size_t>(std::ceil(4.0 * config.k / (config.epsilon * config.epsilon))));
  }
}

void CoresetState::apply(const StreamUpdate& u) {
  if (u.sign < 0) {
    throw Error(ErrorCode::deletion_unsupported, "the coreset estimator is insertion-only");
  }
  insert(u.side, u.point, u.count);
}

void CoresetState::insert(Side side, Point p, std::int64_t count) {
  domain_.require(p);
  if (count < 1) throw Error(ErrorCode::invalid_argument, "count must be positive");
  if (side == Side::T) {
    if (t_store_.weight(p) == 0.0 && t_store_.distinct() >= static_cast<std::size_t>(config_.k)) {
      throw Error(ErrorCode::distinct_bound_exceeded,
                  "T would exceed k = " + std::to_string(config_.k) + " distinct points");
    }
    t_store_.add(p, static_cast<double>(count));
    n_t_ += count;
    return;
  }
  n_s_ += count;
  while (count > 0) {
    const std::int64_t room = static_cast<std::int64_t>(bucket_size_) - buffered_;
    const std::int64_t take = std::min(room, count);
    buffer_.add(p, static_cast<double>(take));
    buffered_ += take;
    count -= take;
    if (buffered_ == static_cast<std::int64_t>(bucket_size_)) flush_buffer();
  }
}

void CoresetState::flush_buffer() {
  WeightedPointSet leaf = std::move(buffer_);
  buffer_ = WeightedPointSet();
  buffered_ = 0;
  push(std::move(leaf), 0);
}

std::vector<Point> CoresetState::t_points() const {
  std::vector<Point> out;
  for (const auto& [p, w] : t_store_) out.push_back(p);
  return out;
}

void CoresetState::push(WeightedPointSet bucket, int level) {
  while (true) {
    if (tree_.size() <= static_cast<std::size_t>(level)) tree_.resize(static_cast<std::size_t>(level) + 1);
    auto& slot = tree_[static_cast<std::size_t>(level)];
    slot.push_back(std::move(bucket));
    if (slot.size() < static_cast<std::size_t>(config_.fan_in)) return;

    WeightedPointSet merged;
    for (const auto& b : slot) {
      for (const auto& [p, w] : b) merged.add(p, w);
    }
    slot.clear();
    const double eps = level_epsilon(config_.epsilon, level);
    ReduceResult r = reduce(merged, config_.k, eps, rng_, t_points());
    reduces_.push_back({level, eps, r.movement, r.bicriteria_cost, r.upper_bound,
                        merged.distinct(), r.points.distinct()});
    movement_ += r.movement;
    for (const auto& [p, m] : r.movement_by_point) movement_by_point_[p] += m;
    bucket = std::move(r.points);
    ++level;
  }
}

WeightedPointSet CoresetState::s_core() const {
  WeightedPointSet core = buffer_;
  for (const auto& slot : tree_) {
    for (const auto& b : slot) {
      for (const auto& [p, w] : b) core.add(p, w);
    }
  }
  return core;
}

double CoresetState::estimate() const {
  if (n_s_ != n_t_) {
    throw Error(ErrorCode::size_mismatch,
                "|S| = " + std::to_string(n_s_) + " but |T| = " + std::to_string(n_t_));
  }
  if (n_s_ == 0) throw Error(ErrorCode::empty_stream, "no points in the stream");
  return exact_emd(s_core(), t_store_).cost;
}

WeightSensitivity weight_sensitivity_demo(std::int64_t n, std::int64_t far, double epsilon) {
  if (n < 2 || n % 2 != 0 || far < 2) {
    throw Error(ErrorCode::invalid_argument, "need even n >= 2 and far >= 2");
  }
  const Point t1{1, 1};
  const Point t2{1 + far, 1};
  const Point s1{1, 2};
  const Point s2{1 + far, 2};
  const double half = static_cast<double>(n) / 2.0;
  const WeightedPointSet t{{t1, half}, {t2, half}};
  const WeightedPointSet core{{s1, half}, {s2, half}};
  const WeightedPointSet perturbed{{s1, half * (1.0 + epsilon)}, {s2, half * (1.0 - epsilon)}};
  return {exact_emd(core, t).cost, exact_emd(perturbed, t).cost};
}

}  // namespace emdstream
