#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <unordered_map>
#include <vector>

namespace emdstream {

using Rng = std::mt19937_64;

/// Integer grid point in [1, side]^2.
struct Point {
  std::int64_t x = 0;
  std::int64_t y = 0;

  friend auto operator<=>(const Point&, const Point&) = default;
};

std::int64_t l1_distance(Point a, Point b) noexcept;
double l2_distance(Point a, Point b) noexcept;

/// The discrete universe [1, side]^2 with side a power of two.
class Domain {
 public:
  /// Throws InvalidArgument unless side is a power of two >= 2.
  explicit Domain(std::int64_t side);

  std::int64_t side() const noexcept { return side_; }
  /// log2(side); grid levels run 0..log_side().
  int log_side() const noexcept { return log_side_; }
  int level_count() const noexcept { return log_side_ + 1; }
  bool contains(Point p) const noexcept;
  /// Throws RangeError if p lies outside the domain.
  void require(Point p) const;

  friend bool operator==(const Domain&, const Domain&) = default;

 private:
  std::int64_t side_;
  int log_side_;
};

/// An axis-parallel grid of cell size 2^level whose lines sit at half-integral
/// coordinates. The shift along each axis is offset + 1/2 with offset in
/// [0, 2^level); only the residue modulo the cell size affects membership.
class GridSpec {
 public:
  GridSpec() = default;
  /// Throws InvalidArgument on a negative level or out-of-range offsets.
  GridSpec(int level, std::int64_t offset_x, std::int64_t offset_y);

  int level() const noexcept { return level_; }
  std::int64_t cell_size() const noexcept { return std::int64_t{1} << level_; }
  std::int64_t offset_x() const noexcept { return offset_x_; }
  std::int64_t offset_y() const noexcept { return offset_y_; }
  double shift_x() const noexcept { return static_cast<double>(offset_x_) + 0.5; }
  double shift_y() const noexcept { return static_cast<double>(offset_y_) + 0.5; }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  int level_ = 0;
  std::int64_t offset_x_ = 0;
  std::int64_t offset_y_ = 0;
};

struct CellId {
  std::int64_t ix = 0;
  std::int64_t iy = 0;

  friend auto operator<=>(const CellId&, const CellId&) = default;
};

struct CellIdHash {
  std::size_t operator()(const CellId& c) const noexcept;
};

struct PointHash {
  std::size_t operator()(const Point& p) const noexcept;
};

/// ix = floor((x - shift_x) / cell_size), likewise for y.
CellId cell_of(Point p, const GridSpec& g) noexcept;

/// Grid with shift offsets drawn uniformly from [0, 2^level)^2.
/// Throws InvalidArgument if level is outside [0, domain.log_side()].
GridSpec random_grid(int level, const Domain& domain, Rng& rng);

bool edge_crosses(Point a, Point b, const GridSpec& g) noexcept;

enum class Side : std::uint8_t { S, T };

/// One turnstile event: sign * count copies of point enter (sign=+1) or leave
/// (sign=-1) the multiset named by side.
struct StreamUpdate {
  Side side = Side::S;
  int sign = +1;
  Point point;
  std::int64_t count = 1;

  friend bool operator==(const StreamUpdate&, const StreamUpdate&) = default;
};

/// Net contribution of an update to V_G(S) - V_G(T).
std::int64_t signed_delta(const StreamUpdate& u) noexcept;

/// Exact sparse form of V_G(S) - V_G(T); zero entries are never stored.
class SparseCellCounts {
 public:
  explicit SparseCellCounts(GridSpec grid) : grid_(grid) {}

  const GridSpec& grid() const noexcept { return grid_; }
  void add(Point p, std::int64_t delta);
  void apply_update(const StreamUpdate& u) { add(u.point, signed_delta(u)); }
  std::int64_t at(CellId c) const;
  std::int64_t l1_norm() const noexcept;
  std::size_t nonzero_count() const noexcept { return counts_.size(); }
  bool empty() const noexcept { return counts_.empty(); }
  const std::unordered_map<CellId, std::int64_t, CellIdHash>& entries() const noexcept {
    return counts_;
  }

  friend bool operator==(const SparseCellCounts&, const SparseCellCounts&) = default;

 private:
  GridSpec grid_;
  std::unordered_map<CellId, std::int64_t, CellIdHash> counts_;
};

/// Multiset of points with nonnegative weights. Integer weights for raw input;
/// coreset outputs may carry real weights. Zero-weight entries are dropped.
class WeightedPointSet {
 public:
  WeightedPointSet() = default;
  WeightedPointSet(std::initializer_list<std::pair<const Point, double>> items);

  void add(Point p, double weight = 1.0);
  double weight(Point p) const;
  double total_weight() const noexcept { return total_; }
  std::size_t distinct() const noexcept { return weights_.size(); }
  bool empty() const noexcept { return weights_.empty(); }
  bool integral() const noexcept;
  /// Expanded multiset size; requires integral weights.
  std::int64_t multiplicity_total() const;

  auto begin() const noexcept { return weights_.begin(); }
  auto end() const noexcept { return weights_.end(); }

  friend bool operator==(const WeightedPointSet&, const WeightedPointSet&) = default;

 private:
  std::map<Point, double> weights_;
  double total_ = 0.0;
};

/// V_g(S) - V_g(T) computed directly from the two sets.
SparseCellCounts characteristic_difference(const WeightedPointSet& s, const WeightedPointSet& t,
                                           const GridSpec& g);

}  // namespace emdstream
