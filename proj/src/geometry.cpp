#include "emdstream/geometry.hpp"

#include <bit>
#include <cmath>
#include <cstdlib>
#include <string>

#include "emdstream/error.hpp"
#include "emdstream/hashing.hpp"

namespace emdstream {

namespace {

std::int64_t floor_div(std::int64_t num, std::int64_t den) noexcept {
  std::int64_t q = num / den;
  if ((num % den != 0) && ((num < 0) != (den < 0))) --q;
  return q;
}

// Index of the cell holding coordinate v when lines sit at offset + 1/2 + m*size.
// (v - offset - 1/2) / size == (2(v - offset) - 1) / (2 size); never integral.
std::int64_t axis_cell(std::int64_t v, std::int64_t offset, std::int64_t size) noexcept {
  return floor_div(2 * (v - offset) - 1, 2 * size);
}

}  // namespace

std::int64_t l1_distance(Point a, Point b) noexcept {
  return std::llabs(a.x - b.x) + std::llabs(a.y - b.y);
}

double l2_distance(Point a, Point b) noexcept {
  return std::hypot(static_cast<double>(a.x - b.x), static_cast<double>(a.y - b.y));
}

Domain::Domain(std::int64_t side) : side_(side), log_side_(0) {
  if (side < 2 || !std::has_single_bit(static_cast<std::uint64_t>(side))) {
    throw Error(ErrorCode::invalid_argument,
                "domain side must be a power of two >= 2, got " + std::to_string(side));
  }
  log_side_ = std::countr_zero(static_cast<std::uint64_t>(side));
}

bool Domain::contains(Point p) const noexcept {
  return p.x >= 1 && p.x <= side_ && p.y >= 1 && p.y <= side_;
}

void Domain::require(Point p) const {
  if (!contains(p)) {
    throw Error(ErrorCode::range_error, "point (" + std::to_string(p.x) + "," +
                                            std::to_string(p.y) + ") outside [1," +
                                            std::to_string(side_) + "]^2");
  }
}

GridSpec::GridSpec(int level, std::int64_t offset_x, std::int64_t offset_y)
    : level_(level), offset_x_(offset_x), offset_y_(offset_y) {
  if (level < 0 || level > 62) {
    throw Error(ErrorCode::invalid_argument, "grid level out of range");
  }
  const std::int64_t size = cell_size();
  if (offset_x < 0 || offset_x >= size || offset_y < 0 || offset_y >= size) {
    throw Error(ErrorCode::invalid_argument, "grid offset must lie in [0, cell_size)");
  }
}

std::size_t CellIdHash::operator()(const CellId& c) const noexcept {
  return static_cast<std::size_t>(
      detail::mix64(static_cast<std::uint64_t>(c.ix) * 0x9E3779B97F4A7C15ULL ^
                    static_cast<std::uint64_t>(c.iy)));
}

std::size_t PointHash::operator()(const Point& p) const noexcept {
  return static_cast<std::size_t>(
      detail::mix64(static_cast<std::uint64_t>(p.x) * 0x9E3779B97F4A7C15ULL ^
                    static_cast<std::uint64_t>(p.y)));
}

CellId cell_of(Point p, const GridSpec& g) noexcept {
  const std::int64_t size = g.cell_size();
  return {axis_cell(p.x, g.offset_x(), size), axis_cell(p.y, g.offset_y(), size)};
}

GridSpec random_grid(int level, const Domain& domain, Rng& rng) {
  if (level < 0 || level > domain.log_side()) {
    throw Error(ErrorCode::invalid_argument,
                "grid level " + std::to_string(level) + " outside [0," +
                    std::to_string(domain.log_side()) + "]");
  }
  std::uniform_int_distribution<std::int64_t> offset(0, (std::int64_t{1} << level) - 1);
  const std::int64_t ox = offset(rng);
  const std::int64_t oy = offset(rng);
  return GridSpec(level, ox, oy);
}

bool edge_crosses(Point a, Point b, const GridSpec& g) noexcept {
  return cell_of(a, g) != cell_of(b, g);
}

std::int64_t signed_delta(const StreamUpdate& u) noexcept {
  const std::int64_t magnitude = u.sign * u.count;
  return u.side == Side::S ? magnitude : -magnitude;
}

void SparseCellCounts::add(Point p, std::int64_t delta) {
  if (delta == 0) return;
  const CellId cell = cell_of(p, grid_);
  auto it = counts_.find(cell);
  if (it == counts_.end()) {
    counts_.emplace(cell, delta);
    return;
  }
  it->second += delta;
  if (it->second == 0) counts_.erase(it);
}

std::int64_t SparseCellCounts::at(CellId c) const {
  auto it = counts_.find(c);
  return it == counts_.end() ? 0 : it->second;
}

std::int64_t SparseCellCounts::l1_norm() const noexcept {
  std::int64_t total = 0;
  for (const auto& [cell, count] : counts_) total += std::llabs(count);
  return total;
}

WeightedPointSet::WeightedPointSet(std::initializer_list<std::pair<const Point, double>> items) {
  for (const auto& [p, w] : items) add(p, w);
}

void WeightedPointSet::add(Point p, double weight) {
  if (weight < 0.0) {
    throw Error(ErrorCode::invalid_argument, "point weights must be nonnegative");
  }
  if (weight == 0.0) return;
  weights_[p] += weight;
  total_ += weight;
}

double WeightedPointSet::weight(Point p) const {
  auto it = weights_.find(p);
  return it == weights_.end() ? 0.0 : it->second;
}

bool WeightedPointSet::integral() const noexcept {
  for (const auto& [p, w] : weights_) {
    if (std::abs(w - std::round(w)) > 1e-9) return false;
  }
  return true;
}

std::int64_t WeightedPointSet::multiplicity_total() const {
  if (!integral()) {
    throw Error(ErrorCode::invalid_argument, "multiplicity_total requires integral weights");
  }
  std::int64_t total = 0;
  for (const auto& [p, w] : weights_) total += std::llround(w);
  return total;
}

SparseCellCounts characteristic_difference(const WeightedPointSet& s, const WeightedPointSet& t,
                                           const GridSpec& g) {
  SparseCellCounts counts(g);
  for (const auto& [p, w] : s) counts.add(p, std::llround(w));
  for (const auto& [p, w] : t) counts.add(p, -std::llround(w));
  return counts;
}

}  // namespace emdstream
