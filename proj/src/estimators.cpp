#include "emdstream/estimators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <thread>
#include <utility>

#include "binary_io.hpp"
#include "emdstream/error.hpp"

namespace emdstream {

namespace {

// Label spaces for derive_key so that no two components share randomness.
constexpr std::uint64_t kGridLabel = 1;
constexpr std::uint64_t kDistinctLabel = 2;
constexpr std::uint64_t kBaselineLabel = 3;
constexpr std::uint64_t kShiftLabel = 4;

// Cell packing: level (6 bits) | grid index (10) | ix + 1 (24) | iy + 1 (24).
constexpr int kCellBits = 24;
constexpr int kGridBits = 10;

std::uint64_t pack_cell(int level, int j, CellId c) noexcept {
  const auto ux = static_cast<std::uint64_t>(c.ix + 1);
  const auto uy = static_cast<std::uint64_t>(c.iy + 1);
  return (static_cast<std::uint64_t>(level) << (2 * kCellBits + kGridBits)) |
         (static_cast<std::uint64_t>(j) << (2 * kCellBits)) | (ux << kCellBits) | uy;
}

void check_accuracy(double epsilon, double failure_prob) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "epsilon must lie in (0,1)");
  }
  if (!(failure_prob > 0.0 && failure_prob < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "failure probability must lie in (0,1)");
  }
}

void check_side(std::int64_t side) {
  if (side > (std::int64_t{1} << (kCellBits - 2))) {
    throw Error(ErrorCode::invalid_argument, "side too large for the cell encoding");
  }
}

void check_sizes(std::int64_t n_s, std::int64_t n_t) {
  if (n_s != n_t) {
    throw Error(ErrorCode::size_mismatch,
                "|S| = " + std::to_string(n_s) + " but |T| = " + std::to_string(n_t));
  }
  if (n_s <= 0) throw Error(ErrorCode::empty_stream, "no points in the stream");
}

void count_sizes(const StreamUpdate& u, std::int64_t& n_s, std::int64_t& n_t) {
  const std::int64_t d = static_cast<std::int64_t>(u.sign) * u.count;
  (u.side == Side::S ? n_s : n_t) += d;
}

// Sorted, merged (coord, delta) list with zero sums dropped.
std::vector<std::pair<std::uint64_t, std::int64_t>> aggregate(
    std::vector<std::pair<std::uint64_t, std::int64_t>> items) {
  std::sort(items.begin(), items.end());
  std::vector<std::pair<std::uint64_t, std::int64_t>> out;
  for (const auto& [coord, delta] : items) {
    if (!out.empty() && out.back().first == coord) {
      out.back().second += delta;
    } else {
      out.emplace_back(coord, delta);
    }
  }
  std::erase_if(out, [](const auto& e) { return e.second == 0; });
  return out;
}

// Runs fn(i) for i in [0, count) on up to `threads` workers.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn fn) {
  if (threads <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const unsigned workers = std::min<unsigned>(threads, static_cast<unsigned>(count));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

std::uint64_t config_hash(const MultigridConfig& c) {
  std::uint64_t h = detail::mix64(static_cast<std::uint64_t>(c.side));
  h = detail::mix64(h ^ static_cast<std::uint64_t>(c.grids_per_level));
  h = detail::mix64(h ^ std::bit_cast<std::uint64_t>(c.epsilon));
  h = detail::mix64(h ^ std::bit_cast<std::uint64_t>(c.failure_prob));
  h = detail::mix64(h ^ c.seed);
  h = detail::mix64(h ^ static_cast<std::uint64_t>(c.backend));
  h = detail::mix64(h ^ (static_cast<std::uint64_t>(c.distinct) << 8));
  return h;
}

MultigridState::MultigridState(const MultigridConfig& config)
    : config_(config), domain_(config.side), grids_per_level_(config.grids_per_level) {
  check_accuracy(config.epsilon, config.failure_prob);
  check_side(config.side);
  if (grids_per_level_ == 0) grids_per_level_ = 2 * domain_.log_side();
  if (grids_per_level_ < 1 || grids_per_level_ >= (1 << kGridBits)) {
    throw Error(ErrorCode::invalid_argument, "grids_per_level must lie in [1, 1023]");
  }
  config_.grids_per_level = grids_per_level_;

  Rng rng(derive_key(config.seed, kShiftLabel).lo);
  const SketchParams params{config.epsilon, sketch_failure_prob()};
  for (int level = 0; level < domain_.level_count(); ++level) {
    for (int j = 0; j < grids_per_level_; ++j) {
      grids_.push_back(random_grid(level, domain_, rng));
      if (config.backend == NormBackend::sketch) {
        sketches_.emplace_back(params, derive_key(config.seed, kGridLabel,
                                                  static_cast<std::uint64_t>(level),
                                                  static_cast<std::uint64_t>(j)));
      } else {
        dense_.emplace_back(grids_.back());
      }
    }
  }
  if (config.distinct == DistinctCounting::sketch) {
    const SketchParams l0{config.epsilon, config.failure_prob};
    const auto dim = static_cast<std::uint64_t>(config.side * config.side);
    distinct_s_.emplace(l0, dim, derive_key(config.seed, kDistinctLabel, 0));
    distinct_t_.emplace(l0, dim, derive_key(config.seed, kDistinctLabel, 1));
  }
}

double MultigridState::sketch_failure_prob() const noexcept {
  const double log_side = domain_.log_side();
  return config_.failure_prob / (2.0 * log_side * log_side);
}

std::uint64_t MultigridState::cell_coordinate(int level, int j, Point p) const {
  return pack_cell(level, j, cell_of(p, grids_[index(level, j)]));
}

std::uint64_t MultigridState::point_coordinate(Point p) const {
  return static_cast<std::uint64_t>((p.x - 1) * domain_.side() + (p.y - 1));
}

void MultigridState::apply_distinct(Side side, Point p, std::int64_t delta) {
  if (config_.distinct == DistinctCounting::sketch) {
    (side == Side::S ? *distinct_s_ : *distinct_t_).update(point_coordinate(p), delta);
    return;
  }
  auto& counts = side == Side::S ? exact_s_ : exact_t_;
  auto it = counts.try_emplace(p, 0).first;
  it->second += delta;
  if (it->second == 0) counts.erase(it);
}

void MultigridState::update(const StreamUpdate& u) {
  update(std::span<const StreamUpdate>(&u, 1));
}

void MultigridState::update(std::span<const StreamUpdate> batch) {
  for (const auto& u : batch) domain_.require(u.point);

  // Net delta per point first; every grid then sees one update per distinct point.
  std::vector<std::pair<std::uint64_t, std::int64_t>> by_point;
  by_point.reserve(batch.size());
  for (const auto& u : batch) {
    by_point.emplace_back(point_coordinate(u.point), signed_delta(u));
    count_sizes(u, n_s_, n_t_);
    apply_distinct(u.side, u.point, static_cast<std::int64_t>(u.sign) * u.count);
  }
  const auto net = aggregate(std::move(by_point));
  const auto side = domain_.side();

  parallel_for(grids_.size(), config_.threads, [&](std::size_t idx) {
    const int level = static_cast<int>(idx / static_cast<std::size_t>(grids_per_level_));
    const int j = static_cast<int>(idx % static_cast<std::size_t>(grids_per_level_));
    std::vector<std::pair<std::uint64_t, std::int64_t>> cells;
    cells.reserve(net.size());
    for (const auto& [coord, delta] : net) {
      const Point p{static_cast<std::int64_t>(coord) / side + 1,
                    static_cast<std::int64_t>(coord) % side + 1};
      if (config_.backend == NormBackend::exact) {
        dense_[idx].add(p, delta);
      } else {
        cells.emplace_back(cell_coordinate(level, j, p), delta);
      }
    }
    if (config_.backend == NormBackend::sketch) {
      for (const auto& [coord, delta] : aggregate(std::move(cells))) {
        sketches_[idx].update(coord, delta);
      }
    }
  });
}

double MultigridState::norm_estimate(int level, int j) const {
  const std::size_t idx = index(level, j);
  if (config_.backend == NormBackend::exact) return static_cast<double>(dense_[idx].l1_norm());
  return sketches_[idx].estimate();
}

double MultigridState::distinct_estimate(Side side) const {
  if (config_.distinct == DistinctCounting::exact) {
    return static_cast<double>((side == Side::S ? exact_s_ : exact_t_).size());
  }
  return (side == Side::S ? *distinct_s_ : *distinct_t_).estimate();
}

MultigridReport MultigridState::estimate() const {
  check_sizes(n_s_, n_t_);
  MultigridReport report;
  report.k_hat = std::max(1.0, std::min(distinct_estimate(Side::S), distinct_estimate(Side::T)));
  double sum = 0.0;
  double fixed_sum = 0.0;
  for (int level = 0; level < domain_.level_count(); ++level) {
    LevelEstimate le;
    le.level = level;
    for (int j = 0; j < grids_per_level_; ++j) le.per_grid.push_back(norm_estimate(level, j));
    const auto best = std::min_element(le.per_grid.begin(), le.per_grid.end());
    le.chosen_grid = static_cast<int>(best - le.per_grid.begin());
    le.c_hat = *best;
    sum += std::ldexp(le.c_hat, level);
    fixed_sum += std::ldexp(le.per_grid.front(), level);
    report.levels.push_back(std::move(le));
  }
  const double scale = report.k_hat * report.k_hat / 2.0;
  report.z = scale * sum;
  report.fixed_grid_z = scale * fixed_sum;
  return report;
}

std::size_t MultigridState::accumulator_count() const noexcept {
  std::size_t total = 0;
  for (const auto& s : sketches_) total += s.rows();
  return total;
}

std::size_t MultigridState::memory_bytes() const noexcept {
  std::size_t total = grids_.size() * sizeof(GridSpec);
  for (const auto& s : sketches_) total += s.memory_bytes();
  for (const auto& d : dense_) total += d.nonzero_count() * (sizeof(CellId) + sizeof(std::int64_t));
  if (distinct_s_) total += distinct_s_->memory_bytes() + distinct_t_->memory_bytes();
  total += (exact_s_.size() + exact_t_.size()) * (sizeof(Point) + sizeof(std::int64_t));
  return total;
}

std::vector<std::uint8_t> MultigridState::checkpoint() const {
  if (config_.backend != NormBackend::sketch) {
    throw Error(ErrorCode::invalid_argument, "only the sketch backend can be checkpointed");
  }
  detail::ByteWriter w;
  w.put(static_cast<std::int64_t>(config_.side));
  w.put(static_cast<std::int32_t>(grids_per_level_));
  w.put(config_.epsilon);
  w.put(config_.failure_prob);
  w.put(config_.seed);
  w.put(static_cast<std::uint8_t>(config_.distinct));
  w.put(config_hash(config_));
  w.put(n_s_);
  w.put(n_t_);
  auto put_blob = [&w](const std::vector<std::uint8_t>& blob) {
    w.put(static_cast<std::uint64_t>(blob.size()));
    w.put_bytes(blob);
  };
  w.put(static_cast<std::uint32_t>(sketches_.size()));
  for (const auto& s : sketches_) put_blob(s.serialize());
  if (config_.distinct == DistinctCounting::sketch) {
    put_blob(distinct_s_->serialize());
    put_blob(distinct_t_->serialize());
  } else {
    for (const auto* counts : {&exact_s_, &exact_t_}) {
      w.put(static_cast<std::uint64_t>(counts->size()));
      for (const auto& [p, c] : *counts) {
        w.put(p.x);
        w.put(p.y);
        w.put(c);
      }
    }
  }
  return detail::frame_blob(detail::BlobKind::multigrid, std::move(w.bytes()));
}

MultigridState MultigridState::restore(std::span<const std::uint8_t> blob) {
  detail::ByteReader r(detail::unframe_blob(blob, detail::BlobKind::multigrid));
  MultigridConfig config;
  config.side = r.get<std::int64_t>();
  config.grids_per_level = r.get<std::int32_t>();
  config.epsilon = r.get<double>();
  config.failure_prob = r.get<double>();
  config.seed = r.get<std::uint64_t>();
  const auto distinct = r.get<std::uint8_t>();
  if (distinct > 1) throw Error(ErrorCode::corrupt_blob, "unknown distinct-counting mode");
  config.distinct = static_cast<DistinctCounting>(distinct);
  if (r.get<std::uint64_t>() != config_hash(config)) {
    throw Error(ErrorCode::corrupt_blob, "config hash mismatch");
  }
  MultigridState state(config);
  state.n_s_ = r.get<std::int64_t>();
  state.n_t_ = r.get<std::int64_t>();
  auto get_blob = [&r] { return r.get_bytes(static_cast<std::size_t>(r.get<std::uint64_t>())); };
  if (r.get<std::uint32_t>() != state.sketches_.size()) {
    throw Error(ErrorCode::corrupt_blob, "sketch count mismatch");
  }
  for (auto& s : state.sketches_) {
    auto restored = L1Sketch::deserialize(get_blob());
    if (!(restored.key() == s.key()) || restored.rows() != s.rows()) {
      throw Error(ErrorCode::corrupt_blob, "sketch layout mismatch");
    }
    s = std::move(restored);
  }
  if (config.distinct == DistinctCounting::sketch) {
    state.distinct_s_ = L0Sketch::deserialize(get_blob());
    state.distinct_t_ = L0Sketch::deserialize(get_blob());
  } else {
    for (auto* counts : {&state.exact_s_, &state.exact_t_}) {
      const auto n = r.get<std::uint64_t>();
      for (std::uint64_t i = 0; i < n; ++i) {
        Point p;
        p.x = r.get<std::int64_t>();
        p.y = r.get<std::int64_t>();
        (*counts)[p] = r.get<std::int64_t>();
      }
    }
  }
  if (r.remaining() != 0) throw Error(ErrorCode::corrupt_blob, "trailing bytes");
  return state;
}

bool operator==(const MultigridState& a, const MultigridState& b) {
  return config_hash(a.config_) == config_hash(b.config_) && a.grids_ == b.grids_ &&
         a.sketches_ == b.sketches_ && a.dense_ == b.dense_ && a.distinct_s_ == b.distinct_s_ &&
         a.distinct_t_ == b.distinct_t_ && a.exact_s_ == b.exact_s_ && a.exact_t_ == b.exact_t_ &&
         a.n_s_ == b.n_s_ && a.n_t_ == b.n_t_;
}

// ---------------------------------------------------------------------------

BaselineState::BaselineState(const BaselineConfig& config) : config_(config), domain_(config.side) {
  check_accuracy(config.epsilon, config.failure_prob);
  check_side(config.side);
  Rng rng(derive_key(config.seed, kBaselineLabel, 1).lo);
  const GridSpec top = random_grid(domain_.log_side(), domain_, rng);
  for (int level = 0; level < domain_.level_count(); ++level) {
    const std::int64_t size = std::int64_t{1} << level;
    grids_.emplace_back(level, top.offset_x() % size, top.offset_y() % size);
    if (config.backend == NormBackend::exact) dense_.emplace_back(grids_.back());
  }
  if (config.backend == NormBackend::sketch) {
    sketch_.emplace(SketchParams{config.epsilon, config.failure_prob},
                    derive_key(config.seed, kBaselineLabel));
  }
}

std::uint64_t BaselineState::coordinate(int level, Point p) const {
  return pack_cell(level, 0, cell_of(p, grids_[static_cast<std::size_t>(level)]));
}

void BaselineState::update(const StreamUpdate& u) { update(std::span<const StreamUpdate>(&u, 1)); }

void BaselineState::update(std::span<const StreamUpdate> batch) {
  for (const auto& u : batch) domain_.require(u.point);
  std::vector<std::pair<std::uint64_t, std::int64_t>> cells;
  for (const auto& u : batch) {
    count_sizes(u, n_s_, n_t_);
    const std::int64_t delta = signed_delta(u);
    for (int level = 0; level < domain_.level_count(); ++level) {
      if (config_.backend == NormBackend::exact) {
        dense_[static_cast<std::size_t>(level)].add(u.point, delta);
      } else {
        cells.emplace_back(coordinate(level, u.point), delta << level);
      }
    }
  }
  if (sketch_) {
    for (const auto& [coord, delta] : aggregate(std::move(cells))) sketch_->update(coord, delta);
  }
}

double BaselineState::estimate() const {
  check_sizes(n_s_, n_t_);
  if (sketch_) return sketch_->estimate();
  double total = 0.0;
  for (std::size_t level = 0; level < dense_.size(); ++level) {
    total += std::ldexp(static_cast<double>(dense_[level].l1_norm()), static_cast<int>(level));
  }
  return total;
}

std::size_t BaselineState::memory_bytes() const noexcept {
  std::size_t total = grids_.size() * sizeof(GridSpec);
  if (sketch_) total += sketch_->memory_bytes();
  for (const auto& d : dense_) total += d.nonzero_count() * (sizeof(CellId) + sizeof(std::int64_t));
  return total;
}

bool operator==(const BaselineState& a, const BaselineState& b) {
  return a.grids_ == b.grids_ && a.sketch_ == b.sketch_ && a.dense_ == b.dense_ &&
         a.n_s_ == b.n_s_ && a.n_t_ == b.n_t_;
}

// ---------------------------------------------------------------------------

double combined_estimate(double multigrid_z, double baseline) noexcept {
  return std::min(multigrid_z, baseline);
}

BaselineConfig baseline_config_for(const MultigridConfig& config) {
  BaselineConfig b;
  b.side = config.side;
  b.epsilon = config.epsilon;
  b.failure_prob = config.failure_prob;
  b.seed = config.seed;
  b.backend = config.backend;
  return b;
}

CombinedState::CombinedState(const MultigridConfig& config)
    : multigrid_(config), baseline_(baseline_config_for(config)) {}

EstimateReport CombinedState::estimate() const {
  EstimateReport report;
  report.multigrid = multigrid_.estimate();
  report.baseline = baseline_.estimate();
  report.combined = combined_estimate(report.multigrid.z, report.baseline);
  return report;
}

}  // namespace emdstream
