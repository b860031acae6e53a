#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "emdstream/geometry.hpp"
#include "emdstream/sketch.hpp"

namespace emdstream {

/// How per-grid norms ||V_G(S) - V_G(T)||_1 are tracked.
enum class NormBackend {
  sketch,  // L1Sketch per grid (the streaming algorithm)
  exact,   // SparseCellCounts per grid (verification mode)
};

/// How the distinct-point counts of S and T are tracked.
enum class DistinctCounting { sketch, exact };

struct MultigridConfig {
  std::int64_t side = 64;
  /// 0 selects 2 * log2(side).
  int grids_per_level = 0;
  double epsilon = 0.1;
  /// Overall failure budget; each l1 sketch gets failure_prob / (2 log^2 side).
  double failure_prob = 0.05;
  std::uint64_t seed = 1;
  NormBackend backend = NormBackend::sketch;
  DistinctCounting distinct = DistinctCounting::sketch;
  /// Worker threads used by batched updates; results do not depend on it.
  unsigned threads = 1;
};

struct LevelEstimate {
  int level = 0;
  int chosen_grid = 0;
  double c_hat = 0.0;              // min over grids
  std::vector<double> per_grid;    // estimate for every grid at this level
};

struct MultigridReport {
  double z = 0.0;
  double k_hat = 0.0;
  /// The same formula using only grid 0 at every level; never below z.
  double fixed_grid_z = 0.0;
  std::vector<LevelEstimate> levels;
};

/// Multi-grid turnstile EMD estimator. For every level i in [0, log side] it
/// keeps grids_per_level randomly shifted grids of cell size 2^i and tracks
/// ||V_G(S) - V_G(T)||_1 for each; the estimate is
///   Z = (k^2 / 2) * sum_i 2^i * min_j C_i^j
/// with k the smaller distinct-point count of S and T.
class MultigridState {
 public:
  explicit MultigridState(const MultigridConfig& config);

  void update(const StreamUpdate& u);
  /// Aggregates the batch per grid cell before touching the sketches; the
  /// resulting state equals sequential application of the batch.
  void update(std::span<const StreamUpdate> batch);

  /// Throws SizeMismatch if |S| != |T| and EmptyStream if both are empty.
  MultigridReport estimate() const;

  const MultigridConfig& config() const noexcept { return config_; }
  const Domain& domain() const noexcept { return domain_; }
  int grids_per_level() const noexcept { return grids_per_level_; }
  int level_count() const noexcept { return domain_.level_count(); }
  const GridSpec& grid(int level, int j) const { return grids_[index(level, j)]; }
  double sketch_failure_prob() const noexcept;
  std::size_t tracker_count() const noexcept { return grids_.size(); }
  std::size_t accumulator_count() const noexcept;
  std::size_t memory_bytes() const noexcept;
  std::int64_t n_s() const noexcept { return n_s_; }
  std::int64_t n_t() const noexcept { return n_t_; }
  /// Current value of the tracked norm for grid (level, j).
  double norm_estimate(int level, int j) const;
  /// Distinct-count estimate for one side.
  double distinct_estimate(Side side) const;

  /// Sketch backend only: manifest plus concatenated sketch blobs.
  std::vector<std::uint8_t> checkpoint() const;
  static MultigridState restore(std::span<const std::uint8_t> blob);

  friend bool operator==(const MultigridState&, const MultigridState&);

 private:
  std::size_t index(int level, int j) const {
    return static_cast<std::size_t>(level) * grids_per_level_ + static_cast<std::size_t>(j);
  }
  std::uint64_t cell_coordinate(int level, int j, Point p) const;
  std::uint64_t point_coordinate(Point p) const;
  void apply_distinct(Side side, Point p, std::int64_t delta);

  MultigridConfig config_;
  Domain domain_;
  int grids_per_level_;
  std::vector<GridSpec> grids_;
  std::vector<L1Sketch> sketches_;
  std::vector<SparseCellCounts> dense_;
  std::optional<L0Sketch> distinct_s_;
  std::optional<L0Sketch> distinct_t_;
  std::map<Point, std::int64_t> exact_s_;
  std::map<Point, std::int64_t> exact_t_;
  std::int64_t n_s_ = 0;
  std::int64_t n_t_ = 0;
};

/// Hash of the fields that determine a MultigridState's layout and randomness.
std::uint64_t config_hash(const MultigridConfig& config);

struct BaselineConfig {
  std::int64_t side = 64;
  double epsilon = 0.1;
  double failure_prob = 0.05;
  std::uint64_t seed = 1;
  NormBackend backend = NormBackend::sketch;
};

/// Single-embedding estimator: nested grids sharing one random shift, with
/// f(S) = (V_G0(S), 2 V_G1(S), ..., 2^L V_GL(S)) and estimate ||f(S) - f(T)||_1.
/// One l1 sketch covers the concatenated coordinate space.
class BaselineState {
 public:
  explicit BaselineState(const BaselineConfig& config);

  void update(const StreamUpdate& u);
  void update(std::span<const StreamUpdate> batch);
  /// Same preconditions as MultigridState::estimate().
  double estimate() const;

  const BaselineConfig& config() const noexcept { return config_; }
  const GridSpec& grid(int level) const { return grids_[static_cast<std::size_t>(level)]; }
  std::size_t memory_bytes() const noexcept;
  std::int64_t n_s() const noexcept { return n_s_; }
  std::int64_t n_t() const noexcept { return n_t_; }

  friend bool operator==(const BaselineState&, const BaselineState&);

 private:
  std::uint64_t coordinate(int level, Point p) const;

  BaselineConfig config_;
  Domain domain_;
  std::vector<GridSpec> grids_;
  std::optional<L1Sketch> sketch_;
  std::vector<SparseCellCounts> dense_;
  std::int64_t n_s_ = 0;
  std::int64_t n_t_ = 0;
};

/// min(multigrid, baseline): O(min(k^3, log side)) approximation.
double combined_estimate(double multigrid_z, double baseline) noexcept;

struct EstimateReport {
  MultigridReport multigrid;
  double baseline = 0.0;
  double combined = 0.0;
};

/// Both turnstile estimators fed from one stream.
class CombinedState {
 public:
  CombinedState(const MultigridConfig& multigrid, const BaselineConfig& baseline)
      : multigrid_(multigrid), baseline_(baseline) {}
  explicit CombinedState(const MultigridConfig& config);

  void update(const StreamUpdate& u) {
    multigrid_.update(u);
    baseline_.update(u);
  }
  void update(std::span<const StreamUpdate> batch) {
    multigrid_.update(batch);
    baseline_.update(batch);
  }
  EstimateReport estimate() const;

  const MultigridState& multigrid() const noexcept { return multigrid_; }
  const BaselineState& baseline() const noexcept { return baseline_; }

 private:
  MultigridState multigrid_;
  BaselineState baseline_;
};

/// Baseline settings matching a multigrid configuration (same side, accuracy, seed).
BaselineConfig baseline_config_for(const MultigridConfig& config);

}  // namespace emdstream
