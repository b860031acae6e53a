#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "emdstream/geometry.hpp"

namespace emdstream {

struct CoresetConfig {
  int k = 1;
  double epsilon = 0.1;
  std::int64_t side = 64;
  /// Points per leaf bucket; 0 selects max(64, ceil(4k / epsilon^2)).
  std::size_t bucket_size = 0;
  int fan_in = 2;
  std::uint64_t seed = 1;
};

struct ReduceResult {
  WeightedPointSet points;
  std::vector<Point> centers;    // bicriteria centers (bucket points)
  double movement = 0.0;         // sum of w * ||p - p'||_2
  double bicriteria_cost = 0.0;  // cost of the bucket against centers plus hints
  /// min(Median(bucket, first k centers), sum_p w d(p, hints)); an upper
  /// bound on the optimal k-median cost of the bucket.
  double upper_bound = 0.0;
  /// Movement charged to each output representative.
  std::map<Point, double> movement_by_point;
};

/// Budget for reduces at merge-tree level `level` (0-based): 3 eps / (pi^2 (level+1)^2).
/// Summed over all levels this is eps / 2.
double level_epsilon(double epsilon, int level) noexcept;

/// Shrinks a weighted bucket while moving mass by at most epsilon times its
/// bicriteria cost:
///   1. weighted D^1 seeding picks m = min(distinct, ceil(8 k ln W)) centers;
///   2. each point p at distance d from its nearest center (R = cost / W)
///      falls in ring j = max(0, ceil(log2(d / R))), which is cut into square
///      cells of side epsilon * 2^j * R / 5 anchored at the center;
///   3. each cell collapses to its heaviest point (ties: smallest point).
/// `hints` (at most k points, e.g. the stored T) are extra anchors so the
/// movement is also bounded by epsilon * sum_p w d(p, hints).
ReduceResult reduce(const WeightedPointSet& bucket, int k, double epsilon, Rng& rng,
                    const std::vector<Point>& hints = {});

struct ReduceRecord {
  int tree_level = 0;
  double epsilon = 0.0;
  double movement = 0.0;
  double bicriteria_cost = 0.0;
  double upper_bound = 0.0;
  std::size_t input_distinct = 0;
  std::size_t output_distinct = 0;
};

/// Insertion-only coreset estimator: S goes through a merge-and-reduce tree of
/// buckets, T is stored exactly (at most k distinct points), and the estimate
/// is the exact EMD between the coreset of S and T.
class CoresetState {
 public:
  explicit CoresetState(const CoresetConfig& config);

  /// Throws DistinctBoundExceeded if a T insert would exceed k distinct points.
  void insert(Side side, Point p, std::int64_t count = 1);
  /// Throws DeletionUnsupported for sign < 0.
  void apply(const StreamUpdate& u);

  WeightedPointSet s_core() const;
  const WeightedPointSet& t_store() const noexcept { return t_store_; }
  double movement() const noexcept { return movement_; }
  const std::map<Point, double>& movement_by_point() const noexcept { return movement_by_point_; }
  const std::vector<ReduceRecord>& reduces() const noexcept { return reduces_; }
  std::size_t bucket_size() const noexcept { return bucket_size_; }
  std::int64_t n_s() const noexcept { return n_s_; }
  std::int64_t n_t() const noexcept { return n_t_; }
  const CoresetConfig& config() const noexcept { return config_; }

  /// exact_emd(s_core(), t_store()). Throws SizeMismatch or EmptyStream.
  double estimate() const;

 private:
  void flush_buffer();
  void push(WeightedPointSet bucket, int level);
  std::vector<Point> t_points() const;

  CoresetConfig config_;
  Domain domain_;
  std::size_t bucket_size_;
  Rng rng_;
  WeightedPointSet buffer_;
  std::int64_t buffered_ = 0;
  std::vector<std::vector<WeightedPointSet>> tree_;
  WeightedPointSet t_store_;
  std::map<Point, double> movement_by_point_;
  double movement_ = 0.0;
  std::vector<ReduceRecord> reduces_;
  std::int64_t n_s_ = 0;
  std::int64_t n_t_ = 0;
};

struct WeightSensitivity {
  double emd = 0.0;            // EMD(S_core, T)
  double perturbed_emd = 0.0;  // after scaling the two weights by (1 + eps), (1 - eps)
};

/// Two T points `far` apart with weight n/2 each; S_core holds one point at
/// unit distance from each, also n/2 each. Perturbing the weights by (1 +- eps)
/// forces eps * n / 2 mass across the long gap.
WeightSensitivity weight_sensitivity_demo(std::int64_t n, std::int64_t far, double epsilon);

}  // namespace emdstream
