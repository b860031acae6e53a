#pragma once

#include <cstdint>
#include <vector>

#include "emdstream/geometry.hpp"

namespace emdstream {

enum class GroundMetric { l1, l2 };

/// One matched pair of locations carrying `mass` units of flow.
struct MatchingEdge {
  Point from;  // in S
  Point to;    // in T
  double mass = 0.0;
  std::int64_t l1_length = 0;
};

struct Matching {
  std::vector<MatchingEdge> edges;
  double cost = 0.0;
};

/// Weights are scaled by this factor to integers when any weight is fractional.
inline constexpr double kRealWeightScale = 1e6;

/// Minimum-cost transportation plan between S and T under the chosen ground
/// metric. Solved as min-cost flow on the support graph (distinct S points x
/// distinct T points), so multiplicities never get expanded. Integer weights
/// give exact costs; fractional weights are scaled by kRealWeightScale first.
///
/// Throws EmptyInput if either side is empty and WeightMismatch if the totals
/// differ by more than 1e-9 (relative to max(1, total)).
Matching exact_emd(const WeightedPointSet& s, const WeightedPointSet& t,
                   GroundMetric metric = GroundMetric::l1);

/// Minimum over all bijections of the expanded multisets, by enumeration.
/// Throws TooLarge if the expanded size exceeds 8.
double brute_force_emd(const WeightedPointSet& s, const WeightedPointSet& t,
                       GroundMetric metric = GroundMetric::l1);

struct KMedianSolution {
  std::vector<Point> centers;
  double cost = 0.0;
};

/// Exhaustive k-median (Euclidean point-to-center distance) with centers
/// restricted to [side]^2. Limited to side <= 8 and k <= 3.
KMedianSolution exact_kmedian(const WeightedPointSet& p, int k, const Domain& domain);

/// Sum over p of w(p) * min over centers of ||p - c||_2.
double median_cost(const WeightedPointSet& p, const std::vector<Point>& centers);

struct CapacitatedSolution {
  std::vector<Point> centers;
  std::vector<std::int64_t> capacities;  // parallel to centers, summing to |P|
  double cost = 0.0;
};

/// Enumerates every k-subset of centers in [side]^2 and every capacity vector
/// with entries in [0, c] summing to |P|; each candidate is priced with
/// exact_emd. Limited to |P| <= 8, side <= 4, k <= 2.
/// Throws Infeasible if c * k < |P|.
CapacitatedSolution exact_capacitated_kmedian(const WeightedPointSet& p, int k,
                                              std::int64_t capacity, const Domain& domain);

/// Every vector of `parts` integers in [0, cap] summing to total, in
/// lexicographic order.
std::vector<std::vector<std::int64_t>> capacity_vectors(int parts, std::int64_t cap,
                                                        std::int64_t total);

/// Every k-subset of the points of [side]^2 in lexicographic order.
std::vector<std::vector<Point>> center_subsets(const Domain& domain, int k);

}  // namespace emdstream
