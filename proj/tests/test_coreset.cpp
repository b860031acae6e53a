#include <doctest.h>

#include <bit>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "emdstream/coreset.hpp"
#include "emdstream/error.hpp"
#include "emdstream/exact_oracle.hpp"
#include "oracles.hpp"

using namespace emdstream;

namespace {

WeightedPointSet random_bucket(std::size_t n, std::int64_t side, std::mt19937_64& rng) {
  WeightedPointSet b;
  for (std::size_t i = 0; i < n; ++i) b.add(oracle::random_point(side, rng), 1.0 + static_cast<double>(rng() % 3));
  return b;
}

// Feeds S then T for the given sets into a fresh state.
CoresetState feed(const CoresetConfig& c, const WeightedPointSet& s, const WeightedPointSet& t) {
  CoresetState state(c);
  for (const auto& [p, w] : t) state.insert(Side::T, p, std::llround(w));
  for (const auto& [p, w] : s) state.insert(Side::S, p, std::llround(w));
  return state;
}

}  // namespace

TEST_CASE("level epsilons sum below half the budget") {
  double sum = 0.0;
  for (int l = 0; l < 10000; ++l) sum += level_epsilon(0.2, l);
  CHECK(sum < 0.1);
  CHECK(sum == doctest::Approx(0.1).epsilon(1e-3));
  CHECK(level_epsilon(0.2, 0) == doctest::Approx(0.6 / (std::numbers::pi * std::numbers::pi)));
}

TEST_CASE("reduce: a single point stays put") {
  Rng rng(1);
  const WeightedPointSet b{{{4, 4}, 5}};
  const auto r = reduce(b, 1, 0.1, rng);
  CHECK(r.points == b);
  CHECK(r.movement == 0.0);
  CHECK(r.upper_bound == 0.0);
}

TEST_CASE("reduce: preserves weight and bounds movement") {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 30; ++trial) {
    const auto bucket = random_bucket(50 + gen() % 200, 64, gen);
    const int k = 1 + static_cast<int>(gen() % 3);
    std::vector<Point> hints;
    for (int i = 0; i < k; ++i) hints.push_back(oracle::random_point(64, gen));
    Rng rng(trial);
    const double eps = 0.05 + 0.05 * (trial % 4);
    const auto r = reduce(bucket, k, eps, rng, hints);
    CHECK(r.points.total_weight() == doctest::Approx(bucket.total_weight()));
    CHECK(r.points.distinct() <= bucket.distinct());
    for (const auto& [p, w] : r.points) CHECK(bucket.weight(p) > 0.0);
    CHECK(r.movement <= eps * r.upper_bound + 1e-9);
    // The reported bound is never below an independent cost of the bucket against its hints
    // or the first k seeds.
    const std::vector<Point> first(r.centers.begin(),
                                   r.centers.begin() + std::min<std::ptrdiff_t>(k, std::ssize(r.centers)));
    CHECK(r.upper_bound <= oracle::kmedian_cost(bucket, hints) + 1e-9);
    CHECK(r.upper_bound <= oracle::kmedian_cost(bucket, first) + 1e-9);
    double charged = 0.0;
    for (const auto& [p, m] : r.movement_by_point) charged += m;
    CHECK(charged == doctest::Approx(r.movement));
  }
}

TEST_CASE("reduce: upper bound dominates the optimal k-median cost") {
  std::mt19937_64 gen(3);
  const Domain domain(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto bucket = random_bucket(6, 8, gen);
    Rng rng(trial);
    const auto r = reduce(bucket, 2, 0.2, rng);
    CHECK(r.upper_bound >= exact_kmedian(bucket, 2, domain).cost - 1e-9);
  }
}

TEST_CASE("reduce: deterministic for a fixed seed") {
  std::mt19937_64 gen(4);
  const auto bucket = random_bucket(300, 64, gen);
  Rng a(9), b(9);
  const auto ra = reduce(bucket, 2, 0.1, a);
  const auto rb = reduce(bucket, 2, 0.1, b);
  CHECK(ra.points == rb.points);
  CHECK(ra.movement == rb.movement);
}

TEST_CASE("coreset: bucket size default") {
  CoresetConfig c;
  c.k = 1;
  c.epsilon = 0.5;
  CHECK(CoresetState(c).bucket_size() == 64u);
  c.k = 3;
  c.epsilon = 0.1;
  CHECK(CoresetState(c).bucket_size() == 1200u);
}

TEST_CASE("coreset: small exact examples") {
  CoresetConfig c;
  c.k = 1;
  c.side = 8;
  CoresetState s(c);
  s.insert(Side::S, {1, 1});
  s.insert(Side::T, {3, 4});
  CHECK(s.estimate() == 5.0);

  CoresetState t(c);
  t.insert(Side::T, {4, 4}, 3);
  t.insert(Side::S, {1, 4});
  t.insert(Side::S, {4, 1});
  t.insert(Side::S, {5, 5});
  CHECK(t.estimate() == 8.0);
}

TEST_CASE("coreset: EMD of the coreset stays within sqrt(2) times the movement") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 8; ++trial) {
    const std::int64_t n = 200 + static_cast<std::int64_t>(gen() % 300);
    const int k = 1 + static_cast<int>(gen() % 3);
    WeightedPointSet t;
    std::vector<Point> tp;
    for (int i = 0; i < k; ++i) tp.push_back(oracle::random_point(64, gen));
    for (std::int64_t i = 0; i < n; ++i) t.add(tp[static_cast<std::size_t>(i % k)]);
    WeightedPointSet s;
    for (std::int64_t i = 0; i < n; ++i) s.add(oracle::random_point(64, gen));

    CoresetConfig c;
    c.k = k;
    c.epsilon = 0.1;
    c.bucket_size = 64;
    c.seed = static_cast<std::uint64_t>(trial);
    const auto state = feed(c, s, t);
    CHECK_FALSE(state.reduces().empty());
    const double truth = exact_emd(s, t).cost;
    CHECK(std::abs(state.estimate() - truth) <= std::sqrt(2.0) * state.movement() + 1e-6);
    CHECK(state.movement() <= c.epsilon * truth + 1e-6);
    CHECK(state.estimate() >= (1 - 4 * c.epsilon) * truth);
    CHECK(state.estimate() <= (1 + 4 * c.epsilon) * truth);
    for (const auto& r : state.reduces()) CHECK(r.movement <= r.epsilon * r.upper_bound + 1e-9);
    CHECK(state.s_core().total_weight() == doctest::Approx(static_cast<double>(n)));
  }
}

TEST_CASE("coreset: stored size is bounded by the support of S") {
  std::mt19937_64 gen(6);
  CoresetConfig c;
  c.k = 2;
  c.epsilon = 0.2;
  c.bucket_size = 64;
  CoresetState state(c);
  state.insert(Side::T, {10, 10}, 8000);
  state.insert(Side::T, {50, 50}, 8000);
  std::set<Point> support;
  for (int i = 0; i < 16000; ++i) {
    const Point p = oracle::random_point(64, gen);
    support.insert(p);
    state.insert(Side::S, p);
  }
  const auto core = state.s_core();
  CHECK(core.distinct() <= support.size());
  for (const auto& [p, w] : core) CHECK(support.contains(p));
  // Binary counter over 250 leaves.
  CHECK(state.reduces().size() == 250u - std::popcount(250u));
}

TEST_CASE("coreset: measured size constant for 10^4 inserts") {
  std::mt19937_64 gen(8);
  CoresetConfig c;
  c.k = 3;
  c.epsilon = 0.1;
  CoresetState state(c);
  for (Point p : {Point{8, 8}, Point{32, 50}, Point{56, 20}}) state.insert(Side::T, p, 1);
  const int n = 10000;
  for (int i = 0; i < n; ++i) state.insert(Side::S, oracle::random_point(64, gen));
  const double log_n = std::log2(static_cast<double>(n));
  const double constant = static_cast<double>(state.s_core().distinct()) /
                          (c.k / (c.epsilon * c.epsilon) * log_n * log_n);
  MESSAGE("size constant c = " << constant << " (|S_core| = " << state.s_core().distinct() << ")");
  CHECK(constant > 0.0);
  CHECK(constant <= 1.0);
}

TEST_CASE("coreset: weight perturbation moves mass across the long gap") {
  const auto demo = weight_sensitivity_demo(100, 60, 0.1);
  CHECK(demo.emd == doctest::Approx(100.0));
  // 5 units of mass must travel about 60 further.
  CHECK(demo.perturbed_emd == doctest::Approx(100.0 + 5.0 * 60.0));
  CHECK(demo.perturbed_emd > 2.0 * demo.emd);
  CHECK_THROWS_AS(weight_sensitivity_demo(3, 60, 0.1), Error);
}

TEST_CASE("coreset: model errors") {
  CoresetConfig c;
  c.k = 1;
  c.side = 8;
  CoresetState s(c);
  s.insert(Side::T, {1, 1});
  try {
    s.insert(Side::T, {2, 2});
    FAIL("expected DistinctBoundExceeded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::distinct_bound_exceeded);
  }
  try {
    s.apply({Side::S, -1, {1, 1}, 1});
    FAIL("expected DeletionUnsupported");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::deletion_unsupported);
  }
  try {
    (void)s.estimate();
    FAIL("expected SizeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::size_mismatch);
  }
  try {
    (void)CoresetState(c).estimate();
    FAIL("expected EmptyStream");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::empty_stream);
  }
  CHECK_THROWS_AS(s.insert(Side::S, {9, 1}), Error);
  c.epsilon = 1.5;
  CHECK_THROWS_AS(CoresetState{c}, Error);
}

TEST_CASE("coreset: deterministic for a fixed seed") {
  std::mt19937_64 gen(7);
  WeightedPointSet s, t;
  for (int i = 0; i < 500; ++i) s.add(oracle::random_point(64, gen));
  t.add({32, 32}, 500);
  CoresetConfig c;
  c.bucket_size = 64;
  c.seed = 3;
  const auto a = feed(c, s, t);
  const auto b = feed(c, s, t);
  CHECK(a.s_core() == b.s_core());
  CHECK(a.estimate() == b.estimate());
}
