#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "emdstream/error.hpp"
#include "emdstream/estimators.hpp"
#include "emdstream/exact_oracle.hpp"
#include "emdstream/matching_graph.hpp"
#include "oracles.hpp"

using namespace emdstream;

namespace {

std::vector<StreamUpdate> stream_of(const WeightedPointSet& s, const WeightedPointSet& t) {
  std::vector<StreamUpdate> out;
  for (const auto& [p, w] : s) out.push_back({Side::S, +1, p, std::llround(w)});
  for (const auto& [p, w] : t) out.push_back({Side::T, +1, p, std::llround(w)});
  return out;
}

MultigridConfig small_sketch(std::int64_t side = 16, std::uint64_t seed = 7) {
  MultigridConfig c;
  c.side = side;
  c.epsilon = 0.3;
  c.failure_prob = 0.1;
  c.grids_per_level = 3;
  c.seed = seed;
  return c;
}

MultigridConfig exact_config(std::int64_t side, std::uint64_t seed, int grids = 4) {
  MultigridConfig c;
  c.side = side;
  c.grids_per_level = grids;
  c.seed = seed;
  c.backend = NormBackend::exact;
  c.distinct = DistinctCounting::exact;
  return c;
}

}  // namespace

TEST_CASE("multigrid: layout and sketch budget") {
  MultigridConfig c;
  c.side = 64;
  c.grids_per_level = 0;
  c.epsilon = 0.5;
  MultigridState m(c);
  CHECK(m.grids_per_level() == 12);
  CHECK(m.tracker_count() == 7u * 12u);
  CHECK(m.sketch_failure_prob() == doctest::Approx(0.05 / 72.0));
  CHECK(m.accumulator_count() == m.tracker_count() * L1Sketch::rows_for({0.5, 0.05 / 72.0}));
  for (int level = 0; level <= 6; ++level) {
    for (int j = 0; j < 12; ++j) {
      const GridSpec& g = m.grid(level, j);
      CHECK(g.level() == level);
      CHECK(g.offset_x() < g.cell_size());
      CHECK(g.offset_y() < g.cell_size());
    }
  }
}

TEST_CASE("multigrid: insert followed by delete restores the state") {
  MultigridState m(small_sketch());
  const MultigridState empty = m;
  m.update({Side::S, +1, {3, 4}, 2});
  m.update({Side::T, +1, {9, 9}, 2});
  CHECK_FALSE(m == empty);
  m.update({Side::T, -1, {9, 9}, 2});
  m.update({Side::S, -1, {3, 4}, 2});
  CHECK(m == empty);
}

TEST_CASE("multigrid: every tracker sees an update") {
  MultigridState m(small_sketch());
  const MultigridState before = m;
  m.update({Side::S, +1, {5, 5}, 1});
  for (int level = 0; level < m.level_count(); ++level) {
    for (int j = 0; j < m.grids_per_level(); ++j) {
      CHECK(m.norm_estimate(level, j) > 0.0);
      CHECK(before.norm_estimate(level, j) == 0.0);
    }
  }
}

TEST_CASE("multigrid: order, batching, and threads leave the state unchanged") {
  std::mt19937_64 rng(5);
  std::vector<StreamUpdate> updates;
  for (int i = 0; i < 60; ++i) {
    const Point p = oracle::random_point(16, rng);
    updates.push_back({i % 2 ? Side::T : Side::S, +1, p, 1 + static_cast<std::int64_t>(rng() % 3)});
  }
  for (int i = 0; i < 20; ++i) {
    StreamUpdate u = updates[static_cast<std::size_t>(i)];
    u.sign = -1;
    u.count = 1;
    updates.push_back(u);
  }
  MultigridState sequential(small_sketch());
  for (const auto& u : updates) sequential.update(u);

  auto shuffled = updates;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  MultigridState permuted(small_sketch());
  for (const auto& u : shuffled) permuted.update(u);
  CHECK(permuted == sequential);

  MultigridState batched(small_sketch());
  batched.update(std::span<const StreamUpdate>(updates));
  CHECK(batched == sequential);

  auto threaded_config = small_sketch();
  threaded_config.threads = 4;
  MultigridState threaded(threaded_config);
  threaded.update(std::span<const StreamUpdate>(shuffled));
  CHECK(threaded == sequential);
}

TEST_CASE("multigrid: exact backend matches the dense oracle and the closed form") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto [s, t] = oracle::random_disjoint(5 + rng() % 20, 32, rng);
    MultigridState m(exact_config(32, 100 + trial));
    m.update(std::span<const StreamUpdate>(stream_of(s, t)));
    const auto report = m.estimate();
    const double k = static_cast<double>(std::max<std::size_t>(1, std::min(s.distinct(), t.distinct())));
    CHECK(report.k_hat == k);
    double sum = 0.0, fixed = 0.0;
    for (int level = 0; level < m.level_count(); ++level) {
      std::int64_t best = std::numeric_limits<std::int64_t>::max();
      for (int j = 0; j < m.grids_per_level(); ++j) {
        const std::int64_t truth = oracle::l1_norm_of(s, t, m.grid(level, j));
        CHECK(m.norm_estimate(level, j) == static_cast<double>(truth));
        best = std::min(best, truth);
      }
      sum += std::ldexp(static_cast<double>(best), level);
      fixed += std::ldexp(static_cast<double>(oracle::l1_norm_of(s, t, m.grid(level, 0))), level);
    }
    CHECK(report.z == doctest::Approx(k * k / 2.0 * sum));
    CHECK(report.fixed_grid_z == doctest::Approx(k * k / 2.0 * fixed));
    CHECK(report.fixed_grid_z >= report.z);
  }
}

TEST_CASE("multigrid: grid norms are bounded by twice the crossing mass") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const auto [s, t] = oracle::random_disjoint(30, 64, rng);
    const Matching opt = exact_emd(s, t);
    MultigridState m(exact_config(64, 200 + trial));
    m.update(std::span<const StreamUpdate>(stream_of(s, t)));
    for (int level = 0; level < m.level_count(); ++level) {
      for (int j = 0; j < m.grids_per_level(); ++j) {
        CHECK(m.norm_estimate(level, j) <= 2.0 * crossing_mass(opt, m.grid(level, j)));
      }
    }
  }
}

TEST_CASE("multigrid: precondition errors") {
  MultigridState m(small_sketch());
  try {
    (void)m.estimate();
    FAIL("expected EmptyStream");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::empty_stream);
  }
  m.update({Side::S, +1, {1, 1}, 2});
  m.update({Side::T, +1, {2, 2}, 1});
  try {
    (void)m.estimate();
    FAIL("expected SizeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::size_mismatch);
  }
  CHECK_THROWS_AS(m.update({Side::S, +1, {17, 1}, 1}), Error);
  CHECK_THROWS_AS(MultigridState(exact_config(24, 1)), Error);
}

TEST_CASE("multigrid: checkpoint round trip and corruption") {
  MultigridState m(small_sketch());
  m.update({Side::S, +1, {3, 4}, 2});
  m.update({Side::T, +1, {9, 12}, 2});
  const auto blob = m.checkpoint();
  const MultigridState back = MultigridState::restore(blob);
  CHECK(back == m);
  CHECK(back.estimate().z == m.estimate().z);

  auto bad = blob;
  bad[bad.size() / 2] ^= 0x5A;
  CHECK_THROWS_AS((void)MultigridState::restore(bad), Error);
  bad = blob;
  bad.resize(bad.size() - 3);
  CHECK_THROWS_AS((void)MultigridState::restore(bad), Error);
  CHECK_THROWS_AS((void)MultigridState(exact_config(16, 1)).checkpoint(), Error);
}

TEST_CASE("baseline: nested grids share one shift") {
  BaselineConfig c;
  c.side = 64;
  c.seed = 3;
  BaselineState b(c);
  const GridSpec& top = b.grid(6);
  for (int level = 0; level <= 6; ++level) {
    CHECK(b.grid(level).level() == level);
    CHECK(b.grid(level).offset_x() == top.offset_x() % (std::int64_t{1} << level));
    CHECK(b.grid(level).offset_y() == top.offset_y() % (std::int64_t{1} << level));
  }
  // Nesting: points sharing a cell at level i share it at every coarser level.
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const Point p = oracle::random_point(64, rng), q = oracle::random_point(64, rng);
    for (int level = 0; level < 6; ++level) {
      if (cell_of(p, b.grid(level)) == cell_of(q, b.grid(level))) {
        CHECK(cell_of(p, b.grid(level + 1)) == cell_of(q, b.grid(level + 1)));
      }
    }
  }
}

TEST_CASE("baseline: exact backend equals the dense embedding norm") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto [s, t] = oracle::random_disjoint(10 + rng() % 20, 32, rng);
    BaselineConfig c;
    c.side = 32;
    c.seed = 50 + trial;
    c.backend = NormBackend::exact;
    BaselineState b(c);
    b.update(std::span<const StreamUpdate>(stream_of(s, t)));
    double truth = 0.0;
    for (int level = 0; level <= 5; ++level) {
      truth += std::ldexp(static_cast<double>(oracle::l1_norm_of(s, t, b.grid(level))), level);
    }
    CHECK(b.estimate() == doctest::Approx(truth));
    CHECK(b.estimate() >= exact_emd(s, t).cost);
  }
}

TEST_CASE("baseline: sketch estimate tracks the embedding norm") {
  std::mt19937_64 rng(19);
  const auto [s, t] = oracle::random_disjoint(12, 16, rng);
  BaselineConfig sketch;
  sketch.side = 16;
  sketch.epsilon = 0.2;
  sketch.seed = 4;
  BaselineConfig exact = sketch;
  exact.backend = NormBackend::exact;
  BaselineState a(sketch), b(exact);
  for (const auto& u : stream_of(s, t)) {
    a.update(u);
    b.update(u);
  }
  CHECK(a.estimate() == doctest::Approx(b.estimate()).epsilon(0.2));
}

TEST_CASE("combined: takes the smaller estimate") {
  CHECK(combined_estimate(3.0, 5.0) == 3.0);
  CHECK(combined_estimate(7.0, 5.0) == 5.0);
  auto c = exact_config(16, 9);
  CombinedState state(c);
  state.update({Side::S, +1, {1, 1}, 3});
  state.update({Side::T, +1, {16, 16}, 3});
  const auto r = state.estimate();
  CHECK(r.combined == std::min(r.multigrid.z, r.baseline));
  CHECK(baseline_config_for(c).seed == c.seed);
  CHECK(baseline_config_for(c).side == c.side);
}

TEST_CASE("multigrid: config hash separates configurations") {
  MultigridConfig a = small_sketch();
  MultigridConfig b = a;
  CHECK(config_hash(a) == config_hash(b));
  b.seed += 1;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.grids_per_level += 1;
  CHECK(config_hash(a) != config_hash(b));
}
