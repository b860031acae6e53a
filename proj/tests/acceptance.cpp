// Prints one PASS/FAIL line per acceptance criterion; exits nonzero on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "emdstream/coreset.hpp"
#include "emdstream/error.hpp"
#include "emdstream/estimators.hpp"
#include "emdstream/exact_oracle.hpp"
#include "emdstream/harness.hpp"
#include "emdstream/matching_graph.hpp"
#include "emdstream/sketch.hpp"
#include "oracles.hpp"

using namespace emdstream;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const std::function<Outcome()>& body, double limit_s = 0) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (limit_s > 0 && secs >= limit_s) {
    o.pass = false;
    o.detail += " [time limit " + std::to_string(limit_s) + " s exceeded]";
  }
  failures += o.pass ? 0 : 1;
  std::printf("%s %2d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Shared instance family for the structural checks: Δ = 64, k <= 4.
struct Structural {
  Instance inst;
  Matching opt;
  std::int64_t k;
};

std::vector<Structural> structural_instances(int count) {
  constexpr Generator kAll[] = {Generator::uniform, Generator::clustered, Generator::adversarial_min_grid};
  std::vector<Structural> out;
  std::mt19937_64 rng(2024);
  for (int i = 0; i < count; ++i) {
    InstanceSpec spec;
    spec.side = 64;
    spec.k = 1 + static_cast<int>(rng() % 4);
    spec.n = 20 + static_cast<std::int64_t>(rng() % 181);
    spec.generator = kAll[i % 3];
    spec.seed = rng();
    Instance inst = generate_instance(spec);
    Matching opt = exact_emd(inst.s, inst.t);
    const auto k = static_cast<std::int64_t>(std::min(inst.s.distinct(), inst.t.distinct()));
    out.push_back({std::move(inst), std::move(opt), k});
  }
  return out;
}

struct Triple {
  std::size_t instance;
  GridSpec grid;
  std::int64_t norm;  // dense oracle value
};

}  // namespace

int main() {
  report(1, "exact_emd equals brute force on 500 instances", [] {
    std::mt19937_64 rng(1);
    int mismatches = 0;
    for (int i = 0; i < 500; ++i) {
      const std::int64_t side = std::int64_t{2} << (rng() % 4);
      WeightedPointSet s, t;
      const int n = 1 + static_cast<int>(rng() % 6);
      for (int j = 0; j < n; ++j) {
        s.add(oracle::random_point(side, rng));
        t.add(oracle::random_point(side, rng));
      }
      mismatches += exact_emd(s, t).cost == brute_force_emd(s, t) ? 0 : 1;
    }
    return Outcome{mismatches == 0, fmt("%d mismatches", mismatches)};
  }, 10);

  std::vector<Structural> instances;
  std::vector<Triple> triples;
  report(2, "gamma imbalance equals the grid norm", [&] {
    instances = structural_instances(100);
    std::mt19937_64 rng(2);
    const Domain domain(64);
    int bad = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      for (int level = 0; level < domain.level_count(); ++level) {
        for (int j = 0; j < 4; ++j) {
          const GridSpec g = random_grid(level, domain, rng);
          const std::int64_t norm = oracle::l1_norm_of(instances[i].inst.s, instances[i].inst.t, g);
          bad += build_gamma(instances[i].opt, g).imbalance() == norm ? 0 : 1;
          triples.push_back({i, g, norm});
        }
      }
    }
    return Outcome{bad == 0, fmt("%zu triples, %d violations", triples.size(), bad)};
  }, 60);

  report(3, "long optimal edges bounded by (k/2) C", [&] {
    int bad = 0;
    for (const auto& tr : triples) {
      const auto& s = instances[tr.instance];
      const std::int64_t threshold = long_edge_threshold(tr.grid.level(), s.k);
      bad += 2 * long_edge_mass(s.opt, threshold) <= s.k * tr.norm ? 0 : 1;
    }
    return Outcome{!triples.empty() && bad == 0, fmt("%zu triples, %d violations", triples.size(), bad)};
  });

  report(4, "bad-grid probability at most 0.55", [&] {
    std::mt19937_64 rng(4);
    const Domain domain(64);
    double worst = 0.0;
    int cases = 0;
    for (std::size_t i = 0; i < 20 && i < instances.size(); ++i) {
      for (int level = 0; level < domain.level_count(); ++level) {
        int bad = 0;
        for (int s = 0; s < 2000; ++s) {
          bad += is_good_grid(random_grid(level, domain, rng), instances[i].opt, instances[i].k) ? 0 : 1;
        }
        worst = std::max(worst, bad / 2000.0);
        ++cases;
      }
    }
    return Outcome{cases > 0 && worst <= 0.55, fmt("%d (instance, level) cases, worst %.4f", cases, worst)};
  });

  report(5, "grid norm at most twice the crossing mass", [&] {
    int bad = 0;
    for (const auto& tr : triples) bad += tr.norm <= 2 * crossing_mass(instances[tr.instance].opt, tr.grid) ? 0 : 1;
    return Outcome{!triples.empty() && bad == 0, fmt("%zu triples, %d violations", triples.size(), bad)};
  });

  report(6, "multigrid Z/EMD inside its envelope", [] {
    ExperimentConfig c;
    c.side = 64;
    c.instances = 100;
    c.n_min = 20;
    c.n_max = 200;
    c.k_max = 4;
    c.epsilon = 0.1;
    c.include_coreset = false;
    const auto r = ratio_envelope(c);
    const double frac = r["aggregate"]["z_in_envelope_fraction"].get<double>();
    return Outcome{frac >= 0.95, fmt("%.2f of 100 inside, median ratio %.3f", frac,
                                     r["aggregate"]["z_ratio"]["median"].get<double>())};
  }, 300);

  report(7, "exact-mode Z equals the closed form", [&] {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const auto& s = instances[static_cast<std::size_t>(i)];
      MultigridConfig mc;
      mc.side = 64;
      mc.seed = 700 + static_cast<std::uint64_t>(i);
      mc.backend = NormBackend::exact;
      mc.distinct = DistinctCounting::exact;
      MultigridState m(mc);
      m.update(std::span<const StreamUpdate>(instance_stream(s.inst)));
      double sum = 0.0;
      for (int level = 0; level < m.level_count(); ++level) {
        std::int64_t best = std::numeric_limits<std::int64_t>::max();
        for (int j = 0; j < m.grids_per_level(); ++j) {
          best = std::min(best, oracle::l1_norm_of(s.inst.s, s.inst.t, m.grid(level, j)));
        }
        sum += static_cast<double>(best) * std::pow(2.0, level);
      }
      const double kk = static_cast<double>(s.k);
      const double closed = kk * kk / 2.0 * sum;
      worst = std::max(worst, std::abs(m.estimate().z - closed) / std::max(1.0, closed));
    }
    return Outcome{worst <= 1e-12, fmt("worst relative difference %.3g", worst)};
  });

  report(8, "coreset estimate within 1 +- 4 eps, movement within budget", [] {
    const double eps = 0.1;
    std::mt19937_64 rng(8);
    double lo = INFINITY, hi = 0.0;
    int outside = 0, movement_bad = 0, reduces = 0;
    for (int i = 0; i < 100; ++i) {
      InstanceSpec spec;
      spec.side = 64;
      spec.k = 1 + static_cast<int>(rng() % 4);
      spec.n = 20 + static_cast<std::int64_t>(rng() % 481);
      spec.generator = static_cast<Generator>(i % 3);
      spec.seed = rng();
      const Instance inst = generate_instance(spec);
      const double truth = exact_emd(inst.s, inst.t).cost;
      // Default bucket size, then b = 64 so that reduces actually run.
      for (std::size_t bucket : {std::size_t{0}, std::size_t{64}}) {
        CoresetConfig cc;
        cc.k = spec.k;
        cc.epsilon = eps;
        cc.bucket_size = bucket;
        cc.seed = spec.seed;
        CoresetState state(cc);
        for (const auto& u : instance_stream(inst)) state.apply(u);
        const double r = state.estimate() / truth;
        lo = std::min(lo, r);
        hi = std::max(hi, r);
        outside += (r < 1 - 4 * eps || r > 1 + 4 * eps) ? 1 : 0;
        for (const auto& rec : state.reduces()) {
          ++reduces;
          movement_bad += rec.movement <= eps * rec.upper_bound + 1e-9 ? 0 : 1;
        }
      }
    }
    return Outcome{outside == 0 && movement_bad == 0 && reduces > 0,
                   fmt("ratios in [%.4f, %.4f], %d outside, %d reduces, %d over budget", lo, hi, outside,
                       reduces, movement_bad)};
  });

  report(9, "weight perturbation changes EMD by more than 2x", [] {
    const auto d = weight_sensitivity_demo(100, 60, 0.1);
    const double factor = d.perturbed_emd / d.emd;
    return Outcome{factor > 2.0, fmt("EMD %.1f -> %.1f, factor %.2f", d.emd, d.perturbed_emd, factor)};
  });

  report(10, "sketch (eps, delta) envelopes", [] {
    const SketchParams params{0.1, 0.05};
    std::mt19937_64 rng(10);
    int l1_ok = 0, l0_ok = 0;
    for (int trial = 0; trial < 200; ++trial) {
      std::map<std::uint64_t, std::int64_t> dense;
      L1Sketch l1(params, derive_key(10, 1, static_cast<std::uint64_t>(trial)));
      L0Sketch l0(params, 1 << 20, derive_key(10, 2, static_cast<std::uint64_t>(trial)));
      for (int i = 0; i < 400; ++i) {
        const std::uint64_t c = rng() % (1 << 20);
        const std::int64_t d = static_cast<std::int64_t>(rng() % 21) - 10;
        if (d == 0) continue;
        dense[c] += d;
        l1.update(c, d);
        l0.update(c, d);
      }
      // Deletions that zero out a third of the coordinates.
      int n = 0;
      for (auto& [c, v] : dense) {
        if (n++ % 3 == 0 && v != 0) {
          l1.update(c, -v);
          l0.update(c, -v);
          v = 0;
        }
      }
      double norm = 0.0, support = 0.0;
      for (const auto& [c, v] : dense) {
        norm += static_cast<double>(std::abs(v));
        support += v != 0 ? 1.0 : 0.0;
      }
      l1_ok += std::abs(l1.estimate() - norm) <= params.epsilon * norm ? 1 : 0;
      l0_ok += std::abs(l0.estimate() - support) <= params.epsilon * support ? 1 : 0;
    }
    const int need = static_cast<int>(std::ceil((1 - 0.05 - 0.03) * 200));
    return Outcome{l1_ok >= need && l0_ok >= need,
                   fmt("l1 %d/200, l0 %d/200, need %d", l1_ok, l0_ok, need)};
  });

  report(11, "matched insert/delete pairs leave outputs bit-identical", [] {
    std::mt19937_64 rng(11);
    int differing = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const Instance inst = generate_instance(
          {10 + static_cast<std::int64_t>(rng() % 40), 1 + static_cast<int>(rng() % 4), 32,
           static_cast<Generator>(trial % 3), rng()});
      auto stream = instance_stream(inst);
      auto padded = stream;
      for (int i = 0; i < 20; ++i) {
        const StreamUpdate u{rng() % 2 ? Side::S : Side::T, +1, oracle::random_point(32, rng),
                             1 + static_cast<std::int64_t>(rng() % 3)};
        StreamUpdate undo = u;
        undo.sign = -1;
        const auto at = static_cast<std::ptrdiff_t>(rng() % (padded.size() + 1));
        padded.insert(padded.begin() + at, u);
        const auto later = at + 1 + static_cast<std::ptrdiff_t>(rng() % (padded.size() - at));
        padded.insert(padded.begin() + later, undo);
      }
      RunConfig c;
      c.side = 32;
      c.epsilon = 0.2;
      c.seed = static_cast<std::uint64_t>(trial) + 1;
      for (auto algo : {Algorithm::combined, Algorithm::exact}) {
        c.algorithm = algo;
        const auto a = run(c, stream);
        const auto b = run(c, padded);
        differing += (a["estimate"] == b["estimate"] && a["estimates"] == b["estimates"]) ? 0 : 1;
      }
      MultigridConfig mc;
      mc.side = 32;
      mc.epsilon = 0.2;
      mc.seed = c.seed;
      MultigridState x(mc), y(mc);
      x.update(std::span<const StreamUpdate>(stream));
      for (const auto& u : padded) y.update(u);
      differing += x == y ? 0 : 1;
    }
    return Outcome{differing == 0, fmt("50 trials, %d differing outputs or states", differing)};
  });

  report(12, "capacitated search matches the exact solver", [] {
    std::mt19937_64 rng(12);
    const Domain domain(4);
    int mismatches = 0, outside = 0;
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      WeightedPointSet p;
      const int n = 2 + static_cast<int>(rng() % 7);
      for (int j = 0; j < n; ++j) p.add(oracle::random_point(4, rng));
      const std::int64_t cap = (n + 1) / 2 + static_cast<std::int64_t>(rng() % 2);
      RunConfig c;
      c.side = 4;
      c.seed = static_cast<std::uint64_t>(i) + 1;
      const auto opt = exact_capacitated_kmedian(p, 2, cap, domain);
      const auto found = capacitated_search(p, 2, cap, Algorithm::exact, c);
      mismatches += found.cost == opt.cost ? 0 : 1;

      const auto approx = capacitated_search(p, 2, cap, Algorithm::combined, c);
      WeightedPointSet centers;
      for (std::size_t j = 0; j < approx.centers.size(); ++j) {
        centers.add(approx.centers[j], static_cast<double>(approx.capacities[j]));
      }
      const double cost = exact_emd(p, centers).cost;
      const double r = opt.cost > 0 ? cost / opt.cost : (cost == 0 ? 1.0 : INFINITY);
      worst = std::max(worst, r);
      outside += r <= multigrid_upper_envelope(0.1, 2) ? 0 : 1;
    }
    return Outcome{mismatches == 0 && outside == 0,
                   fmt("%d exact mismatches; combined worst cost/OPT %.3f, %d outside", mismatches, worst,
                       outside)};
  });

  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
