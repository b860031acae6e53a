#include "emdstream/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <mutex>
#include <thread>

#include "emdstream/error.hpp"
#include "emdstream/hashing.hpp"
#include "emdstream/matching_graph.hpp"

namespace emdstream {

using nlohmann::json;

namespace {

constexpr std::size_t kBatch = 4096;

Rng rng_for(std::uint64_t seed, std::uint64_t label, std::uint64_t index = 0) {
  return Rng(derive_key(seed, label, index).lo);
}

Point random_point(const Domain& d, Rng& rng) {
  std::uniform_int_distribution<std::int64_t> coord(1, d.side());
  const std::int64_t x = coord(rng);
  return {x, coord(rng)};
}

// n split into k positive parts at random.
std::vector<std::int64_t> split(std::int64_t n, int k, Rng& rng) {
  std::vector<std::int64_t> parts(static_cast<std::size_t>(k), 1);
  std::uniform_int_distribution<int> pick(0, k - 1);
  for (std::int64_t left = n - k; left > 0; --left) ++parts[static_cast<std::size_t>(pick(rng))];
  return parts;
}

std::int64_t to_count(double w) { return static_cast<std::int64_t>(std::llround(w)); }

template <typename T>
bool parse_number(std::string_view token, T& out) {
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end;
}

json level_json(const LevelEstimate& le) {
  return {{"level", le.level}, {"chosen_grid", le.chosen_grid}, {"c_hat", le.c_hat},
          {"per_grid", le.per_grid}};
}

json multigrid_json(const MultigridState& state, const MultigridReport& r) {
  json levels = json::array();
  for (const auto& le : r.levels) levels.push_back(level_json(le));
  return {{"z", r.z},
          {"k_hat", r.k_hat},
          {"fixed_grid_z", r.fixed_grid_z},
          {"levels", levels},
          {"grids_per_level", state.grids_per_level()},
          {"trackers", state.tracker_count()},
          {"accumulators", state.accumulator_count()},
          {"sketch_failure_prob", state.sketch_failure_prob()},
          {"memory_bytes", state.memory_bytes()}};
}

MultigridConfig multigrid_config(const RunConfig& c) {
  MultigridConfig m;
  m.side = c.side;
  m.grids_per_level = c.grids_per_level;
  m.epsilon = c.epsilon;
  m.failure_prob = c.failure_prob;
  m.seed = c.seed;
  m.backend = c.backend;
  m.distinct = c.distinct;
  return m;
}

template <typename State>
void feed(State& state, std::span<const StreamUpdate> updates) {
  for (std::size_t i = 0; i < updates.size(); i += kBatch) {
    state.update(updates.subspan(i, std::min(kBatch, updates.size() - i)));
  }
}

std::vector<StreamUpdate> side_stream(const WeightedPointSet& set, Side side) {
  std::vector<StreamUpdate> out;
  for (const auto& [p, w] : set) out.push_back({side, +1, p, to_count(w)});
  return out;
}

double ratio(double estimate, double exact) {
  return exact > 0.0 ? estimate / exact : (estimate == 0.0 ? 1.0 : INFINITY);
}

// Calls fn(i) for every i in [0, count) on a pool of workers (0: one per
// hardware thread). The first exception thrown by any call is rethrown.
template <typename Fn>
void parallel_indices(std::size_t count, unsigned threads, Fn fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          fn(i);
        } catch (...) {
          const std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

json summarize(std::vector<double> values) {
  if (values.empty()) return json::object();
  std::sort(values.begin(), values.end());
  return {{"min", values.front()}, {"median", values[values.size() / 2]}, {"max", values.back()}};
}

}  // namespace

std::string_view to_string(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::exact: return "exact";
    case Algorithm::coreset: return "coreset";
    case Algorithm::multigrid: return "multigrid";
    case Algorithm::baseline: return "baseline";
    case Algorithm::combined: return "combined";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view name) {
  for (Algorithm a : {Algorithm::exact, Algorithm::coreset, Algorithm::multigrid,
                      Algorithm::baseline, Algorithm::combined}) {
    if (to_string(a) == name) return a;
  }
  throw Error(ErrorCode::invalid_argument, "unknown algorithm '" + std::string(name) + "'");
}

std::string_view to_string(Generator g) noexcept {
  switch (g) {
    case Generator::uniform: return "uniform";
    case Generator::clustered: return "clustered";
    case Generator::adversarial_min_grid: return "adversarial-min-grid";
  }
  return "?";
}

Generator parse_generator(std::string_view name) {
  for (Generator g : {Generator::uniform, Generator::clustered, Generator::adversarial_min_grid}) {
    if (to_string(g) == name) return g;
  }
  throw Error(ErrorCode::invalid_argument, "unknown generator '" + std::string(name) + "'");
}

Instance generate_instance(const InstanceSpec& spec) {
  const Domain domain(spec.side);
  if (spec.k < 1 || spec.n < spec.k) throw Error(ErrorCode::invalid_argument, "need 1 <= k <= n");
  Rng rng = rng_for(spec.seed, 0x9E7, static_cast<std::uint64_t>(spec.generator));
  Instance inst;
  std::vector<Point> t_points;
  std::set<Point> taken;

  if (spec.generator == Generator::adversarial_min_grid) {
    const std::int64_t per_axis = spec.side / 16;
    if (per_axis * per_axis < spec.k) {
      throw Error(ErrorCode::invalid_argument, "domain too small for k lattice points of pitch 16");
    }
    const std::int64_t a = std::uniform_int_distribution<std::int64_t>(1, 14)(rng);
    std::vector<Point> lattice;
    for (std::int64_t u = 0; u < per_axis; ++u) {
      for (std::int64_t v = 0; v < per_axis; ++v) lattice.push_back({a + 16 * u, a + 16 * v});
    }
    std::shuffle(lattice.begin(), lattice.end(), rng);
    lattice.resize(static_cast<std::size_t>(spec.k));
    const auto parts = split(spec.n, spec.k, rng);
    for (std::size_t i = 0; i < lattice.size(); ++i) {
      const Point t = lattice[i];
      inst.t.add(t, static_cast<double>(parts[i]));
      inst.s.add({t.x + 1, t.y + 1}, static_cast<double>(parts[i]));
    }
    return inst;
  }

  if (domain.side() * domain.side() < spec.k + 1) {
    throw Error(ErrorCode::invalid_argument, "domain too small for k distinct T points");
  }
  while (t_points.size() < static_cast<std::size_t>(spec.k)) {
    const Point p = random_point(domain, rng);
    if (taken.insert(p).second) t_points.push_back(p);
  }
  const auto parts = split(spec.n, spec.k, rng);
  for (std::size_t i = 0; i < t_points.size(); ++i) inst.t.add(t_points[i], static_cast<double>(parts[i]));

  const std::int64_t radius = std::max<std::int64_t>(1, spec.side / 8);
  std::uniform_int_distribution<std::int64_t> offset(-radius, radius);
  std::uniform_int_distribution<std::size_t> which(0, t_points.size() - 1);
  for (std::int64_t placed = 0; placed < spec.n;) {
    Point p;
    if (spec.generator == Generator::uniform) {
      p = random_point(domain, rng);
    } else {
      const Point c = t_points[which(rng)];
      const std::int64_t dx = offset(rng);
      p = {std::clamp<std::int64_t>(c.x + dx, 1, spec.side),
           std::clamp<std::int64_t>(c.y + offset(rng), 1, spec.side)};
    }
    if (taken.contains(p)) continue;
    inst.s.add(p);
    ++placed;
  }
  return inst;
}

std::vector<StreamUpdate> instance_stream(const Instance& instance) {
  auto out = side_stream(instance.s, Side::S);
  const auto t = side_stream(instance.t, Side::T);
  out.insert(out.end(), t.begin(), t.end());
  return out;
}

std::vector<StreamUpdate> parse_stream(std::istream& in, const Domain& domain) {
  std::vector<StreamUpdate> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() < 4 || tok.size() > 5) {
      throw ParseError(line_no, "expected '<+|-> <S|T> <x> <y> [count]'");
    }
    StreamUpdate u;
    if (tok[0] == "+") {
      u.sign = +1;
    } else if (tok[0] == "-") {
      u.sign = -1;
    } else {
      throw ParseError(line_no, "sign must be '+' or '-', got '" + tok[0] + "'");
    }
    if (tok[1] == "S") {
      u.side = Side::S;
    } else if (tok[1] == "T") {
      u.side = Side::T;
    } else {
      throw ParseError(line_no, "set must be 'S' or 'T', got '" + tok[1] + "'");
    }
    if (!parse_number(tok[2], u.point.x) || !parse_number(tok[3], u.point.y)) {
      throw ParseError(line_no, "coordinates must be integers");
    }
    if (tok.size() == 5 && (!parse_number(tok[4], u.count) || u.count < 1)) {
      throw ParseError(line_no, "count must be a positive integer");
    }
    if (!domain.contains(u.point)) {
      throw Error(ErrorCode::range_error, "line " + std::to_string(line_no) + ": point (" +
                                              std::to_string(u.point.x) + "," +
                                              std::to_string(u.point.y) + ") outside [1," +
                                              std::to_string(domain.side()) + "]^2");
    }
    out.push_back(u);
  }
  return out;
}

std::vector<StreamUpdate> parse_stream_file(const std::string& path, const Domain& domain) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::invalid_argument, "cannot open stream file '" + path + "'");
  return parse_stream(in, domain);
}

void write_stream(std::ostream& out, std::span<const StreamUpdate> updates) {
  for (const auto& u : updates) {
    out << (u.sign > 0 ? '+' : '-') << ' ' << (u.side == Side::S ? 'S' : 'T') << ' ' << u.point.x
        << ' ' << u.point.y;
    if (u.count != 1) out << ' ' << u.count;
    out << '\n';
  }
}

Instance net_multisets(std::span<const StreamUpdate> updates, const Domain& domain) {
  std::map<Point, std::int64_t> s;
  std::map<Point, std::int64_t> t;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    const auto& u = updates[i];
    domain.require(u.point);
    auto& m = u.side == Side::S ? s : t;
    auto& c = m[u.point];
    c += static_cast<std::int64_t>(u.sign) * u.count;
    if (c < 0) {
      throw Error(ErrorCode::model_violation,
                  "update " + std::to_string(i + 1) + " removes a point that is not present");
    }
  }
  Instance out;
  for (const auto& [p, c] : s) out.s.add(p, static_cast<double>(c));
  for (const auto& [p, c] : t) out.t.add(p, static_cast<double>(c));
  return out;
}

json run(const RunConfig& config, std::span<const StreamUpdate> updates) {
  const auto start = std::chrono::steady_clock::now();
  const Domain domain(config.side);
  const Instance net = net_multisets(updates, domain);
  const bool deletions =
      std::any_of(updates.begin(), updates.end(), [](const StreamUpdate& u) { return u.sign < 0; });
  std::size_t shared = 0;
  for (const auto& [p, w] : net.s) shared += net.t.weight(p) > 0.0 ? 1 : 0;

  json report;
  report["schema"] = kReportSchema;
  report["config"] = {{"delta", config.side},
                      {"algorithm", to_string(config.algorithm)},
                      {"epsilon", config.epsilon},
                      {"delta_prob", config.failure_prob},
                      {"seed", config.seed},
                      {"grids_per_level", config.grids_per_level},
                      {"k", config.k},
                      {"backend", config.backend == NormBackend::sketch ? "sketch" : "exact"},
                      {"distinct", config.distinct == DistinctCounting::sketch ? "sketch" : "exact"}};
  report["stream"] = {{"updates", updates.size()},
                      {"n_s", to_count(net.s.total_weight())},
                      {"n_t", to_count(net.t.total_weight())},
                      {"distinct_s", net.s.distinct()},
                      {"distinct_t", net.t.distinct()},
                      {"deletions", deletions},
                      {"shared_locations", shared}};

  if (net.s.total_weight() != net.t.total_weight()) {
    throw Error(ErrorCode::size_mismatch, "|S| = " + std::to_string(to_count(net.s.total_weight())) +
                                              " but |T| = " +
                                              std::to_string(to_count(net.t.total_weight())));
  }
  if (net.s.empty()) throw Error(ErrorCode::empty_stream, "no points in the stream");

  std::optional<double> exact;
  const auto pairs = static_cast<std::int64_t>(net.s.distinct() * net.t.distinct());
  if (config.algorithm == Algorithm::exact || pairs <= config.exact_max_pairs) {
    exact = exact_emd(net.s, net.t).cost;
  }
  report["exact_cost"] = exact ? json(*exact) : json(nullptr);

  double estimate = 0.0;
  json estimates = json::object();
  json memory = json::object();
  switch (config.algorithm) {
    case Algorithm::exact:
      estimate = *exact;
      break;
    case Algorithm::coreset: {
      CoresetConfig cc;
      cc.k = config.k > 0 ? config.k : std::max(1, static_cast<int>(net.t.distinct()));
      cc.epsilon = config.epsilon;
      cc.side = config.side;
      cc.bucket_size = config.bucket_size;
      cc.seed = config.seed;
      CoresetState state(cc);
      for (const auto& u : updates) state.apply(u);
      estimate = state.estimate();
      double worst = 0.0;
      for (const auto& r : state.reduces()) {
        if (r.upper_bound > 0.0) worst = std::max(worst, r.movement / r.upper_bound);
      }
      estimates["coreset"] = {{"estimate", estimate},
                              {"k", cc.k},
                              {"bucket_size", state.bucket_size()},
                              {"core_size", state.s_core().distinct()},
                              {"movement", state.movement()},
                              {"reduces", state.reduces().size()},
                              {"max_movement_ratio", worst}};
      break;
    }
    case Algorithm::multigrid: {
      MultigridState state(multigrid_config(config));
      feed(state, updates);
      const auto r = state.estimate();
      estimate = r.z;
      estimates["multigrid"] = multigrid_json(state, r);
      memory["multigrid_bytes"] = state.memory_bytes();
      break;
    }
    case Algorithm::baseline: {
      auto bc = baseline_config_for(multigrid_config(config));
      BaselineState state(bc);
      feed(state, updates);
      estimate = state.estimate();
      estimates["baseline"] = {{"estimate", estimate}};
      memory["baseline_bytes"] = state.memory_bytes();
      break;
    }
    case Algorithm::combined: {
      CombinedState state(multigrid_config(config));
      feed(state, updates);
      const auto r = state.estimate();
      estimate = r.combined;
      estimates["multigrid"] = multigrid_json(state.multigrid(), r.multigrid);
      estimates["baseline"] = {{"estimate", r.baseline}};
      estimates["combined"] = {{"estimate", r.combined}};
      memory["multigrid_bytes"] = state.multigrid().memory_bytes();
      memory["baseline_bytes"] = state.baseline().memory_bytes();
      break;
    }
  }
  report["estimate"] = estimate;
  report["estimates"] = estimates;
  report["ratio"] = exact ? json(ratio(estimate, *exact)) : json(nullptr);
  report["memory"] = memory;
  if (config.timing) {
    const auto elapsed = std::chrono::steady_clock::now() - start;
    report["wall_time_ms"] = std::chrono::duration<double, std::milli>(elapsed).count();
  }
  return report;
}

double multigrid_upper_envelope(double epsilon, std::int64_t k) noexcept {
  const double kk = static_cast<double>(k);
  return 16.0 * std::pow(1.0 + epsilon, 3) * kk * kk * kk;
}

double multigrid_lower_envelope(double epsilon) noexcept { return std::pow(1.0 - epsilon, 3) / 4.0; }

json ratio_envelope(const ExperimentConfig& config) {
  constexpr Generator kAll[] = {Generator::uniform, Generator::clustered,
                                Generator::adversarial_min_grid};
  struct Result {
    json row;
    Generator generator;
    std::int64_t k = 0;
    double z_ratio = 0.0, baseline_ratio = 0.0, combined_ratio = 0.0, coreset_ratio = 0.0;
    bool inside = false, worse = false;
  };
  std::vector<Result> results(static_cast<std::size_t>(std::max(0, config.instances)));

  parallel_indices(results.size(), config.threads, [&](std::size_t index) {
    const int id = static_cast<int>(index);
    Rng rng = rng_for(config.seed, 0xE4, static_cast<std::uint64_t>(id));
    InstanceSpec spec;
    spec.side = config.side;
    spec.k = std::uniform_int_distribution<int>(1, config.k_max)(rng);
    spec.n = std::max<std::int64_t>(
        spec.k, std::uniform_int_distribution<std::int64_t>(config.n_min, config.n_max)(rng));
    spec.generator = config.generator ? *config.generator : kAll[id % 3];
    if (spec.generator == Generator::adversarial_min_grid &&
        (config.side / 16) * (config.side / 16) < spec.k) {
      spec.generator = Generator::clustered;
    }
    spec.seed = derive_key(config.seed, 0xE5, static_cast<std::uint64_t>(id)).lo;
    const Instance inst = generate_instance(spec);
    const auto stream = instance_stream(inst);
    const double exact = exact_emd(inst.s, inst.t).cost;
    const auto k = static_cast<std::int64_t>(std::min(inst.s.distinct(), inst.t.distinct()));

    MultigridConfig mc;
    mc.side = config.side;
    mc.grids_per_level = config.grids_per_level;
    mc.epsilon = config.epsilon;
    mc.failure_prob = config.failure_prob;
    mc.seed = spec.seed;
    CombinedState state(mc);
    feed(state, stream);
    const auto r = state.estimate();

    Result& out = results[index];
    out.generator = spec.generator;
    out.k = k;
    out.z_ratio = ratio(r.multigrid.z, exact);
    out.inside = out.z_ratio >= multigrid_lower_envelope(config.epsilon) - 0.05 &&
                 out.z_ratio <= multigrid_upper_envelope(config.epsilon, k);
    out.worse = r.multigrid.fixed_grid_z > r.multigrid.z;
    out.baseline_ratio = ratio(r.baseline, exact);
    out.combined_ratio = ratio(r.combined, exact);
    out.row = {{"id", id},
               {"generator", to_string(spec.generator)},
               {"n", spec.n},
               {"k", k},
               {"exact", exact},
               {"z", r.multigrid.z},
               {"k_hat", r.multigrid.k_hat},
               {"fixed_grid_z", r.multigrid.fixed_grid_z},
               {"baseline", r.baseline},
               {"combined", r.combined},
               {"z_ratio", out.z_ratio},
               {"z_in_envelope", out.inside}};
    if (config.include_coreset) {
      CoresetConfig cc;
      cc.k = static_cast<int>(inst.t.distinct());
      cc.epsilon = config.epsilon;
      cc.side = config.side;
      cc.seed = spec.seed;
      CoresetState cs(cc);
      for (const auto& u : stream) cs.apply(u);
      const double est = cs.estimate();
      out.coreset_ratio = ratio(est, exact);
      out.row["coreset"] = est;
      out.row["coreset_ratio"] = out.coreset_ratio;
    }
  });

  json rows = json::array();
  std::vector<double> z_ratios, baseline_ratios, combined_ratios, coreset_ratios;
  int z_inside = 0, fixed_worse = 0, adversarial = 0, adversarial_fixed_worse = 0;
  std::vector<std::pair<double, std::int64_t>> combined_with_k;
  for (auto& res : results) {
    z_inside += res.inside ? 1 : 0;
    fixed_worse += res.worse ? 1 : 0;
    if (res.generator == Generator::adversarial_min_grid) {
      ++adversarial;
      adversarial_fixed_worse += res.worse ? 1 : 0;
    }
    z_ratios.push_back(res.z_ratio);
    baseline_ratios.push_back(res.baseline_ratio);
    combined_ratios.push_back(res.combined_ratio);
    combined_with_k.emplace_back(res.combined_ratio, res.k);
    if (config.include_coreset) coreset_ratios.push_back(res.coreset_ratio);
    rows.push_back(std::move(res.row));
  }

  const double log_side = std::log2(static_cast<double>(config.side));
  const double c1 = baseline_ratios.empty() ? 0.0
                                            : 1.0 / *std::min_element(baseline_ratios.begin(),
                                                                      baseline_ratios.end());
  const double c2 = baseline_ratios.empty() ? 0.0
                                            : *std::max_element(baseline_ratios.begin(),
                                                                baseline_ratios.end()) /
                                                  log_side;
  int combined_inside = 0;
  for (const auto& [cr, k] : combined_with_k) {
    combined_inside +=
        cr <= std::min(multigrid_upper_envelope(config.epsilon, k), c2 * log_side) ? 1 : 0;
  }
  const double count = std::max(1, config.instances);
  json aggregate = {
      {"instances", config.instances},
      {"z_ratio", summarize(z_ratios)},
      {"baseline_ratio", summarize(baseline_ratios)},
      {"combined_ratio", summarize(combined_ratios)},
      {"z_in_envelope_fraction", z_inside / count},
      {"baseline_c1", c1},
      {"baseline_c2", c2},
      {"combined_in_envelope_fraction", combined_inside / count},
      {"fixed_grid_worse_fraction", fixed_worse / count},
      {"adversarial_instances", adversarial},
      {"adversarial_fixed_grid_worse_fraction",
       adversarial > 0 ? static_cast<double>(adversarial_fixed_worse) / adversarial : 0.0}};
  if (config.include_coreset) aggregate["coreset_ratio"] = summarize(coreset_ratios);
  return {{"schema", kReportSchema},
          {"suite", "ratio-envelope"},
          {"config",
           {{"delta", config.side},
            {"epsilon", config.epsilon},
            {"delta_prob", config.failure_prob},
            {"seed", config.seed},
            {"n_min", config.n_min},
            {"n_max", config.n_max},
            {"k_max", config.k_max}}},
          {"instances", rows},
          {"aggregate", aggregate}};
}

CapacitatedSolution capacitated_search(const WeightedPointSet& p, int k, std::int64_t capacity,
                                       Algorithm estimator, const RunConfig& config) {
  const Domain domain(config.side);
  if (k < 1) throw Error(ErrorCode::invalid_argument, "k must be positive");
  if (config.side > 8 || k > 2) {
    throw Error(ErrorCode::too_large, "capacitated search is limited to side <= 8 and k <= 2");
  }
  if (p.empty() || !p.integral()) {
    throw Error(ErrorCode::invalid_argument, "P must be a nonempty integer-weighted set");
  }
  const std::int64_t n = p.multiplicity_total();
  if (capacity * k < n) {
    throw Error(ErrorCode::infeasible, "capacity * k = " + std::to_string(capacity * k) +
                                           " < |P| = " + std::to_string(n));
  }
  for (const auto& [q, w] : p) domain.require(q);

  const auto p_updates = side_stream(p, Side::S);
  std::optional<CombinedState> sketched;
  std::optional<CoresetState> coreset;
  if (estimator == Algorithm::multigrid || estimator == Algorithm::baseline ||
      estimator == Algorithm::combined) {
    sketched.emplace(multigrid_config(config));
    feed(*sketched, p_updates);
  } else if (estimator == Algorithm::coreset) {
    CoresetConfig cc;
    cc.k = k;
    cc.epsilon = config.epsilon;
    cc.side = config.side;
    cc.bucket_size = config.bucket_size;
    cc.seed = config.seed;
    coreset.emplace(cc);
    for (const auto& u : p_updates) coreset->apply(u);
  }

  auto score = [&](const std::vector<Point>& centers, const std::vector<std::int64_t>& caps) {
    WeightedPointSet t;
    for (std::size_t i = 0; i < centers.size(); ++i) t.add(centers[i], static_cast<double>(caps[i]));
    switch (estimator) {
      case Algorithm::exact:
        return exact_emd(p, t).cost;
      case Algorithm::coreset: {
        CoresetState copy = *coreset;
        for (const auto& [c, w] : t) copy.insert(Side::T, c, to_count(w));
        return copy.estimate();
      }
      default: {
        CombinedState copy = *sketched;
        const auto t_updates = side_stream(t, Side::T);
        copy.update(std::span<const StreamUpdate>(t_updates));
        const auto r = copy.estimate();
        if (estimator == Algorithm::multigrid) return r.multigrid.z;
        if (estimator == Algorithm::baseline) return r.baseline;
        return r.combined;
      }
    }
  };

  std::vector<std::pair<const std::vector<Point>*, const std::vector<std::int64_t>*>> candidates;
  const auto subsets = center_subsets(domain, k);
  const auto caps = capacity_vectors(k, capacity, n);
  for (const auto& centers : subsets) {
    for (const auto& cap : caps) candidates.emplace_back(&centers, &cap);
  }
  std::vector<double> costs(candidates.size());
  parallel_indices(candidates.size(), config.threads, [&](std::size_t i) {
    costs[i] = score(*candidates[i].first, *candidates[i].second);
  });
  // First minimum in enumeration order, independent of the worker count.
  CapacitatedSolution best;
  best.cost = INFINITY;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (costs[i] < best.cost) best = {*candidates[i].first, *candidates[i].second, costs[i]};
  }
  return best;
}

json verify_claims(const ClaimsConfig& config) {
  constexpr Generator kAll[] = {Generator::uniform, Generator::clustered,
                                Generator::adversarial_min_grid};
  const Domain domain(config.side);
  struct Tally {
    std::int64_t checked = 0;
    std::int64_t violations = 0;
    void add(bool ok) {
      ++checked;
      violations += ok ? 0 : 1;
    }
    json to_json() const { return {{"checked", checked}, {"violations", violations}}; }
  };
  Tally identity, crossing, long_edges, no_long_cycle, path_count, path_length;
  double worst_bad = 0.0;
  std::int64_t good_grid_cases = 0, good_grid_violations = 0;

  Rng grid_rng = rng_for(config.seed, 0xC1);
  for (int id = 0; id < config.instances; ++id) {
    Rng rng = rng_for(config.seed, 0xC2, static_cast<std::uint64_t>(id));
    InstanceSpec spec;
    spec.side = config.side;
    spec.k = std::uniform_int_distribution<int>(1, 4)(rng);
    spec.n = std::uniform_int_distribution<std::int64_t>(20, 120)(rng);
    spec.generator = kAll[id % 3];
    if (spec.generator == Generator::adversarial_min_grid &&
        (config.side / 16) * (config.side / 16) < spec.k) {
      spec.generator = Generator::clustered;
    }
    spec.seed = derive_key(config.seed, 0xC3, static_cast<std::uint64_t>(id)).lo;
    const Instance inst = generate_instance(spec);
    const Matching m = exact_emd(inst.s, inst.t);
    const auto k = static_cast<std::int64_t>(std::min(inst.s.distinct(), inst.t.distinct()));

    for (int level = 0; level < domain.level_count(); ++level) {
      const std::int64_t threshold = long_edge_threshold(level, k);
      for (int j = 0; j < config.grids_per_level; ++j) {
        const GridSpec g = random_grid(level, domain, grid_rng);
        const std::int64_t c = characteristic_difference(inst.s, inst.t, g).l1_norm();
        const GammaGraph gamma = build_gamma(m, g);
        identity.add(gamma.imbalance() == c);
        crossing.add(c <= 2 * crossing_mass(m, g));
        long_edges.add(2 * long_edge_mass(m, threshold) <= k * c);
        no_long_cycle.add(check_no_long_cycle(gamma, threshold));
        try {
          const auto paths = path_decompose(gamma, threshold);
          path_count.add(2 * static_cast<std::int64_t>(paths.size()) <= c);
          path_length.add(check_simple_path_length(paths, k));
        } catch (const Error&) {
          path_count.add(false);
          path_length.add(false);
        }
      }
      if (level == 0) continue;
      std::int64_t bad = 0;
      for (int s = 0; s < config.shifts; ++s) {
        bad += is_good_grid(random_grid(level, domain, grid_rng), m, k) ? 0 : 1;
      }
      const double fraction = static_cast<double>(bad) / config.shifts;
      worst_bad = std::max(worst_bad, fraction);
      ++good_grid_cases;
      good_grid_violations += fraction <= 0.55 ? 0 : 1;
    }
  }

  // A swap-improvable matching: two long edges whose ends share cells.
  Matching bad_matching;
  bad_matching.edges = {{{1, 1}, {20, 1}, 1.0, 19}, {{19, 1}, {2, 1}, 1.0, 17}};
  const GammaGraph bad_gamma = build_gamma(bad_matching, GridSpec(1, 0, 0));
  const std::int64_t bad_threshold = long_edge_threshold(1, 2);
  const bool detected = !check_no_long_cycle(bad_gamma, bad_threshold);
  bool decompose_rejects = false;
  try {
    path_decompose(bad_gamma, bad_threshold);
  } catch (const Error& e) {
    decompose_rejects = e.code() == ErrorCode::cycle_encountered;
  }

  const auto demo = weight_sensitivity_demo(100, 60, 0.1);
  const double demo_factor = demo.perturbed_emd / demo.emd;

  json claims = {
      {"cell_norm_identity", identity.to_json()},
      {"crossing_bound", crossing.to_json()},
      {"long_edge_bound", long_edges.to_json()},
      {"no_long_cycle", no_long_cycle.to_json()},
      {"path_count", path_count.to_json()},
      {"path_length", path_length.to_json()},
      {"good_grid_probability",
       {{"checked", good_grid_cases}, {"violations", good_grid_violations}, {"worst_bad_fraction", worst_bad}}},
      {"suboptimal_cycle_detected", detected && decompose_rejects},
      {"weight_sensitivity", {{"emd", demo.emd}, {"perturbed_emd", demo.perturbed_emd},
                              {"factor", demo_factor}, {"ok", demo_factor > 2.0}}}};
  bool ok = detected && decompose_rejects && demo_factor > 2.0 && good_grid_violations == 0;
  for (const auto* t : {&identity, &crossing, &long_edges, &no_long_cycle, &path_count, &path_length}) {
    ok = ok && t->violations == 0;
  }
  return {{"schema", kReportSchema},
          {"suite", "verify-claims"},
          {"config",
           {{"delta", config.side},
            {"instances", config.instances},
            {"grids_per_level", config.grids_per_level},
            {"shifts", config.shifts},
            {"seed", config.seed}}},
          {"claims", claims},
          {"ok", ok}};
}

}  // namespace emdstream
