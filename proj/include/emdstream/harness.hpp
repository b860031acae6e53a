#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "emdstream/coreset.hpp"
#include "emdstream/estimators.hpp"
#include "emdstream/exact_oracle.hpp"
#include "emdstream/geometry.hpp"

namespace emdstream {

inline constexpr std::string_view kReportSchema = "emdstream.report/1";

enum class Algorithm { exact, coreset, multigrid, baseline, combined };

std::string_view to_string(Algorithm a) noexcept;
/// Throws InvalidArgument on unknown names.
Algorithm parse_algorithm(std::string_view name);

enum class Generator { uniform, clustered, adversarial_min_grid };

std::string_view to_string(Generator g) noexcept;
Generator parse_generator(std::string_view name);

struct InstanceSpec {
  std::int64_t n = 16;  // |S| = |T|
  int k = 2;            // distinct points of T
  std::int64_t side = 64;
  Generator generator = Generator::uniform;
  std::uint64_t seed = 1;
};

struct Instance {
  WeightedPointSet s;
  WeightedPointSet t;
};

/// T has exactly k distinct points and S never shares a location with T.
///   uniform: both sides uniform over the domain;
///   clustered: S scattered within side/8 of the T points;
///   adversarial_min_grid: T on a lattice of pitch 16 and S diagonally
///   adjacent, so a single shifted grid per level often splits many pairs.
/// Throws InvalidArgument if n < k or the domain cannot host the instance.
Instance generate_instance(const InstanceSpec& spec);

/// S insertions followed by T insertions, one update per distinct point.
std::vector<StreamUpdate> instance_stream(const Instance& instance);

/// Parses `<+|-> <S|T> <x> <y> [count]` lines; `#` starts a comment.
/// Throws ParseError (with line number) or RangeError.
std::vector<StreamUpdate> parse_stream(std::istream& in, const Domain& domain);
std::vector<StreamUpdate> parse_stream_file(const std::string& path, const Domain& domain);
void write_stream(std::ostream& out, std::span<const StreamUpdate> updates);

struct RunConfig {
  std::int64_t side = 64;
  Algorithm algorithm = Algorithm::combined;
  double epsilon = 0.1;
  double failure_prob = 0.05;
  std::uint64_t seed = 1;
  int grids_per_level = 0;  // 0: 2 log2(side)
  int k = 0;                // coreset k; 0: distinct points of T in the stream
  std::size_t bucket_size = 0;
  NormBackend backend = NormBackend::sketch;
  DistinctCounting distinct = DistinctCounting::sketch;
  /// The exact reference cost is computed when |supp S| * |supp T| <= this.
  std::int64_t exact_max_pairs = 250000;
  bool timing = false;
  /// Workers for capacitated candidate scoring; 0: one per hardware thread.
  unsigned threads = 0;
};

/// Final multisets of a stream. Throws ModelViolation if any multiplicity
/// goes negative along the way.
Instance net_multisets(std::span<const StreamUpdate> updates, const Domain& domain);

/// Runs the configured estimator over the stream and returns the JSON report.
/// The report is byte-identical across replays unless config.timing is set.
nlohmann::json run(const RunConfig& config, std::span<const StreamUpdate> updates);

struct ExperimentConfig {
  std::int64_t side = 64;
  int instances = 100;
  std::int64_t n_min = 20;
  std::int64_t n_max = 200;
  int k_max = 4;
  double epsilon = 0.1;
  double failure_prob = 0.05;
  std::uint64_t seed = 1;
  int grids_per_level = 0;
  /// Empty: cycle through all generators.
  std::optional<Generator> generator;
  bool include_coreset = true;
  /// Workers for per-instance runs; 0: one per hardware thread. Reports do not depend on it.
  unsigned threads = 0;
};

/// Upper end of the multigrid envelope: 16 (1 + eps)^3 k^3.
double multigrid_upper_envelope(double epsilon, std::int64_t k) noexcept;
/// Lower end of the multigrid envelope: (1 - eps)^3 / 4.
double multigrid_lower_envelope(double epsilon) noexcept;

/// ratio-envelope suite: per-instance estimator/EMD ratios and an aggregate table.
nlohmann::json ratio_envelope(const ExperimentConfig& config);

/// Exhaustive capacitated k-median over center subsets of [side]^2 and
/// capacity vectors (entries <= capacity, sum |P|), scored by the chosen
/// estimator of EMD(P, centers weighted by capacities). The P side is
/// sketched once and cloned for every candidate.
/// Throws Infeasible if capacity * k < |P|, TooLarge if side > 8 or k > 2.
CapacitatedSolution capacitated_search(const WeightedPointSet& p, int k, std::int64_t capacity,
                                       Algorithm estimator, const RunConfig& config);

struct ClaimsConfig {
  std::int64_t side = 64;
  int instances = 20;
  int grids_per_level = 4;
  int shifts = 2000;
  std::uint64_t seed = 1;
};

/// Checks the structural claims on random instances; "ok" is false if any
/// check fails.
nlohmann::json verify_claims(const ClaimsConfig& config);

}  // namespace emdstream
