#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>

#include "emdstream/error.hpp"
#include "emdstream/exact_oracle.hpp"
#include "emdstream/harness.hpp"

namespace {

using emdstream::ErrorCode;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitModel = 3;

struct Common {
  std::int64_t delta = 64;
  double epsilon = 0.1;
  double delta_prob = 0.05;
  std::uint64_t seed = 1;
  int grids_per_level = 0;
  std::string report;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--delta", c.delta, "Grid side (power of two)")->capture_default_str();
  sub->add_option("--epsilon", c.epsilon, "Accuracy parameter in (0,1)")->capture_default_str();
  sub->add_option("--delta-prob", c.delta_prob, "Failure probability in (0,1)")->capture_default_str();
  sub->add_option("--seed", c.seed, "Master seed")->capture_default_str();
  sub->add_option("--grids-per-level", c.grids_per_level, "Shifted grids per level (0: 2 log2 delta)")
      ->capture_default_str();
  sub->add_option("--report", c.report, "Write the JSON report here instead of stdout");
}

emdstream::RunConfig run_config(const Common& c) {
  emdstream::RunConfig rc;
  rc.side = c.delta;
  rc.epsilon = c.epsilon;
  rc.failure_prob = c.delta_prob;
  rc.seed = c.seed;
  rc.grids_per_level = c.grids_per_level;
  return rc;
}

void emit(const json& report, const std::string& path) {
  if (path.empty()) {
    std::cout << report.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw emdstream::Error(ErrorCode::invalid_argument, "cannot write report '" + path + "'");
  out << report.dump(2) << '\n';
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse_error:
    case ErrorCode::range_error:
    case ErrorCode::invalid_argument:
    case ErrorCode::too_large:
    case ErrorCode::infeasible:
    case ErrorCode::corrupt_blob:
      return kExitConfig;
    case ErrorCode::size_mismatch:
    case ErrorCode::empty_stream:
    case ErrorCode::empty_input:
    case ErrorCode::weight_mismatch:
    case ErrorCode::deletion_unsupported:
    case ErrorCode::distinct_bound_exceeded:
    case ErrorCode::model_violation:
      return kExitModel;
    default:
      return kExitFailed;
  }
}

json solution_json(const emdstream::CapacitatedSolution& s) {
  json centers = json::array();
  for (const auto& c : s.centers) centers.push_back({c.x, c.y});
  return {{"centers", centers}, {"capacities", s.capacities}, {"cost", s.cost}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming earth-mover distance estimators"};
  app.require_subcommand(1);

  Common est_common;
  std::string est_stream;
  std::string est_algorithm = "combined";
  int est_k = 0;
  std::size_t est_bucket = 0;
  bool est_dense = false;
  bool est_exact_distinct = false;
  bool est_timing = false;
  auto* estimate = app.add_subcommand("estimate", "Estimate EMD(S,T) for a turnstile stream");
  add_common(estimate, est_common);
  estimate->add_option("--stream", est_stream, "Stream file")->required();
  estimate->add_option("--algorithm", est_algorithm, "exact|coreset|multigrid|baseline|combined")
      ->capture_default_str();
  estimate->add_option("--k", est_k, "Coreset k (0: distinct points of T)");
  estimate->add_option("--bucket-size", est_bucket, "Coreset bucket size (0: default)");
  estimate->add_flag("--dense", est_dense, "Track grid norms exactly instead of sketching");
  estimate->add_flag("--exact-distinct", est_exact_distinct, "Count distinct points exactly");
  estimate->add_flag("--timing", est_timing, "Include wall time in the report");

  Common exp_common;
  std::string exp_suite = "ratio-envelope";
  emdstream::ExperimentConfig exp_config;
  std::string exp_generator;
  bool exp_no_coreset = false;
  auto* experiment = app.add_subcommand("experiment", "Run an experiment suite on generated instances");
  add_common(experiment, exp_common);
  experiment->add_option("--suite", exp_suite, "Suite name")
      ->check(CLI::IsMember({"ratio-envelope"}))
      ->capture_default_str();
  experiment->add_option("--instances", exp_config.instances)->capture_default_str();
  experiment->add_option("--n-min", exp_config.n_min)->capture_default_str();
  experiment->add_option("--n-max", exp_config.n_max)->capture_default_str();
  experiment->add_option("--k-max", exp_config.k_max)->capture_default_str();
  experiment->add_option("--generator", exp_generator, "uniform|clustered|adversarial-min-grid");
  experiment->add_flag("--no-coreset", exp_no_coreset, "Skip the coreset estimator");
  experiment->add_option("--threads", exp_config.threads, "Worker threads (0: all cores)")->capture_default_str();

  Common cap_common;
  std::string cap_stream;
  std::string cap_algorithm = "exact";
  int cap_k = 1;
  std::int64_t cap_capacity = 0;
  auto* capkmedian = app.add_subcommand("capkmedian", "Capacitated k-median by exhaustive search");
  add_common(capkmedian, cap_common);
  capkmedian->add_option("--stream", cap_stream, "Stream of '+ S x y' lines holding P")->required();
  capkmedian->add_option("--algorithm", cap_algorithm, "Estimator scoring the candidates")
      ->capture_default_str();
  capkmedian->add_option("--k", cap_k, "Number of centers")->capture_default_str();
  capkmedian->add_option("--capacity", cap_capacity, "Capacity per center")->required();
  unsigned cap_threads = 0;
  capkmedian->add_option("--threads", cap_threads, "Worker threads (0: all cores)")->capture_default_str();

  Common claims_common;
  emdstream::ClaimsConfig claims_config;
  auto* verify = app.add_subcommand("verify-claims", "Check the structural claims on random instances");
  add_common(verify, claims_common);
  verify->add_option("--instances", claims_config.instances)->capture_default_str();
  verify->add_option("--shifts", claims_config.shifts)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*estimate) {
      auto rc = run_config(est_common);
      rc.algorithm = emdstream::parse_algorithm(est_algorithm);
      rc.k = est_k;
      rc.bucket_size = est_bucket;
      rc.backend = est_dense ? emdstream::NormBackend::exact : emdstream::NormBackend::sketch;
      rc.distinct = est_exact_distinct ? emdstream::DistinctCounting::exact
                                       : emdstream::DistinctCounting::sketch;
      rc.timing = est_timing;
      const emdstream::Domain domain(rc.side);
      const auto updates = emdstream::parse_stream_file(est_stream, domain);
      emit(emdstream::run(rc, updates), est_common.report);
      return kExitOk;
    }
    if (*experiment) {
      exp_config.side = exp_common.delta;
      exp_config.epsilon = exp_common.epsilon;
      exp_config.failure_prob = exp_common.delta_prob;
      exp_config.seed = exp_common.seed;
      exp_config.grids_per_level = exp_common.grids_per_level;
      exp_config.include_coreset = !exp_no_coreset;
      if (!exp_generator.empty()) exp_config.generator = emdstream::parse_generator(exp_generator);
      emit(emdstream::ratio_envelope(exp_config), exp_common.report);
      return kExitOk;
    }
    if (*capkmedian) {
      auto rc = run_config(cap_common);
      rc.threads = cap_threads;
      const auto algorithm = emdstream::parse_algorithm(cap_algorithm);
      const emdstream::Domain domain(rc.side);
      const auto updates = emdstream::parse_stream_file(cap_stream, domain);
      const auto net = emdstream::net_multisets(updates, domain);
      if (!net.t.empty()) {
        throw emdstream::Error(ErrorCode::model_violation, "the P stream must only contain S updates");
      }
      const auto found = emdstream::capacitated_search(net.s, cap_k, cap_capacity, algorithm, rc);
      emdstream::WeightedPointSet centers;
      for (std::size_t i = 0; i < found.centers.size(); ++i) {
        centers.add(found.centers[i], static_cast<double>(found.capacities[i]));
      }
      json report = {{"schema", emdstream::kReportSchema},
                     {"suite", "capkmedian"},
                     {"config",
                      {{"delta", rc.side}, {"algorithm", cap_algorithm}, {"k", cap_k},
                       {"capacity", cap_capacity}, {"seed", rc.seed}}},
                     {"solution", solution_json(found)},
                     {"solution_exact_cost", emdstream::exact_emd(net.s, centers).cost}};
      if (rc.side <= 4 && net.s.multiplicity_total() <= 8) {
        report["oracle"] = solution_json(
            emdstream::exact_capacitated_kmedian(net.s, cap_k, cap_capacity, domain));
      }
      emit(report, cap_common.report);
      return kExitOk;
    }
    if (*verify) {
      claims_config.side = claims_common.delta;
      claims_config.seed = claims_common.seed;
      if (claims_common.grids_per_level > 0) claims_config.grids_per_level = claims_common.grids_per_level;
      const json report = emdstream::verify_claims(claims_config);
      emit(report, claims_common.report);
      return report.at("ok").get<bool>() ? kExitOk : kExitFailed;
    }
  } catch (const emdstream::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailed;
  }
  return kExitOk;
}
