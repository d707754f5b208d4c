#pragma once

// Experiment runners behind the command-line verbs. Each runner takes a JSON
// config, validates all of it before computing anything, and returns rows in
// a fixed order regardless of how many workers ran the pairs.

#include "vfalign/dynsys.hpp"
#include "vfalign/sampling.hpp"
#include "vfalign/similarity.hpp"
#include "vfalign/svcca.hpp"
#include "vfalign/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace vfalign {

// git-describe style identifier baked in at configure time.
std::string build_id();

struct RunOptions {
  int workers = 1;
  bool full_scale = false;
  std::optional<std::uint64_t> seed;  // overrides the config's seed
};

// One CSV record: a trained pair, a replicate, or a baseline comparison.
struct PairResult {
  std::string experiment;
  int i = 0;
  int j = 0;
  std::uint64_t seed = 0;
  double sim_forward = 0.0;
  double sim_backward = 0.0;
  double similarity = 0.0;
  int batches = 0;
  int restarts = 0;
  double wall_ms = 0.0;
  std::string status = "ok";
  std::string message;
  nlohmann::json detail = nlohmann::json::object();
};

struct ExperimentOutput {
  std::string experiment;
  nlohmann::json config;    // verbatim echo
  nlohmann::json resolved;  // effective settings after defaults and overrides
  std::vector<PairResult> rows;
  nlohmann::json summary = nlohmann::json::object();
  nlohmann::json notes = nlohmann::json::object();
};

inline constexpr const char* kCsvHeader =
    "experiment,i,j,seed,sim_forward,sim_backward,similarity,batches,restarts,wall_ms";

std::string csv_row(const PairResult& r, bool include_timing = true);
std::string to_csv(const std::vector<PairResult>& rows, bool include_timing = true);
nlohmann::json to_json(const PairResult& r, bool include_timing = true);
nlohmann::json to_json(const ExperimentOutput& out, bool include_timing = true);

// Writes <stem>.csv and <stem>.json (plus any matrices in the summary as
// <stem>_<name>.csv) under `dir`; returns the paths written.
std::vector<std::string> write_output(const std::string& dir, const std::string& stem, const ExperimentOutput& out,
                                      bool include_timing = true);

// Runs fn(0..count-1) on `workers` threads; results land in index order.
void parallel_for(int count, int workers, const std::function<void(int)>& fn);

// Single pair: {"source": system, "target": system, "sampler_p", "sampler_q", "train", "seed"}.
ExperimentOutput run_align(const nlohmann::json& config, const RunOptions& opts = {});

// Replicated conjugate benchmark: {"family": "vdp" | "pitchfork" | "lowrank_rnn", "replicates",
// "mu_range", "dim", "rank", "conjugate", "train", "seed"}.
ExperimentOutput run_conjugate_suite(const nlohmann::json& config, const RunOptions& opts = {});

// Equivalent linear systems: {"class": "orthogonal" | "invertible" | "same_sign_and_type" | "same_sign",
// "dim", "replicates", "train", "seed"}.
ExperimentOutput run_linear_classes(const nlohmann::json& config, const RunOptions& opts = {});

// Linear systems grouped by how many eigenvalues have positive real part.
// Cells are same-sign proportions; each gets `pairs_per_cell` independent pairs.
ExperimentOutput run_sign_grid(const nlohmann::json& config, const RunOptions& opts = {});

// Learned-alignment and SVCCA similarity matrices over a model set.
ExperimentOutput run_pairwise_matrix(const nlohmann::json& config, const RunOptions& opts = {});

// SVCCA between two systems' simulated ensembles.
ExperimentOutput run_svcca_compare(const nlohmann::json& config, const RunOptions& opts = {});

// Fixed-point inversion accuracy of a saved or random network.
ExperimentOutput run_invert_check(const nlohmann::json& config, const RunOptions& opts = {});

// Dispatch on config["experiment"].
ExperimentOutput run_experiment(const nlohmann::json& config, const RunOptions& opts = {});

struct FieldGrid {
  int nx = 0;
  int ny = 0;
  Matrix points;                  // nx·ny × 2, x fastest
  Matrix field;                   // source field at points
  std::optional<Matrix> mapped;   // H(points)
  std::optional<Matrix> pushed;   // ∂H/∂x · f(points)
  std::vector<Matrix> trajectories;
};

// {"system": spec, "net": path?, "grid": {"low", "high", "points": [nx, ny]},
//  "trajectories": {"count", "horizon", "dt"}}
FieldGrid field_grid(const VectorField& field, const IResNet* net, const RowVector& low, const RowVector& high,
                     int nx, int ny, int trajectories = 0, double horizon = 10.0, double dt = 0.01,
                     std::uint64_t seed = 0);
nlohmann::json to_json(const FieldGrid& grid);
FieldGrid parse_field_grid(const nlohmann::json& j);
ExperimentOutput run_field_grid(const nlohmann::json& config, FieldGrid* grid_out, const RunOptions& opts = {});

}  // namespace vfalign
