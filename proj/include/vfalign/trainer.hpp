#pragma once

// Bidirectional training of a pair of i-ResNets φ: x ↦ y and ψ: y ↦ x.
//
// One batch (one alternating iteration) runs two single-direction updates:
// the forward update draws x ~ p and minimizes J_f + J_b + J_i; the mirrored
// update draws y ~ q with the roles of (f, p, φ) and (g, q, ψ) exchanged.
// Both networks take an Adam step in every update, followed by spectral-norm
// projection.

#include "vfalign/iresnet.hpp"
#include "vfalign/sampling.hpp"
#include "vfalign/similarity.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace vfalign {

struct TrainConfig {
  int batch_size = 128;
  double lr = 1e-3;
  LossWeights weights;
  double cap = 0.99;
  int layers = 10;
  int batches = 2000;  // alternating iterations
  int restarts = 3;
  std::uint64_t seed = 0;
  int eval_every = 200;
  int eval_samples = 10000;
  // A restart fails when the total loss stays above factor × its first value
  // for `divergence_window` consecutive batches.
  int divergence_window = 200;
  double divergence_factor = 10.0;
  // Optional line-delimited JSON loss log and checkpoint cadence.
  std::string log_path;
  int log_every = 1;
  std::string checkpoint_dir;
  int checkpoint_every = 0;
};

void validate(const TrainConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {},
                                   const std::string& path = "train");

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

// θ ← θ − lr·m̂/(√v̂ + ε). Throws NumericalError (leaving everything
// untouched) when a gradient is not finite.
void adam_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads, AdamState& state, double lr);

// Splits a tape gradient map into per-parameter gradients for a network
// registered at `first`; parameters that received no gradient get zeros.
std::vector<Matrix> gradients_for(const IResNet& net, const Gradients& grads, ParamId first);

// One single-direction update; returns the losses before the step.
LossBreakdown train_batch(const VectorField& f, const VectorField& g, Sampler& p, IResNet& phi, IResNet& psi,
                          AdamState& adam_phi, AdamState& adam_psi, const TrainConfig& cfg);

struct TracePoint {
  int batch = 0;
  SimilarityReport report;
};

struct RestartRecord {
  int index = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";  // ok | diverged | non-finite
  std::string message;
  int batches_run = 0;
  std::vector<TracePoint> trace;
  std::vector<double> inverse_loss_trace;  // J_i of the forward update, at each trace point
  LossBreakdown last_forward;
  LossBreakdown last_backward;
  SimilarityReport final_report;
  double wall_ms = 0.0;
};

struct RunRecord {
  std::vector<RestartRecord> restarts;
  int best_restart = -1;
  SimilarityReport final_report;
  double wall_ms = 0.0;
  nlohmann::json config;
  nlohmann::json notes;
};

nlohmann::json to_json(const RunRecord& r, bool include_timing = true);

struct TrainResult {
  IResNet phi;
  IResNet psi;
  RunRecord record;
};

// Runs cfg.restarts independent restarts and keeps the one with the highest
// final min-of-directions similarity. Throws NumericalError if every
// restart fails.
TrainResult train(const VectorField& f, const VectorField& g, const Sampler& p, const Sampler& q,
                  const TrainConfig& cfg);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

}  // namespace vfalign
