#pragma once

// Trajectory-based baseline: simulate ensembles, reduce each to the principal
// subspace holding 95% of the variance, project back, and canonically
// correlate the two ensembles row by row.

#include "vfalign/common.hpp"
#include "vfalign/dynsys.hpp"
#include "vfalign/sampling.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vfalign {

struct TrajectoryEnsemble {
  Matrix states;                // stacked over trials, one row per recorded step
  std::vector<int> trial_ids;   // surviving trials, in order
  std::vector<int> trial_lengths;
  double dt = 0.0;
  double horizon = 0.0;
  double noise = 0.0;
  std::string integrator;
  int dim() const { return static_cast<int>(states.cols()); }
};

struct EnsembleOptions {
  int trials = 1000;
  double dt = 0.01;
  double horizon = 10.0;
  double noise = 0.0;  // 0 selects deterministic RK4, otherwise Euler–Maruyama
  int record_every = 1;
};

// Initial conditions come from `initial`; two models simulated with equally
// seeded samplers and the same seed share initial conditions and noise.
TrajectoryEnsemble simulate_ensemble(const VectorField& field, Sampler initial, const EnsembleOptions& opts,
                                     std::uint64_t seed);

struct PcaResult {
  RowVector mean;
  Vector variances;  // all principal variances, descending
  Matrix basis;      // n × k
  int k = 0;
  double retained = 0.0;
  Matrix backprojected;  // rows mapped through the k-dim subspace, mean restored
};

PcaResult pca_reduce(const Matrix& states, double threshold = 0.95);

struct CcaResult {
  Vector correlations;  // descending, clipped to [0, 1]
  double mean = 0.0;
  int rank = 0;
};

// Whitening + SVD of the whitened cross-covariance. Directions whose variance
// falls below rank_tol × the largest one are dropped before whitening.
CcaResult cca(const Matrix& a, const Matrix& b, double rank_tol = 1e-8);

// pca_reduce on both, then cca over trials present in both ensembles.
CcaResult svcca(const TrajectoryEnsemble& a, const TrajectoryEnsemble& b, double threshold = 0.95);

void write_ensemble_csv(const std::string& path, const TrajectoryEnsemble& e);

}  // namespace vfalign
