#pragma once

// Orbital similarity loss and the bidirectional similarity metric.
//
// For a map H and fields f, g the per-point loss is
//   ‖u/‖u‖ − v/‖v‖‖²,  u = ∂H/∂x·f(x),  v = g(H(x)),
// which equals 2 − 2·cos∠(u, v). Points where either vector is shorter than
// kDegenerateVelocity are excluded and counted.

#include "vfalign/autodiff.hpp"
#include "vfalign/dynsys.hpp"
#include "vfalign/iresnet.hpp"
#include "vfalign/sampling.hpp"

#include <json.hpp>

namespace vfalign {

inline constexpr double kDegenerateVelocity = 1e-8;

struct LossWeights {
  double forward = 1.0;
  double backward = 1.0;
  double inverse = 1.0;
};

struct LossBreakdown {
  double forward = 0.0;   // J_f
  double backward = 0.0;  // J_b
  double inverse = 0.0;   // J_i
  double total = 0.0;
  LossWeights weights;
  int excluded_forward = 0;
  int excluded_backward = 0;
};

struct OrbitalTerm {
  Var loss;    // 1×1 batch mean
  Var mapped;  // H(x), B×n
  int used = 0;
  int excluded = 0;
};

// Records the loss of aligning f to g through H at the rows of x. H's weights
// are tape parameters starting at first_param (constants when negative).
OrbitalTerm record_orbital_loss(Tape& tape, const VectorField& f, const VectorField& g, const IResNet& H,
                                ParamId first_param, Var x);

// Mean loss over the rows of x without parameter registration.
double orbital_loss(const VectorField& f, const VectorField& g, const IResNet& H, const Matrix& x,
                    int* excluded = nullptr);

// Per-point cosines between ∂H/∂x·f(x) and g(H(x)); degenerate points are
// dropped. `keep` receives the retained row indices when non-null.
Vector alignment_cosines(const VectorField& f, const VectorField& g, const IResNet& H, const Matrix& x,
                         std::vector<int>* keep = nullptr);

struct BatchTape {
  Tape tape;
  Var total;
  LossBreakdown losses;
};

// Forward, backward and inverse terms for one batch x drawn from p:
//   J_f = loss(f, g, φ) at x, J_b = loss(g, f, ψ) at φ(x),
//   J_i = mean over elements of (x − ψ(φ(x)))².
// φ's weights are parameters [phi_first, …) and ψ's [psi_first, …).
BatchTape record_batch_losses(const VectorField& f, const VectorField& g, const IResNet& phi, const IResNet& psi,
                              const Matrix& x, const LossWeights& weights, ParamId phi_first, ParamId psi_first);

LossBreakdown batch_losses(const VectorField& f, const VectorField& g, Sampler& p, const IResNet& phi,
                           const IResNet& psi, int batch_size, const LossWeights& weights);

struct CosineSummary {
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
};

struct SimilarityReport {
  double sim_forward = 0.0;
  double sim_backward = 0.0;
  double similarity = 0.0;
  int sample_count = 0;
  int excluded_forward = 0;
  int excluded_backward = 0;
  CosineSummary forward_summary;
  CosineSummary backward_summary;
};

nlohmann::json to_json(const SimilarityReport& r);

// Mean cosine with x ~ p through φ, with y ~ q through ψ, and the minimum.
SimilarityReport similarity(const VectorField& f, const VectorField& g, const IResNet& phi, const IResNet& psi,
                            Sampler& p, Sampler& q, int samples = 10000);

// Directional similarity with an arbitrary callable map (used with exact
// oracle maps such as H(x) = Qx). `map` returns (H(x), ∂H/∂x·v).
using TangentMap = std::function<std::pair<Matrix, Matrix>(const Matrix&, const Matrix&)>;
Vector alignment_cosines(const VectorField& f, const VectorField& g, const TangentMap& map, const Matrix& x,
                         std::vector<int>* keep = nullptr);
SimilarityReport similarity(const VectorField& f, const VectorField& g, const TangentMap& phi,
                            const TangentMap& psi, Sampler& p, Sampler& q, int samples = 10000);

TangentMap linear_map(const Matrix& Q);
TangentMap network_map(const IResNet& net);

}  // namespace vfalign
