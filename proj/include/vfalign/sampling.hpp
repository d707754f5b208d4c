#pragma once

// Phase-space sample distributions for training batches and similarity
// estimates.

#include "vfalign/common.hpp"
#include "vfalign/dynsys.hpp"

#include <json.hpp>

#include <cstdint>
#include <random>
#include <string>
#include <variant>

namespace vfalign {

struct UniformBox {
  RowVector low;
  RowVector high;
};

struct Gaussian {
  RowVector mean;
  RowVector stddev;
};

struct AsymptoticOptions {
  double noise = 1.5;  // diffusion coefficient σ in dx = f dt + σ dW
  double dt = 0.01;
  double burn_in = 50.0;
  double t_end = 100.0;
  int trials = 1000;
  // States are pooled every `record_interval` time units after burn-in.
  double record_interval = 0.5;
};

// Pool of states from noisy simulations; draws are uniform with replacement.
struct Asymptotic {
  Matrix pool;
  AsymptoticOptions options;
  int discarded_trials = 0;
};

// Euler–Maruyama from standard normal initial conditions. Trials whose state
// norm exceeds 1e6 are discarded; if none survive a NumericalError is thrown.
Asymptotic asymptotic_states(const VectorField& field, const AsymptoticOptions& opts, std::uint64_t seed);

class Sampler {
 public:
  using Params = std::variant<UniformBox, Gaussian, Asymptotic>;

  Sampler(Params params, std::uint64_t seed);

  static Sampler uniform_box(RowVector low, RowVector high, std::uint64_t seed);
  static Sampler standard_normal(int dim, std::uint64_t seed);
  static Sampler gaussian(RowVector mean, RowVector stddev, std::uint64_t seed);
  static Sampler asymptotic(const VectorField& field, const AsymptoticOptions& opts, std::uint64_t seed);

  // Box presets that cover the limit sets of the planar benchmark systems.
  static Sampler vdp_box(std::uint64_t seed);
  static Sampler pitchfork_box(double mu, std::uint64_t seed);
  // Axis-aligned box containing the image Q·box.
  static Sampler mapped_box(const Matrix& Q, const RowVector& low, const RowVector& high, std::uint64_t seed);

  int dim() const;
  std::string kind() const;
  const Params& params() const { return params_; }

  // `count` i.i.d. points, one per row. Advances the seed stream.
  Matrix draw(int count);

  // Same distribution, fresh stream.
  Sampler reseeded(std::uint64_t seed) const;

  nlohmann::json describe() const;

 private:
  Params params_;
  std::mt19937_64 rng_;
};

// Accepted: {"kind": "uniform_box", "low": [...], "high": [...]} |
//       {"kind": "gaussian", "mean": [...], "std": [...]} | {"kind": "standard_normal"} |
//       {"kind": "asymptotic", "noise", "dt", "burn_in", "t_end", "trials"} |
//       {"kind": "vdp_box"} | {"kind": "pitchfork_box", "mu"}
Sampler sampler_from_json(const nlohmann::json& j, const VectorField& field, std::uint64_t seed,
                          const std::string& path = "sampler");

}  // namespace vfalign
