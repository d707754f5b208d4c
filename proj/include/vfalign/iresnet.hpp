#pragma once

// Invertible residual network: x_{l+1} = x_l + W2·relu(W1·x_l + b1) + b2,
// with every connection weight kept below a spectral-norm cap c < 1 so that
// each block is a bi-Lipschitz bijection.

#include "vfalign/autodiff.hpp"
#include "vfalign/common.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace vfalign {

struct ResidualBlock {
  Matrix W1;  // 2n × n
  Matrix b1;  // 1 × 2n
  Matrix W2;  // n × 2n
  Matrix b2;  // 1 × n
};

struct InverseOptions {
  // Bound on the ∞-norm of the fixed-point update, relative to max(1, ‖target‖∞).
  double tol = 1e-10;
  int max_iter = 100;
};

// Per-block record of one inversion: iteration count and the largest observed
// ratio of successive update norms.
struct InverseTrace {
  std::vector<int> iterations;
  std::vector<double> max_ratio;
};

// Spectral norm of `w` by power iteration. `v` is the persistent right
// singular vector estimate; it is (re)initialized when its size is wrong.
double spectral_norm(const Matrix& w, Vector& v, double tol = 1e-10, int max_iter = 1000);

class IResNet {
 public:
  static constexpr int kParamsPerBlock = 4;

  IResNet() = default;

  // W1 ~ N(0, 1/n) then capped; W2 and biases zero, so the map is the identity.
  static IResNet identity_init(int dim, int layers, double cap, std::uint64_t seed);
  // Both weight matrices random and capped: a fixed nonlinear bijection.
  static IResNet random_warp(int dim, int layers, double cap, double w2_scale, std::uint64_t seed);

  int dim() const { return dim_; }
  int layers() const { return static_cast<int>(blocks_.size()); }
  double cap() const { return cap_; }
  const std::vector<ResidualBlock>& blocks() const { return blocks_; }
  std::vector<ResidualBlock>& mutable_blocks() { return blocks_; }

  Matrix residual(int layer, const Matrix& x) const;
  Matrix forward(const Matrix& x) const;
  // Primal and Jacobian-vector product at every row of x along the rows of v.
  std::pair<Matrix, Matrix> forward_tangent(const Matrix& x, const Matrix& v) const;
  Matrix jvp(const Matrix& x, const Matrix& v) const { return forward_tangent(x, v).second; }
  // Full Jacobian at a single point (n tangent passes).
  Matrix jacobian(const RowVector& x) const;

  // Records the map on a tape. Weights are registered as parameters with ids
  // first_param + kParamsPerBlock·l + {0: W1, 1: b1, 2: W2, 3: b2}; with
  // first_param < 0 they are recorded as constants.
  Dual record(Tape& tape, const Dual& x, ParamId first_param) const;

  Matrix inverse(const Matrix& y, const InverseOptions& opts = {}, InverseTrace* trace = nullptr) const;

  // Scales every W with ‖W‖₂ > cap down to the cap. Biases are untouched.
  void project_spectral_norms();
  void project_spectral_norms(double cap);

  // Parameter views in registration order.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  std::size_t parameter_count() const { return blocks_.size() * kParamsPerBlock; }

  nlohmann::json to_json() const;
  static IResNet from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static IResNet load(const std::string& path);

 private:
  int dim_ = 0;
  double cap_ = 0.99;
  std::vector<ResidualBlock> blocks_;
  // Power-iteration state, two vectors per block (W1, W2).
  std::vector<Vector> power_state_;
};

}  // namespace vfalign
