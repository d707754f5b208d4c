#pragma once

// Autonomous vector fields x ↦ f(x) used as alignment subjects.
//
// Every field has two evaluation paths: a plain batched one used by
// simulation and similarity estimates, and a tape-recorded one (accepting a
// Dual) used inside training losses.

#include "vfalign/autodiff.hpp"
#include "vfalign/common.hpp"
#include "vfalign/iresnet.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace vfalign {

enum class FieldKind { VanDerPol, Pitchfork, Linear, LowRankRNN, ContextRNN, LinearConjugate, Custom };

std::string to_string(FieldKind kind);

class VectorField {
 public:
  virtual ~VectorField() = default;

  virtual FieldKind kind() const = 0;
  virtual int dim() const = 0;
  virtual Matrix eval(const Matrix& x) const = 0;
  virtual Dual record(Tape& tape, const Dual& x) const = 0;
  virtual nlohmann::json describe() const;

  RowVector eval_point(const RowVector& x) const;
  // ∂f/∂x at a single point, assembled from n tangent passes.
  Matrix jacobian(const RowVector& x) const;

 protected:
  void check_dim(Eigen::Index cols) const;
};

using FieldPtr = std::shared_ptr<const VectorField>;

// ẋ₁ = x₂, ẋ₂ = μ(1 − x₁²)x₂ − x₁
class VanDerPol final : public VectorField {
 public:
  explicit VanDerPol(double mu) : mu_(mu) {}
  FieldKind kind() const override { return FieldKind::VanDerPol; }
  int dim() const override { return 2; }
  Matrix eval(const Matrix& x) const override;
  Dual record(Tape& tape, const Dual& x) const override;
  nlohmann::json describe() const override;
  double mu() const { return mu_; }

 private:
  double mu_;
};

// Supercritical pitchfork normal form: ẋ₁ = μx₁ − x₁³, ẋ₂ = −x₂
class Pitchfork final : public VectorField {
 public:
  explicit Pitchfork(double mu) : mu_(mu) {}
  FieldKind kind() const override { return FieldKind::Pitchfork; }
  int dim() const override { return 2; }
  Matrix eval(const Matrix& x) const override;
  Dual record(Tape& tape, const Dual& x) const override;
  nlohmann::json describe() const override;
  double mu() const { return mu_; }

 private:
  double mu_;
};

struct LinearSystemSpec {
  Matrix A;
  std::optional<RowVector> bias;
};

// ẋ = Ax (+ bias)
class LinearField final : public VectorField {
 public:
  explicit LinearField(LinearSystemSpec spec);
  FieldKind kind() const override { return FieldKind::Linear; }
  int dim() const override { return static_cast<int>(spec_.A.rows()); }
  Matrix eval(const Matrix& x) const override;
  Dual record(Tape& tape, const Dual& x) const override;
  nlohmann::json describe() const override;
  const LinearSystemSpec& spec() const { return spec_; }

 private:
  LinearSystemSpec spec_;
};

struct LowRankRNNSpec {
  Matrix J;     // n × n random part
  Matrix m;     // n × k
  Matrix nvec;  // n × k
  Matrix W() const;
};

// ẋ = −x + W·tanh(x), W = J + m·nvecᵀ
class LowRankRNN final : public VectorField {
 public:
  explicit LowRankRNN(LowRankRNNSpec spec);
  // Plain connectivity without a low-rank decomposition.
  static std::shared_ptr<LowRankRNN> from_weights(Matrix W);
  FieldKind kind() const override { return FieldKind::LowRankRNN; }
  int dim() const override { return static_cast<int>(W_.rows()); }
  Matrix eval(const Matrix& x) const override;
  Dual record(Tape& tape, const Dual& x) const override;
  nlohmann::json describe() const override;
  const Matrix& W() const { return W_; }
  const LowRankRNNSpec& spec() const { return spec_; }

 private:
  LowRankRNNSpec spec_;
  Matrix W_;
};

struct ContextRNNSpec {
  double tau = 1.0;
  Matrix W;                     // n × n
  Matrix B1;                    // n × m
  RowVector u;                  // m, frozen input
  std::optional<Matrix> Gamma;  // n × n context matrix (w-type)
};

// τẋ = −x + (W + Γ)·tanh(x) + B1·u
class ContextRNN final : public VectorField {
 public:
  explicit ContextRNN(ContextRNNSpec spec);
  FieldKind kind() const override { return FieldKind::ContextRNN; }
  int dim() const override { return static_cast<int>(spec_.W.rows()); }
  Matrix eval(const Matrix& x) const override;
  Dual record(Tape& tape, const Dual& x) const override;
  nlohmann::json describe() const override;
  const ContextRNNSpec& spec() const { return spec_; }

 private:
  ContextRNNSpec spec_;
  Matrix effective_W_;
  RowVector drive_;  // (B1·u)ᵀ
};

// y ↦ Q·f(Q⁻¹y); the exact aligning map is H(x) = Qx.
class LinearConjugate final : public VectorField {
 public:
  LinearConjugate(FieldPtr base, Matrix Q);
  FieldKind kind() const override { return FieldKind::LinearConjugate; }
  int dim() const override { return base_->dim(); }
  Matrix eval(const Matrix& x) const override;
  Dual record(Tape& tape, const Dual& x) const override;
  nlohmann::json describe() const override;
  const Matrix& Q() const { return Q_; }
  const Matrix& Q_inverse() const { return Qinv_; }
  const FieldPtr& base() const { return base_; }

 private:
  FieldPtr base_;
  Matrix Q_;
  Matrix Qinv_;
};

// Field given by callables; `record` may be empty for simulation-only use.
class CustomField final : public VectorField {
 public:
  using EvalFn = std::function<Matrix(const Matrix&)>;
  using RecordFn = std::function<Dual(Tape&, const Dual&)>;
  CustomField(int dim, std::string name, EvalFn eval, RecordFn record);
  FieldKind kind() const override { return FieldKind::Custom; }
  int dim() const override { return dim_; }
  Matrix eval(const Matrix& x) const override;
  Dual record(Tape& tape, const Dual& x) const override;
  nlohmann::json describe() const override;

 private:
  int dim_;
  std::string name_;
  EvalFn eval_;
  RecordFn record_;
};

// Push-forward of `base` through a fixed bijection `warp`:
// g(y) = ∂warp/∂x · f(x) at x = warp⁻¹(y). The exact aligning map is `warp`.
// Recorded as a per-row linearization; the warp is piecewise affine, so its
// Jacobian is locally constant and ∂g/∂y = A·Df(x)·A⁻¹ with A = ∂warp/∂x.
class PushForwardField final : public VectorField {
 public:
  PushForwardField(FieldPtr base, IResNet warp);
  FieldKind kind() const override { return FieldKind::Custom; }
  int dim() const override { return base_->dim(); }
  Matrix eval(const Matrix& y) const override;
  Dual record(Tape& tape, const Dual& y) const override;
  nlohmann::json describe() const override;
  const IResNet& warp() const { return warp_; }

 private:
  FieldPtr base_;
  IResNet warp_;
  InverseOptions inverse_opts_;
};

FieldPtr make_conjugate(const FieldPtr& field, const Matrix& Q);
FieldPtr scaled(const FieldPtr& field, double alpha);

// Eigenvalue layout for constructed linear systems. Complex pairs are counted
// in pairs; real eigenvalues fill the rest of each half plane.
struct EigenPattern {
  int n = 0;
  int n_pos = 0;  // eigenvalues with positive real part
  int complex_pairs_pos = 0;
  int complex_pairs_neg = 0;
};

enum class Pairing { Real, Complex };

// Real eigenvalues with |λ| ∈ [0.5, 2]; complex pairs with real part magnitude
// and imaginary part in [0.5, 2]; A = P·D·P⁻¹ with a random well-conditioned P.
LinearSystemSpec random_linear_with_pattern(const EigenPattern& pattern, std::uint64_t seed);
// Pairing::Real puts every eigenvalue on the real axis; Pairing::Complex
// uses only complex pairs and rejects odd counts on either side.
LinearSystemSpec random_linear_with_signs(int n, int n_pos, Pairing pairing, std::uint64_t seed);

Matrix random_orthogonal(int n, std::uint64_t seed);
// Positive-determinant matrix with singular values in [smin, smax].
Matrix random_well_conditioned(int n, std::uint64_t seed, double smin = 0.5, double smax = 2.0);
// Standard normal entries with a column flipped to make det > 0; rejects
// |det| ≤ 1e-9.
Matrix random_gaussian_positive_det(int n, std::uint64_t seed);

struct LowRankOptions {
  // Per-entry std of J is j_std/√n when true (radius ≈ j_std), j_std otherwise.
  bool scale_j_by_sqrt_n = true;
  double j_std = 0.5;
};

LowRankRNNSpec random_lowrank_rnn(int n, int k, std::uint64_t seed, const LowRankOptions& opts = {});

ContextRNNSpec parse_rnn_weights(const nlohmann::json& j);
ContextRNNSpec load_rnn_weights(const std::string& path);
nlohmann::json rnn_weights_to_json(const ContextRNNSpec& spec);
void save_rnn_weights(const std::string& path, const ContextRNNSpec& spec);

// Builds a field from the tagged-union system spec ({"kind": ..., ...}).
FieldPtr field_from_json(const nlohmann::json& j, const std::string& path = "system");

}  // namespace vfalign
