#pragma once

// Batched tape-based automatic differentiation.
//
// Every value on the tape is a dense matrix whose rows are independent
// points of a batch. A forward-mode tangent is not a separate mechanism:
// it is carried as an ordinary tape value (see Dual), so one reverse sweep
// differentiates losses that read the tangent channel as well.

#include "vfalign/common.hpp"

#include <functional>
#include <map>
#include <vector>

namespace vfalign {

using ParamId = int;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Primal value plus its directional derivative. An invalid tangent stands
// for an identically zero tangent (the tangent of a constant).
struct Dual {
  Var primal;
  Var tangent;
  bool has_tangent() const { return tangent.valid(); }
};

using Gradients = std::map<ParamId, Matrix>;

class Tape {
 public:
  Tape() = default;

  Var constant(Matrix value);
  // Leaf whose gradient is reported by backward() under `id`. Registering the
  // same id twice accumulates both uses.
  Var parameter(const Matrix& value, ParamId id);

  const Matrix& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(Var v) const;

  // x · wᵀ : (B×in)·(out×in)ᵀ → B×out
  Var matmul_t(Var x, Var w);
  // x + 1·b with b a 1×m row
  Var add_row(Var x, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  // a ⊙ [ref > 0]; ref only selects, it receives no gradient.
  Var gate(Var a, Var ref);
  Var tanh(Var a);
  Var sum(Var a);
  Var row_normalize(Var a);
  // B×1 cosine of the angle between matching rows.
  Var row_cosine(Var a, Var b);
  Var select_rows(Var a, std::vector<int> rows);
  // Node with a precomputed value whose per-row Jacobian w.r.t. x is given:
  // value.row(r) depends on x.row(r) through jacobians[r].
  Var row_linearized(Var x, Matrix value, std::vector<Matrix> jacobians);

  // Reverse sweep from a 1×1 root.
  Gradients backward(Var root) const;

 private:
  enum class Op {
    Constant,
    Parameter,
    MatMulT,
    AddRow,
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    Gate,
    Tanh,
    Sum,
    RowNormalize,
    RowCosine,
    SelectRows,
    RowLinearized,
  };

  struct Node {
    explicit Node(Op o, int lhs = -1, int rhs = -1) : op(o), a(lhs), b(rhs) {}
    Op op;
    int a = -1;
    int b = -1;
    double s = 0.0;
    ParamId param = -1;
    bool grad = false;
    Matrix value;
    Matrix aux;  // op-specific cache (row norms)
    int extra = -1;  // index into rows_ / jacobians_
  };

  Var push(Node node);
  const Node& node(Var v) const;
  bool any_grad(int a, int b = -1) const;

  std::vector<Node> nodes_;
  std::vector<std::vector<int>> rows_;
  std::vector<std::vector<Matrix>> jacobians_;
};

// Forward-mode rules expressed with tape primitives. Tangents propagate only
// where they are present; a missing tangent is treated as zero.
namespace dual {

Dual constant(Tape& tape, Var v);
Dual linear(Tape& tape, Var w, Var b, const Dual& x);
// x·mᵀ with m held constant on the tape (no bias)
Dual matmul_t(Tape& tape, const Dual& x, Var m);
Dual add_row(Tape& tape, const Dual& x, Var b);
Dual relu(Tape& tape, const Dual& x);
Dual tanh(Tape& tape, const Dual& x);
Dual add(Tape& tape, const Dual& a, const Dual& b);
Dual sub(Tape& tape, const Dual& a, const Dual& b);
Dual mul(Tape& tape, const Dual& a, const Dual& b);
Dual scale(Tape& tape, const Dual& a, double s);

}  // namespace dual

using DualMap = std::function<Dual(Tape&, const Dual&)>;

// ∂f/∂x · v at every row of x, from one tangent-propagated forward pass.
Matrix jvp(const DualMap& f, const Matrix& x, const Matrix& v);

}  // namespace vfalign
