#include "vfalign/autodiff.hpp"

#include <cmath>
#include <utility>

namespace vfalign {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
  }
}

void accumulate(Matrix& into, const Matrix& delta) {
  if (into.size() == 0) {
    into = delta;
  } else {
    into += delta;
  }
}

}  // namespace

Var Tape::push(Node node) {
  if (nodes_.capacity() == 0) nodes_.reserve(512);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
    throw ContractError("tape: invalid variable reference");
  }
  return nodes_[v.id];
}

bool Tape::any_grad(int a, int b) const {
  return (a >= 0 && nodes_[a].grad) || (b >= 0 && nodes_[b].grad);
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).grad; }

Var Tape::constant(Matrix value) {
  Node n{Op::Constant};
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(const Matrix& value, ParamId id) {
  Node n{Op::Parameter};
  n.value = value;
  n.param = id;
  n.grad = true;
  return push(std::move(n));
}

Var Tape::matmul_t(Var x, Var w) {
  const Matrix& xv = value(x);
  const Matrix& wv = value(w);
  if (xv.cols() != wv.cols()) {
    throw DimensionError("matmul_t: " + shape_str(xv) + " · (" + shape_str(wv) + ")ᵀ");
  }
  Node n{Op::MatMulT, x.id, w.id};
  n.value.noalias() = xv * wv.transpose();
  n.grad = any_grad(x.id, w.id);
  return push(std::move(n));
}

Var Tape::add_row(Var x, Var b) {
  const Matrix& xv = value(x);
  const Matrix& bv = value(b);
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw DimensionError("add_row: bias " + shape_str(bv) + " for " + shape_str(xv));
  }
  Node n{Op::AddRow, x.id, b.id};
  n.value = xv;
  n.value.rowwise() += bv.row(0);
  n.grad = any_grad(x.id, b.id);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Node n{Op::Add, a.id, b.id};
  n.value = value(a) + value(b);
  n.grad = any_grad(a.id, b.id);
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Node n{Op::Sub, a.id, b.id};
  n.value = value(a) - value(b);
  n.grad = any_grad(a.id, b.id);
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Node n{Op::Mul, a.id, b.id};
  n.value = value(a).cwiseProduct(value(b));
  n.grad = any_grad(a.id, b.id);
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  Node n{Op::Scale, a.id};
  n.s = s;
  n.value = s * value(a);
  n.grad = any_grad(a.id);
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double s) {
  Node n{Op::AddScalar, a.id};
  n.s = s;
  n.value = value(a).array() + s;
  n.grad = any_grad(a.id);
  return push(std::move(n));
}

Var Tape::gate(Var a, Var ref) {
  require_same_shape(value(a), value(ref), "gate");
  Node n{Op::Gate, a.id, ref.id};
  n.value = (value(ref).array() > 0.0).select(value(a), 0.0);
  n.grad = any_grad(a.id);
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  Node n{Op::Tanh, a.id};
  n.value = value(a).array().tanh();
  n.grad = any_grad(a.id);
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  Node n{Op::Sum, a.id};
  n.value = Matrix::Constant(1, 1, value(a).sum());
  n.grad = any_grad(a.id);
  return push(std::move(n));
}

Var Tape::row_normalize(Var a) {
  const Matrix& av = value(a);
  Node n{Op::RowNormalize, a.id};
  n.aux = av.rowwise().norm();
  n.value = av.array().colwise() / n.aux.col(0).array();
  n.grad = any_grad(a.id);
  return push(std::move(n));
}

Var Tape::row_cosine(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require_same_shape(av, bv, "row_cosine");
  Node n{Op::RowCosine, a.id, b.id};
  n.aux.resize(av.rows(), 2);
  n.aux.col(0) = av.rowwise().norm();
  n.aux.col(1) = bv.rowwise().norm();
  n.value = av.cwiseProduct(bv).rowwise().sum().array() /
            (n.aux.col(0).array() * n.aux.col(1).array());
  n.grad = any_grad(a.id, b.id);
  return push(std::move(n));
}

Var Tape::select_rows(Var a, std::vector<int> rows) {
  const Matrix& av = value(a);
  Node n{Op::SelectRows, a.id};
  n.value.resize(static_cast<Eigen::Index>(rows.size()), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= av.rows()) throw DimensionError("select_rows: row out of range");
    n.value.row(static_cast<Eigen::Index>(i)) = av.row(rows[i]);
  }
  n.grad = any_grad(a.id);
  n.extra = static_cast<int>(rows_.size());
  rows_.push_back(std::move(rows));
  return push(std::move(n));
}

Var Tape::row_linearized(Var x, Matrix value_in, std::vector<Matrix> jacobians) {
  const Matrix& xv = value(x);
  if (static_cast<Eigen::Index>(jacobians.size()) != xv.rows() || value_in.rows() != xv.rows()) {
    throw DimensionError("row_linearized: one Jacobian per row required");
  }
  for (const auto& jac : jacobians) {
    if (jac.rows() != value_in.cols() || jac.cols() != xv.cols()) {
      throw DimensionError("row_linearized: Jacobian shape " + shape_str(jac));
    }
  }
  Node n{Op::RowLinearized, x.id};
  n.value = std::move(value_in);
  n.grad = any_grad(x.id);
  n.extra = static_cast<int>(jacobians_.size());
  jacobians_.push_back(std::move(jacobians));
  return push(std::move(n));
}

Gradients Tape::backward(Var root) const {
  const Node& r = node(root);
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw ContractError("backward: root must be scalar, got " + shape_str(r.value));
  }
  Gradients grads;
  if (!r.grad) return grads;

  std::vector<Matrix> adj(static_cast<std::size_t>(root.id) + 1);
  adj[root.id] = Matrix::Ones(1, 1);

  auto flows = [&](int i) { return i >= 0 && nodes_[i].grad; };

  for (int i = root.id; i >= 0; --i) {
    const Node& n = nodes_[i];
    if (!n.grad || adj[i].size() == 0) continue;
    const Matrix& g = adj[i];
    switch (n.op) {
      case Op::Constant:
        break;
      case Op::Parameter:
        accumulate(grads[n.param], g);
        break;
      case Op::MatMulT:
        if (flows(n.a)) accumulate(adj[n.a], g * nodes_[n.b].value);
        if (flows(n.b)) accumulate(adj[n.b], g.transpose() * nodes_[n.a].value);
        break;
      case Op::AddRow:
        if (flows(n.a)) accumulate(adj[n.a], g);
        if (flows(n.b)) accumulate(adj[n.b], g.colwise().sum());
        break;
      case Op::Add:
        if (flows(n.a)) accumulate(adj[n.a], g);
        if (flows(n.b)) accumulate(adj[n.b], g);
        break;
      case Op::Sub:
        if (flows(n.a)) accumulate(adj[n.a], g);
        if (flows(n.b)) accumulate(adj[n.b], -g);
        break;
      case Op::Mul:
        if (flows(n.a)) accumulate(adj[n.a], g.cwiseProduct(nodes_[n.b].value));
        if (flows(n.b)) accumulate(adj[n.b], g.cwiseProduct(nodes_[n.a].value));
        break;
      case Op::Scale:
        accumulate(adj[n.a], n.s * g);
        break;
      case Op::AddScalar:
        accumulate(adj[n.a], g);
        break;
      case Op::Gate: {
        Matrix masked = (nodes_[n.b].value.array() > 0.0).select(g, 0.0);
        accumulate(adj[n.a], masked);
        break;
      }
      case Op::Tanh: {
        Matrix d = g.array() * (1.0 - n.value.array().square());
        accumulate(adj[n.a], d);
        break;
      }
      case Op::Sum:
        accumulate(adj[n.a], Matrix::Constant(nodes_[n.a].value.rows(),
                                              nodes_[n.a].value.cols(), g(0, 0)));
        break;
      case Op::RowNormalize: {
        // ā = (ḡ − y (y·ḡ)) / ‖a‖
        const Matrix& y = n.value;
        Eigen::ArrayXd proj = y.cwiseProduct(g).rowwise().sum().array();
        Matrix d = g - (y.array().colwise() * proj).matrix();
        d.array().colwise() /= n.aux.col(0).array();
        accumulate(adj[n.a], d);
        break;
      }
      case Op::RowCosine: {
        // ∂c/∂a = (b̂ − c·â)/‖a‖ and symmetrically for b
        const Matrix& av = nodes_[n.a].value;
        const Matrix& bv = nodes_[n.b].value;
        Eigen::ArrayXd na = n.aux.col(0).array();
        Eigen::ArrayXd nb = n.aux.col(1).array();
        Eigen::ArrayXd c = n.value.col(0).array();
        Eigen::ArrayXd gc = g.col(0).array();
        if (flows(n.a)) {
          Matrix d = (bv.array().colwise() / (na * nb)) -
                     (av.array().colwise() * (c / (na * na)));
          d.array().colwise() *= gc;
          accumulate(adj[n.a], d);
        }
        if (flows(n.b)) {
          Matrix d = (av.array().colwise() / (na * nb)) -
                     (bv.array().colwise() * (c / (nb * nb)));
          d.array().colwise() *= gc;
          accumulate(adj[n.b], d);
        }
        break;
      }
      case Op::SelectRows: {
        const auto& rows = rows_[n.extra];
        Matrix d = Matrix::Zero(nodes_[n.a].value.rows(), nodes_[n.a].value.cols());
        for (std::size_t k = 0; k < rows.size(); ++k) {
          d.row(rows[k]) += g.row(static_cast<Eigen::Index>(k));
        }
        accumulate(adj[n.a], d);
        break;
      }
      case Op::RowLinearized: {
        const auto& jacs = jacobians_[n.extra];
        Matrix d(nodes_[n.a].value.rows(), nodes_[n.a].value.cols());
        for (Eigen::Index k = 0; k < d.rows(); ++k) {
          d.row(k) = g.row(k) * jacs[static_cast<std::size_t>(k)];
        }
        accumulate(adj[n.a], d);
        break;
      }
    }
  }
  return grads;
}

namespace dual {

Dual constant(Tape&, Var v) { return Dual{v, Var{}}; }

Dual linear(Tape& tape, Var w, Var b, const Dual& x) {
  Dual out;
  out.primal = tape.add_row(tape.matmul_t(x.primal, w), b);
  if (x.has_tangent()) out.tangent = tape.matmul_t(x.tangent, w);
  return out;
}

Dual matmul_t(Tape& tape, const Dual& x, Var m) {
  Dual out;
  out.primal = tape.matmul_t(x.primal, m);
  if (x.has_tangent()) out.tangent = tape.matmul_t(x.tangent, m);
  return out;
}

Dual add_row(Tape& tape, const Dual& x, Var b) {
  return Dual{tape.add_row(x.primal, b), x.tangent};
}

Dual relu(Tape& tape, const Dual& x) {
  Dual out;
  out.primal = tape.gate(x.primal, x.primal);
  if (x.has_tangent()) out.tangent = tape.gate(x.tangent, x.primal);
  return out;
}

Dual tanh(Tape& tape, const Dual& x) {
  Dual out;
  out.primal = tape.tanh(x.primal);
  if (x.has_tangent()) {
    Var sq = tape.mul(out.primal, out.primal);
    Var deriv = tape.add_scalar(tape.scale(sq, -1.0), 1.0);
    out.tangent = tape.mul(deriv, x.tangent);
  }
  return out;
}

Dual add(Tape& tape, const Dual& a, const Dual& b) {
  Dual out;
  out.primal = tape.add(a.primal, b.primal);
  if (a.has_tangent() && b.has_tangent()) {
    out.tangent = tape.add(a.tangent, b.tangent);
  } else {
    out.tangent = a.has_tangent() ? a.tangent : b.tangent;
  }
  return out;
}

Dual sub(Tape& tape, const Dual& a, const Dual& b) {
  Dual out;
  out.primal = tape.sub(a.primal, b.primal);
  if (a.has_tangent() && b.has_tangent()) {
    out.tangent = tape.sub(a.tangent, b.tangent);
  } else if (a.has_tangent()) {
    out.tangent = a.tangent;
  } else if (b.has_tangent()) {
    out.tangent = tape.scale(b.tangent, -1.0);
  }
  return out;
}

Dual mul(Tape& tape, const Dual& a, const Dual& b) {
  Dual out;
  out.primal = tape.mul(a.primal, b.primal);
  Var ta = a.has_tangent() ? tape.mul(a.tangent, b.primal) : Var{};
  Var tb = b.has_tangent() ? tape.mul(a.primal, b.tangent) : Var{};
  if (ta.valid() && tb.valid()) {
    out.tangent = tape.add(ta, tb);
  } else {
    out.tangent = ta.valid() ? ta : tb;
  }
  return out;
}

Dual scale(Tape& tape, const Dual& a, double s) {
  Dual out;
  out.primal = tape.scale(a.primal, s);
  if (a.has_tangent()) out.tangent = tape.scale(a.tangent, s);
  return out;
}

}  // namespace dual

Matrix jvp(const DualMap& f, const Matrix& x, const Matrix& v) {
  if (x.rows() != v.rows() || x.cols() != v.cols()) {
    throw DimensionError("jvp: direction shape " + shape_str(v) + " does not match point " +
                         shape_str(x));
  }
  Tape tape;
  Dual in{tape.constant(x), tape.constant(v)};
  Dual out = f(tape, in);
  if (!out.has_tangent()) {
    return Matrix::Zero(tape.value(out.primal).rows(), tape.value(out.primal).cols());
  }
  return tape.value(out.tangent);
}

}  // namespace vfalign
