#include "vfalign/dynsys.hpp"

#include "vfalign/json_util.hpp"

#include <cmath>
#include <random>

namespace vfalign {

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// 1×n row selecting coordinate i (so x·selᵀ extracts column i).
Matrix selector(int n, int i) {
  Matrix s = Matrix::Zero(1, n);
  s(0, i) = 1.0;
  return s;
}

// n×1 column embedding a scalar column into coordinate i (so c·embᵀ places it).
Matrix embedder(int n, int i) {
  Matrix e = Matrix::Zero(n, 1);
  e(i, 0) = 1.0;
  return e;
}

// Per-row Jacobians of a field at the rows of x: n tangent passes.
std::vector<Matrix> batched_jacobians(const VectorField& f, const Matrix& x) {
  const Eigen::Index rows = x.rows();
  const int n = f.dim();
  std::vector<Matrix> jac(static_cast<std::size_t>(rows), Matrix(n, n));
  for (int i = 0; i < n; ++i) {
    Matrix dir = Matrix::Zero(rows, n);
    dir.col(i).setOnes();
    Matrix col = jvp([&f](Tape& t, const Dual& d) { return f.record(t, d); }, x, dir);
    for (Eigen::Index r = 0; r < rows; ++r) jac[static_cast<std::size_t>(r)].col(i) = col.row(r).transpose();
  }
  return jac;
}

std::vector<Matrix> batched_jacobians(const IResNet& net, const Matrix& x) {
  const Eigen::Index rows = x.rows();
  const int n = net.dim();
  std::vector<Matrix> jac(static_cast<std::size_t>(rows), Matrix(n, n));
  for (int i = 0; i < n; ++i) {
    Matrix dir = Matrix::Zero(rows, n);
    dir.col(i).setOnes();
    Matrix col = net.forward_tangent(x, dir).second;
    for (Eigen::Index r = 0; r < rows; ++r) jac[static_cast<std::size_t>(r)].col(i) = col.row(r).transpose();
  }
  return jac;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

std::string to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::VanDerPol: return "vdp";
    case FieldKind::Pitchfork: return "pitchfork";
    case FieldKind::Linear: return "linear";
    case FieldKind::LowRankRNN: return "lowrank_rnn";
    case FieldKind::ContextRNN: return "context_rnn";
    case FieldKind::LinearConjugate: return "conjugate";
    case FieldKind::Custom: return "custom";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// VectorField

nlohmann::json VectorField::describe() const { return {{"kind", to_string(kind())}, {"dim", dim()}}; }

void VectorField::check_dim(Eigen::Index cols) const {
  if (cols != dim()) {
    throw DimensionError(to_string(kind()) + " field: expected dimension " + std::to_string(dim()) +
                         ", got " + std::to_string(cols));
  }
}

RowVector VectorField::eval_point(const RowVector& x) const {
  Matrix m = x;
  return eval(m).row(0);
}

Matrix VectorField::jacobian(const RowVector& x) const {
  check_dim(x.size());
  Matrix m = x;
  return batched_jacobians(*this, m).front();
}

// ---------------------------------------------------------------------------
// Van der Pol

Matrix VanDerPol::eval(const Matrix& x) const {
  check_dim(x.cols());
  Matrix out(x.rows(), 2);
  out.col(0) = x.col(1);
  out.col(1) = mu_ * (1.0 - x.col(0).array().square()) * x.col(1).array() - x.col(0).array();
  return out;
}

Dual VanDerPol::record(Tape& tape, const Dual& x) const {
  check_dim(tape.value(x.primal).cols());
  // Linear part [x₂, μx₂ − x₁] plus −μ·x₁²x₂ in the second coordinate.
  Matrix lin(2, 2);
  lin << 0.0, 1.0, -1.0, mu_;
  Dual linear = dual::matmul_t(tape, x, tape.constant(lin));
  Dual x1 = dual::matmul_t(tape, x, tape.constant(selector(2, 0)));
  Dual x2 = dual::matmul_t(tape, x, tape.constant(selector(2, 1)));
  Dual cubic = dual::scale(tape, dual::mul(tape, dual::mul(tape, x1, x1), x2), -mu_);
  Dual placed = dual::matmul_t(tape, cubic, tape.constant(embedder(2, 1)));
  return dual::add(tape, linear, placed);
}

nlohmann::json VanDerPol::describe() const { return {{"kind", "vdp"}, {"mu", mu_}}; }

// ---------------------------------------------------------------------------
// Pitchfork

Matrix Pitchfork::eval(const Matrix& x) const {
  check_dim(x.cols());
  Matrix out(x.rows(), 2);
  out.col(0) = mu_ * x.col(0).array() - x.col(0).array().cube();
  out.col(1) = -x.col(1);
  return out;
}

Dual Pitchfork::record(Tape& tape, const Dual& x) const {
  check_dim(tape.value(x.primal).cols());
  Matrix lin(2, 2);
  lin << mu_, 0.0, 0.0, -1.0;
  Dual linear = dual::matmul_t(tape, x, tape.constant(lin));
  Dual x1 = dual::matmul_t(tape, x, tape.constant(selector(2, 0)));
  Dual cube = dual::scale(tape, dual::mul(tape, dual::mul(tape, x1, x1), x1), -1.0);
  Dual placed = dual::matmul_t(tape, cube, tape.constant(embedder(2, 0)));
  return dual::add(tape, linear, placed);
}

nlohmann::json Pitchfork::describe() const { return {{"kind", "pitchfork"}, {"mu", mu_}}; }

// ---------------------------------------------------------------------------
// Linear

LinearField::LinearField(LinearSystemSpec spec) : spec_(std::move(spec)) {
  require_dims(spec_.A.rows() == spec_.A.cols() && spec_.A.rows() > 0, "linear field: A must be square");
  if (spec_.bias) require_dims(spec_.bias->size() == spec_.A.rows(), "linear field: bias length");
}

Matrix LinearField::eval(const Matrix& x) const {
  check_dim(x.cols());
  Matrix out = x * spec_.A.transpose();
  if (spec_.bias) out.rowwise() += *spec_.bias;
  return out;
}

Dual LinearField::record(Tape& tape, const Dual& x) const {
  check_dim(tape.value(x.primal).cols());
  Dual out = dual::matmul_t(tape, x, tape.constant(spec_.A));
  if (spec_.bias) out = dual::add_row(tape, out, tape.constant(Matrix(*spec_.bias)));
  return out;
}

nlohmann::json LinearField::describe() const {
  nlohmann::json j{{"kind", "linear"}, {"A", jsonio::from_matrix(spec_.A)}};
  if (spec_.bias) j["bias"] = jsonio::from_row(*spec_.bias);
  return j;
}

// ---------------------------------------------------------------------------
// Low-rank RNN

Matrix LowRankRNNSpec::W() const {
  if (m.cols() == 0) return J;
  return J + m * nvec.transpose();
}

LowRankRNN::LowRankRNN(LowRankRNNSpec spec) : spec_(std::move(spec)), W_(spec_.W()) {
  require_dims(W_.rows() == W_.cols() && W_.rows() > 0, "lowrank rnn: W must be square");
}

std::shared_ptr<LowRankRNN> LowRankRNN::from_weights(Matrix W) {
  LowRankRNNSpec spec;
  spec.J = std::move(W);
  spec.m = Matrix(spec.J.rows(), 0);
  spec.nvec = Matrix(spec.J.rows(), 0);
  return std::make_shared<LowRankRNN>(std::move(spec));
}

Matrix LowRankRNN::eval(const Matrix& x) const {
  check_dim(x.cols());
  Matrix t = x.array().tanh();
  return t * W_.transpose() - x;
}

Dual LowRankRNN::record(Tape& tape, const Dual& x) const {
  check_dim(tape.value(x.primal).cols());
  Dual rec = dual::matmul_t(tape, dual::tanh(tape, x), tape.constant(W_));
  return dual::sub(tape, rec, x);
}

nlohmann::json LowRankRNN::describe() const {
  return {{"kind", "lowrank_rnn"}, {"n", dim()}, {"k", spec_.m.cols()}};
}

// ---------------------------------------------------------------------------
// Context RNN

ContextRNN::ContextRNN(ContextRNNSpec spec) : spec_(std::move(spec)) {
  const Eigen::Index n = spec_.W.rows();
  if (spec_.W.cols() != n || n == 0) throw DimensionError("context rnn: W must be square");
  if (spec_.B1.rows() != n) throw DimensionError("context rnn: B1 must have n rows");
  if (spec_.B1.cols() != spec_.u.size()) throw DimensionError("context rnn: u length must match B1 columns");
  if (spec_.Gamma && (spec_.Gamma->rows() != n || spec_.Gamma->cols() != n)) {
    throw DimensionError("context rnn: Gamma must be n x n");
  }
  if (!(spec_.tau > 0.0)) throw ContractError("context rnn: tau must be positive");
  effective_W_ = spec_.Gamma ? Matrix(spec_.W + *spec_.Gamma) : spec_.W;
  drive_ = (spec_.B1 * spec_.u.transpose()).transpose();
}

Matrix ContextRNN::eval(const Matrix& x) const {
  check_dim(x.cols());
  Matrix t = x.array().tanh();
  Matrix out = t * effective_W_.transpose() - x;
  out.rowwise() += drive_;
  return out / spec_.tau;
}

Dual ContextRNN::record(Tape& tape, const Dual& x) const {
  check_dim(tape.value(x.primal).cols());
  Dual rec = dual::matmul_t(tape, dual::tanh(tape, x), tape.constant(effective_W_));
  Dual out = dual::sub(tape, rec, x);
  out = dual::add_row(tape, out, tape.constant(Matrix(drive_)));
  return dual::scale(tape, out, 1.0 / spec_.tau);
}

nlohmann::json ContextRNN::describe() const {
  return {{"kind", "context_rnn"}, {"n", dim()}, {"tau", spec_.tau}, {"w_type", spec_.Gamma.has_value()}};
}

// ---------------------------------------------------------------------------
// Linear conjugate

LinearConjugate::LinearConjugate(FieldPtr base, Matrix Q) : base_(std::move(base)), Q_(std::move(Q)) {
  if (!base_) throw ContractError("conjugate: null base field");
  require_dims(Q_.rows() == base_->dim() && Q_.cols() == base_->dim(), "conjugate: Q must be n x n");
  Eigen::PartialPivLU<Matrix> lu(Q_);
  if (std::abs(lu.determinant()) <= 1e-9) throw ContractError("conjugate: Q is singular or near-singular");
  Qinv_ = lu.inverse();
}

Matrix LinearConjugate::eval(const Matrix& y) const {
  check_dim(y.cols());
  Matrix x = y * Qinv_.transpose();
  return base_->eval(x) * Q_.transpose();
}

Dual LinearConjugate::record(Tape& tape, const Dual& y) const {
  check_dim(tape.value(y.primal).cols());
  Dual x = dual::matmul_t(tape, y, tape.constant(Qinv_));
  return dual::matmul_t(tape, base_->record(tape, x), tape.constant(Q_));
}

nlohmann::json LinearConjugate::describe() const {
  return {{"kind", "conjugate"}, {"base", base_->describe()}, {"Q", jsonio::from_matrix(Q_)}};
}

FieldPtr make_conjugate(const FieldPtr& field, const Matrix& Q) {
  return std::make_shared<LinearConjugate>(field, Q);
}

// ---------------------------------------------------------------------------
// Custom

CustomField::CustomField(int dim, std::string name, EvalFn eval, RecordFn record)
    : dim_(dim), name_(std::move(name)), eval_(std::move(eval)), record_(std::move(record)) {
  if (!eval_) throw ContractError("custom field: eval callable required");
}

Matrix CustomField::eval(const Matrix& x) const {
  check_dim(x.cols());
  return eval_(x);
}

Dual CustomField::record(Tape& tape, const Dual& x) const {
  if (!record_) throw ContractError("custom field '" + name_ + "' cannot be recorded");
  check_dim(tape.value(x.primal).cols());
  return record_(tape, x);
}

nlohmann::json CustomField::describe() const { return {{"kind", "custom"}, {"name", name_}, {"dim", dim_}}; }

FieldPtr scaled(const FieldPtr& field, double alpha) {
  return std::make_shared<CustomField>(
      field->dim(), "scaled",
      [field, alpha](const Matrix& x) { return Matrix(alpha * field->eval(x)); },
      [field, alpha](Tape& t, const Dual& x) { return dual::scale(t, field->record(t, x), alpha); });
}

// ---------------------------------------------------------------------------
// Push-forward through a fixed i-ResNet

PushForwardField::PushForwardField(FieldPtr base, IResNet warp) : base_(std::move(base)), warp_(std::move(warp)) {
  if (!base_) throw ContractError("pushforward: null base field");
  require_dims(warp_.dim() == base_->dim(), "pushforward: warp dimension mismatch");
  inverse_opts_.tol = 1e-12;
  inverse_opts_.max_iter = 2000;
}

Matrix PushForwardField::eval(const Matrix& y) const {
  check_dim(y.cols());
  Matrix x = warp_.inverse(y, inverse_opts_);
  return warp_.forward_tangent(x, base_->eval(x)).second;
}

Dual PushForwardField::record(Tape& tape, const Dual& y) const {
  const Matrix& yv = tape.value(y.primal);
  check_dim(yv.cols());
  Matrix x = warp_.inverse(yv, inverse_opts_);
  Matrix fx = base_->eval(x);
  Matrix value = warp_.forward_tangent(x, fx).second;
  std::vector<Matrix> warp_jac = batched_jacobians(warp_, x);
  std::vector<Matrix> base_jac = batched_jacobians(*base_, x);
  std::vector<Matrix> jac(warp_jac.size());
  for (std::size_t r = 0; r < jac.size(); ++r) {
    const Matrix& a = warp_jac[r];
    jac[r] = a * base_jac[r] * a.partialPivLu().inverse();
  }
  Dual out;
  out.primal = tape.row_linearized(y.primal, std::move(value), jac);
  if (y.has_tangent()) {
    // First-order in the tangent only: the dependence of the Jacobian on y is
    // not recorded.
    const Matrix& tv = tape.value(y.tangent);
    Matrix tvalue(tv.rows(), tv.cols());
    for (Eigen::Index r = 0; r < tv.rows(); ++r) tvalue.row(r) = tv.row(r) * jac[static_cast<std::size_t>(r)].transpose();
    out.tangent = tape.row_linearized(y.tangent, std::move(tvalue), std::move(jac));
  }
  return out;
}

nlohmann::json PushForwardField::describe() const {
  return {{"kind", "pushforward"}, {"base", base_->describe()}, {"warp_layers", warp_.layers()}};
}

// ---------------------------------------------------------------------------
// Constructors

Matrix random_orthogonal(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Matrix g = gaussian(n, n, 1.0, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < n; ++i) {
    if (r(i, i) < 0.0) q.col(i) *= -1.0;
  }
  if (q.determinant() < 0.0) q.col(0) *= -1.0;
  return q;
}

Matrix random_well_conditioned(int n, std::uint64_t seed, double smin, double smax) {
  std::mt19937_64 rng(seed);
  const std::uint64_t s1 = rng();
  const std::uint64_t s2 = rng();
  Matrix u = random_orthogonal(n, s1);
  Matrix v = random_orthogonal(n, s2);
  Vector s(n);
  for (int i = 0; i < n; ++i) s(i) = uniform(rng, smin, smax);
  return u * s.asDiagonal() * v.transpose();
}

Matrix random_gaussian_positive_det(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Matrix q = gaussian(n, n, 1.0, rng);
    const double det = q.determinant();
    if (std::abs(det) <= 1e-9) continue;
    if (det < 0.0) q.col(0) *= -1.0;
    return q;
  }
  throw NumericalError("random_gaussian_positive_det: no invertible draw");
}

LinearSystemSpec random_linear_with_pattern(const EigenPattern& p, std::uint64_t seed) {
  const int n_neg = p.n - p.n_pos;
  if (p.n < 1 || p.n_pos < 0 || n_neg < 0) throw ContractError("linear pattern: need 0 <= n_pos <= n");
  if (p.complex_pairs_pos < 0 || p.complex_pairs_neg < 0 || 2 * p.complex_pairs_pos > p.n_pos ||
      2 * p.complex_pairs_neg > n_neg) {
    throw ContractError("linear pattern: infeasible count of complex eigenvalues");
  }
  std::mt19937_64 rng(seed);
  Matrix d = Matrix::Zero(p.n, p.n);
  int at = 0;
  auto place_pairs = [&](int pairs, double sign) {
    for (int i = 0; i < pairs; ++i) {
      const double re = sign * uniform(rng, 0.5, 2.0);
      const double im = uniform(rng, 0.5, 2.0);
      d(at, at) = re;
      d(at + 1, at + 1) = re;
      d(at, at + 1) = im;
      d(at + 1, at) = -im;
      at += 2;
    }
  };
  auto place_reals = [&](int count, double sign) {
    for (int i = 0; i < count; ++i, ++at) d(at, at) = sign * uniform(rng, 0.5, 2.0);
  };
  place_pairs(p.complex_pairs_pos, 1.0);
  place_reals(p.n_pos - 2 * p.complex_pairs_pos, 1.0);
  place_pairs(p.complex_pairs_neg, -1.0);
  place_reals(n_neg - 2 * p.complex_pairs_neg, -1.0);

  Matrix P = random_well_conditioned(p.n, rng());
  LinearSystemSpec spec;
  spec.A = P * d * P.partialPivLu().inverse();
  return spec;
}

LinearSystemSpec random_linear_with_signs(int n, int n_pos, Pairing pairing, std::uint64_t seed) {
  if (n < 1 || n_pos < 0 || n_pos > n) throw ContractError("random_linear_with_signs: need 0 <= n_pos <= n");
  EigenPattern p{n, n_pos, 0, 0};
  if (pairing == Pairing::Complex) {
    if (n_pos % 2 != 0 || (n - n_pos) % 2 != 0) {
      throw ContractError("random_linear_with_signs: odd count of complex eigenvalues");
    }
    p.complex_pairs_pos = n_pos / 2;
    p.complex_pairs_neg = (n - n_pos) / 2;
  }
  return random_linear_with_pattern(p, seed);
}

LowRankRNNSpec random_lowrank_rnn(int n, int k, std::uint64_t seed, const LowRankOptions& opts) {
  if (n < 1 || k < 0) throw ContractError("random_lowrank_rnn: need n >= 1, k >= 0");
  std::mt19937_64 rng(seed);
  const double j_std = opts.scale_j_by_sqrt_n ? opts.j_std / std::sqrt(static_cast<double>(n)) : opts.j_std;
  LowRankRNNSpec spec;
  spec.J = gaussian(n, n, j_std, rng);
  spec.m = gaussian(n, k, 1.0, rng);
  spec.nvec = gaussian(n, k, 1.0 / std::sqrt(static_cast<double>(n)), rng);
  return spec;
}

// ---------------------------------------------------------------------------
// RNN weights file

ContextRNNSpec parse_rnn_weights(const nlohmann::json& j) {
  using namespace jsonio;
  const int version = require_int(j, "format_version", "");
  if (version != 1) throw ParseError("format_version: unsupported version " + std::to_string(version));
  ContextRNNSpec spec;
  spec.tau = require_number(j, "tau", "");
  spec.W = to_matrix(require(j, "W", ""), "W");
  if (spec.W.rows() != spec.W.cols()) throw DimensionError("W: must be square");
  const Eigen::Index n = spec.W.rows();
  if (j.contains("B1") && !j["B1"].is_null()) {
    spec.B1 = to_matrix(j["B1"], "B1");
  } else {
    spec.B1 = Matrix::Zero(n, 1);
  }
  if (j.contains("u") && !j["u"].is_null()) {
    spec.u = to_row(j["u"], "u");
  } else {
    spec.u = RowVector::Zero(spec.B1.cols());
  }
  if (j.contains("Gamma") && !j["Gamma"].is_null()) spec.Gamma = to_matrix(j["Gamma"], "Gamma");
  if (spec.B1.rows() != n) throw ParseError("B1: expected " + std::to_string(n) + " rows");
  if (spec.u.size() != spec.B1.cols()) throw ParseError("u: length must equal the column count of B1");
  if (spec.Gamma && (spec.Gamma->rows() != n || spec.Gamma->cols() != n)) {
    throw ParseError("Gamma: expected " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (!(spec.tau > 0.0)) throw ParseError("tau: must be positive");
  return spec;
}

ContextRNNSpec load_rnn_weights(const std::string& path) {
  try {
    return parse_rnn_weights(jsonio::read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

nlohmann::json rnn_weights_to_json(const ContextRNNSpec& spec) {
  nlohmann::json j{{"format_version", 1},
                   {"tau", spec.tau},
                   {"W", jsonio::from_matrix(spec.W)},
                   {"B1", jsonio::from_matrix(spec.B1)},
                   {"u", jsonio::from_row(spec.u)}};
  j["Gamma"] = spec.Gamma ? jsonio::from_matrix(*spec.Gamma) : nlohmann::json(nullptr);
  return j;
}

void save_rnn_weights(const std::string& path, const ContextRNNSpec& spec) {
  jsonio::write_file(path, rnn_weights_to_json(spec));
}

// ---------------------------------------------------------------------------
// System spec

FieldPtr field_from_json(const nlohmann::json& j, const std::string& path) {
  using namespace jsonio;
  const auto& kind_j = require(j, "kind", path);
  if (!kind_j.is_string()) throw ParseError(join(path, "kind") + ": expected a string");
  const std::string kind = kind_j.get<std::string>();
  const auto seed = static_cast<std::uint64_t>(int_or(j, "seed", 0, path));

  if (kind == "vdp") return std::make_shared<VanDerPol>(require_number(j, "mu", path));
  if (kind == "pitchfork") return std::make_shared<Pitchfork>(require_number(j, "mu", path));
  if (kind == "linear") {
    LinearSystemSpec spec;
    if (j.contains("A")) {
      spec.A = to_matrix(j["A"], join(path, "A"));
    } else {
      EigenPattern p;
      p.n = require_int(j, "n", path);
      p.n_pos = require_int(j, "n_pos", path);
      p.complex_pairs_pos = int_or(j, "complex_pairs_pos", 0, path);
      p.complex_pairs_neg = int_or(j, "complex_pairs_neg", 0, path);
      spec = random_linear_with_pattern(p, seed);
    }
    if (j.contains("bias") && !j["bias"].is_null()) spec.bias = to_row(j["bias"], join(path, "bias"));
    if (spec.A.rows() != spec.A.cols()) throw DimensionError(join(path, "A") + ": must be square");
    return std::make_shared<LinearField>(std::move(spec));
  }
  if (kind == "lowrank_rnn") {
    if (j.contains("W")) return LowRankRNN::from_weights(to_matrix(j["W"], join(path, "W")));
    LowRankOptions opts;
    if (j.contains("scale_j_by_sqrt_n")) opts.scale_j_by_sqrt_n = j["scale_j_by_sqrt_n"].get<bool>();
    opts.j_std = number_or(j, "j_std", opts.j_std, path);
    return std::make_shared<LowRankRNN>(
        random_lowrank_rnn(require_int(j, "n", path), int_or(j, "k", 2, path), seed, opts));
  }
  if (kind == "context_rnn") {
    if (j.contains("path")) return std::make_shared<ContextRNN>(load_rnn_weights(j["path"].get<std::string>()));
    return std::make_shared<ContextRNN>(parse_rnn_weights(j));
  }
  if (kind == "conjugate") {
    FieldPtr base = field_from_json(require(j, "base", path), join(path, "base"));
    Matrix Q;
    const auto& qj = require(j, "Q", path);
    if (qj.is_string()) {
      const std::string how = qj.get<std::string>();
      if (how == "orthogonal") {
        Q = random_orthogonal(base->dim(), seed);
      } else if (how == "gaussian") {
        Q = random_gaussian_positive_det(base->dim(), seed);
      } else if (how == "well_conditioned") {
        Q = random_well_conditioned(base->dim(), seed);
      } else if (how == "identity") {
        Q = Matrix::Identity(base->dim(), base->dim());
      } else {
        throw ParseError(join(path, "Q") + ": unknown transform '" + how + "'");
      }
    } else {
      Q = to_matrix(qj, join(path, "Q"));
    }
    return make_conjugate(base, Q);
  }
  if (kind == "pushforward") {
    FieldPtr base = field_from_json(require(j, "base", path), join(path, "base"));
    const auto& wj = require(j, "warp", path);
    IResNet warp = wj.is_string()
                       ? IResNet::load(wj.get<std::string>())
                       : IResNet::random_warp(base->dim(), int_or(wj, "layers", 10, join(path, "warp")),
                                              number_or(wj, "cap", 0.99, join(path, "warp")),
                                              number_or(wj, "scale", 1.0, join(path, "warp")),
                                              static_cast<std::uint64_t>(int_or(wj, "seed", 0, join(path, "warp"))));
    return std::make_shared<PushForwardField>(base, std::move(warp));
  }
  throw ParseError(join(path, "kind") + ": unknown system kind '" + kind + "'");
}

}  // namespace vfalign
