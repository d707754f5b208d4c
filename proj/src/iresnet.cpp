#include "vfalign/iresnet.hpp"

#include "vfalign/json_util.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace vfalign {

namespace {

constexpr int kFormatVersion = 1;

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

void validate_hyper(int dim, int layers, double cap) {
  if (dim < 1) throw ContractError("iresnet: dim must be >= 1");
  if (layers < 1) throw ContractError("iresnet: layers must be >= 1");
  if (!(cap > 0.0 && cap < 1.0)) throw ContractError("iresnet: cap must lie in (0, 1)");
}

void project(Matrix& w, Vector& v, double cap) {
  // The relative slack keeps the projection idempotent: a matrix already
  // scaled to the cap is left bitwise unchanged by a second pass.
  const double sigma = spectral_norm(w, v);
  if (sigma > cap * (1.0 + 1e-9)) w *= cap / sigma;
}

}  // namespace

double spectral_norm(const Matrix& w, Vector& v, double tol, int max_iter) {
  if (w.size() == 0) return 0.0;
  if (v.size() != w.cols() || !v.allFinite() || v.norm() == 0.0) {
    v = Vector::Ones(w.cols()) / std::sqrt(static_cast<double>(w.cols()));
  }
  Vector u = w * v;
  double sigma = u.norm();
  if (sigma == 0.0) {
    // The start vector may lie in the null space of a nonzero matrix.
    if (w.isZero(0.0)) return 0.0;
    v = Vector::Zero(w.cols());
    Eigen::Index r, c;
    w.cwiseAbs().maxCoeff(&r, &c);
    v(c) = 1.0;
    u = w * v;
    sigma = u.norm();
  }
  for (int it = 0; it < max_iter; ++it) {
    Vector next = w.transpose() * u;
    const double nn = next.norm();
    if (nn == 0.0) break;
    v = next / nn;
    u = w * v;
    const double updated = u.norm();
    const bool done = std::abs(updated - sigma) <= tol * updated;
    sigma = updated;
    if (done) break;
  }
  return sigma;
}

IResNet IResNet::identity_init(int dim, int layers, double cap, std::uint64_t seed) {
  validate_hyper(dim, layers, cap);
  std::mt19937_64 rng(seed);
  IResNet net;
  net.dim_ = dim;
  net.cap_ = cap;
  const Eigen::Index n = dim;
  for (int l = 0; l < layers; ++l) {
    ResidualBlock blk;
    blk.W1 = gaussian(2 * n, n, 1.0 / std::sqrt(static_cast<double>(n)), rng);
    blk.b1 = Matrix::Zero(1, 2 * n);
    blk.W2 = Matrix::Zero(n, 2 * n);
    blk.b2 = Matrix::Zero(1, n);
    net.blocks_.push_back(std::move(blk));
  }
  net.project_spectral_norms();
  return net;
}

IResNet IResNet::random_warp(int dim, int layers, double cap, double w2_scale, std::uint64_t seed) {
  validate_hyper(dim, layers, cap);
  std::mt19937_64 rng(seed);
  IResNet net;
  net.dim_ = dim;
  net.cap_ = cap;
  const Eigen::Index n = dim;
  for (int l = 0; l < layers; ++l) {
    ResidualBlock blk;
    blk.W1 = gaussian(2 * n, n, 1.0 / std::sqrt(static_cast<double>(n)), rng);
    blk.b1 = gaussian(1, 2 * n, 0.5, rng);
    blk.W2 = gaussian(n, 2 * n, w2_scale / std::sqrt(2.0 * static_cast<double>(n)), rng);
    blk.b2 = Matrix::Zero(1, n);
    net.blocks_.push_back(std::move(blk));
  }
  net.project_spectral_norms();
  return net;
}

Matrix IResNet::residual(int layer, const Matrix& x) const {
  const auto& blk = blocks_.at(static_cast<std::size_t>(layer));
  Matrix h = x * blk.W1.transpose();
  h.rowwise() += blk.b1.row(0);
  h = h.cwiseMax(0.0);
  Matrix out = h * blk.W2.transpose();
  out.rowwise() += blk.b2.row(0);
  return out;
}

Matrix IResNet::forward(const Matrix& x) const {
  require_dims(x.cols() == dim_, "iresnet forward: expected " + std::to_string(dim_) +
                                     " columns, got " + std::to_string(x.cols()));
  Matrix y = x;
  for (int l = 0; l < layers(); ++l) y += residual(l, y);
  return y;
}

std::pair<Matrix, Matrix> IResNet::forward_tangent(const Matrix& x, const Matrix& v) const {
  require_dims(x.cols() == dim_ && v.rows() == x.rows() && v.cols() == x.cols(),
               "iresnet forward_tangent: shape mismatch");
  Matrix y = x;
  Matrix t = v;
  for (const auto& blk : blocks_) {
    Matrix pre = y * blk.W1.transpose();
    pre.rowwise() += blk.b1.row(0);
    Matrix th = t * blk.W1.transpose();
    th = (pre.array() > 0.0).select(th, 0.0);
    pre = pre.cwiseMax(0.0);
    Matrix dy = pre * blk.W2.transpose();
    dy.rowwise() += blk.b2.row(0);
    y += dy;
    t.noalias() += th * blk.W2.transpose();
  }
  return {std::move(y), std::move(t)};
}

Matrix IResNet::jacobian(const RowVector& x) const {
  require_dims(x.size() == dim_, "iresnet jacobian: dimension mismatch");
  Matrix xs = x.replicate(dim_, 1);
  Matrix eye = Matrix::Identity(dim_, dim_);
  // Row i of the tangent output is J·e_i, i.e. column i of J.
  return forward_tangent(xs, eye).second.transpose();
}

Dual IResNet::record(Tape& tape, const Dual& x, ParamId first_param) const {
  require_dims(tape.value(x.primal).cols() == dim_, "iresnet record: dimension mismatch");
  Dual h = x;
  for (int l = 0; l < layers(); ++l) {
    const auto& blk = blocks_[static_cast<std::size_t>(l)];
    const ParamId base = first_param + kParamsPerBlock * l;
    auto leaf = [&](const Matrix& m, int k) {
      return first_param >= 0 ? tape.parameter(m, base + k) : tape.constant(m);
    };
    Var w1 = leaf(blk.W1, 0);
    Var b1 = leaf(blk.b1, 1);
    Var w2 = leaf(blk.W2, 2);
    Var b2 = leaf(blk.b2, 3);
    Dual inner = dual::relu(tape, dual::linear(tape, w1, b1, h));
    Dual g = dual::linear(tape, w2, b2, inner);
    h = dual::add(tape, h, g);
  }
  return h;
}

Matrix IResNet::inverse(const Matrix& y, const InverseOptions& opts, InverseTrace* trace) const {
  require_dims(y.cols() == dim_, "iresnet inverse: dimension mismatch");
  if (trace) {
    trace->iterations.assign(blocks_.size(), 0);
    trace->max_ratio.assign(blocks_.size(), 0.0);
  }
  Matrix target = y;
  for (int l = layers() - 1; l >= 0; --l) {
    // Solve x + g_l(x) = target by x ← target − g_l(x), starting at x = target.
    Matrix x = target;
    const double stop = opts.tol * std::max(1.0, target.cwiseAbs().maxCoeff());
    double prev_step = -1.0;
    bool converged = false;
    int it = 0;
    while (it < opts.max_iter) {
      ++it;
      Matrix next = target - residual(l, x);
      const double step = (next - x).cwiseAbs().maxCoeff();
      x = std::move(next);
      if (trace && prev_step > 0.0 && step > 0.0) {
        auto& r = trace->max_ratio[static_cast<std::size_t>(l)];
        r = std::max(r, step / prev_step);
      }
      prev_step = step;
      if (step < stop) {
        converged = true;
        break;
      }
    }
    if (trace) trace->iterations[static_cast<std::size_t>(l)] = it;
    if (!converged) {
      throw IterationLimitError("iresnet inverse: block " + std::to_string(l) +
                                " did not converge within " + std::to_string(opts.max_iter) +
                                " iterations (Lipschitz cap violated?)");
    }
    target = std::move(x);
  }
  return target;
}

void IResNet::project_spectral_norms() { project_spectral_norms(cap_); }

void IResNet::project_spectral_norms(double cap) {
  power_state_.resize(2 * blocks_.size());
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    project(blocks_[l].W1, power_state_[2 * l], cap);
    project(blocks_[l].W2, power_state_[2 * l + 1], cap);
  }
}

std::vector<Matrix*> IResNet::parameters() {
  std::vector<Matrix*> out;
  out.reserve(parameter_count());
  for (auto& blk : blocks_) {
    out.push_back(&blk.W1);
    out.push_back(&blk.b1);
    out.push_back(&blk.W2);
    out.push_back(&blk.b2);
  }
  return out;
}

std::vector<const Matrix*> IResNet::parameters() const {
  std::vector<const Matrix*> out;
  out.reserve(parameter_count());
  for (const auto& blk : blocks_) {
    out.push_back(&blk.W1);
    out.push_back(&blk.b1);
    out.push_back(&blk.W2);
    out.push_back(&blk.b2);
  }
  return out;
}

nlohmann::json IResNet::to_json() const {
  using jsonio::from_matrix;
  using jsonio::from_row;
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["dim"] = dim_;
  j["cap"] = cap_;
  j["blocks"] = nlohmann::json::array();
  for (const auto& blk : blocks_) {
    j["blocks"].push_back({{"W1", from_matrix(blk.W1)},
                           {"b1", from_row(blk.b1.row(0))},
                           {"W2", from_matrix(blk.W2)},
                           {"b2", from_row(blk.b2.row(0))}});
  }
  return j;
}

IResNet IResNet::from_json(const nlohmann::json& j) {
  using namespace jsonio;
  const int version = require_int(j, "format_version", "");
  if (version != kFormatVersion) {
    throw ParseError("format_version: unsupported version " + std::to_string(version) +
                     " (expected " + std::to_string(kFormatVersion) + ")");
  }
  IResNet net;
  net.dim_ = require_int(j, "dim", "");
  net.cap_ = require_number(j, "cap", "");
  if (net.dim_ < 1) throw ParseError("dim: must be >= 1");
  if (!(net.cap_ > 0.0 && net.cap_ < 1.0)) throw ParseError("cap: must lie in (0, 1)");
  const auto& blocks = require(j, "blocks", "");
  if (!blocks.is_array() || blocks.empty()) throw ParseError("blocks: expected a non-empty array");
  const Eigen::Index n = net.dim_;
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const std::string path = join("blocks", l);
    const auto& b = blocks[l];
    if (!b.is_object()) throw ParseError(path + ": block missing or not an object");
    ResidualBlock blk;
    blk.W1 = to_matrix(require(b, "W1", path), join(path, "W1"));
    blk.b1 = to_row(require(b, "b1", path), join(path, "b1"));
    blk.W2 = to_matrix(require(b, "W2", path), join(path, "W2"));
    blk.b2 = to_row(require(b, "b2", path), join(path, "b2"));
    if (blk.W1.rows() != 2 * n || blk.W1.cols() != n) throw ParseError(join(path, "W1") + ": expected 2n x n");
    if (blk.b1.cols() != 2 * n) throw ParseError(join(path, "b1") + ": expected length 2n");
    if (blk.W2.rows() != n || blk.W2.cols() != 2 * n) throw ParseError(join(path, "W2") + ": expected n x 2n");
    if (blk.b2.cols() != n) throw ParseError(join(path, "b2") + ": expected length n");
    net.blocks_.push_back(std::move(blk));
  }
  return net;
}

void IResNet::save(const std::string& path) const { jsonio::write_file(path, to_json()); }

IResNet IResNet::load(const std::string& path) { return from_json(jsonio::read_file(path)); }

}  // namespace vfalign
