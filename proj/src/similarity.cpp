#include "vfalign/similarity.hpp"

#include <algorithm>

namespace vfalign {

namespace {

std::vector<int> nondegenerate_rows(std::initializer_list<const Matrix*> vectors) {
  const Eigen::Index rows = (*vectors.begin())->rows();
  std::vector<int> keep;
  keep.reserve(static_cast<std::size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r) {
    bool ok = true;
    for (const Matrix* m : vectors) {
      const double norm = m->row(r).norm();
      if (!(norm > kDegenerateVelocity)) {
        ok = false;
        break;
      }
    }
    if (ok) keep.push_back(static_cast<int>(r));
  }
  return keep;
}

CosineSummary summarize(const Vector& cosines) {
  CosineSummary s;
  if (cosines.size() == 0) return s;
  std::vector<double> v(cosines.data(), cosines.data() + cosines.size());
  std::sort(v.begin(), v.end());
  s.min = v.front();
  s.max = v.back();
  const std::size_t mid = v.size() / 2;
  s.median = v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
  return s;
}

nlohmann::json to_json(const CosineSummary& s) { return {{"min", s.min}, {"median", s.median}, {"max", s.max}}; }

}  // namespace

OrbitalTerm record_orbital_loss(Tape& tape, const VectorField& f, const VectorField& g, const IResNet& H,
                                ParamId first_param, Var x) {
  Var fx = f.record(tape, Dual{x, Var{}}).primal;
  Dual hx = H.record(tape, Dual{x, fx}, first_param);
  Var v = g.record(tape, Dual{hx.primal, Var{}}).primal;
  Var u = hx.tangent;

  const Matrix& fv = tape.value(fx);
  std::vector<int> keep = nondegenerate_rows({&fv, &tape.value(u), &tape.value(v)});
  const int rows = static_cast<int>(fv.rows());
  if (keep.empty()) throw NumericalError("orbital loss: every point in the batch is degenerate");

  OrbitalTerm term;
  term.mapped = hx.primal;
  term.used = static_cast<int>(keep.size());
  term.excluded = rows - term.used;
  if (term.excluded > 0) {
    u = tape.select_rows(u, keep);
    v = tape.select_rows(v, std::move(keep));
  }
  Var diff = tape.sub(tape.row_normalize(u), tape.row_normalize(v));
  term.loss = tape.scale(tape.sum(tape.mul(diff, diff)), 1.0 / term.used);
  return term;
}

double orbital_loss(const VectorField& f, const VectorField& g, const IResNet& H, const Matrix& x, int* excluded) {
  Tape tape;
  OrbitalTerm term = record_orbital_loss(tape, f, g, H, -1, tape.constant(x));
  if (excluded) *excluded = term.excluded;
  return tape.value(term.loss)(0, 0);
}

BatchTape record_batch_losses(const VectorField& f, const VectorField& g, const IResNet& phi, const IResNet& psi,
                              const Matrix& x, const LossWeights& weights, ParamId phi_first, ParamId psi_first) {
  require_dims(phi.dim() == psi.dim() && phi.dim() == x.cols(), "batch losses: dimension mismatch");
  BatchTape bt;
  Tape& tape = bt.tape;
  Var xv = tape.constant(x);
  OrbitalTerm fwd = record_orbital_loss(tape, f, g, phi, phi_first, xv);
  OrbitalTerm bwd = record_orbital_loss(tape, g, f, psi, psi_first, fwd.mapped);
  Var diff = tape.sub(xv, bwd.mapped);
  Var inv = tape.scale(tape.sum(tape.mul(diff, diff)), 1.0 / static_cast<double>(x.size()));

  bt.total = tape.add(tape.add(tape.scale(fwd.loss, weights.forward), tape.scale(bwd.loss, weights.backward)),
                      tape.scale(inv, weights.inverse));
  bt.losses.forward = tape.value(fwd.loss)(0, 0);
  bt.losses.backward = tape.value(bwd.loss)(0, 0);
  bt.losses.inverse = tape.value(inv)(0, 0);
  bt.losses.total = tape.value(bt.total)(0, 0);
  bt.losses.weights = weights;
  bt.losses.excluded_forward = fwd.excluded;
  bt.losses.excluded_backward = bwd.excluded;
  return bt;
}

LossBreakdown batch_losses(const VectorField& f, const VectorField& g, Sampler& p, const IResNet& phi,
                           const IResNet& psi, int batch_size, const LossWeights& weights) {
  Matrix x = p.draw(batch_size);
  return record_batch_losses(f, g, phi, psi, x, weights, -1, -1).losses;
}

Vector alignment_cosines(const VectorField& f, const VectorField& g, const TangentMap& map, const Matrix& x,
                         std::vector<int>* keep_out) {
  Matrix fx = f.eval(x);
  auto [hx, u] = map(x, fx);
  Matrix v = g.eval(hx);
  std::vector<int> keep = nondegenerate_rows({&fx, &u, &v});
  Vector cos(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const int r = keep[i];
    cos(static_cast<Eigen::Index>(i)) = u.row(r).dot(v.row(r)) / (u.row(r).norm() * v.row(r).norm());
  }
  if (keep_out) *keep_out = std::move(keep);
  return cos;
}

Vector alignment_cosines(const VectorField& f, const VectorField& g, const IResNet& H, const Matrix& x,
                         std::vector<int>* keep) {
  return alignment_cosines(f, g, network_map(H), x, keep);
}

SimilarityReport similarity(const VectorField& f, const VectorField& g, const TangentMap& phi,
                            const TangentMap& psi, Sampler& p, Sampler& q, int samples) {
  if (samples < 1) throw ContractError("similarity: sample count must be >= 1");
  SimilarityReport r;
  r.sample_count = samples;
  Vector fwd = alignment_cosines(f, g, phi, p.draw(samples));
  Vector bwd = alignment_cosines(g, f, psi, q.draw(samples));
  if (fwd.size() == 0 || bwd.size() == 0) throw NumericalError("similarity: every sample is degenerate");
  r.excluded_forward = samples - static_cast<int>(fwd.size());
  r.excluded_backward = samples - static_cast<int>(bwd.size());
  r.sim_forward = fwd.mean();
  r.sim_backward = bwd.mean();
  r.similarity = std::min(r.sim_forward, r.sim_backward);
  r.forward_summary = summarize(fwd);
  r.backward_summary = summarize(bwd);
  return r;
}

SimilarityReport similarity(const VectorField& f, const VectorField& g, const IResNet& phi, const IResNet& psi,
                            Sampler& p, Sampler& q, int samples) {
  require_dims(phi.dim() == f.dim() && psi.dim() == g.dim(), "similarity: dimension mismatch");
  return similarity(f, g, network_map(phi), network_map(psi), p, q, samples);
}

TangentMap linear_map(const Matrix& Q) {
  return [Q](const Matrix& x, const Matrix& v) {
    return std::make_pair(Matrix(x * Q.transpose()), Matrix(v * Q.transpose()));
  };
}

TangentMap network_map(const IResNet& net) {
  return [&net](const Matrix& x, const Matrix& v) { return net.forward_tangent(x, v); };
}

nlohmann::json to_json(const SimilarityReport& r) {
  return {{"sim_forward", r.sim_forward},
          {"sim_backward", r.sim_backward},
          {"similarity", r.similarity},
          {"sample_count", r.sample_count},
          {"excluded_forward", r.excluded_forward},
          {"excluded_backward", r.excluded_backward},
          {"forward_cosines", to_json(r.forward_summary)},
          {"backward_cosines", to_json(r.backward_summary)}};
}

}  // namespace vfalign
