#include "vfalign/svcca.hpp"

#include "vfalign/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

namespace vfalign {

namespace {

constexpr double kDivergenceNorm = 1e6;

Matrix whitening(const Matrix& cov, double rank_tol) {
  SymmetricEigen eig = symmetric_eigen(cov);
  const double top = eig.values.size() > 0 ? eig.values(0) : 0.0;
  if (!(top > 0.0)) throw NumericalError("cca: data has zero variance");
  int rank = 0;
  while (rank < eig.values.size() && eig.values(rank) > rank_tol * top) ++rank;
  Matrix w(cov.rows(), rank);
  for (int i = 0; i < rank; ++i) w.col(i) = eig.vectors.col(i) / std::sqrt(eig.values(i));
  return w;
}

}  // namespace

TrajectoryEnsemble simulate_ensemble(const VectorField& field, Sampler initial, const EnsembleOptions& opts,
                                     std::uint64_t seed) {
  if (!(opts.horizon > 0.0)) throw ContractError("simulate_ensemble: horizon must be positive");
  if (!(opts.dt > 0.0)) throw ContractError("simulate_ensemble: dt must be positive");
  if (opts.trials < 1 || opts.record_every < 1) throw ContractError("simulate_ensemble: bad trial/record settings");
  require_dims(initial.dim() == field.dim(), "simulate_ensemble: sampler dimension mismatch");

  const int n = field.dim();
  const int steps = static_cast<int>(std::llround(opts.horizon / opts.dt));
  const bool stochastic = opts.noise > 0.0;
  Matrix x = initial.draw(opts.trials);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const int per_trial = steps / opts.record_every;
  std::vector<Matrix> rec(static_cast<std::size_t>(opts.trials), Matrix(per_trial, n));
  std::vector<char> alive(static_cast<std::size_t>(opts.trials), 1);
  const double h = opts.dt;
  const double noise_scale = opts.noise * std::sqrt(h);
  Matrix xi(opts.trials, n);

  int row = 0;
  for (int step = 1; step <= steps; ++step) {
    if (stochastic) {
      for (Eigen::Index i = 0; i < xi.size(); ++i) xi.data()[i] = normal(rng);
      x += h * field.eval(x) + noise_scale * xi;
    } else {
      Matrix k1 = field.eval(x);
      Matrix k2 = field.eval(x + 0.5 * h * k1);
      Matrix k3 = field.eval(x + 0.5 * h * k2);
      Matrix k4 = field.eval(x + h * k3);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    for (int t = 0; t < opts.trials; ++t) {
      if (!alive[static_cast<std::size_t>(t)]) continue;
      const double norm = x.row(t).norm();
      if (!std::isfinite(norm) || norm > kDivergenceNorm) {
        alive[static_cast<std::size_t>(t)] = 0;
        x.row(t).setZero();
      }
    }
    if (step % opts.record_every == 0 && row < per_trial) {
      for (int t = 0; t < opts.trials; ++t) rec[static_cast<std::size_t>(t)].row(row) = x.row(t);
      ++row;
    }
  }

  TrajectoryEnsemble e;
  e.dt = opts.dt;
  e.horizon = opts.horizon;
  e.noise = opts.noise;
  e.integrator = stochastic ? "euler-maruyama" : "rk4";
  int survivors = 0;
  for (int t = 0; t < opts.trials; ++t) survivors += alive[static_cast<std::size_t>(t)] ? 1 : 0;
  if (survivors == 0) throw NumericalError("simulate_ensemble: every trial diverged");
  if (survivors < opts.trials) {
    std::cerr << "warning: simulate_ensemble discarded " << (opts.trials - survivors) << " diverged trial(s)\n";
  }
  e.states.resize(static_cast<Eigen::Index>(survivors) * per_trial, n);
  Eigen::Index at = 0;
  for (int t = 0; t < opts.trials; ++t) {
    if (!alive[static_cast<std::size_t>(t)]) continue;
    e.states.middleRows(at, per_trial) = rec[static_cast<std::size_t>(t)];
    at += per_trial;
    e.trial_ids.push_back(t);
    e.trial_lengths.push_back(per_trial);
  }
  return e;
}

PcaResult pca_reduce(const Matrix& states, double threshold) {
  if (states.rows() < 2) throw ContractError("pca: need at least two rows");
  PcaResult out;
  out.mean = states.colwise().mean();
  Matrix centered = states.rowwise() - out.mean;
  SymmetricEigen eig = symmetric_eigen(covariance(states));
  out.variances = eig.values.cwiseMax(0.0);
  const double total = out.variances.sum();
  if (!(total > 0.0)) throw NumericalError("pca: data has rank 0");
  double cum = 0.0;
  while (out.k < out.variances.size()) {
    cum += out.variances(out.k);
    ++out.k;
    if (cum / total >= threshold) break;
  }
  out.retained = cum / total;
  out.basis = eig.vectors.leftCols(out.k);
  out.backprojected = (centered * out.basis) * out.basis.transpose();
  out.backprojected.rowwise() += out.mean;
  return out;
}

CcaResult cca(const Matrix& a, const Matrix& b, double rank_tol) {
  if (a.rows() != b.rows()) {
    throw ContractError("cca: row counts differ (" + std::to_string(a.rows()) + " vs " + std::to_string(b.rows()) + ")");
  }
  Matrix wa = whitening(covariance(a), rank_tol);
  Matrix wb = whitening(covariance(b), rank_tol);
  Matrix m = wa.transpose() * cross_covariance(a, b) * wb;
  // Singular values of m from the eigenvalues of mᵀm.
  SymmetricEigen eig = symmetric_eigen(m.transpose() * m);
  CcaResult out;
  out.rank = static_cast<int>(std::min(wa.cols(), wb.cols()));
  out.correlations.resize(out.rank);
  for (int i = 0; i < out.rank; ++i) {
    out.correlations(i) = std::clamp(std::sqrt(std::max(eig.values(i), 0.0)), 0.0, 1.0);
  }
  out.mean = out.rank > 0 ? out.correlations.mean() : 0.0;
  return out;
}

CcaResult svcca(const TrajectoryEnsemble& a, const TrajectoryEnsemble& b, double threshold) {
  // Keep the trials both ensembles still have.
  std::map<int, Eigen::Index> offset_b;
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < b.trial_ids.size(); ++i) {
    offset_b[b.trial_ids[i]] = at;
    at += b.trial_lengths[i];
  }
  std::vector<std::pair<Eigen::Index, Eigen::Index>> blocks_a, blocks_b;
  Eigen::Index rows = 0;
  at = 0;
  for (std::size_t i = 0; i < a.trial_ids.size(); ++i) {
    auto it = offset_b.find(a.trial_ids[i]);
    if (it != offset_b.end()) {
      const std::size_t j = static_cast<std::size_t>(
          std::find(b.trial_ids.begin(), b.trial_ids.end(), a.trial_ids[i]) - b.trial_ids.begin());
      if (b.trial_lengths[j] != a.trial_lengths[i]) throw ContractError("svcca: trial lengths differ");
      blocks_a.emplace_back(at, a.trial_lengths[i]);
      blocks_b.emplace_back(it->second, a.trial_lengths[i]);
      rows += a.trial_lengths[i];
    }
    at += a.trial_lengths[i];
  }
  if (rows < 2) throw ContractError("svcca: ensembles share no trials");
  Matrix sa(rows, a.dim()), sb(rows, b.dim());
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < blocks_a.size(); ++i) {
    sa.middleRows(r, blocks_a[i].second) = a.states.middleRows(blocks_a[i].first, blocks_a[i].second);
    sb.middleRows(r, blocks_b[i].second) = b.states.middleRows(blocks_b[i].first, blocks_b[i].second);
    r += blocks_a[i].second;
  }
  return cca(pca_reduce(sa, threshold).backprojected, pca_reduce(sb, threshold).backprojected);
}

void write_ensemble_csv(const std::string& path, const TrajectoryEnsemble& e) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "trial,step,time";
  for (int i = 0; i < e.dim(); ++i) out << ",x" << i;
  out << '\n' << std::setprecision(17);
  Eigen::Index row = 0;
  for (std::size_t t = 0; t < e.trial_ids.size(); ++t) {
    const int len = e.trial_lengths[t];
    const double stride = len > 0 ? e.horizon / len : 0.0;
    for (int s = 0; s < len; ++s, ++row) {
      out << e.trial_ids[t] << ',' << (s + 1) << ',' << (s + 1) * stride;
      for (int i = 0; i < e.dim(); ++i) out << ',' << e.states(row, i);
      out << '\n';
    }
  }
}

}  // namespace vfalign
