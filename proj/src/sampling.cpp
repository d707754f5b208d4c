#include "vfalign/sampling.hpp"

#include "vfalign/json_util.hpp"

#include <cmath>
#include <iostream>

namespace vfalign {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kDivergenceNorm = 1e6;

std::uint64_t trial_seed(std::uint64_t seed, int trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), 0x5eedu};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

Asymptotic asymptotic_states(const VectorField& field, const AsymptoticOptions& opts, std::uint64_t seed) {
  if (!(opts.dt > 0.0)) throw ContractError("asymptotic_states: dt must be positive");
  if (!(opts.t_end > opts.burn_in) || opts.burn_in < 0.0) {
    throw ContractError("asymptotic_states: need 0 <= burn_in < t_end");
  }
  if (opts.trials < 1) throw ContractError("asymptotic_states: trials must be >= 1");
  if (!(opts.record_interval > 0.0)) throw ContractError("asymptotic_states: record_interval must be positive");

  const int n = field.dim();
  const int steps = static_cast<int>(std::llround(opts.t_end / opts.dt));
  const int burn_steps = static_cast<int>(std::llround(opts.burn_in / opts.dt));
  const int stride = std::max(1, static_cast<int>(std::llround(opts.record_interval / opts.dt)));

  // One generator per trial keeps each trial's stream independent of the others.
  std::vector<std::mt19937_64> rngs;
  rngs.reserve(static_cast<std::size_t>(opts.trials));
  for (int t = 0; t < opts.trials; ++t) rngs.emplace_back(trial_seed(seed, t));
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix x(opts.trials, n);
  for (int t = 0; t < opts.trials; ++t) {
    for (int i = 0; i < n; ++i) x(t, i) = normal(rngs[static_cast<std::size_t>(t)]);
  }

  std::vector<char> alive(static_cast<std::size_t>(opts.trials), 1);
  std::vector<std::vector<RowVector>> kept(static_cast<std::size_t>(opts.trials));
  const double noise_scale = opts.noise * std::sqrt(opts.dt);
  Matrix xi(opts.trials, n);

  for (int step = 1; step <= steps; ++step) {
    Matrix drift = field.eval(x);
    for (int t = 0; t < opts.trials; ++t) {
      auto& rng = rngs[static_cast<std::size_t>(t)];
      for (int i = 0; i < n; ++i) xi(t, i) = normal(rng);
    }
    x += opts.dt * drift + noise_scale * xi;
    for (int t = 0; t < opts.trials; ++t) {
      if (!alive[static_cast<std::size_t>(t)]) continue;
      const double norm = x.row(t).norm();
      if (!std::isfinite(norm) || norm > kDivergenceNorm) {
        alive[static_cast<std::size_t>(t)] = 0;
        x.row(t).setZero();
        continue;
      }
      if (step > burn_steps && (step - burn_steps) % stride == 0) {
        kept[static_cast<std::size_t>(t)].push_back(x.row(t));
      }
    }
  }

  Asymptotic out;
  out.options = opts;
  std::size_t total = 0;
  for (int t = 0; t < opts.trials; ++t) {
    if (alive[static_cast<std::size_t>(t)]) {
      total += kept[static_cast<std::size_t>(t)].size();
    } else {
      ++out.discarded_trials;
    }
  }
  if (out.discarded_trials == opts.trials) throw NumericalError("asymptotic_states: every trial diverged");
  if (out.discarded_trials > 0) {
    std::cerr << "warning: asymptotic_states discarded " << out.discarded_trials << " diverged trial(s)\n";
  }
  if (total == 0) throw NumericalError("asymptotic_states: no states retained");
  out.pool.resize(static_cast<Eigen::Index>(total), n);
  Eigen::Index row = 0;
  for (int t = 0; t < opts.trials; ++t) {
    if (!alive[static_cast<std::size_t>(t)]) continue;
    for (const auto& s : kept[static_cast<std::size_t>(t)]) out.pool.row(row++) = s;
  }
  return out;
}

Sampler::Sampler(Params params, std::uint64_t seed) : params_(std::move(params)), rng_(seed) {
  std::visit(overloaded{
                 [](const UniformBox& b) {
                   require_dims(b.low.size() == b.high.size() && b.low.size() > 0, "uniform box: bounds length");
                   if ((b.high.array() < b.low.array()).any()) throw ContractError("uniform box: high < low");
                 },
                 [](const Gaussian& g) {
                   require_dims(g.mean.size() == g.stddev.size() && g.mean.size() > 0, "gaussian: parameter length");
                   if ((g.stddev.array() < 0.0).any()) throw ContractError("gaussian: negative std");
                 },
                 [](const Asymptotic& a) {
                   if (a.pool.rows() == 0) throw ContractError("asymptotic sampler: empty pool");
                 },
             },
             params_);
}

Sampler Sampler::uniform_box(RowVector low, RowVector high, std::uint64_t seed) {
  return Sampler(UniformBox{std::move(low), std::move(high)}, seed);
}

Sampler Sampler::standard_normal(int dim, std::uint64_t seed) {
  return Sampler(Gaussian{RowVector::Zero(dim), RowVector::Ones(dim)}, seed);
}

Sampler Sampler::gaussian(RowVector mean, RowVector stddev, std::uint64_t seed) {
  return Sampler(Gaussian{std::move(mean), std::move(stddev)}, seed);
}

Sampler Sampler::asymptotic(const VectorField& field, const AsymptoticOptions& opts, std::uint64_t seed) {
  return Sampler(asymptotic_states(field, opts, seed), seed ^ 0x9e3779b97f4a7c15ull);
}

Sampler Sampler::vdp_box(std::uint64_t seed) {
  RowVector lo(2), hi(2);
  lo << -3.0, -4.0;
  hi << 3.0, 4.0;
  return uniform_box(lo, hi, seed);
}

Sampler Sampler::pitchfork_box(double mu, std::uint64_t seed) {
  const double r = 1.5 * std::sqrt(mu);
  RowVector lo(2), hi(2);
  lo << -r, -1.0;
  hi << r, 1.0;
  return uniform_box(lo, hi, seed);
}

Sampler Sampler::mapped_box(const Matrix& Q, const RowVector& low, const RowVector& high, std::uint64_t seed) {
  const Eigen::Index n = low.size();
  require_dims(Q.rows() == n && Q.cols() == n && high.size() == n, "mapped_box: dimension mismatch");
  // Image of a box under x ↦ Qx: per coordinate, extreme values pick low/high by sign of Q entries.
  RowVector lo(n), hi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double a = 0.0, b = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double q = Q(i, k);
      a += q * (q >= 0.0 ? low(k) : high(k));
      b += q * (q >= 0.0 ? high(k) : low(k));
    }
    lo(i) = a;
    hi(i) = b;
  }
  return uniform_box(lo, hi, seed);
}

int Sampler::dim() const {
  return std::visit(overloaded{
                        [](const UniformBox& b) { return static_cast<int>(b.low.size()); },
                        [](const Gaussian& g) { return static_cast<int>(g.mean.size()); },
                        [](const Asymptotic& a) { return static_cast<int>(a.pool.cols()); },
                    },
                    params_);
}

std::string Sampler::kind() const {
  return std::visit(overloaded{
                        [](const UniformBox&) { return std::string("uniform_box"); },
                        [](const Gaussian&) { return std::string("gaussian"); },
                        [](const Asymptotic&) { return std::string("asymptotic"); },
                    },
                    params_);
}

Matrix Sampler::draw(int count) {
  if (count < 1) throw ContractError("sampler draw: count must be >= 1");
  const int n = dim();
  Matrix out(count, n);
  std::visit(overloaded{
                 [&](const UniformBox& b) {
                   std::uniform_real_distribution<double> u(0.0, 1.0);
                   for (int r = 0; r < count; ++r) {
                     for (int i = 0; i < n; ++i) out(r, i) = b.low(i) + (b.high(i) - b.low(i)) * u(rng_);
                   }
                 },
                 [&](const Gaussian& g) {
                   std::normal_distribution<double> z(0.0, 1.0);
                   for (int r = 0; r < count; ++r) {
                     for (int i = 0; i < n; ++i) out(r, i) = g.mean(i) + g.stddev(i) * z(rng_);
                   }
                 },
                 [&](const Asymptotic& a) {
                   std::uniform_int_distribution<Eigen::Index> pick(0, a.pool.rows() - 1);
                   for (int r = 0; r < count; ++r) out.row(r) = a.pool.row(pick(rng_));
                 },
             },
             params_);
  return out;
}

Sampler Sampler::reseeded(std::uint64_t seed) const { return Sampler(params_, seed); }

nlohmann::json Sampler::describe() const {
  return std::visit(
      overloaded{
          [](const UniformBox& b) -> nlohmann::json {
            return {{"kind", "uniform_box"}, {"low", jsonio::from_row(b.low)}, {"high", jsonio::from_row(b.high)}};
          },
          [](const Gaussian& g) -> nlohmann::json {
            return {{"kind", "gaussian"}, {"mean", jsonio::from_row(g.mean)}, {"std", jsonio::from_row(g.stddev)}};
          },
          [](const Asymptotic& a) -> nlohmann::json {
            return {{"kind", "asymptotic"},
                    {"noise", a.options.noise},
                    {"dt", a.options.dt},
                    {"burn_in", a.options.burn_in},
                    {"t_end", a.options.t_end},
                    {"trials", a.options.trials},
                    {"record_interval", a.options.record_interval},
                    {"pool_size", a.pool.rows()},
                    {"discarded_trials", a.discarded_trials}};
          },
      },
      params_);
}

Sampler sampler_from_json(const nlohmann::json& j, const VectorField& field, std::uint64_t seed,
                          const std::string& path) {
  using namespace jsonio;
  const std::string kind = string_or(j, "kind", "", path);
  const int n = field.dim();
  seed = static_cast<std::uint64_t>(int_or(j, "seed", static_cast<int>(seed & 0x7fffffff), path));
  if (kind == "uniform_box") {
    RowVector lo = to_row(require(j, "low", path), join(path, "low"));
    RowVector hi = to_row(require(j, "high", path), join(path, "high"));
    if (lo.size() != n || hi.size() != n) throw ParseError(path + ": bounds must have length " + std::to_string(n));
    return Sampler::uniform_box(lo, hi, seed);
  }
  if (kind == "gaussian") {
    RowVector mean = to_row(require(j, "mean", path), join(path, "mean"));
    RowVector sd = to_row(require(j, "std", path), join(path, "std"));
    if (mean.size() != n || sd.size() != n) throw ParseError(path + ": parameters must have length " + std::to_string(n));
    return Sampler::gaussian(mean, sd, seed);
  }
  if (kind == "standard_normal") return Sampler::standard_normal(n, seed);
  if (kind == "vdp_box") return Sampler::vdp_box(seed);
  if (kind == "pitchfork_box") return Sampler::pitchfork_box(require_number(j, "mu", path), seed);
  if (kind == "asymptotic") {
    AsymptoticOptions o;
    o.noise = number_or(j, "noise", o.noise, path);
    o.dt = number_or(j, "dt", o.dt, path);
    o.burn_in = number_or(j, "burn_in", o.burn_in, path);
    o.t_end = number_or(j, "t_end", o.t_end, path);
    o.trials = int_or(j, "trials", o.trials, path);
    o.record_interval = number_or(j, "record_interval", o.record_interval, path);
    return Sampler::asymptotic(field, o, seed);
  }
  throw ParseError(join(path, "kind") + ": unknown sampler kind '" + kind + "'");
}

}  // namespace vfalign
