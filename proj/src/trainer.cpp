#include "vfalign/trainer.hpp"

#include "vfalign/json_util.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>

namespace vfalign {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

nlohmann::json to_json(const LossBreakdown& l) {
  return {{"J_f", l.forward}, {"J_b", l.backward}, {"J_i", l.inverse}, {"total", l.total},
          {"excluded_forward", l.excluded_forward}, {"excluded_backward", l.excluded_backward}};
}

struct RestartOutcome {
  RestartRecord record;
  IResNet phi;
  IResNet psi;
};

RestartOutcome run_restart(const VectorField& f, const VectorField& g, const Sampler& p0, const Sampler& q0,
                           const TrainConfig& cfg, int index, std::ofstream* log) {
  const auto start = std::chrono::steady_clock::now();
  RestartOutcome out;
  RestartRecord& rec = out.record;
  rec.index = index;
  rec.seed = derive_seed(cfg.seed, 1, static_cast<std::uint64_t>(index));

  out.phi = IResNet::identity_init(f.dim(), cfg.layers, cfg.cap, derive_seed(rec.seed, 10));
  out.psi = IResNet::identity_init(g.dim(), cfg.layers, cfg.cap, derive_seed(rec.seed, 11));
  Sampler p = p0.reseeded(derive_seed(rec.seed, 20));
  Sampler q = q0.reseeded(derive_seed(rec.seed, 21));
  AdamState adam_phi, adam_psi;

  // Every restart is scored on the same evaluation draws.
  auto evaluate = [&]() {
    Sampler ep = p0.reseeded(derive_seed(cfg.seed, 30));
    Sampler eq = q0.reseeded(derive_seed(cfg.seed, 31));
    return similarity(f, g, out.phi, out.psi, ep, eq, cfg.eval_samples);
  };

  double initial_total = -1.0;
  int above = 0;
  try {
    for (int b = 1; b <= cfg.batches; ++b) {
      LossBreakdown fwd = train_batch(f, g, p, out.phi, out.psi, adam_phi, adam_psi, cfg);
      LossBreakdown bwd = train_batch(g, f, q, out.psi, out.phi, adam_psi, adam_phi, cfg);
      rec.batches_run = b;
      rec.last_forward = fwd;
      rec.last_backward = bwd;
      if (!std::isfinite(fwd.total) || !std::isfinite(bwd.total)) {
        throw NumericalError("non-finite loss at batch " + std::to_string(b));
      }
      const double total = fwd.total + bwd.total;
      if (initial_total < 0.0) initial_total = total;
      above = total > cfg.divergence_factor * initial_total ? above + 1 : 0;
      if (above >= cfg.divergence_window) {
        rec.status = "diverged";
        rec.message = "loss above " + std::to_string(cfg.divergence_factor) + "x its initial value for " +
                      std::to_string(cfg.divergence_window) + " batches";
        break;
      }
      if (log && cfg.log_every > 0 && b % cfg.log_every == 0) {
        nlohmann::json line = to_json(fwd);
        line["restart"] = index;
        line["batch"] = b;
        line["direction"] = "forward";
        *log << line.dump() << '\n';
        line = to_json(bwd);
        line["restart"] = index;
        line["batch"] = b;
        line["direction"] = "backward";
        *log << line.dump() << '\n';
      }
      if (!cfg.checkpoint_dir.empty() && cfg.checkpoint_every > 0 && b % cfg.checkpoint_every == 0) {
        const std::string stem = cfg.checkpoint_dir + "/r" + std::to_string(index) + "_b" + std::to_string(b);
        out.phi.save(stem + "_phi.json");
        out.psi.save(stem + "_psi.json");
      }
      if (cfg.eval_every > 0 && b % cfg.eval_every == 0 && b < cfg.batches) {
        rec.trace.push_back({b, evaluate()});
        rec.inverse_loss_trace.push_back(fwd.inverse);
      }
    }
    if (rec.status == "ok") {
      rec.final_report = evaluate();
      rec.trace.push_back({rec.batches_run, rec.final_report});
      rec.inverse_loss_trace.push_back(rec.last_forward.inverse);
    }
  } catch (const NumericalError& e) {
    rec.status = "non-finite";
    rec.message = e.what();
  }
  rec.wall_ms = elapsed_ms(start);
  return out;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix(splitmix(seed ^ splitmix(stream)) + index);
}

void validate(const TrainConfig& c) {
  if (c.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(c.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(c.cap > 0.0 && c.cap < 1.0)) throw ConfigError("train.cap must lie in (0, 1)");
  if (c.layers < 1) throw ConfigError("train.layers must be >= 1");
  if (c.batches < 0) throw ConfigError("train.batches must be >= 0");
  if (c.restarts < 1) throw ConfigError("train.restarts must be >= 1");
  if (c.eval_samples < 1) throw ConfigError("train.eval_samples must be >= 1");
  if (c.divergence_window < 1) throw ConfigError("train.divergence_window must be >= 1");
  if (c.weights.forward < 0 || c.weights.backward < 0 || c.weights.inverse < 0) {
    throw ConfigError("train.weights must be non-negative");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"lr", c.lr},
          {"weights", {c.weights.forward, c.weights.backward, c.weights.inverse}},
          {"cap", c.cap},
          {"layers", c.layers},
          {"batches", c.batches},
          {"restarts", c.restarts},
          {"seed", c.seed},
          {"eval_every", c.eval_every},
          {"eval_samples", c.eval_samples},
          {"divergence_window", c.divergence_window},
          {"divergence_factor", c.divergence_factor}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c, const std::string& path) {
  using namespace jsonio;
  if (j.is_null()) return c;
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  try {
    c.batch_size = int_or(j, "batch_size", c.batch_size, path);
    c.lr = number_or(j, "lr", c.lr, path);
    c.cap = number_or(j, "cap", c.cap, path);
    c.layers = int_or(j, "layers", c.layers, path);
    c.batches = int_or(j, "batches", c.batches, path);
    c.restarts = int_or(j, "restarts", c.restarts, path);
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    c.eval_every = int_or(j, "eval_every", c.eval_every, path);
    c.eval_samples = int_or(j, "eval_samples", c.eval_samples, path);
    c.divergence_window = int_or(j, "divergence_window", c.divergence_window, path);
    c.divergence_factor = number_or(j, "divergence_factor", c.divergence_factor, path);
    c.log_path = string_or(j, "log_path", c.log_path, path);
    c.log_every = int_or(j, "log_every", c.log_every, path);
    c.checkpoint_dir = string_or(j, "checkpoint_dir", c.checkpoint_dir, path);
    c.checkpoint_every = int_or(j, "checkpoint_every", c.checkpoint_every, path);
    if (j.contains("weights")) {
      RowVector w = to_row(j["weights"], join(path, "weights"));
      if (w.size() != 3) throw ParseError(join(path, "weights") + ": expected [w_f, w_b, w_i]");
      c.weights = {w(0), w(1), w(2)};
    }
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  validate(c);
  return c;
}

void adam_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads, AdamState& s, double lr) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i]->rows() || grads[i].cols() != params[i]->cols()) {
      throw DimensionError("adam_step: gradient " + std::to_string(i) + " shape mismatch");
    }
    if (!grads[i].allFinite()) throw NumericalError("adam_step: non-finite gradient for parameter " + std::to_string(i));
  }
  if (s.m.size() != params.size()) {
    s.m.clear();
    s.v.clear();
    for (const Matrix* p : params) {
      s.m.push_back(Matrix::Zero(p->rows(), p->cols()));
      s.v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i].cwiseProduct(grads[i]);
    params[i]->array() -= lr * (s.m[i].array() / c1) / ((s.v[i].array() / c2).sqrt() + s.eps);
  }
}

std::vector<Matrix> gradients_for(const IResNet& net, const Gradients& grads, ParamId first) {
  std::vector<const Matrix*> params = net.parameters();
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = grads.find(first + static_cast<ParamId>(i));
    if (it != grads.end()) {
      out.push_back(it->second);
    } else {
      out.push_back(Matrix::Zero(params[i]->rows(), params[i]->cols()));
    }
  }
  return out;
}

LossBreakdown train_batch(const VectorField& f, const VectorField& g, Sampler& p, IResNet& phi, IResNet& psi,
                          AdamState& adam_phi, AdamState& adam_psi, const TrainConfig& cfg) {
  const ParamId phi_first = 0;
  const ParamId psi_first = static_cast<ParamId>(phi.parameter_count());
  Matrix x = p.draw(cfg.batch_size);
  BatchTape bt = record_batch_losses(f, g, phi, psi, x, cfg.weights, phi_first, psi_first);
  if (!std::isfinite(bt.losses.total)) throw NumericalError("train_batch: non-finite loss");
  Gradients grads = bt.tape.backward(bt.total);
  std::vector<Matrix> g_phi = gradients_for(phi, grads, phi_first);
  std::vector<Matrix> g_psi = gradients_for(psi, grads, psi_first);
  adam_step(phi.parameters(), g_phi, adam_phi, cfg.lr);
  adam_step(psi.parameters(), g_psi, adam_psi, cfg.lr);
  phi.project_spectral_norms(cfg.cap);
  psi.project_spectral_norms(cfg.cap);
  return bt.losses;
}

TrainResult train(const VectorField& f, const VectorField& g, const Sampler& p, const Sampler& q,
                  const TrainConfig& cfg) {
  validate(cfg);
  require_dims(f.dim() == g.dim() && p.dim() == f.dim() && q.dim() == g.dim(), "train: dimension mismatch");
  for (const Sampler* s : {&p, &q}) {
    if (const auto* a = std::get_if<Asymptotic>(&s->params())) {
      if (a->pool.rows() < 10 * static_cast<Eigen::Index>(cfg.batch_size)) {
        throw ConfigError("train: asymptotic pool of " + std::to_string(a->pool.rows()) +
                          " states is smaller than 10 x batch_size");
      }
    }
  }
  const auto start = std::chrono::steady_clock::now();

  std::unique_ptr<std::ofstream> log;
  if (!cfg.log_path.empty()) {
    log = std::make_unique<std::ofstream>(cfg.log_path);
    if (!*log) throw ConfigError("train.log_path: cannot open " + cfg.log_path);
  }
  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

  TrainResult result;
  RunRecord& record = result.record;
  record.config = to_json(cfg);
  record.notes = {{"batch_unit", "one batch = one alternating iteration (forward and mirrored update)"},
                  {"inverse_loss", "mean over all elements of (x - psi(phi(x)))^2"},
                  {"degenerate_velocity", kDegenerateVelocity}};

  double best = -2.0;
  for (int r = 0; r < cfg.restarts; ++r) {
    RestartOutcome outcome = run_restart(f, g, p, q, cfg, r, log.get());
    const bool ok = outcome.record.status == "ok";
    if (ok && outcome.record.final_report.similarity > best) {
      best = outcome.record.final_report.similarity;
      record.best_restart = r;
      record.final_report = outcome.record.final_report;
      result.phi = std::move(outcome.phi);
      result.psi = std::move(outcome.psi);
    }
    record.restarts.push_back(std::move(outcome.record));
  }
  record.wall_ms = elapsed_ms(start);
  if (record.best_restart < 0) {
    std::string why;
    for (const auto& rr : record.restarts) why += " [" + rr.status + ": " + rr.message + "]";
    throw NumericalError("train: every restart failed" + why);
  }
  return result;
}

nlohmann::json to_json(const RunRecord& r, bool include_timing) {
  nlohmann::json j;
  j["config"] = r.config;
  j["notes"] = r.notes;
  j["best_restart"] = r.best_restart;
  j["final"] = to_json(r.final_report);
  j["restarts"] = nlohmann::json::array();
  for (const auto& rr : r.restarts) {
    nlohmann::json jr{{"index", rr.index},
                      {"seed", rr.seed},
                      {"status", rr.status},
                      {"message", rr.message},
                      {"batches_run", rr.batches_run},
                      {"final", to_json(rr.final_report)},
                      {"last_forward", to_json(rr.last_forward)},
                      {"last_backward", to_json(rr.last_backward)}};
    jr["trace"] = nlohmann::json::array();
    for (std::size_t i = 0; i < rr.trace.size(); ++i) {
      nlohmann::json tp{{"batch", rr.trace[i].batch},
                        {"similarity", rr.trace[i].report.similarity},
                        {"sim_forward", rr.trace[i].report.sim_forward},
                        {"sim_backward", rr.trace[i].report.sim_backward}};
      if (i < rr.inverse_loss_trace.size()) tp["J_i"] = rr.inverse_loss_trace[i];
      jr["trace"].push_back(tp);
    }
    if (include_timing) jr["wall_ms"] = rr.wall_ms;
    j["restarts"].push_back(jr);
  }
  if (include_timing) j["wall_ms"] = r.wall_ms;
  return j;
}

}  // namespace vfalign
