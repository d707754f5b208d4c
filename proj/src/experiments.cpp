#include "vfalign/experiments.hpp"

#include "vfalign/json_util.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#ifndef VFALIGN_BUILD_ID
#define VFALIGN_BUILD_ID "unknown"
#endif

namespace vfalign {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

// Turns malformed-config exceptions into ConfigError so every runner fails
// the same way before any computation starts.
template <class Fn>
auto parse_stage(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  } catch (const DimensionError& e) {
    throw ConfigError(e.what());
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

void require_object(const json& config, const std::string& what) {
  if (!config.is_object()) throw ConfigError(what + ": config must be a JSON object");
}

std::uint64_t resolve_seed(const json& config, const RunOptions& opts) {
  if (opts.seed) return *opts.seed;
  if (!config.contains("seed")) return 0;
  const auto& s = config["seed"];
  if (!s.is_number_integer() && !s.is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
  if (s.is_number_integer() && s.get<std::int64_t>() < 0) throw ConfigError("seed: expected a non-negative integer");
  return s.get<std::uint64_t>();
}

void reject_unknown(const json& config, std::initializer_list<const char*> allowed, const std::string& what) {
  for (auto it = config.begin(); it != config.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(what + ": unknown field '" + it.key() + "'");
  }
}

TrainConfig train_settings(const json& config, TrainConfig defaults) {
  return train_config_from_json(config.contains("train") ? config["train"] : json(nullptr), defaults, "train");
}

json convention_notes(const LowRankOptions* lowrank = nullptr) {
  json notes = {{"batch_unit", "one batch = one alternating iteration (forward and mirrored update)"},
                {"restart_selection", "highest final min-of-directions similarity"},
                {"degenerate_velocity", kDegenerateVelocity},
                {"build_id", build_id()}};
  if (lowrank) {
    notes["j_scaling"] = lowrank->scale_j_by_sqrt_n ? "per-entry std j_std/sqrt(n)" : "per-entry std j_std";
    notes["j_std"] = lowrank->j_std;
  }
  return notes;
}

PairResult train_pair(const std::string& experiment, int i, int j, std::uint64_t seed, const VectorField& f,
                      const VectorField& g, const Sampler& p, const Sampler& q, TrainConfig tc) {
  PairResult r;
  r.experiment = experiment;
  r.i = i;
  r.j = j;
  r.seed = seed;
  r.batches = tc.batches;
  r.restarts = tc.restarts;
  tc.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    TrainResult tr = train(f, g, p, q, tc);
    r.sim_forward = tr.record.final_report.sim_forward;
    r.sim_backward = tr.record.final_report.sim_backward;
    r.similarity = tr.record.final_report.similarity;
    r.detail["run"] = to_json(tr.record, false);
  } catch (const NumericalError& e) {
    r.status = "failed";
    r.message = e.what();
    r.sim_forward = r.sim_backward = r.similarity = kNaN;
  }
  r.wall_ms = elapsed_ms(start);
  return r;
}

struct Stats {
  double mean = kNaN;
  double median = kNaN;
  double sem = kNaN;
  double min = kNaN;
  double max = kNaN;
  int count = 0;
  int failed = 0;
};

Stats stats_of(const std::vector<PairResult>& rows) {
  std::vector<double> v;
  Stats s;
  for (const auto& r : rows) {
    if (std::isfinite(r.similarity)) {
      v.push_back(r.similarity);
    } else {
      ++s.failed;
    }
  }
  s.count = static_cast<int>(v.size());
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  const std::size_t mid = v.size() / 2;
  s.median = v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
  s.min = v.front();
  s.max = v.back();
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sem = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
  }
  return s;
}

json to_json(const Stats& s) {
  return {{"mean", number_or_null(s.mean)}, {"median", number_or_null(s.median)}, {"sem", number_or_null(s.sem)},
          {"min", number_or_null(s.min)},   {"max", number_or_null(s.max)},       {"count", s.count},
          {"failed", s.failed}};
}

json matrix_json(const std::vector<std::vector<double>>& m) {
  json out = json::array();
  for (const auto& row : m) {
    json r = json::array();
    for (double v : row) r.push_back(number_or_null(v));
    out.push_back(r);
  }
  return out;
}

Matrix conjugating_matrix(const std::string& how, int n, std::uint64_t seed) {
  if (how == "orthogonal") return random_orthogonal(n, seed);
  if (how == "gaussian") return random_gaussian_positive_det(n, seed);
  if (how == "well_conditioned" || how == "invertible") return random_well_conditioned(n, seed);
  if (how == "identity") return Matrix::Identity(n, n);
  throw ConfigError("conjugate: unknown transform '" + how + "'");
}

void check_transform_name(const std::string& how) {
  static const char* known[] = {"orthogonal", "gaussian", "well_conditioned", "invertible", "identity"};
  for (const char* k : known) {
    if (how == k) return;
  }
  throw ConfigError("conjugate: unknown transform '" + how + "'");
}

}  // namespace

std::string build_id() { return VFALIGN_BUILD_ID; }

void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  workers = std::clamp(workers, 1, count);
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Output

std::string csv_row(const PairResult& r, bool include_timing) {
  std::ostringstream os;
  os << r.experiment << ',' << r.i << ',' << r.j << ',' << r.seed << ',' << fmt(r.sim_forward) << ','
     << fmt(r.sim_backward) << ',' << fmt(r.similarity) << ',' << r.batches << ',' << r.restarts << ','
     << (include_timing ? fmt(r.wall_ms) : "0");
  return os.str();
}

std::string to_csv(const std::vector<PairResult>& rows, bool include_timing) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : rows) out += csv_row(r, include_timing) + "\n";
  return out;
}

json to_json(const PairResult& r, bool include_timing) {
  json j = {{"experiment", r.experiment},
            {"i", r.i},
            {"j", r.j},
            {"seed", r.seed},
            {"sim_forward", number_or_null(r.sim_forward)},
            {"sim_backward", number_or_null(r.sim_backward)},
            {"similarity", number_or_null(r.similarity)},
            {"batches", r.batches},
            {"restarts", r.restarts},
            {"status", r.status},
            {"detail", r.detail}};
  if (!r.message.empty()) j["message"] = r.message;
  if (include_timing) j["wall_ms"] = r.wall_ms;
  return j;
}

json to_json(const ExperimentOutput& out, bool include_timing) {
  json rows = json::array();
  for (const auto& r : out.rows) rows.push_back(to_json(r, include_timing));
  return {{"experiment", out.experiment}, {"build_id", build_id()}, {"config", out.config},
          {"resolved", out.resolved},     {"notes", out.notes},     {"summary", out.summary},
          {"rows", rows}};
}

std::vector<std::string> write_output(const std::string& dir, const std::string& stem, const ExperimentOutput& out,
                                      bool include_timing) {
  fs::create_directories(dir);
  std::vector<std::string> written;
  const std::string base = (fs::path(dir) / stem).string();
  {
    std::ofstream csv(base + ".csv");
    if (!csv) throw std::runtime_error(base + ".csv: cannot open for writing");
    csv << to_csv(out.rows, include_timing);
    written.push_back(base + ".csv");
  }
  jsonio::write_file(base + ".json", to_json(out, include_timing));
  written.push_back(base + ".json");
  if (out.summary.contains("matrices")) {
    for (auto it = out.summary["matrices"].begin(); it != out.summary["matrices"].end(); ++it) {
      const std::string path = base + "_" + it.key() + ".csv";
      std::ofstream m(path);
      if (!m) throw std::runtime_error(path + ": cannot open for writing");
      for (const auto& row : it.value()) {
        bool first = true;
        for (const auto& v : row) {
          m << (first ? "" : ",") << (v.is_null() ? std::string("nan") : fmt(v.get<double>()));
          first = false;
        }
        m << '\n';
      }
      written.push_back(path);
    }
  }
  return written;
}

// ---------------------------------------------------------------------------
// align

ExperimentOutput run_align(const json& config, const RunOptions& opts) {
  require_object(config, "align");
  struct Setup {
    FieldPtr f, g;
    std::optional<Sampler> p, q;
    TrainConfig tc;
    std::uint64_t seed = 0;
    std::string save_dir;
  };
  Setup s = parse_stage([&]() {
    reject_unknown(config, {"experiment", "source", "target", "sampler_p", "sampler_q", "train", "seed", "save_nets"},
                   "align");
    Setup out;
    out.seed = resolve_seed(config, opts);
    out.f = field_from_json(jsonio::require(config, "source", "align"), "source");
    out.g = field_from_json(jsonio::require(config, "target", "align"), "target");
    if (out.f->dim() != out.g->dim()) throw ConfigError("align: source and target dimensions differ");
    for (const char* key : {"sampler_p", "sampler_q"}) {
      const json& sj = jsonio::require(config, key, "align");
      if (sj.value("kind", "") == "asymptotic") continue;  // simulated after validation
      Sampler smp = sampler_from_json(sj, key[8] == 'p' ? *out.f : *out.g, 0, key);
      (key[8] == 'p' ? out.p : out.q).emplace(std::move(smp));
    }
    out.tc = train_settings(config, TrainConfig{});
    out.save_dir = jsonio::string_or(config, "save_nets", "", "align");
    return out;
  });
  if (!s.p) s.p.emplace(sampler_from_json(config["sampler_p"], *s.f, derive_seed(s.seed, 40), "sampler_p"));
  if (!s.q) s.q.emplace(sampler_from_json(config["sampler_q"], *s.g, derive_seed(s.seed, 41), "sampler_q"));

  ExperimentOutput out;
  out.experiment = "align";
  out.config = config;
  out.notes = convention_notes();
  TrainConfig tc = s.tc;
  tc.seed = s.seed;
  const auto start = std::chrono::steady_clock::now();
  TrainResult tr = train(*s.f, *s.g, *s.p, *s.q, tc);
  PairResult r;
  r.experiment = "align";
  r.seed = s.seed;
  r.sim_forward = tr.record.final_report.sim_forward;
  r.sim_backward = tr.record.final_report.sim_backward;
  r.similarity = tr.record.final_report.similarity;
  r.batches = tc.batches;
  r.restarts = tc.restarts;
  r.detail["run"] = to_json(tr.record, false);
  r.wall_ms = elapsed_ms(start);
  out.rows.push_back(r);
  out.resolved = {{"seed", s.seed},
                  {"train", to_json(tc)},
                  {"source", s.f->describe()},
                  {"target", s.g->describe()},
                  {"sampler_p", s.p->describe()},
                  {"sampler_q", s.q->describe()}};
  out.summary = {{"report", to_json(tr.record.final_report)}};
  if (!s.save_dir.empty()) {
    fs::create_directories(s.save_dir);
    tr.phi.save((fs::path(s.save_dir) / "phi.json").string());
    tr.psi.save((fs::path(s.save_dir) / "psi.json").string());
    out.summary["saved_nets"] = s.save_dir;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conjugate suites

ExperimentOutput run_conjugate_suite(const json& config, const RunOptions& opts) {
  require_object(config, "suite");
  struct Setup {
    std::string family;
    int replicates = 5;
    double mu_low = 0.0, mu_high = 0.0;
    int dim = 2, rank = 2;
    LowRankOptions lowrank;
    std::string conjugate;
    TrainConfig tc;
    std::uint64_t seed = 0;
  };
  const Setup s = parse_stage([&]() {
    reject_unknown(config,
                   {"experiment", "family", "replicates", "mu_range", "dim", "rank", "conjugate", "train", "seed",
                    "scale_j_by_sqrt_n", "j_std"},
                   "suite");
    Setup out;
    out.seed = resolve_seed(config, opts);
    out.family = jsonio::string_or(config, "family", "", "suite");
    TrainConfig defaults;
    if (out.family == "vdp") {
      out.mu_low = 1.5;
      out.mu_high = 3.5;
      out.conjugate = "gaussian";
      defaults.batches = 2000;
    } else if (out.family == "pitchfork") {
      out.mu_low = 2.0;
      out.mu_high = 4.0;
      out.conjugate = "gaussian";
      defaults.batches = 2000;
    } else if (out.family == "lowrank_rnn") {
      out.dim = opts.full_scale ? 64 : 16;
      out.conjugate = "orthogonal";
      defaults.batches = 6000;
    } else {
      throw ConfigError("suite.family: expected vdp, pitchfork or lowrank_rnn");
    }
    out.replicates = jsonio::int_or(config, "replicates", opts.full_scale ? 30 : (out.family == "lowrank_rnn" ? 3 : 5),
                                    "suite");
    if (out.replicates < 1) throw ConfigError("suite.replicates must be >= 1");
    if (config.contains("mu_range")) {
      RowVector r = jsonio::to_row(config["mu_range"], "suite.mu_range");
      if (r.size() != 2 || !(r(0) > 0.0) || r(1) < r(0)) throw ConfigError("suite.mu_range: expected [low, high] with 0 < low <= high");
      out.mu_low = r(0);
      out.mu_high = r(1);
    }
    if (out.family == "lowrank_rnn") {
      out.dim = jsonio::int_or(config, "dim", out.dim, "suite");
      out.rank = jsonio::int_or(config, "rank", out.rank, "suite");
      if (out.dim < 1 || out.rank < 0) throw ConfigError("suite: dim must be >= 1 and rank >= 0");
      if (config.contains("scale_j_by_sqrt_n")) out.lowrank.scale_j_by_sqrt_n = config["scale_j_by_sqrt_n"].get<bool>();
      out.lowrank.j_std = jsonio::number_or(config, "j_std", out.lowrank.j_std, "suite");
    }
    out.conjugate = jsonio::string_or(config, "conjugate", out.conjugate, "suite");
    check_transform_name(out.conjugate);
    out.tc = train_settings(config, defaults);
    return out;
  });

  ExperimentOutput out;
  out.experiment = "suite-" + s.family;
  out.config = config;
  out.notes = convention_notes(s.family == "lowrank_rnn" ? &s.lowrank : nullptr);
  out.resolved = {{"family", s.family},         {"replicates", s.replicates}, {"conjugate", s.conjugate},
                  {"train", to_json(s.tc)},     {"seed", s.seed},             {"full_scale", opts.full_scale}};
  if (s.family == "lowrank_rnn") {
    out.resolved["dim"] = s.dim;
    out.resolved["rank"] = s.rank;
  } else {
    out.resolved["mu_range"] = {s.mu_low, s.mu_high};
  }

  out.rows.resize(static_cast<std::size_t>(s.replicates));
  parallel_for(s.replicates, opts.workers, [&](int k) {
    const std::uint64_t rs = derive_seed(s.seed, 2, static_cast<std::uint64_t>(k));
    std::mt19937_64 rng(derive_seed(rs, 0));
    FieldPtr f;
    RowVector low, high;
    json detail;
    if (s.family == "lowrank_rnn") {
      f = std::make_shared<LowRankRNN>(random_lowrank_rnn(s.dim, s.rank, derive_seed(rs, 1), s.lowrank));
    } else {
      const double mu = std::uniform_real_distribution<double>(s.mu_low, s.mu_high)(rng);
      detail["mu"] = mu;
      if (s.family == "vdp") {
        f = std::make_shared<VanDerPol>(mu);
        low = RowVector{{-3.0, -4.0}};
        high = RowVector{{3.0, 4.0}};
      } else {
        f = std::make_shared<Pitchfork>(mu);
        low = RowVector{{-1.5 * std::sqrt(mu), -1.0}};
        high = RowVector{{1.5 * std::sqrt(mu), 1.0}};
      }
    }
    const Matrix Q = conjugating_matrix(s.conjugate, f->dim(), derive_seed(rs, 2));
    FieldPtr g = make_conjugate(f, Q);
    Sampler p = s.family == "lowrank_rnn" ? Sampler::standard_normal(f->dim(), derive_seed(rs, 3))
                                          : Sampler::uniform_box(low, high, derive_seed(rs, 3));
    Sampler q = s.family == "lowrank_rnn" ? Sampler::standard_normal(f->dim(), derive_seed(rs, 4))
                                          : Sampler::mapped_box(Q, low, high, derive_seed(rs, 4));
    PairResult r = train_pair(out.experiment, k, k, rs, *f, *g, p, q, s.tc);
    detail["Q"] = jsonio::from_matrix(Q);
    detail["sampler_p"] = p.describe();
    detail["sampler_q"] = q.describe();
    for (auto it = detail.begin(); it != detail.end(); ++it) r.detail[it.key()] = it.value();
    out.rows[static_cast<std::size_t>(k)] = std::move(r);
  });
  out.summary = {{"similarity", to_json(stats_of(out.rows))}};
  return out;
}

// ---------------------------------------------------------------------------
// Linear equivalence classes

ExperimentOutput run_linear_classes(const json& config, const RunOptions& opts) {
  require_object(config, "linear-equivalence-class");
  struct Setup {
    std::string cls;
    int dim = 8;
    int replicates = 5;
    TrainConfig tc;
    std::uint64_t seed = 0;
  };
  const Setup s = parse_stage([&]() {
    reject_unknown(config, {"experiment", "class", "dim", "replicates", "train", "seed"}, "linear-equivalence-class");
    Setup out;
    out.seed = resolve_seed(config, opts);
    out.cls = jsonio::string_or(config, "class", "", "linear-equivalence-class");
    if (out.cls != "orthogonal" && out.cls != "invertible" && out.cls != "same_sign_and_type" &&
        out.cls != "same_sign") {
      throw ConfigError("linear-equivalence-class.class: expected orthogonal, invertible, same_sign_and_type or same_sign");
    }
    out.dim = jsonio::int_or(config, "dim", opts.full_scale ? 32 : 8, "linear-equivalence-class");
    out.replicates = jsonio::int_or(config, "replicates", opts.full_scale ? 30 : 5, "linear-equivalence-class");
    if (out.dim < 2 || out.replicates < 1) throw ConfigError("linear-equivalence-class: dim >= 2 and replicates >= 1");
    TrainConfig defaults;
    defaults.batches = 3000;
    out.tc = train_settings(config, defaults);
    return out;
  });

  ExperimentOutput out;
  out.experiment = "linear-" + s.cls;
  out.config = config;
  out.notes = convention_notes();
  out.notes["eigenvalues"] = "real |lambda| and complex real/imaginary parts drawn from [0.5, 2]";
  out.resolved = {{"class", s.cls},   {"dim", s.dim},   {"replicates", s.replicates}, {"train", to_json(s.tc)},
                  {"seed", s.seed},   {"full_scale", opts.full_scale}};
  out.rows.resize(static_cast<std::size_t>(s.replicates));
  parallel_for(s.replicates, opts.workers, [&](int k) {
    const std::uint64_t rs = derive_seed(s.seed, 3, static_cast<std::uint64_t>(k));
    std::mt19937_64 rng(derive_seed(rs, 0));
    const int n = s.dim;
    // Random sign/type layout shared by both systems where the class requires it.
    auto pattern_with = [&](int n_pos) {
      EigenPattern p;
      p.n = n;
      p.n_pos = n_pos;
      p.complex_pairs_pos = std::uniform_int_distribution<int>(0, n_pos / 2)(rng);
      p.complex_pairs_neg = std::uniform_int_distribution<int>(0, (n - n_pos) / 2)(rng);
      return p;
    };
    const int n_pos = std::uniform_int_distribution<int>(0, n)(rng);
    const EigenPattern pa = pattern_with(n_pos);
    FieldPtr f = std::make_shared<LinearField>(random_linear_with_pattern(pa, derive_seed(rs, 1)));
    FieldPtr g;
    json detail = {{"n_pos", n_pos},
                   {"source_complex_pairs", {pa.complex_pairs_pos, pa.complex_pairs_neg}}};
    if (s.cls == "orthogonal") {
      g = make_conjugate(f, random_orthogonal(n, derive_seed(rs, 2)));
    } else if (s.cls == "invertible") {
      g = make_conjugate(f, random_well_conditioned(n, derive_seed(rs, 2)));
    } else {
      const EigenPattern pb = s.cls == "same_sign_and_type" ? pa : pattern_with(n_pos);
      g = std::make_shared<LinearField>(random_linear_with_pattern(pb, derive_seed(rs, 2)));
      detail["target_complex_pairs"] = {pb.complex_pairs_pos, pb.complex_pairs_neg};
    }
    Sampler p = Sampler::standard_normal(n, derive_seed(rs, 3));
    Sampler q = Sampler::standard_normal(n, derive_seed(rs, 4));
    PairResult r = train_pair(out.experiment, k, k, rs, *f, *g, p, q, s.tc);
    for (auto it = detail.begin(); it != detail.end(); ++it) r.detail[it.key()] = it.value();
    out.rows[static_cast<std::size_t>(k)] = std::move(r);
  });
  out.summary = {{"similarity", to_json(stats_of(out.rows))}};
  return out;
}

// ---------------------------------------------------------------------------
// Sign grid

ExperimentOutput run_sign_grid(const json& config, const RunOptions& opts) {
  require_object(config, "sign-grid");
  struct Setup {
    int dim = 8;
    std::vector<int> groups;
    int pairs_per_cell = 3;
    TrainConfig tc;
    std::uint64_t seed = 0;
  };
  const Setup s = parse_stage([&]() {
    reject_unknown(config, {"experiment", "dim", "groups", "group_count", "pairs_per_cell", "train", "seed"},
                   "sign-grid");
    Setup out;
    out.seed = resolve_seed(config, opts);
    out.dim = jsonio::int_or(config, "dim", opts.full_scale ? 32 : 8, "sign-grid");
    if (out.dim < 1) throw ConfigError("sign-grid.dim must be >= 1");
    if (config.contains("groups")) {
      for (const auto& g : config["groups"]) {
        const int v = g.get<int>();
        if (v < 0 || v > out.dim) throw ConfigError("sign-grid.groups: positive-eigenvalue counts must lie in [0, dim]");
        out.groups.push_back(v);
      }
      if (!std::is_sorted(out.groups.begin(), out.groups.end()) ||
          std::adjacent_find(out.groups.begin(), out.groups.end()) != out.groups.end()) {
        throw ConfigError("sign-grid.groups: expected strictly increasing counts");
      }
    } else {
      const int count = jsonio::int_or(config, "group_count", 5, "sign-grid");
      if (count < 2 || count > out.dim + 1) throw ConfigError("sign-grid.group_count must lie in [2, dim + 1]");
      for (int k = 0; k < count; ++k) {
        out.groups.push_back(static_cast<int>(std::lround(static_cast<double>(k) * out.dim / (count - 1))));
      }
    }
    if (out.groups.size() < 2) throw ConfigError("sign-grid: need at least two groups");
    out.pairs_per_cell = jsonio::int_or(config, "pairs_per_cell", 3, "sign-grid");
    if (out.pairs_per_cell < 1) throw ConfigError("sign-grid.pairs_per_cell must be >= 1");
    TrainConfig defaults;
    defaults.batches = opts.full_scale ? 3000 : 2000;
    out.tc = train_settings(config, defaults);
    return out;
  });

  const int G = static_cast<int>(s.groups.size());
  struct Task {
    int level, a, b, replicate;
  };
  // Cells are indexed by group distance; pairs cycle over the group pairs at that distance.
  std::vector<int> distances;
  for (int d = 0; d < G; ++d) distances.push_back(d);
  std::vector<Task> tasks;
  for (int d : distances) {
    const int choices = G - d;
    for (int k = 0; k < s.pairs_per_cell; ++k) tasks.push_back({d, k % choices, k % choices + d, k});
  }

  ExperimentOutput out;
  out.experiment = "sign-grid";
  out.config = config;
  out.notes = convention_notes();
  out.notes["eigenvalues"] = "real, |lambda| drawn from [0.5, 2]";
  out.notes["cell"] = "one cell per same-sign proportion; pairs cycle over group pairs with that proportion";
  out.resolved = {{"dim", s.dim},         {"groups", s.groups}, {"pairs_per_cell", s.pairs_per_cell},
                  {"train", to_json(s.tc)}, {"seed", s.seed},   {"full_scale", opts.full_scale}};
  out.rows.resize(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), opts.workers, [&](int t) {
    const Task& task = tasks[static_cast<std::size_t>(t)];
    const std::uint64_t rs = derive_seed(s.seed, 4, static_cast<std::uint64_t>(t));
    const int na = s.groups[static_cast<std::size_t>(task.a)];
    const int nb = s.groups[static_cast<std::size_t>(task.b)];
    FieldPtr f = std::make_shared<LinearField>(random_linear_with_signs(s.dim, na, Pairing::Real, derive_seed(rs, 1)));
    FieldPtr g = std::make_shared<LinearField>(random_linear_with_signs(s.dim, nb, Pairing::Real, derive_seed(rs, 2)));
    Sampler p = Sampler::standard_normal(s.dim, derive_seed(rs, 3));
    Sampler q = Sampler::standard_normal(s.dim, derive_seed(rs, 4));
    PairResult r = train_pair("sign-grid", task.a, task.b, rs, *f, *g, p, q, s.tc);
    r.detail["n_pos"] = {na, nb};
    r.detail["same_sign_fraction"] = 1.0 - static_cast<double>(std::abs(na - nb)) / s.dim;
    out.rows[static_cast<std::size_t>(t)] = std::move(r);
  });

  json levels = json::array();
  std::vector<double> means;
  for (int d : distances) {
    std::vector<PairResult> cell;
    double fraction = 0.0;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      if (tasks[t].level == d) {
        cell.push_back(out.rows[t]);
        fraction = out.rows[t].detail["same_sign_fraction"].get<double>();
      }
    }
    Stats st = stats_of(cell);
    means.push_back(st.mean);
    json entry = to_json(st);
    entry["same_sign_fraction"] = fraction;
    entry["group_distance"] = d;
    levels.push_back(entry);
  }
  bool decreasing = true;
  for (std::size_t k = 1; k < means.size(); ++k) decreasing = decreasing && means[k] < means[k - 1];

  std::vector<std::vector<double>> sum(G, std::vector<double>(G, 0.0)), grid(G, std::vector<double>(G, kNaN));
  std::vector<std::vector<int>> cnt(G, std::vector<int>(G, 0));
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (!std::isfinite(out.rows[t].similarity)) continue;
    sum[tasks[t].a][tasks[t].b] += out.rows[t].similarity;
    ++cnt[tasks[t].a][tasks[t].b];
  }
  for (int a = 0; a < G; ++a) {
    for (int b = a; b < G; ++b) {
      if (cnt[a][b] > 0) grid[a][b] = grid[b][a] = sum[a][b] / cnt[a][b];
    }
  }
  out.summary = {{"levels", levels},
                 {"strictly_decreasing", decreasing},
                 {"matrices", {{"groups", matrix_json(grid)}}}};
  return out;
}

// ---------------------------------------------------------------------------
// Pairwise matrix

namespace {

EnsembleOptions ensemble_options(const json& j, const std::string& path, EnsembleOptions o = {}) {
  if (j.is_null()) return o;
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  o.trials = jsonio::int_or(j, "trials", o.trials, path);
  o.dt = jsonio::number_or(j, "dt", o.dt, path);
  o.horizon = jsonio::number_or(j, "horizon", o.horizon, path);
  o.noise = jsonio::number_or(j, "noise", o.noise, path);
  o.record_every = jsonio::int_or(j, "record_every", o.record_every, path);
  if (o.trials < 1 || !(o.dt > 0.0) || !(o.horizon > 0.0) || o.noise < 0.0 || o.record_every < 1) {
    throw ConfigError(path + ": invalid ensemble settings");
  }
  return o;
}

}  // namespace

ExperimentOutput run_pairwise_matrix(const json& config, const RunOptions& opts) {
  require_object(config, "pairwise-matrix");
  struct Model {
    std::string name;
    FieldPtr field;
  };
  struct Setup {
    std::vector<Model> models;
    json skipped = json::array();
    json sampler;
    EnsembleOptions ensemble;
    bool include_self = false;
    bool run_svcca = true;
    TrainConfig tc;
    std::uint64_t seed = 0;
  };
  Setup s = parse_stage([&]() {
    reject_unknown(config,
                   {"experiment", "models", "model_dir", "sampler", "ensemble", "include_self", "svcca", "train", "seed"},
                   "pairwise-matrix");
    Setup out;
    out.seed = resolve_seed(config, opts);
    std::vector<json> entries;
    if (config.contains("models")) {
      if (!config["models"].is_array()) throw ConfigError("pairwise-matrix.models: expected an array");
      for (const auto& m : config["models"]) entries.push_back(m);
    }
    if (config.contains("model_dir")) {
      const std::string dir = config["model_dir"].get<std::string>();
      if (!fs::is_directory(dir)) throw ConfigError("pairwise-matrix.model_dir: not a directory: " + dir);
      std::vector<std::string> files;
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".json") files.push_back(e.path().string());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) entries.push_back(f);
    }
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const json& e = entries[k];
      const std::string path = jsonio::join("models", k);
      if (e.is_string()) {
        // Unreadable weight files are skipped, not fatal.
        try {
          out.models.push_back({e.get<std::string>(), std::make_shared<ContextRNN>(load_rnn_weights(e.get<std::string>()))});
        } catch (const std::exception& err) {
          std::cerr << "warning: skipping model " << e.get<std::string>() << ": " << err.what() << '\n';
          out.skipped.push_back({{"model", e.get<std::string>()}, {"error", err.what()}});
        }
      } else {
        out.models.push_back({e.value("name", path), field_from_json(e, path)});
      }
    }
    if (out.models.empty()) throw ConfigError("pairwise-matrix: no usable models");
    for (const auto& m : out.models) {
      if (m.field->dim() != out.models.front().field->dim()) throw ConfigError("pairwise-matrix: models differ in dimension");
    }
    out.sampler = config.contains("sampler") ? config["sampler"] : json{{"kind", "asymptotic"}};
    if (!out.sampler.is_object()) throw ConfigError("pairwise-matrix.sampler: expected an object");
    // Validate the sampler spec against the first model without simulating.
    if (out.sampler.value("kind", "") != "asymptotic") sampler_from_json(out.sampler, *out.models.front().field, 0, "sampler");
    out.ensemble = ensemble_options(config.contains("ensemble") ? config["ensemble"] : json(nullptr), "ensemble");
    if (config.contains("include_self")) out.include_self = config["include_self"].get<bool>();
    if (config.contains("svcca")) out.run_svcca = config["svcca"].get<bool>();
    TrainConfig defaults;
    defaults.batches = opts.full_scale ? 6000 : 2000;
    out.tc = train_settings(config, defaults);
    return out;
  });

  const int M = static_cast<int>(s.models.size());
  ExperimentOutput out;
  out.experiment = "pairwise-matrix";
  out.config = config;
  out.notes = convention_notes();
  out.notes["svcca_pairing"] = "trials share initial-condition and noise seeds across models";
  json names = json::array();
  for (const auto& m : s.models) names.push_back(m.name);
  out.resolved = {{"models", names},       {"sampler", s.sampler},    {"include_self", s.include_self},
                  {"train", to_json(s.tc)}, {"seed", s.seed},         {"svcca", s.run_svcca},
                  {"ensemble", {{"trials", s.ensemble.trials}, {"dt", s.ensemble.dt}, {"horizon", s.ensemble.horizon},
                                {"noise", s.ensemble.noise}, {"record_every", s.ensemble.record_every}}}};

  // Per-model samplers and ensembles. Every model shares one simulation seed
  // so trial k starts from the same state with the same noise everywhere.
  std::vector<std::optional<Sampler>> samplers(static_cast<std::size_t>(M));
  std::vector<std::optional<TrajectoryEnsemble>> ensembles(static_cast<std::size_t>(M));
  std::vector<std::string> model_errors(static_cast<std::size_t>(M));
  const std::uint64_t sim_seed = derive_seed(s.seed, 50);
  parallel_for(M, opts.workers, [&](int m) {
    const auto& field = *s.models[static_cast<std::size_t>(m)].field;
    try {
      samplers[static_cast<std::size_t>(m)].emplace(
          sampler_from_json(s.sampler, field, derive_seed(s.seed, 51, static_cast<std::uint64_t>(m)), "sampler"));
      if (s.run_svcca) {
        ensembles[static_cast<std::size_t>(m)].emplace(
            simulate_ensemble(field, Sampler::standard_normal(field.dim(), sim_seed), s.ensemble, derive_seed(sim_seed, 1)));
      }
    } catch (const NumericalError& e) {
      model_errors[static_cast<std::size_t>(m)] = e.what();
    }
  });

  struct Task {
    int a, b;
  };
  std::vector<Task> tasks;
  for (int a = 0; a < M; ++a) {
    for (int b = s.include_self ? a : a + 1; b < M; ++b) tasks.push_back({a, b});
  }
  std::vector<PairResult> aligned(tasks.size()), cca_rows(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), opts.workers, [&](int t) {
    const Task& task = tasks[static_cast<std::size_t>(t)];
    const std::uint64_t rs = derive_seed(s.seed, 5, static_cast<std::uint64_t>(t));
    const auto& ma = s.models[static_cast<std::size_t>(task.a)];
    const auto& mb = s.models[static_cast<std::size_t>(task.b)];
    PairResult r;
    r.experiment = "pairwise-align";
    r.i = task.a;
    r.j = task.b;
    r.seed = rs;
    r.batches = s.tc.batches;
    r.restarts = s.tc.restarts;
    const auto& ea = model_errors[static_cast<std::size_t>(task.a)];
    const auto& eb = model_errors[static_cast<std::size_t>(task.b)];
    if (!ea.empty() || !eb.empty()) {
      r.status = "failed";
      r.message = !ea.empty() ? ea : eb;
      r.sim_forward = r.sim_backward = r.similarity = kNaN;
    } else {
      r = train_pair("pairwise-align", task.a, task.b, rs, *ma.field, *mb.field, *samplers[static_cast<std::size_t>(task.a)],
                     *samplers[static_cast<std::size_t>(task.b)], s.tc);
    }
    aligned[static_cast<std::size_t>(t)] = std::move(r);

    PairResult c;
    c.experiment = "pairwise-svcca";
    c.i = task.a;
    c.j = task.b;
    c.seed = sim_seed;
    c.sim_forward = c.sim_backward = c.similarity = kNaN;
    if (s.run_svcca) {
      const auto start = std::chrono::steady_clock::now();
      const auto& xa = ensembles[static_cast<std::size_t>(task.a)];
      const auto& xb = ensembles[static_cast<std::size_t>(task.b)];
      if (xa && xb) {
        try {
          CcaResult res = svcca(*xa, *xb);
          c.sim_forward = c.sim_backward = c.similarity = res.mean;
          c.detail["rank"] = res.rank;
        } catch (const std::exception& e) {
          c.status = "failed";
          c.message = e.what();
        }
      } else {
        c.status = "failed";
        c.message = "ensemble unavailable";
      }
      c.wall_ms = elapsed_ms(start);
    } else {
      c.status = "skipped";
    }
    cca_rows[static_cast<std::size_t>(t)] = std::move(c);
  });

  std::vector<std::vector<double>> dm(M, std::vector<double>(M, kNaN)), cm(M, std::vector<double>(M, kNaN));
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const int a = tasks[t].a, b = tasks[t].b;
    dm[a][b] = dm[b][a] = aligned[t].similarity;
    cm[a][b] = cm[b][a] = cca_rows[t].similarity;
  }
  for (auto& r : aligned) out.rows.push_back(std::move(r));
  if (s.run_svcca) {
    for (auto& r : cca_rows) out.rows.push_back(std::move(r));
  }
  out.summary = {{"skipped_models", s.skipped}, {"matrices", {{"alignment", matrix_json(dm)}}}};
  if (s.run_svcca) out.summary["matrices"]["svcca"] = matrix_json(cm);
  json errs = json::object();
  for (int m = 0; m < M; ++m) {
    if (!model_errors[static_cast<std::size_t>(m)].empty()) errs[s.models[static_cast<std::size_t>(m)].name] = model_errors[static_cast<std::size_t>(m)];
  }
  out.summary["model_errors"] = errs;
  return out;
}

// ---------------------------------------------------------------------------
// SVCCA compare

ExperimentOutput run_svcca_compare(const json& config, const RunOptions& opts) {
  require_object(config, "svcca-compare");
  struct Setup {
    FieldPtr a, b;
    json initial;
    EnsembleOptions ensemble;
    double threshold = 0.95;
    std::vector<std::string> csv;
    std::uint64_t seed = 0;
  };
  const Setup s = parse_stage([&]() {
    reject_unknown(config, {"experiment", "systems", "initial", "ensemble", "threshold", "ensemble_csv", "seed"},
                   "svcca-compare");
    Setup out;
    out.seed = resolve_seed(config, opts);
    const json& systems = jsonio::require(config, "systems", "svcca-compare");
    if (!systems.is_array() || systems.size() != 2) throw ConfigError("svcca-compare.systems: expected two system specs");
    out.a = field_from_json(systems[0], "systems[0]");
    out.b = field_from_json(systems[1], "systems[1]");
    if (out.a->dim() != out.b->dim()) throw ConfigError("svcca-compare: systems differ in dimension");
    out.initial = config.contains("initial") ? config["initial"] : json{{"kind", "standard_normal"}};
    if (out.initial.value("kind", "") == "asymptotic") throw ConfigError("initial: asymptotic initial conditions are not supported");
    sampler_from_json(out.initial, *out.a, 0, "initial");
    out.ensemble = ensemble_options(config.contains("ensemble") ? config["ensemble"] : json(nullptr), "ensemble");
    out.threshold = jsonio::number_or(config, "threshold", 0.95, "svcca-compare");
    if (!(out.threshold > 0.0 && out.threshold <= 1.0)) throw ConfigError("svcca-compare.threshold must lie in (0, 1]");
    if (config.contains("ensemble_csv")) {
      for (const auto& p : config["ensemble_csv"]) out.csv.push_back(p.get<std::string>());
      if (out.csv.size() != 2) throw ConfigError("svcca-compare.ensemble_csv: expected two paths");
    }
    return out;
  });

  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t sim_seed = derive_seed(s.seed, 60);
  Sampler init_a = sampler_from_json(s.initial, *s.a, sim_seed, "initial");
  Sampler init_b = sampler_from_json(s.initial, *s.b, sim_seed, "initial");
  TrajectoryEnsemble ea = simulate_ensemble(*s.a, init_a, s.ensemble, derive_seed(sim_seed, 1));
  TrajectoryEnsemble eb = simulate_ensemble(*s.b, init_b, s.ensemble, derive_seed(sim_seed, 1));
  if (!s.csv.empty()) {
    write_ensemble_csv(s.csv[0], ea);
    write_ensemble_csv(s.csv[1], eb);
  }
  CcaResult res = svcca(ea, eb, s.threshold);

  ExperimentOutput out;
  out.experiment = "svcca";
  out.config = config;
  out.notes = convention_notes();
  out.notes["svcca_pairing"] = "trials share initial-condition and noise seeds across models";
  out.resolved = {{"seed", s.seed},
                  {"systems", {s.a->describe(), s.b->describe()}},
                  {"initial", init_a.describe()},
                  {"ensemble", {{"trials", s.ensemble.trials}, {"dt", s.ensemble.dt}, {"horizon", s.ensemble.horizon},
                                {"noise", s.ensemble.noise}, {"record_every", s.ensemble.record_every}}},
                  {"threshold", s.threshold}};
  PairResult r;
  r.experiment = "svcca";
  r.i = 0;
  r.j = 1;
  r.seed = s.seed;
  r.sim_forward = r.sim_backward = r.similarity = res.mean;
  r.detail = {{"rank", res.rank},
              {"correlations", jsonio::from_row(res.correlations.transpose())},
              {"integrator", ea.integrator},
              {"surviving_trials", {ea.trial_ids.size(), eb.trial_ids.size()}}};
  r.wall_ms = elapsed_ms(start);
  out.rows.push_back(r);
  out.summary = {{"mean_correlation", res.mean}, {"rank", res.rank}};
  return out;
}

// ---------------------------------------------------------------------------
// Inversion check

ExperimentOutput run_invert_check(const json& config, const RunOptions& opts) {
  require_object(config, "invert-check");
  struct Setup {
    IResNet net;
    std::optional<IResNet> psi;
    int points = 100;
    InverseOptions inv;
    std::uint64_t seed = 0;
    double scale = 1.0;
    std::string source;
  };
  Setup s = parse_stage([&]() {
    reject_unknown(config, {"experiment", "net", "psi", "random", "points", "scale", "tol", "max_iter", "seed"},
                   "invert-check");
    Setup out;
    out.seed = resolve_seed(config, opts);
    if (config.contains("net")) {
      out.source = config["net"].get<std::string>();
      out.net = IResNet::load(out.source);
    } else {
      const json& r = config.contains("random") ? config["random"] : json::object();
      const int dim = jsonio::int_or(r, "dim", 8, "random");
      const int layers = jsonio::int_or(r, "layers", 10, "random");
      const double cap = jsonio::number_or(r, "cap", 0.99, "random");
      const double w2 = jsonio::number_or(r, "w2_scale", 1.0, "random");
      out.source = "random";
      out.net = IResNet::random_warp(dim, layers, cap, w2, derive_seed(out.seed, 70));
    }
    if (config.contains("psi")) out.psi = IResNet::load(config["psi"].get<std::string>());
    if (out.psi && out.psi->dim() != out.net.dim()) throw ConfigError("invert-check: psi dimension differs from net");
    out.points = jsonio::int_or(config, "points", 100, "invert-check");
    out.scale = jsonio::number_or(config, "scale", 1.0, "invert-check");
    out.inv.tol = jsonio::number_or(config, "tol", out.inv.tol, "invert-check");
    out.inv.max_iter = jsonio::int_or(config, "max_iter", out.inv.max_iter, "invert-check");
    if (out.points < 1 || !(out.inv.tol > 0.0) || out.inv.max_iter < 1) throw ConfigError("invert-check: invalid settings");
    return out;
  });

  const auto start = std::chrono::steady_clock::now();
  Sampler smp = Sampler::standard_normal(s.net.dim(), derive_seed(s.seed, 71));
  Matrix x = s.scale * smp.draw(s.points);
  Matrix y = s.net.forward(x);
  InverseTrace trace;
  Matrix back = s.net.inverse(y, s.inv, &trace);
  const Vector err = (back - x).rowwise().norm();

  ExperimentOutput out;
  out.experiment = "invert-check";
  out.config = config;
  out.notes = convention_notes();
  out.resolved = {{"seed", s.seed},       {"net", s.source},         {"points", s.points},
                  {"tol", s.inv.tol},     {"max_iter", s.inv.max_iter}, {"dim", s.net.dim()},
                  {"layers", s.net.layers()}};
  out.summary = {{"max_error", err.maxCoeff()},
                 {"mean_error", err.mean()},
                 {"iterations", trace.iterations},
                 {"max_contraction", trace.max_ratio}};
  if (s.psi) {
    const Vector cycle = (x - s.psi->forward(y)).rowwise().norm();
    out.summary["psi_cycle_max_error"] = cycle.maxCoeff();
    out.summary["psi_cycle_mean_error"] = cycle.mean();
  }
  PairResult r;
  r.experiment = "invert-check";
  r.seed = s.seed;
  r.sim_forward = r.sim_backward = r.similarity = kNaN;
  r.detail = out.summary;
  r.wall_ms = elapsed_ms(start);
  out.rows.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// Field grids

FieldGrid field_grid(const VectorField& field, const IResNet* net, const RowVector& low, const RowVector& high, int nx,
                     int ny, int trajectories, double horizon, double dt, std::uint64_t seed) {
  if (field.dim() != 2) throw ContractError("field grid: field must be two-dimensional");
  if (net && net->dim() != 2) throw ContractError("field grid: network must be two-dimensional");
  if (nx < 2 || ny < 2) throw ContractError("field grid: need at least 2 points per axis");
  if (low.size() != 2 || high.size() != 2 || !(high(0) > low(0)) || !(high(1) > low(1))) {
    throw ContractError("field grid: bounds must satisfy low < high in both coordinates");
  }
  FieldGrid g;
  g.nx = nx;
  g.ny = ny;
  g.points.resize(static_cast<Eigen::Index>(nx) * ny, 2);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const Eigen::Index r = static_cast<Eigen::Index>(iy) * nx + ix;
      g.points(r, 0) = low(0) + (high(0) - low(0)) * ix / (nx - 1);
      g.points(r, 1) = low(1) + (high(1) - low(1)) * iy / (ny - 1);
    }
  }
  g.field = field.eval(g.points);
  if (net) {
    auto [mapped, pushed] = net->forward_tangent(g.points, g.field);
    g.mapped = std::move(mapped);
    g.pushed = std::move(pushed);
  }
  if (trajectories > 0) {
    if (!(dt > 0.0) || !(horizon > 0.0)) throw ContractError("field grid: trajectory dt and horizon must be positive");
    Sampler init = Sampler::uniform_box(low, high, seed);
    EnsembleOptions eo;
    eo.trials = trajectories;
    eo.dt = dt;
    eo.horizon = horizon;
    eo.record_every = std::max(1, static_cast<int>(std::lround(0.05 / dt)));
    TrajectoryEnsemble e = simulate_ensemble(field, init, eo, seed);
    Eigen::Index at = 0;
    for (std::size_t t = 0; t < e.trial_ids.size(); ++t) {
      g.trajectories.push_back(e.states.middleRows(at, e.trial_lengths[t]));
      at += e.trial_lengths[t];
    }
  }
  return g;
}

json to_json(const FieldGrid& g) {
  json j = {{"format_version", 1}, {"nx", g.nx}, {"ny", g.ny}, {"points", jsonio::from_matrix(g.points)},
            {"field", jsonio::from_matrix(g.field)}};
  j["mapped"] = g.mapped ? jsonio::from_matrix(*g.mapped) : json(nullptr);
  j["pushforward"] = g.pushed ? jsonio::from_matrix(*g.pushed) : json(nullptr);
  json traj = json::array();
  for (const auto& t : g.trajectories) traj.push_back(jsonio::from_matrix(t));
  j["trajectories"] = traj;
  return j;
}

FieldGrid parse_field_grid(const json& j_in) {
  const json& j = j_in.contains("summary") && j_in["summary"].contains("grid") ? j_in["summary"]["grid"] : j_in;
  using namespace jsonio;
  if (require_int(j, "format_version", "grid") != 1) throw ParseError("grid.format_version: unsupported version");
  FieldGrid g;
  g.nx = require_int(j, "nx", "grid");
  g.ny = require_int(j, "ny", "grid");
  g.points = to_matrix(require(j, "points", "grid"), "grid.points");
  g.field = to_matrix(require(j, "field", "grid"), "grid.field");
  const Eigen::Index expect = static_cast<Eigen::Index>(g.nx) * g.ny;
  if (g.points.rows() != expect || g.points.cols() != 2 || g.field.rows() != expect || g.field.cols() != 2) {
    throw ParseError("grid: points/field must be (nx*ny) x 2");
  }
  if (j.contains("mapped") && !j["mapped"].is_null()) g.mapped = to_matrix(j["mapped"], "grid.mapped");
  if (j.contains("pushforward") && !j["pushforward"].is_null()) g.pushed = to_matrix(j["pushforward"], "grid.pushforward");
  if (j.contains("trajectories")) {
    for (std::size_t k = 0; k < j["trajectories"].size(); ++k) {
      g.trajectories.push_back(to_matrix(j["trajectories"][k], join("grid.trajectories", k)));
    }
  }
  return g;
}

ExperimentOutput run_field_grid(const json& config, FieldGrid* grid_out, const RunOptions& opts) {
  require_object(config, "field-grid-dump");
  struct Setup {
    FieldPtr field;
    std::optional<IResNet> net;
    RowVector low, high;
    int nx = 21, ny = 21;
    int trajectories = 0;
    double horizon = 10.0, dt = 0.01;
    std::uint64_t seed = 0;
  };
  const Setup s = parse_stage([&]() {
    reject_unknown(config, {"experiment", "system", "net", "grid", "trajectories", "seed"}, "field-grid-dump");
    Setup out;
    out.seed = resolve_seed(config, opts);
    out.field = field_from_json(jsonio::require(config, "system", "field-grid-dump"), "system");
    if (out.field->dim() != 2) throw ConfigError("system: field-grid-dump requires a two-dimensional system");
    if (config.contains("net")) {
      out.net = IResNet::load(config["net"].get<std::string>());
      if (out.net->dim() != 2) throw ConfigError("net: field-grid-dump requires a two-dimensional network");
    }
    const json& grid = jsonio::require(config, "grid", "field-grid-dump");
    out.low = jsonio::to_row(jsonio::require(grid, "low", "grid"), "grid.low");
    out.high = jsonio::to_row(jsonio::require(grid, "high", "grid"), "grid.high");
    if (out.low.size() != 2 || out.high.size() != 2 || !(out.high(0) > out.low(0)) || !(out.high(1) > out.low(1))) {
      throw ConfigError("grid: low/high must be 2-vectors with low < high");
    }
    if (grid.contains("points")) {
      RowVector pts = jsonio::to_row(grid["points"], "grid.points");
      if (pts.size() != 2 || pts(0) < 2 || pts(1) < 2) throw ConfigError("grid.points: expected [nx, ny] with both >= 2");
      out.nx = static_cast<int>(pts(0));
      out.ny = static_cast<int>(pts(1));
    }
    if (config.contains("trajectories")) {
      const json& t = config["trajectories"];
      out.trajectories = jsonio::int_or(t, "count", 0, "trajectories");
      out.horizon = jsonio::number_or(t, "horizon", out.horizon, "trajectories");
      out.dt = jsonio::number_or(t, "dt", out.dt, "trajectories");
      if (out.trajectories < 0 || !(out.horizon > 0.0) || !(out.dt > 0.0)) throw ConfigError("trajectories: invalid settings");
    }
    return out;
  });
  const auto start = std::chrono::steady_clock::now();
  FieldGrid g = field_grid(*s.field, s.net ? &*s.net : nullptr, s.low, s.high, s.nx, s.ny, s.trajectories, s.horizon,
                           s.dt, derive_seed(s.seed, 80));
  ExperimentOutput out;
  out.experiment = "field-grid";
  out.config = config;
  out.notes = convention_notes();
  out.resolved = {{"seed", s.seed}, {"system", s.field->describe()}, {"nx", s.nx}, {"ny", s.ny},
                  {"low", jsonio::from_row(s.low)}, {"high", jsonio::from_row(s.high)}, {"has_net", s.net.has_value()}};
  out.summary = {{"grid", to_json(g)}};
  PairResult r;
  r.experiment = "field-grid";
  r.seed = s.seed;
  r.sim_forward = r.sim_backward = r.similarity = kNaN;
  r.wall_ms = elapsed_ms(start);
  out.rows.push_back(r);
  if (grid_out) *grid_out = std::move(g);
  return out;
}

// ---------------------------------------------------------------------------

ExperimentOutput run_experiment(const json& config, const RunOptions& opts) {
  require_object(config, "experiment");
  const std::string kind = parse_stage([&]() { return jsonio::string_or(config, "experiment", "", "experiment"); });
  if (kind == "conjugate-pair") {
    return config.contains("family") ? run_conjugate_suite(config, opts) : run_align(config, opts);
  }
  if (kind == "linear-equivalence-class") return run_linear_classes(config, opts);
  if (kind == "sign-grid") return run_sign_grid(config, opts);
  if (kind == "pairwise-matrix") return run_pairwise_matrix(config, opts);
  if (kind == "svcca-compare") return run_svcca_compare(config, opts);
  if (kind == "field-grid-dump") return run_field_grid(config, nullptr, opts);
  if (kind == "invert-check") return run_invert_check(config, opts);
  throw ConfigError("experiment: unknown kind '" + kind + "'");
}

}  // namespace vfalign
