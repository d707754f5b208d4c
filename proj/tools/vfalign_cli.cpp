// Command-line front end for the experiment runners.
//
//   vfalign <verb> --config cfg.json [--out dir] [--seed N] [--workers N] [--full-scale]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include "vfalign/experiments.hpp"
#include "vfalign/json_util.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <string>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Verb {
  const char* name;
  const char* help;
  const char* default_kind;  // used when the config does not say
  bool config_required;
};

const Verb kVerbs[] = {
    {"align", "train one source/target pair", "conjugate-pair", true},
    {"suite", "replicated conjugate or linear-equivalence benchmark", "conjugate-pair", true},
    {"sign-grid", "linear systems across eigenvalue-sign proportions", "sign-grid", true},
    {"matrix", "learned-alignment and SVCCA similarity matrices over a model set", "pairwise-matrix", true},
    {"svcca", "SVCCA between two simulated systems", "svcca-compare", true},
    {"dump-grid", "vector-field grid for plotting", "field-grid-dump", true},
    {"invert-check", "fixed-point inversion accuracy of a network", "invert-check", false},
};

bool kind_allowed(const std::string& verb, const std::string& kind) {
  static const std::map<std::string, std::vector<std::string>> allowed = {
      {"align", {"conjugate-pair"}},
      {"suite", {"conjugate-pair", "linear-equivalence-class"}},
      {"sign-grid", {"sign-grid"}},
      {"matrix", {"pairwise-matrix"}},
      {"svcca", {"svcca-compare"}},
      {"dump-grid", {"field-grid-dump"}},
      {"invert-check", {"invert-check"}},
  };
  for (const auto& k : allowed.at(verb)) {
    if (k == kind) return true;
  }
  return false;
}

vfalign::ExperimentOutput dispatch(const std::string& verb, const nlohmann::json& config,
                                   const vfalign::RunOptions& opts) {
  using namespace vfalign;
  const std::string kind = config["experiment"].get<std::string>();
  if (verb == "align") {
    if (config.contains("family")) throw ConfigError("align: 'family' configs belong to the suite verb");
    return run_align(config, opts);
  }
  if (verb == "suite") {
    if (kind == "linear-equivalence-class") return run_linear_classes(config, opts);
    if (!config.contains("family")) throw ConfigError("suite: conjugate-pair configs need a 'family'");
    return run_conjugate_suite(config, opts);
  }
  return run_experiment(config, opts);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Orbital-similarity alignment of dynamical systems"};
  app.require_subcommand(1);
  app.set_version_flag("--version", vfalign::build_id());

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  int workers = 1;
  bool full_scale = false;
  bool no_timing = false;

  std::map<std::string, CLI::App*> subs;
  std::map<std::string, CLI::Option*> seed_opts;
  for (const Verb& v : kVerbs) {
    CLI::App* sub = app.add_subcommand(v.name, v.help);
    auto* cfg = sub->add_option("--config", config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
    if (v.config_required) cfg->required();
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    seed_opts[v.name] = sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--workers", workers, "parallel workers for pairs/replicates")->check(CLI::PositiveNumber);
    sub->add_flag("--full-scale", full_scale, "use the full-size dimensions and replicate counts");
    sub->add_flag("--no-timing", no_timing, "write wall_ms as 0 so reruns compare byte-for-byte");
    subs[v.name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  std::string verb;
  const char* default_kind = nullptr;
  for (const Verb& v : kVerbs) {
    if (subs[v.name]->parsed()) {
      verb = v.name;
      default_kind = v.default_kind;
    }
  }

  try {
    nlohmann::json config = config_path.empty() ? nlohmann::json::object() : vfalign::jsonio::read_file(config_path);
    if (!config.is_object()) throw vfalign::ConfigError("config: expected a JSON object");
    if (!config.contains("experiment")) config["experiment"] = default_kind;
    if (!config["experiment"].is_string()) throw vfalign::ConfigError("experiment: expected a string");
    if (!kind_allowed(verb, config["experiment"].get<std::string>())) {
      throw vfalign::ConfigError(verb + ": experiment kind '" + config["experiment"].get<std::string>() +
                                 "' is not handled by this verb");
    }
    vfalign::RunOptions opts;
    opts.workers = workers;
    opts.full_scale = full_scale;
    if (seed_opts[verb]->count() > 0) opts.seed = seed;

    vfalign::ExperimentOutput out = dispatch(verb, config, opts);
    for (const auto& path : vfalign::write_output(out_dir, verb, out, !no_timing)) {
      std::cerr << "wrote " << path << '\n';
    }
    std::cout << vfalign::to_csv(out.rows, !no_timing);
    if (verb == "invert-check" || verb == "svcca" || verb == "sign-grid") {
      nlohmann::json s = out.summary;
      s.erase("matrices");
      std::cout << s.dump(2) << '\n';
    }
    return 0;
  } catch (const vfalign::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const vfalign::ParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const vfalign::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const vfalign::IterationLimitError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
