#include "vfalign/experiments.hpp"
#include "vfalign/json_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace vfalign;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json tiny_train(int batches = 30) { return {{"batches", batches}, {"restarts", 1}, {"eval_samples", 500}}; }

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("vfalign_exp_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 2D i-ResNet that is exactly linear on |x| < 20: the first two hidden units
// never switch off there and the bias is cancelled at the output.
IResNet affine_net(Matrix* Q) {
  IResNet net = IResNet::identity_init(2, 1, 0.99, 0);
  ResidualBlock& b = net.mutable_blocks()[0];
  b.W1.setZero();
  b.W1.topRows(2) << 0.5, 0.3, 0.0, 0.4;
  b.b1.setZero();
  b.b1(0, 0) = 20.0;
  b.b1(0, 1) = 20.0;
  b.W2.setZero();
  b.W2.leftCols(2) << 0.6, 0.0, 0.2, 0.5;
  b.b2 = -(b.W2 * b.b1.transpose()).transpose();
  *Q = Matrix::Identity(2, 2) + b.W2.leftCols(2) * b.W1.topRows(2);
  return net;
}

#ifdef VFALIGN_CLI_PATH
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(VFALIGN_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

}  // namespace

TEST(Csv, HeaderAndRowLayout) {
  PairResult r;
  r.experiment = "x";
  r.i = 1;
  r.j = 2;
  r.seed = 7;
  r.sim_forward = 0.5;
  r.sim_backward = 0.25;
  r.similarity = 0.25;
  r.batches = 10;
  r.restarts = 3;
  r.wall_ms = 12.5;
  const std::string csv = to_csv({r});
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "experiment,i,j,seed,sim_forward,sim_backward,similarity,batches,restarts,wall_ms");
  EXPECT_EQ(csv_row(r), "x,1,2,7,0.5,0.25,0.25,10,3,12.5");
  EXPECT_EQ(csv_row(r, false), "x,1,2,7,0.5,0.25,0.25,10,3,0");
  r.similarity = std::nan("");
  EXPECT_NE(csv_row(r).find(",nan,"), std::string::npos);
  EXPECT_TRUE(to_json(r)["similarity"].is_null());
}

TEST(Csv, DoublesRoundTrip) {
  PairResult r;
  r.similarity = 0.1 + 0.2;
  const std::string row = csv_row(r);
  std::vector<std::string> cells;
  std::stringstream ss(row);
  for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
  EXPECT_EQ(std::stod(cells[6]), 0.1 + 0.2);
}

TEST(Suite, IdentityConjugateIsSelfAlignment) {
  json cfg = {{"experiment", "conjugate-pair"}, {"family", "vdp"}, {"replicates", 2},
              {"conjugate", "identity"},        {"train", tiny_train(20)}, {"seed", 1}};
  ExperimentOutput out = run_experiment(cfg);
  ASSERT_EQ(out.rows.size(), 2u);
  for (const auto& r : out.rows) {
    EXPECT_EQ(r.status, "ok");
    EXPECT_GE(r.similarity, 0.99);
  }
  EXPECT_EQ(out.notes["build_id"], build_id());
  EXPECT_TRUE(out.notes.contains("batch_unit"));
}

TEST(Suite, OutputIsIndependentOfWorkerCount) {
  json cfg = {{"experiment", "conjugate-pair"}, {"family", "pitchfork"}, {"replicates", 3},
              {"train", tiny_train(10)},         {"seed", 2}};
  RunOptions one, three;
  three.workers = 3;
  EXPECT_EQ(to_csv(run_experiment(cfg, one).rows, false), to_csv(run_experiment(cfg, three).rows, false));
}

TEST(SignGrid, MatrixIsSymmetric) {
  json cfg = {{"experiment", "sign-grid"}, {"dim", 2}, {"group_count", 3}, {"pairs_per_cell", 1},
              {"train", tiny_train(10)},   {"seed", 3}};
  ExperimentOutput out = run_sign_grid(cfg);
  const json& m = out.summary["matrices"]["groups"];
  ASSERT_TRUE(m.is_array());
  for (std::size_t a = 0; a < m.size(); ++a) {
    for (std::size_t b = 0; b < m.size(); ++b) EXPECT_EQ(m[a][b].dump(), m[b][a].dump());
  }
  EXPECT_TRUE(out.summary.contains("levels"));
  EXPECT_TRUE(out.summary.contains("strictly_decreasing"));
}

TEST(PairwiseMatrix, SelfPairsAndSymmetry) {
  json vdp = {{"kind", "vdp"}, {"mu", 1.0}, {"name", "a"}};
  json conj = {{"kind", "conjugate"}, {"base", {{"kind", "vdp"}, {"mu", 1.0}}}, {"Q", "orthogonal"}, {"seed", 2},
               {"name", "b"}};
  json cfg = {{"experiment", "pairwise-matrix"},
              {"models", {vdp, conj}},
              {"sampler", {{"kind", "vdp_box"}}},
              {"include_self", true},
              {"ensemble", {{"trials", 30}, {"horizon", 2.0}}},
              {"train", tiny_train(20)},
              {"seed", 4}};
  ExperimentOutput out = run_pairwise_matrix(cfg);
  const json& d = out.summary["matrices"]["alignment"];
  const json& c = out.summary["matrices"]["svcca"];
  for (int k = 0; k < 2; ++k) {
    EXPECT_GE(d[k][k].get<double>(), 0.99);
    EXPECT_NEAR(c[k][k].get<double>(), 1.0, 1e-9);
  }
  EXPECT_EQ(d[0][1].dump(), d[1][0].dump());
  EXPECT_EQ(c[0][1].dump(), c[1][0].dump());
  EXPECT_EQ(out.rows.size(), 6u);  // 3 alignment pairs then 3 SVCCA pairs
}

TEST(PairwiseMatrix, UnreadableModelIsSkipped) {
  auto dir = scratch("models");
  std::ofstream(dir / "broken.json") << "{ not json";
  json cfg = {{"experiment", "pairwise-matrix"},
              {"models", {(dir / "broken.json").string(), json{{"kind", "vdp"}, {"mu", 1.0}}}},
              {"sampler", {{"kind", "vdp_box"}}},
              {"include_self", true},
              {"svcca", false},
              {"train", tiny_train(5)}};
  ExperimentOutput out = run_pairwise_matrix(cfg);
  EXPECT_EQ(out.summary["skipped_models"].size(), 1u);
  EXPECT_EQ(out.rows.size(), 1u);
  fs::remove_all(dir);
}

TEST(FieldGrid, IdentityNetPushesSourceField) {
  VanDerPol f(1.0);
  IResNet id = IResNet::identity_init(2, 3, 0.99, 1);
  FieldGrid g = field_grid(f, &id, RowVector{{-2.0, -1.0}}, RowVector{{2.0, 1.0}}, 5, 4);
  ASSERT_EQ(g.points.rows(), 20);
  EXPECT_EQ(g.points(1, 0) - g.points(0, 0), 1.0);  // x varies fastest
  EXPECT_EQ(*g.mapped, g.points);
  EXPECT_EQ(*g.pushed, g.field);
}

TEST(FieldGrid, LinearOracleMatchesTargetField) {
  Matrix Q;
  IResNet net = affine_net(&Q);
  Matrix A(2, 2);
  A << -0.5, 1.0, -1.0, -0.2;
  FieldPtr f = std::make_shared<LinearField>(LinearSystemSpec{A, std::nullopt});
  FieldPtr g = make_conjugate(f, Q);
  FieldGrid grid = field_grid(*f, &net, RowVector{{-3.0, -3.0}}, RowVector{{3.0, 3.0}}, 7, 7);
  EXPECT_LE((*grid.mapped - grid.points * Q.transpose()).norm(), 1e-12);
  EXPECT_LE((*grid.pushed - g->eval(*grid.mapped)).norm(), 1e-12);
}

TEST(FieldGrid, JsonRoundTrip) {
  Pitchfork f(2.0);
  IResNet net = IResNet::random_warp(2, 2, 0.99, 0.5, 3);
  FieldGrid g = field_grid(f, &net, RowVector{{-2.0, -1.0}}, RowVector{{2.0, 1.0}}, 4, 3, 2, 1.0, 0.01, 5);
  FieldGrid back = parse_field_grid(to_json(g));
  EXPECT_EQ(back.nx, 4);
  EXPECT_EQ(back.points, g.points);
  EXPECT_EQ(back.field, g.field);
  EXPECT_EQ(*back.pushed, *g.pushed);
  ASSERT_EQ(back.trajectories.size(), 2u);
  EXPECT_EQ(back.trajectories[1], g.trajectories[1]);
  EXPECT_THROW(parse_field_grid(json{{"format_version", 2}}), ParseError);
}

TEST(Config, ValidationFailsBeforeWork) {
  EXPECT_THROW(run_experiment({{"experiment", "sign-grid"}, {"dim", -1}}), ConfigError);
  EXPECT_THROW(run_experiment({{"experiment", "sign-grid"}, {"dimm", 3}}), ConfigError);
  EXPECT_THROW(run_experiment({{"experiment", "nope"}}), ConfigError);
  EXPECT_THROW(run_experiment({{"experiment", "conjugate-pair"}, {"family", "lorenz"}}), ConfigError);
  EXPECT_THROW(run_experiment({{"experiment", "conjugate-pair"}, {"family", "vdp"}, {"train", {{"lr", -1}}}}),
               ConfigError);
  EXPECT_THROW(run_experiment({{"experiment", "linear-equivalence-class"}, {"class", "similar"}}), ConfigError);
}

TEST(InvertCheck, RandomWarpInvertsAccurately) {
  ExperimentOutput out =
      run_invert_check({{"random", {{"dim", 4}, {"layers", 5}, {"cap", 0.99}, {"w2_scale", 1.0}}}, {"points", 50}});
  EXPECT_LT(out.summary["max_error"].get<double>(), 1e-6);
  ASSERT_EQ(out.summary["max_contraction"].size(), 5u);
  for (const auto& ratio : out.summary["max_contraction"]) EXPECT_LE(ratio.get<double>(), 0.99 * 0.99);
}

TEST(Outputs, WrittenFilesCarryProvenance) {
  auto dir = scratch("outputs");
  json cfg = {{"experiment", "conjugate-pair"}, {"family", "vdp"}, {"replicates", 1}, {"train", tiny_train(5)}};
  ExperimentOutput out = run_experiment(cfg);
  auto paths = write_output(dir.string(), "suite", out, false);
  ASSERT_GE(paths.size(), 2u);
  json side = jsonio::read_file((dir / "suite.json").string());
  EXPECT_EQ(side["config"], cfg);
  EXPECT_TRUE(side["notes"].contains("build_id"));
  EXPECT_TRUE(side["resolved"].contains("seed"));
  std::string csv = slurp(dir / "suite.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kCsvHeader);
  fs::remove_all(dir);
}

#ifdef VFALIGN_CLI_PATH
TEST(Cli, ConfigErrorsExitWithTwo) {
  auto dir = scratch("cli_err");
  std::ofstream(dir / "bad.json") << R"({"experiment":"sign-grid","dim":-1})";
  std::ofstream(dir / "kind.json") << R"({"experiment":"svcca-compare"})";
  std::ofstream(dir / "broken.json") << "{";
  EXPECT_EQ(run_cli("sign-grid --config " + (dir / "bad.json").string() + " --out " + dir.string(), dir / "log"), 2);
  EXPECT_NE(slurp(dir / "log").find("config error"), std::string::npos);
  EXPECT_EQ(run_cli("sign-grid --config " + (dir / "kind.json").string() + " --out " + dir.string(), dir / "log"), 2);
  EXPECT_EQ(run_cli("align --config " + (dir / "broken.json").string() + " --out " + dir.string(), dir / "log"), 2);
  EXPECT_EQ(run_cli("align --config " + (dir / "missing.json").string(), dir / "log"), 2);
  EXPECT_EQ(run_cli("bogus-verb", dir / "log"), 2);
  fs::remove_all(dir);
}

TEST(Cli, RerunsAreByteIdenticalWithoutTiming) {
  auto dir = scratch("cli_det");
  std::ofstream(dir / "cfg.json")
      << R"({"experiment":"conjugate-pair","family":"pitchfork","replicates":2,"train":{"batches":10,"restarts":1,"eval_samples":500},"seed":5})";
  for (const char* run : {"a", "b"}) {
    ASSERT_EQ(run_cli("suite --no-timing --config " + (dir / "cfg.json").string() + " --out " + (dir / run).string(),
                      dir / "log"),
              0)
        << slurp(dir / "log");
  }
  EXPECT_EQ(slurp(dir / "a" / "suite.csv"), slurp(dir / "b" / "suite.csv"));
  EXPECT_EQ(slurp(dir / "a" / "suite.json"), slurp(dir / "b" / "suite.json"));
  EXPECT_FALSE(slurp(dir / "a" / "suite.csv").empty());
  fs::remove_all(dir);
}

TEST(Cli, SeedOverrideChangesResults) {
  auto dir = scratch("cli_seed");
  std::ofstream(dir / "cfg.json")
      << R"({"experiment":"conjugate-pair","family":"vdp","replicates":1,"train":{"batches":5,"restarts":1,"eval_samples":300}})";
  ASSERT_EQ(run_cli("suite --no-timing --seed 1 --config " + (dir / "cfg.json").string() + " --out " + (dir / "a").string(),
                    dir / "log"),
            0);
  ASSERT_EQ(run_cli("suite --no-timing --seed 2 --config " + (dir / "cfg.json").string() + " --out " + (dir / "b").string(),
                    dir / "log"),
            0);
  EXPECT_NE(slurp(dir / "a" / "suite.csv"), slurp(dir / "b" / "suite.csv"));
  fs::remove_all(dir);
}
#endif
