#include "oracles.hpp"
#include "vfalign/dynsys.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace vfalign;

namespace {

RowVector pt(double a, double b) {
  RowVector r(2);
  r << a, b;
  return r;
}

std::vector<std::complex<double>> eigenvalues(const Matrix& a) {
  Eigen::MatrixXd plain = a;
  Eigen::EigenSolver<Eigen::MatrixXd> es(plain, false);
  std::vector<std::complex<double>> out;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) out.push_back(es.eigenvalues()(i));
  return out;
}

int positive_real_parts(const Matrix& a) {
  int count = 0;
  for (auto l : eigenvalues(a)) count += l.real() > 0 ? 1 : 0;
  return count;
}

Matrix rotation(double angle) {
  Matrix r(2, 2);
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

}  // namespace

TEST(VanDerPol, OriginIsEquilibrium) {
  VanDerPol f(2.0);
  EXPECT_EQ(f.eval_point(pt(0, 0)), pt(0, 0));
}

TEST(VanDerPol, HandEvaluation) {
  VanDerPol f(2.0);
  // ẋ₂ = 2·(1 − 1)·1 − 1
  EXPECT_EQ(f.eval_point(pt(1, 1)), pt(1, -1));
  EXPECT_EQ(f.eval_point(pt(2, 0.5)), pt(0.5, 2.0 * (1 - 4) * 0.5 - 2));
}

TEST(VanDerPol, DimensionMismatch) {
  VanDerPol f(1.0);
  EXPECT_THROW(f.eval(Matrix::Zero(3, 3)), DimensionError);
}

TEST(Pitchfork, EquilibriaAndStability) {
  const double mu = 4.0;
  Pitchfork f(mu);
  EXPECT_EQ(f.eval_point(pt(2, 0)), pt(0, 0));
  EXPECT_EQ(f.eval_point(pt(-2, 0)), pt(0, 0));
  EXPECT_EQ(f.eval_point(pt(0, 0)), pt(0, 0));
  for (double s : {-1.0, 1.0}) {
    for (auto l : eigenvalues(f.jacobian(pt(s * std::sqrt(mu), 0)))) EXPECT_LT(l.real(), 0.0);
  }
  EXPECT_EQ(positive_real_parts(f.jacobian(pt(0, 0))), 1);
  // Away from the three equilibria the field is nonzero.
  EXPECT_GT(f.eval_point(pt(1, 0)).norm(), 0.0);
  EXPECT_GT(f.eval_point(pt(2, 0.1)).norm(), 0.0);
}

TEST(FieldJacobian, MatchesFiniteDifferences) {
  std::vector<FieldPtr> fields = {std::make_shared<VanDerPol>(1.5), std::make_shared<Pitchfork>(2.0),
                                  std::make_shared<LowRankRNN>(random_lowrank_rnn(2, 1, 3))};
  for (const auto& f : fields) {
    RowVector x = pt(0.3, -0.7);
    Matrix J = f->jacobian(x);
    for (int k = 0; k < 2; ++k) {
      RowVector e = RowVector::Zero(2);
      e(k) = 1e-6;
      RowVector col = (f->eval_point(x + e) - f->eval_point(x - e)) / 2e-6;
      EXPECT_LE((J.col(k).transpose() - col).norm(), 1e-7);
    }
  }
}

TEST(Conjugate, IdentityQLeavesFieldUnchanged) {
  FieldPtr f = std::make_shared<VanDerPol>(1.0);
  FieldPtr g = make_conjugate(f, Matrix::Identity(2, 2));
  std::mt19937_64 rng(1);
  Matrix x = oracle::random_matrix(20, 2, rng, 2.0);
  EXPECT_LE((g->eval(x) - f->eval(x)).norm(), 1e-14);
}

TEST(Conjugate, ScalarQCommutesWithLinear) {
  Matrix A(2, 2);
  A << -1, 2, -3, 0.5;
  FieldPtr f = std::make_shared<LinearField>(LinearSystemSpec{A, std::nullopt});
  FieldPtr g = make_conjugate(f, 2.0 * Matrix::Identity(2, 2));
  std::mt19937_64 rng(2);
  Matrix x = oracle::random_matrix(20, 2, rng);
  Matrix expected = x * A.transpose();
  EXPECT_LE((g->eval(x) - expected).norm(), 1e-13);
}

TEST(Conjugate, RotatedVanDerPolByComposition) {
  FieldPtr f = std::make_shared<VanDerPol>(2.0);
  const Matrix R = rotation(M_PI / 2);
  FieldPtr g = make_conjugate(f, R);
  std::mt19937_64 rng(3);
  Matrix y = oracle::random_matrix(20, 2, rng, 2.0);
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    Eigen::Vector2d back = R.transpose() * y.row(r).transpose();  // R⁻¹ = Rᵀ
    Eigen::Vector2d expected = R * f->eval_point(back.transpose()).transpose();
    EXPECT_LE((g->eval_point(y.row(r)).transpose() - expected).norm(), 1e-12);
  }
}

TEST(Conjugate, EquilibriaMoveWithQ) {
  FieldPtr f = std::make_shared<Pitchfork>(3.0);
  Matrix Q = random_well_conditioned(2, 9);
  FieldPtr g = make_conjugate(f, Q);
  for (double s : {-1.0, 0.0, 1.0}) {
    Eigen::Vector2d eq(s * std::sqrt(3.0), 0.0);
    RowVector image = (Q * eq).transpose();
    EXPECT_LE(g->eval_point(image).norm(), 1e-12);
  }
}

TEST(Conjugate, NearSingularRejected) {
  FieldPtr f = std::make_shared<VanDerPol>(1.0);
  Matrix Q(2, 2);
  Q << 1, 2, 0.5, 1.0 + 1e-12;
  EXPECT_THROW(make_conjugate(f, Q), ContractError);
}

TEST(LinearSigns, TwoByTwoAllNegative) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Matrix A = random_linear_with_signs(2, 0, Pairing::Real, s).A;
    EXPECT_LT(A.trace(), 0.0);
    EXPECT_GT(A.determinant(), 0.0);
  }
}

TEST(LinearSigns, RequestedPatternIsMeasured) {
  for (int n = 1; n <= 8; ++n) {
    for (int n_pos = 0; n_pos <= n; ++n_pos) {
      Matrix A = random_linear_with_signs(n, n_pos, Pairing::Real, 100 * n + n_pos).A;
      EXPECT_EQ(positive_real_parts(A), n_pos) << "n=" << n << " n_pos=" << n_pos;
      for (auto l : eigenvalues(A)) {
        EXPECT_GE(std::abs(l.real()), 0.5 - 1e-8);
        EXPECT_LE(std::abs(l.real()), 2.0 + 1e-8);
      }
    }
  }
}

TEST(LinearSigns, ComplexPairsHaveImaginaryParts) {
  Matrix A = random_linear_with_signs(6, 2, Pairing::Complex, 4).A;
  EXPECT_EQ(positive_real_parts(A), 2);
  for (auto l : eigenvalues(A)) {
    EXPECT_GE(std::abs(l.imag()), 0.5 - 1e-8);
    EXPECT_LE(std::abs(l.imag()), 2.0 + 1e-8);
  }
  EXPECT_THROW(random_linear_with_signs(5, 1, Pairing::Complex, 0), ContractError);
}

TEST(LinearSigns, AllPositiveNegatesToAllNegative) {
  Matrix A = random_linear_with_signs(5, 5, Pairing::Real, 8).A;
  EXPECT_EQ(positive_real_parts(A), 5);
  EXPECT_EQ(positive_real_parts(-A), 0);
}

TEST(LinearSigns, MixedPatternCounts) {
  EigenPattern pat{6, 3, 1, 1};
  Matrix A = random_linear_with_pattern(pat, 5).A;
  EXPECT_EQ(positive_real_parts(A), 3);
  int complex_count = 0;
  for (auto l : eigenvalues(A)) complex_count += std::abs(l.imag()) > 1e-6 ? 1 : 0;
  EXPECT_EQ(complex_count, 4);
}

TEST(LinearSigns, OrthogonalConjugateKeepsSpectrum) {
  Matrix A = random_linear_with_signs(4, 2, Pairing::Real, 6).A;
  Matrix Q = random_orthogonal(4, 7);
  EXPECT_LE((Q * Q.transpose() - Matrix::Identity(4, 4)).norm(), 1e-12);
  auto a = eigenvalues(A), b = eigenvalues(Q * A * Q.transpose());
  auto key = [](std::complex<double> x, std::complex<double> y) {
    return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag();
  };
  std::sort(a.begin(), a.end(), key);
  std::sort(b.begin(), b.end(), key);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LE(std::abs(a[i] - b[i]), 1e-9);
}

TEST(RandomMatrices, PositiveDeterminantAndConditioning) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Matrix W = random_well_conditioned(5, s);
    EXPECT_GT(W.determinant(), 0.0);
    auto sv = oracle::jacobi_singular_values(W);
    EXPECT_LE(sv.front(), 2.0 + 1e-9);
    EXPECT_GE(sv.back(), 0.5 - 1e-9);
    EXPECT_GT(random_gaussian_positive_det(5, s).determinant(), 1e-9);
    EXPECT_GT(random_orthogonal(5, s).determinant(), 0.0);
  }
}

TEST(LowRankRNN, RandomPartSpectralRadius) {
  double mean = 0.0;
  for (std::uint64_t s = 0; s < 30; ++s) {
    LowRankRNNSpec spec = random_lowrank_rnn(64, 2, s);
    double radius = 0.0;
    for (auto l : eigenvalues(spec.J)) radius = std::max(radius, std::abs(l));
    mean += radius / 30.0;
  }
  EXPECT_NEAR(mean, 0.5, 0.1);
}

TEST(LowRankRNN, EvalFormulaAndRank) {
  LowRankRNNSpec spec = random_lowrank_rnn(6, 2, 11);
  Matrix lowrank = spec.m * spec.nvec.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu{Eigen::MatrixXd(lowrank)};
  EXPECT_LE(lu.rank(), 2);
  LowRankRNN f(spec);
  std::mt19937_64 rng(1);
  Matrix x = oracle::random_matrix(5, 6, rng);
  Matrix expected = -x + Matrix(x.array().tanh()) * (spec.J + lowrank).transpose();
  EXPECT_LE((f.eval(x) - expected).norm(), 1e-12);
}

TEST(LowRankRNN, ZeroRankIsPureRandomField) {
  LowRankRNNSpec spec = random_lowrank_rnn(5, 0, 3);
  EXPECT_EQ(spec.m.cols(), 0);
  EXPECT_EQ(spec.W(), spec.J);
}

TEST(LowRankRNN, SeedDeterminism) {
  EXPECT_EQ(random_lowrank_rnn(8, 2, 5).W(), random_lowrank_rnn(8, 2, 5).W());
  EXPECT_NE(random_lowrank_rnn(8, 2, 5).W(), random_lowrank_rnn(8, 2, 6).W());
}

TEST(ContextRNN, ReducesToPlainRateModel) {
  ContextRNNSpec spec;
  spec.tau = 2.0;
  spec.W = Matrix(2, 2);
  spec.W << 0.5, -1, 1, 0.25;
  spec.B1 = Matrix::Ones(2, 1);
  spec.u = RowVector::Zero(1);
  ContextRNN f(spec);
  RowVector x = pt(0.4, -0.3);
  RowVector t = x.array().tanh();
  RowVector expected = (-x + t * spec.W.transpose()) / 2.0;
  EXPECT_LE((f.eval_point(x) - expected).norm(), 1e-15);
}

TEST(ContextRNN, WTypeHandCase) {
  ContextRNNSpec spec;
  spec.tau = 1.0;
  spec.W = Matrix::Identity(2, 2);
  spec.B1 = Matrix(2, 1);
  spec.B1 << 1, 0;
  spec.u = RowVector::Constant(1, 0.5);
  spec.Gamma = Matrix(2, 2);
  *spec.Gamma << 0, 1, 0, 0;
  ContextRNN f(spec);
  // x = (atanh(0.5), 0): tanh x = (0.5, 0); (W+Γ)·tanh x = (0.5, 0); drive (0.5, 0)
  const double a = std::atanh(0.5);
  RowVector v = f.eval_point(pt(a, 0));
  EXPECT_NEAR(v(0), -a + 0.5 + 0.5, 1e-15);
  EXPECT_NEAR(v(1), 0.0, 1e-15);
  // x = (0, atanh(0.5)): Γ routes the second unit into the first.
  v = f.eval_point(pt(0, a));
  EXPECT_NEAR(v(0), 0.5 + 0.5, 1e-15);
  EXPECT_NEAR(v(1), -a + 0.5, 1e-15);
}

TEST(ContextRNN, WeightsFileRoundTrip) {
  ContextRNNSpec spec;
  spec.tau = 0.1;
  std::mt19937_64 rng(4);
  spec.W = oracle::random_matrix(3, 3, rng);
  spec.B1 = oracle::random_matrix(3, 2, rng);
  spec.u = oracle::random_matrix(1, 2, rng).row(0);
  spec.Gamma = oracle::random_matrix(3, 3, rng);
  const auto path = (std::filesystem::temp_directory_path() / "vfalign_rnn_test.json").string();
  save_rnn_weights(path, spec);
  ContextRNNSpec back = load_rnn_weights(path);
  std::remove(path.c_str());
  ContextRNN a(spec), b(back);
  Matrix x = oracle::random_matrix(7, 3, rng);
  EXPECT_EQ(a.eval(x), b.eval(x));
}

TEST(ContextRNN, SchemaErrors) {
  nlohmann::json j = {{"format_version", 1}, {"tau", 1.0}, {"W", {{1, 0}, {0, 1}, {1, 1}}},
                      {"B1", {{1}, {1}}},    {"u", {0}},   {"Gamma", nullptr}};
  EXPECT_THROW(parse_rnn_weights(j), DimensionError);
  j["W"] = {{1, 0}, {0, 1}};
  EXPECT_NO_THROW(parse_rnn_weights(j));
  j.erase("tau");
  try {
    parse_rnn_weights(j);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("tau"), std::string::npos);
  }
}

TEST(FieldSpec, JsonKinds) {
  auto vdp = field_from_json({{"kind", "vdp"}, {"mu", 2.0}});
  EXPECT_EQ(vdp->eval_point(pt(1, 1)), pt(1, -1));
  auto lin = field_from_json({{"kind", "linear"}, {"A", {{0, 1}, {-1, 0}}}, {"bias", {1, 0}}});
  EXPECT_EQ(lin->eval_point(pt(1, 0)), pt(1, -1));
  EXPECT_THROW(field_from_json({{"kind", "nope"}}), ParseError);
  EXPECT_THROW(field_from_json({{"kind", "vdp"}}), ParseError);
}

TEST(FieldTape, RecordedEvalMatchesPlainEval) {
  std::vector<FieldPtr> fields = {
      std::make_shared<VanDerPol>(1.5), std::make_shared<Pitchfork>(2.0),
      std::make_shared<LowRankRNN>(random_lowrank_rnn(2, 1, 3)),
      make_conjugate(std::make_shared<VanDerPol>(0.5), random_well_conditioned(2, 3)),
      std::make_shared<PushForwardField>(std::make_shared<VanDerPol>(1.0), IResNet::random_warp(2, 3, 0.9, 0.5, 4))};
  std::mt19937_64 rng(7);
  Matrix x = oracle::random_matrix(6, 2, rng), v = oracle::random_matrix(6, 2, rng);
  for (const auto& f : fields) {
    Tape t;
    Dual y = f->record(t, Dual{t.constant(x), t.constant(v)});
    EXPECT_LE((t.value(y.primal) - f->eval(x)).norm(), 1e-9);
    const double eps = 1e-6;
    Matrix fd = (f->eval(x + eps * v) - f->eval(x - eps * v)) / (2 * eps);
    EXPECT_LE((t.value(y.tangent) - fd).norm(), 1e-5 * std::max(1.0, fd.norm()));
  }
}
