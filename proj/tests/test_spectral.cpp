#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "randlora/spectral.hpp"
#include "randlora/trainkit.hpp"

using namespace randlora;

namespace {

AdapterSpec make(AdapterKind kind) {
  AdapterSpec s;
  s.kind = kind;
  return s;
}

} // namespace

TEST(Svd, ReconstructsAndMatchesGramOracle) {
  std::mt19937_64 gen(1);
  for (const auto [D, d] : {std::pair{12, 7}, std::pair{5, 9}, std::pair{16, 16}}) {
    const Matrix W = oracle::gaussian(gen, D, d);
    const auto f = svd(W);
    EXPECT_LT((f.reconstruct() - W).norm(), 1e-12 * W.norm());
    const int k = std::min(D, d);
    EXPECT_LT((f.U.transpose() * f.U - Matrix::Identity(k, k)).norm(), 1e-12);
    EXPECT_LT((f.V.transpose() * f.V - Matrix::Identity(k, k)).norm(), 1e-12);
    const Vector ref = oracle::singular_values_gram(W);
    EXPECT_LT((f.sigma - ref.head(k)).norm(), 1e-10);
    for (int i = 1; i < k; ++i) EXPECT_GE(f.sigma[i - 1], f.sigma[i]);
  }
}

TEST(Svd, SignConvention) {
  std::mt19937_64 gen(2);
  const Matrix W = oracle::gaussian(gen, 8, 6);
  const auto a = svd(W);
  const auto b = svd(-W);
  for (int i = 0; i < 6; ++i) {
    Eigen::Index arg = 0;
    a.U.col(i).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(a.U(arg, i), 0.0);
    EXPECT_LT((a.U.col(i) - b.U.col(i)).norm(), 1e-10);
    EXPECT_LT((a.V.col(i) + b.V.col(i)).norm(), 1e-10);
  }
}

TEST(Svd, DiagonalExample) {
  Matrix W = Matrix::Zero(3, 3);
  W(0, 0) = 1;
  W(1, 1) = -3;
  W(2, 2) = 2;
  const Vector s = singular_values(W);
  EXPECT_NEAR(s[0], 3, 1e-14);
  EXPECT_NEAR(s[1], 2, 1e-14);
  EXPECT_NEAR(s[2], 1, 1e-14);
}

TEST(Svd, RejectsNonFinite) {
  Matrix W = Matrix::Ones(3, 3);
  W(1, 2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(svd(W), NumericalError);
  EXPECT_THROW(singular_values(W), NumericalError);
}

TEST(Rank, NumericalRank) {
  std::mt19937_64 gen(3);
  for (int k = 0; k <= 6; ++k) {
    const Matrix W = k == 0 ? Matrix(Matrix::Zero(10, 8)) : Matrix(oracle::gaussian(gen, 10, k) * oracle::gaussian(gen, k, 8));
    EXPECT_EQ(numerical_rank(W), k);
  }
  Matrix tiny = Matrix::Identity(4, 4);
  tiny(3, 3) = 1e-12;
  EXPECT_EQ(numerical_rank(tiny), 3);
  EXPECT_EQ(numerical_rank(tiny, 1e-14), 4);
}

TEST(Blocks, SumToTargetWithBoundedRank) {
  std::mt19937_64 gen(4);
  const Matrix W = oracle::gaussian(gen, 11, 10);
  for (const int r : {1, 3, 4, 10}) {
    const auto blocks = block_decomposition(W, r);
    EXPECT_EQ(static_cast<int>(blocks.size()), (10 + r - 1) / r);
    Matrix sum = Matrix::Zero(11, 10);
    for (const auto& b : blocks) {
      EXPECT_LE(numerical_rank(b), r);
      sum += b;
    }
    EXPECT_LT((sum - W).norm(), 1e-12 * W.norm());
    // The leading block is the best rank-r approximation.
    const Vector s = oracle::singular_values_gram(W);
    EXPECT_NEAR((W - blocks[0]).squaredNorm(), eckart_young_bound(s, r), 1e-9);
  }
  EXPECT_THROW(block_decomposition(W, 0), DimensionError);
}

TEST(EckartYoung, TailSum) {
  const std::vector<double> s{1.0, 3.0, 2.0};
  EXPECT_DOUBLE_EQ(eckart_young_bound(s, 0), 14.0);
  EXPECT_DOUBLE_EQ(eckart_young_bound(s, 1), 5.0);
  EXPECT_DOUBLE_EQ(eckart_young_bound(s, 2), 1.0);
  EXPECT_DOUBLE_EQ(eckart_young_bound(s, 5), 0.0);
  EXPECT_DOUBLE_EQ(eckart_young_bound(singular_values(Matrix::Identity(8, 8)), 1), 7.0);
}

TEST(BlockBound, BoundFromBlockErrors) {
  const std::vector<double> eps{0.1, 0.4, 0.2};
  EXPECT_NEAR(block_error_bound(eps), 1.2, 1e-15);
  EXPECT_TRUE(block_bound_check(eps, 0.7).holds);
  EXPECT_FALSE(block_bound_check(eps, 1.3).holds);
  EXPECT_EQ(block_error_bound(std::vector<double>{}), 0.0);
}

TEST(BlockBound, HoldsForPerturbedBlocks) {
  std::mt19937_64 gen(5);
  const Matrix W = oracle::gaussian(gen, 9, 8);
  const int r = 3;
  const auto blocks = block_decomposition(W, r);
  std::vector<Matrix> approx;
  for (const auto& b : blocks) approx.push_back(b + 0.01 * oracle::gaussian(gen, 9, 8));
  const auto check = block_bound_check(W, r, approx);
  EXPECT_TRUE(check.holds);
  EXPECT_EQ(check.block_errors.size(), blocks.size());
  EXPECT_GT(check.total_error, 0.0);
  approx.pop_back();
  EXPECT_THROW(block_bound_check(W, r, approx), DimensionError);
}

TEST(Fit, RealizableTargetConverges) {
  std::mt19937_64 gen(6);
  const auto set = generate_basis_set(3, Distribution::normal(), 3, 2, 8, 6);
  const auto spec = make(RandLoRASpec{2, 3});
  Adapter truth = make_adapter(spec, set, 8, 6);
  truth.set_params(oracle::gaussian(gen, static_cast<int>(truth.params().size()), 1));
  const auto report = fit_adapter(truth.delta_weight(), spec, set, OptimizerConfig{});
  EXPECT_LT(report.final_sq_error, 1e-12);
}

TEST(Fit, LoRANeverBeatsEckartYoung) {
  std::mt19937_64 gen(7);
  const auto set = generate_basis_set(1, Distribution::normal(), 1, 1, 10, 10);
  OptimizerConfig opt;
  opt.max_iters = 1500;
  for (int t = 0; t < 3; ++t) {
    const Matrix target = oracle::gaussian(gen, 10, 10);
    for (const int r : {1, 3}) {
      const auto rep = fit_adapter(target, make(LoRASpec{r}), set, opt);
      EXPECT_GE(rep.final_sq_error, rep.bound_ey - 1e-6);
      EXPECT_NEAR(rep.bound_ey, eckart_young_bound(oracle::singular_values_gram(target), r), 1e-9);
      EXPECT_EQ(rep.effective_rank, r);
    }
  }
}

TEST(Fit, IdentityExample) {
  const auto set = generate_basis_set(0, Distribution::normal(), 8, 1, 8, 8);
  const Matrix I = Matrix::Identity(8, 8);
  const auto lora = fit_adapter(I, make(LoRASpec{1}), set, OptimizerConfig{}, "identity:8");
  const auto rl = fit_adapter(I, make(RandLoRASpec{1, 8}), set, OptimizerConfig{}, "identity:8");
  EXPECT_GE(lora.final_sq_error, 7.0 - 1e-3);
  EXPECT_LT(rl.final_sq_error, 0.1);
  EXPECT_EQ(rl.target_id, "identity:8");
  EXPECT_EQ(lora.param_count, 16);
  EXPECT_EQ(rl.param_count, 72);
}

TEST(Fit, TraceIsBestSoFar) {
  std::mt19937_64 gen(8);
  const auto set = generate_basis_set(2, Distribution::normal(), 4, 2, 6, 6);
  OptimizerConfig opt;
  opt.max_iters = 300;
  const auto rep = fit_adapter(oracle::gaussian(gen, 6, 6), make(RandLoRASpec{2, 3}), set, opt);
  ASSERT_FALSE(rep.trace.empty());
  EXPECT_EQ(rep.trace.front().iteration, 0);
  for (std::size_t i = 1; i < rep.trace.size(); ++i) {
    EXPECT_LE(rep.trace[i].error, rep.trace[i - 1].error);
    EXPECT_GT(rep.trace[i].iteration, rep.trace[i - 1].iteration);
  }
  EXPECT_EQ(rep.trace.back().error, rep.final_sq_error);
  EXPECT_LE(rep.iterations, 300);
}

TEST(Fit, AdapterEndsAtBestParameters) {
  std::mt19937_64 gen(9);
  const auto set = generate_basis_set(2, Distribution::normal(), 4, 2, 6, 6);
  const Matrix target = oracle::gaussian(gen, 6, 6);
  Adapter a = make_adapter(make(LoRASpec{2}), set, 6, 6);
  OptimizerConfig opt;
  opt.max_iters = 200;
  const auto rep = fit(a, target, opt);
  EXPECT_DOUBLE_EQ((target - a.delta_weight()).squaredNorm(), rep.final_sq_error);
}

TEST(Fit, DivergenceIsReported) {
  std::mt19937_64 gen(10);
  const auto set = generate_basis_set(2, Distribution::normal(), 1, 1, 6, 6);
  OptimizerConfig opt;
  opt.kind = OptimizerKind::SGD;
  opt.step_size = 50.0;
  opt.max_iters = 500;
  EXPECT_THROW(fit_adapter(oracle::gaussian(gen, 6, 6), make(FullFineTuneSpec{}), set, opt), FitDivergenceError);
}

TEST(Fit, ShapeMismatch) {
  const auto set = generate_basis_set(2, Distribution::normal(), 1, 1, 6, 6);
  Adapter a = make_adapter(make(LoRASpec{1}), set, 6, 6);
  EXPECT_THROW(fit(a, Matrix::Zero(5, 6), OptimizerConfig{}), DimensionError);
}

TEST(Optimizer, ConfigValidation) {
  OptimizerConfig opt;
  opt.step_size = -1;
  EXPECT_THROW(opt.validate(), UsageError);
  opt = {};
  opt.max_iters = -1;
  EXPECT_THROW(opt.validate(), UsageError);
}
