#include <cmath>
#include <cstdint>
#include <random>

#include <gtest/gtest.h>

#include "randlora/randbasis.hpp"

using namespace randlora;

// Known-answer vectors published with the Random123 reference implementation.
TEST(Philox, KnownAnswerVectors) {
  using C = Philox4x32::Counter;
  using K = Philox4x32::Key;
  EXPECT_EQ(Philox4x32::apply(C{0, 0, 0, 0}, K{0, 0}), (C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(Philox4x32::apply(C{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, K{0xffffffff, 0xffffffff}),
            (C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(Philox4x32::apply(C{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, K{0xa4093822, 0x299f31d0}),
            (C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(Philox, UniformsInUnitInterval) {
  for (std::uint32_t i = 0; i < 5000; ++i) {
    const auto u = uniform_pair(11, {1, 2, i, 0});
    ASSERT_GE(u.u0, 0.0);
    ASSERT_LT(u.u0, 1.0);
    ASSERT_GE(u.u1, 0.0);
    ASSERT_LT(u.u1, 1.0);
  }
}

TEST(Philox, StreamsAreReproducible) {
  CounterStream a(5, 9);
  CounterStream b(5, 9);
  CounterStream c(5, 10);
  double diff = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    diff += std::abs(x - c.normal());
  }
  EXPECT_GT(diff, 1.0);
}

TEST(BasisSet, SameSeedSameBases) {
  const auto a = generate_basis_set(42, Distribution::normal(), 4, 3, 20, 12);
  const auto b = generate_basis_set(42, Distribution::normal(), 4, 3, 20, 12);
  const auto c = generate_basis_set(43, Distribution::normal(), 4, 3, 20, 12);
  for (int j = 0; j < 4; ++j) EXPECT_EQ(a.b_stack[j], b.b_stack[j]);
  EXPECT_EQ(a.a_shared, b.a_shared);
  EXPECT_NE(a.a_shared, c.a_shared);
  EXPECT_NE(a.b_stack[0], a.b_stack[1]);
}

TEST(BasisSet, Shapes) {
  const auto set = generate_basis_set(1, Distribution::uniform(), 5, 2, 17, 9);
  ASSERT_EQ(set.b_stack.size(), 5u);
  for (const auto& b : set.b_stack) {
    EXPECT_EQ(b.rows(), 17);
    EXPECT_EQ(b.cols(), 2);
  }
  EXPECT_EQ(set.a_shared.rows(), 2);
  EXPECT_EQ(set.a_shared.cols(), 9);
}

// Entries are keyed by coordinates, so a larger draw contains the smaller one
// up to the fan-dependent scale.
TEST(BasisSet, PrefixStableAcrossExtents) {
  for (const auto dist : {Distribution::normal(), Distribution::uniform(), Distribution::ternary(3)}) {
    const auto small = generate_basis_set(8, dist, 2, 3, 16, 10);
    const auto big = generate_basis_set(8, dist, 3, 3, 64, 20);
    const Matrix scaled = big.b_stack[1].topRows(16) * std::sqrt(64.0 / 16.0);
    EXPECT_LT((scaled - small.b_stack[1]).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(big.a_shared.leftCols(10), small.a_shared);
  }
}

TEST(BasisSet, EntryVarianceMatchesFan) {
  const int D = 400;
  const int r = 50;
  for (const auto dist : {Distribution::normal(), Distribution::uniform(), Distribution::ternary(4)}) {
    const auto set = generate_basis_set(3, dist, 2, r, D, 300);
    const Matrix& B = set.b_stack[0];
    const double var_b = B.squaredNorm() / static_cast<double>(B.size());
    const double var_a = set.a_shared.squaredNorm() / static_cast<double>(set.a_shared.size());
    // 20000 and 15000 samples; 5% is several standard errors for each family.
    EXPECT_NEAR(var_b * D, 1.0, 0.05) << to_string(dist);
    EXPECT_NEAR(var_a * r, 1.0, 0.06) << to_string(dist);
  }
}

TEST(BasisSet, TernaryMarginalsWithinThreeSigma) {
  for (const int s : {2, 3, 10, 27}) {
    const int rows = 500;
    const int cols = 200;
    const Matrix m = generate_matrix(77, Distribution::ternary(s), BasisStream::BStack, 0, rows, cols, 1);
    const double n = static_cast<double>(m.size());
    const double scale = std::sqrt(s / 2.0);
    const double neg = static_cast<double>((m.array() == -scale).count());
    const double pos = static_cast<double>((m.array() == scale).count());
    const double zero = static_cast<double>((m.array() == 0.0).count());
    ASSERT_EQ(neg + pos + zero, n);
    const double p = 1.0 / s;
    const double q = 1.0 - 2.0 / s;
    const double sd_p = std::sqrt(n * p * (1 - p));
    const double sd_q = std::sqrt(n * q * (1 - q));
    EXPECT_LE(std::abs(neg - n * p), 3 * sd_p) << "s=" << s;
    EXPECT_LE(std::abs(pos - n * p), 3 * sd_p) << "s=" << s;
    if (q > 0) EXPECT_LE(std::abs(zero - n * q), 3 * sd_q) << "s=" << s;
  }
}

TEST(BasisSet, ZeroFractionAtHighSparsity) {
  const auto set = generate_basis_set(5, Distribution::ternary(27), 8, 6, 300, 300);
  const double expected = 1.0 - 2.0 / 27.0;
  const double n = 8.0 * 300 * 6 + 6 * 300;
  EXPECT_NEAR(zero_fraction(set), expected, 3 * std::sqrt(expected * (1 - expected) / n));
  EXPECT_EQ(zero_fraction(generate_basis_set(5, Distribution::normal(), 2, 2, 10, 10)), 0.0);
}

TEST(BasisSet, RejectsInvalidInput) {
  EXPECT_THROW(generate_basis_set(0, Distribution::ternary(1), 1, 1, 4, 4), SparsityError);
  EXPECT_THROW(generate_basis_set(0, Distribution::normal(), 0, 1, 4, 4), DimensionError);
  EXPECT_THROW(generate_basis_set(0, Distribution::normal(), 1, 0, 4, 4), DimensionError);
  EXPECT_THROW(generate_basis_set(0, Distribution::normal(), 1, 1, 0, 4), DimensionError);
}

TEST(Slicing, LeadingBlocks) {
  const auto set = generate_basis_set(2, Distribution::normal(), 6, 4, 32, 24);
  const auto slice = slice_for_layer(set, "q_proj", 20, 10, 3);
  EXPECT_EQ(slice.n_used, 3);
  const Matrix b = slice_b(set, slice, 2, 3);
  EXPECT_EQ(b, set.b_stack[2].topLeftCorner(20, 3));
  EXPECT_EQ(slice_a(set, slice), set.a_shared.leftCols(10));
  EXPECT_EQ(slice_for_layer(set, "full", 32, 24).n_used, 6);
}

TEST(Slicing, OutOfRangeThrows) {
  const auto set = generate_basis_set(2, Distribution::normal(), 6, 4, 32, 24);
  EXPECT_THROW(slice_for_layer(set, "big", 33, 24), SliceError);
  EXPECT_THROW(slice_for_layer(set, "wide", 32, 25), SliceError);
  EXPECT_THROW(slice_for_layer(set, "many", 32, 24, 7), SliceError);
  const auto slice = slice_for_layer(set, "ok", 8, 8, 2);
  EXPECT_THROW(slice_b(set, slice, 2), SliceError);
  EXPECT_THROW(slice_b(set, slice, 0, 5), SliceError);
  EXPECT_THROW(slice_a(set, slice, 5), SliceError);
}

TEST(Collinearity, ClosedFormValues) {
  EXPECT_DOUBLE_EQ(collinearity_probability(2, 4, 0, 0).p, 0.125);
  // s=3: per-entry agreement (9 - 12 + 6) / 9 = 1/3.
  EXPECT_NEAR(collinearity_probability(3, 6, 0, 0).p, 2.0 / 729.0, 1e-15);
  const auto c = collinearity_probability(2, 4, 3, 5);
  EXPECT_DOUBLE_EQ(c.p2, 8.0 * 7.0 * 0.125);
  EXPECT_THROW(collinearity_probability(1.5, 4, 0, 0), SparsityError);
  EXPECT_THROW(collinearity_probability(3, 0, 0, 0), DimensionError);
}

TEST(Collinearity, DecreasesWithRowLength) {
  double prev = 1.0;
  for (int d = 1; d < 30; ++d) {
    const double p = collinearity_probability(5, d, 0, 0).p;
    EXPECT_LT(p, prev);
    prev = p;
  }
}

// Independent oracle: direct simulation with the standard library engine.
TEST(Collinearity, MatchesSimulation) {
  std::mt19937_64 gen(2024);
  for (const auto& [s, d] : {std::pair{2, 4}, std::pair{3, 6}}) {
    std::discrete_distribution<int> draw({1.0 / s, 1.0 - 2.0 / s, 1.0 / s});
    const int trials = 200000;
    int hits = 0;
    for (int t = 0; t < trials; ++t) {
      bool eq = true;
      bool neg = true;
      for (int i = 0; i < d; ++i) {
        const int a = draw(gen) - 1;
        const int b = draw(gen) - 1;
        eq = eq && a == b;
        neg = neg && a == -b;
      }
      hits += (eq || neg) ? 1 : 0;
    }
    const double p = collinearity_probability(s, d, 0, 0).p;
    const double sigma = std::sqrt(p * (1 - p) / trials);
    EXPECT_LE(std::abs(static_cast<double>(hits) / trials - p), 3 * sigma) << "s=" << s << " d=" << d;
  }
}
