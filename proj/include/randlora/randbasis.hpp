#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "randlora/errors.hpp"
#include "randlora/philox.hpp"

namespace randlora {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class DistributionKind { Uniform, Normal, Ternary };

/// Entry distribution of the frozen random matrices. For Ternary, raw entries
/// are -1, 0, +1 with probabilities 1/s, 1 - 2/s, 1/s.
struct Distribution {
  DistributionKind kind = DistributionKind::Normal;
  int s = 0;

  static Distribution uniform() { return {DistributionKind::Uniform, 0}; }
  static Distribution normal() { return {DistributionKind::Normal, 0}; }
  static Distribution ternary(int s) { return {DistributionKind::Ternary, s}; }

  friend bool operator==(const Distribution&, const Distribution&) = default;
};

inline std::string to_string(const Distribution& dist) {
  switch (dist.kind) {
    case DistributionKind::Uniform: return "uniform";
    case DistributionKind::Normal: return "normal";
    case DistributionKind::Ternary: return "ternary";
  }
  return "unknown";
}

/// Stream tags separating the independent tensors derived from one seed.
enum class BasisStream : std::uint32_t {
  BStack = 1,
  SharedA = 2,
  TermA = 3,
  WideB = 4,
  WideA = 5,
};

namespace detail {

/// Scale applied to a raw draw so the entry variance is 1/fan.
inline double entry_scale(const Distribution& dist, int fan) {
  const double inv = 1.0 / std::sqrt(static_cast<double>(fan));
  switch (dist.kind) {
    case DistributionKind::Uniform: return std::sqrt(3.0) * inv;  // raw draw on [-1, 1)
    case DistributionKind::Normal: return inv;
    case DistributionKind::Ternary: return std::sqrt(dist.s / 2.0) * inv;
  }
  return inv;
}

inline double raw_entry(std::uint64_t seed, const Distribution& dist, BasisStream stream,
                        std::uint32_t index, std::uint32_t row, std::uint32_t col) {
  const Philox4x32::Counter ctr{static_cast<std::uint32_t>(stream), index, row, col};
  switch (dist.kind) {
    case DistributionKind::Uniform: return 2.0 * uniform_pair(seed, ctr).u0 - 1.0;
    case DistributionKind::Normal: return normal_at(seed, ctr);
    case DistributionKind::Ternary: {
      const double u = uniform_pair(seed, ctr).u0;
      const double p = 1.0 / dist.s;
      if (u < p) return -1.0;
      if (u < 2.0 * p) return 1.0;
      return 0.0;
    }
  }
  return 0.0;
}

inline void check_distribution(const char* where, const Distribution& dist) {
  if (dist.kind == DistributionKind::Ternary && dist.s < 2) {
    fail<SparsityError>(where, "ternary sparsity s must be >= 2, got " + std::to_string(dist.s));
  }
}

} // namespace detail

/// Materializes one rows x cols random matrix of a given stream. Entry (i, j)
/// depends only on (seed, stream, index, i, j), never on the matrix extent, so
/// a leading sub-block of a larger draw equals the smaller draw up to the
/// fan-based scale.
inline Matrix generate_matrix(std::uint64_t seed, const Distribution& dist, BasisStream stream,
                              std::uint32_t index, int rows, int cols, int fan) {
  detail::check_distribution("randbasis::generate_matrix", dist);
  if (rows < 1 || cols < 1 || fan < 1) {
    detail::fail<DimensionError>("randbasis::generate_matrix", "dimensions must be >= 1");
  }
  const double scale = detail::entry_scale(dist, fan);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      m(i, j) = scale * detail::raw_entry(seed, dist, stream, index, static_cast<std::uint32_t>(i),
                                          static_cast<std::uint32_t>(j));
    }
  }
  return m;
}

/// Fixed random bases shared by every adapted layer: n_bases matrices B_j of
/// shape big_d_max x r and one shared A of shape r x d_max.
///
/// Columns of each B_j and columns of A have unit expected squared norm
/// (entry variance 1/big_d_max and 1/r respectively).
struct BasisSet {
  std::uint64_t seed = 0;
  Distribution distribution;
  int n_bases = 0;
  int r = 0;
  int d_max = 0;
  int big_d_max = 0;
  std::vector<Matrix> b_stack;
  Matrix a_shared;

  int b_fan() const { return big_d_max; }
  int a_fan() const { return r; }
};

/// Descriptor for the leading blocks a layer of shape D x d uses.
struct LayerSlice {
  std::string layer_id;
  int D = 0;
  int d = 0;
  int n_used = 0;
};

inline BasisSet generate_basis_set(std::uint64_t seed, const Distribution& dist, int n_bases, int r,
                                   int big_d_max, int d_max) {
  constexpr const char* where = "randbasis::generate_basis_set";
  if (n_bases < 1 || r < 1 || big_d_max < 1 || d_max < 1) {
    detail::fail<DimensionError>(where, "n_bases, r, D_max and d_max must all be >= 1");
  }
  detail::check_distribution(where, dist);

  BasisSet set;
  set.seed = seed;
  set.distribution = dist;
  set.n_bases = n_bases;
  set.r = r;
  set.d_max = d_max;
  set.big_d_max = big_d_max;
  set.b_stack.reserve(static_cast<std::size_t>(n_bases));
  for (int j = 0; j < n_bases; ++j) {
    set.b_stack.push_back(generate_matrix(seed, dist, BasisStream::BStack,
                                          static_cast<std::uint32_t>(j), big_d_max, r, set.b_fan()));
  }
  set.a_shared = generate_matrix(seed, dist, BasisStream::SharedA, 0, r, d_max, set.a_fan());
  return set;
}

inline LayerSlice slice_for_layer(const BasisSet& set, std::string layer_id, int D, int d,
                                  int n_used = 0) {
  constexpr const char* where = "randbasis::slice_for_layer";
  if (D < 1 || d < 1) detail::fail<SliceError>(where, "D and d must be >= 1");
  if (D > set.big_d_max || d > set.d_max) {
    detail::fail<SliceError>(where, "layer " + layer_id + " (" + std::to_string(D) + "x" +
                                        std::to_string(d) + ") exceeds stored maxima " +
                                        std::to_string(set.big_d_max) + "x" +
                                        std::to_string(set.d_max));
  }
  if (n_used == 0) n_used = set.n_bases;
  if (n_used < 1 || n_used > set.n_bases) {
    detail::fail<SliceError>(where, "n_used must lie in [1, " + std::to_string(set.n_bases) + "]");
  }
  return {std::move(layer_id), D, d, n_used};
}

/// Leading D x r_used block of B_j.
inline Matrix slice_b(const BasisSet& set, const LayerSlice& slice, int j, int r_used = 0) {
  if (r_used == 0) r_used = set.r;
  if (j < 0 || j >= slice.n_used || r_used > set.r) {
    detail::fail<SliceError>("randbasis::slice_b", "basis index or rank out of range");
  }
  return set.b_stack[static_cast<std::size_t>(j)].topLeftCorner(slice.D, r_used);
}

/// Leading r_used x d block of the shared A.
inline Matrix slice_a(const BasisSet& set, const LayerSlice& slice, int r_used = 0) {
  if (r_used == 0) r_used = set.r;
  if (r_used > set.r) detail::fail<SliceError>("randbasis::slice_a", "rank out of range");
  return set.a_shared.topLeftCorner(r_used, slice.d);
}

/// Per-term A_i (r x d_max) for the variants that need distinct right bases
/// (averaged and NoLA-like forms). Derived from the set's seed on demand.
inline Matrix term_a(const BasisSet& set, int index) {
  return generate_matrix(set.seed, set.distribution, BasisStream::TermA,
                         static_cast<std::uint32_t>(index), set.r, set.d_max, set.a_fan());
}

/// Single high-rank pair (big_d_max x rank, rank x d_max) for the VeRA-like form.
inline std::pair<Matrix, Matrix> wide_pair(const BasisSet& set, int rank) {
  if (rank < 1) detail::fail<DimensionError>("randbasis::wide_pair", "rank must be >= 1");
  return {generate_matrix(set.seed, set.distribution, BasisStream::WideB, 0, set.big_d_max, rank,
                          set.big_d_max),
          generate_matrix(set.seed, set.distribution, BasisStream::WideA, 0, rank, set.d_max, rank)};
}

/// Fraction of exactly-zero entries across every stored tensor.
inline double zero_fraction(const BasisSet& set) {
  double zeros = 0.0;
  double total = 0.0;
  auto count = [&](const Matrix& m) {
    zeros += static_cast<double>((m.array() == 0.0).count());
    total += static_cast<double>(m.size());
  };
  for (const auto& b : set.b_stack) count(b);
  count(set.a_shared);
  return total > 0.0 ? zeros / total : 0.0;
}

struct CollinearityProbability {
  double p = 0.0;   // two length-d rows equal up to sign
  double p2 = 0.0;  // union bound over (N + D) rows
};

/// Probability that two independent ternary rows of length d are equal or
/// negated, and the union bound over all (n_bases + D) row pairs. s is real so
/// that s = sqrt(D) can be evaluated exactly.
inline CollinearityProbability collinearity_probability(double s, int d, int n_bases, int D) {
  constexpr const char* where = "randbasis::collinearity_probability";
  if (!(s >= 2.0)) detail::fail<SparsityError>(where, "s must be >= 2");
  if (d < 1) detail::fail<DimensionError>(where, "d must be >= 1");
  if (n_bases < 0 || D < 0) detail::fail<DimensionError>(where, "counts must be >= 0");
  const double per_entry = (s * s - 4.0 * s + 6.0) / (s * s);
  const double p = 2.0 * std::pow(per_entry, d);
  const double rows = static_cast<double>(n_bases) + static_cast<double>(D);
  return {p, rows * (rows - 1.0) * p};
}

} // namespace randlora
