#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "randlora/errors.hpp"
#include "randlora/philox.hpp"
#include "randlora/randbasis.hpp"

namespace randlora {

// ---------------------------------------------------------------------------
// Adapter specifications
// ---------------------------------------------------------------------------

/// Full-rank RandLoRA: sum of n terms B_j diag(lambda_j) A diag(gamma_j).
/// n defaults to ceil(min(D, d) / r).
struct RandLoRASpec {
  int r = 1;
  std::optional<int> n_override;
};

/// Trainable product B A of rank r.
struct LoRASpec {
  int r = 1;
};

/// diag(b) B diag(v) A with a single frozen high-rank pair.
struct VeRALikeSpec {
  int r_big = 1;
};

/// (sum a_i B_i)(sum b_i A_i) with scalar weights per basis.
struct NoLALikeSpec {
  int n = 1;
  int r = 1;
};

/// Bases are averaged before multiplication: (sum B_i L_i)(sum A_i G_i), rank <= r.
struct RandLoRAAvgSpec {
  int r = 1;
  int n = 1;
};

/// Half-rank RandLoRA: n * r <= min(D, d) / 2.
struct RandLoRAHalfSpec {
  int r = 1;
  std::optional<int> n;
};

/// Dense trainable update; stands in for standard fine-tuning.
struct FullFineTuneSpec {};

using AdapterKind = std::variant<RandLoRASpec, LoRASpec, VeRALikeSpec, NoLALikeSpec, RandLoRAAvgSpec,
                                 RandLoRAHalfSpec, FullFineTuneSpec>;

struct AdapterSpec {
  AdapterKind kind = RandLoRASpec{};
  /// Scaling coefficient c. The applied factor is c / r (c alone when
  /// per_rank is false), times 1/sqrt(n) when norm_correct is set.
  double alpha_c = 1.0;
  bool norm_correct = false;
  bool per_rank = true;
};

namespace detail {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

} // namespace detail

/// Number of terms a spec uses on a D x d layer (1 for single-product forms).
inline int resolved_terms(const AdapterSpec& spec, int D, int d) {
  const int k = std::min(D, d);
  return std::visit(
      detail::overloaded{
          [&](const RandLoRASpec& s) { return s.n_override.value_or(detail::ceil_div(k, s.r)); },
          [](const LoRASpec&) { return 1; },
          [](const VeRALikeSpec&) { return 1; },
          [](const NoLALikeSpec& s) { return s.n; },
          [](const RandLoRAAvgSpec& s) { return s.n; },
          [&](const RandLoRAHalfSpec& s) { return s.n.value_or(std::max(1, k / (2 * s.r))); },
          [](const FullFineTuneSpec&) { return 1; },
      },
      spec.kind);
}

/// Rank of each basis (or of the trainable product for LoRA).
inline int basis_rank(const AdapterSpec& spec, int D, int d) {
  return std::visit(detail::overloaded{
                        [](const RandLoRASpec& s) { return s.r; },
                        [](const LoRASpec& s) { return s.r; },
                        [](const VeRALikeSpec& s) { return s.r_big; },
                        [](const NoLALikeSpec& s) { return s.r; },
                        [](const RandLoRAAvgSpec& s) { return s.r; },
                        [](const RandLoRAHalfSpec& s) { return s.r; },
                        [&](const FullFineTuneSpec&) { return std::min(D, d); },
                    },
                    spec.kind);
}

/// Largest rank the merged update can reach on a D x d layer.
inline int effective_rank(const AdapterSpec& spec, int D, int d) {
  const int k = std::min(D, d);
  const int n = resolved_terms(spec, D, d);
  const int r = basis_rank(spec, D, d);
  return std::visit(detail::overloaded{
                        [&](const RandLoRASpec&) { return std::min(k, n * r); },
                        [&](const LoRASpec&) { return std::min(k, r); },
                        [&](const VeRALikeSpec&) { return std::min(k, r); },
                        [&](const NoLALikeSpec&) { return std::min(k, r); },
                        [&](const RandLoRAAvgSpec&) { return std::min(k, r); },
                        [&](const RandLoRAHalfSpec&) { return std::min(k, n * r); },
                        [&](const FullFineTuneSpec&) { return k; },
                    },
                    spec.kind);
}

inline std::int64_t param_count(const AdapterSpec& spec, int D, int d) {
  const std::int64_t n = resolved_terms(spec, D, d);
  const std::int64_t r = basis_rank(spec, D, d);
  const std::int64_t bigD = D;
  const std::int64_t smalld = d;
  return std::visit(detail::overloaded{
                        [&](const RandLoRASpec&) { return n * (r + smalld); },
                        [&](const LoRASpec&) { return r * (bigD + smalld); },
                        [&](const VeRALikeSpec&) { return r + bigD; },
                        [&](const NoLALikeSpec&) { return 2 * n; },
                        [&](const RandLoRAAvgSpec&) { return n * (r + smalld); },
                        [&](const RandLoRAHalfSpec&) { return n * (r + smalld); },
                        [&](const FullFineTuneSpec&) { return bigD * smalld; },
                    },
                    spec.kind);
}

/// Scaling applied to the summed update.
inline double resolved_alpha(const AdapterSpec& spec, int D, int d) {
  if (std::holds_alternative<FullFineTuneSpec>(spec.kind)) return 1.0;
  double alpha = spec.alpha_c;
  if (spec.per_rank) alpha /= basis_rank(spec, D, d);
  if (spec.norm_correct) alpha /= std::sqrt(static_cast<double>(resolved_terms(spec, D, d)));
  return alpha;
}

inline std::string spec_name(const AdapterSpec& spec) {
  return std::visit(
      detail::overloaded{
          [](const RandLoRASpec& s) {
            std::string out = "randlora:r=" + std::to_string(s.r);
            if (s.n_override) out += ";n=" + std::to_string(*s.n_override);
            return out;
          },
          [](const LoRASpec& s) { return "lora:r=" + std::to_string(s.r); },
          [](const VeRALikeSpec& s) { return "vera:r=" + std::to_string(s.r_big); },
          [](const NoLALikeSpec& s) {
            return "nola:n=" + std::to_string(s.n) + ";r=" + std::to_string(s.r);
          },
          [](const RandLoRAAvgSpec& s) {
            return "randlora-a:r=" + std::to_string(s.r) + ";n=" + std::to_string(s.n);
          },
          [](const RandLoRAHalfSpec& s) {
            std::string out = "randlora-b:r=" + std::to_string(s.r);
            if (s.n) out += ";n=" + std::to_string(*s.n);
            return out;
          },
          [](const FullFineTuneSpec&) { return std::string("full"); },
      },
      spec.kind);
}

enum class HalfRankAdjust { Rank, Count };

/// Half-rank variant derived from a full-rank RandLoRA of rank r_full.
/// Adjusting the rank halves r and keeps n ~ min(D, d) / r_full, which holds the
/// parameter count close to the full-rank spec. Adjusting the count keeps r
/// and halves n instead.
inline AdapterSpec half_rank_variant(int r_full, int D, int d,
                                     HalfRankAdjust adjust = HalfRankAdjust::Rank) {
  const int k = std::min(D, d);
  AdapterSpec out;
  if (adjust == HalfRankAdjust::Rank) {
    const int r = std::max(1, r_full / 2);
    out.kind = RandLoRAHalfSpec{r, std::max(1, k / (2 * r))};
  } else {
    out.kind = RandLoRAHalfSpec{r_full, std::max(1, k / (2 * r_full))};
  }
  return out;
}

// ---------------------------------------------------------------------------
// RandLoRA adapter bound to a basis slice
// ---------------------------------------------------------------------------

struct RandLoRAAdapter {
  LayerSlice slice;
  Matrix lambda_stack;  // n_used x r, diagonals of Lambda_j
  Matrix gamma_stack;   // n_used x d, diagonals of Gamma_j
  double alpha = 1.0;

  int terms() const { return static_cast<int>(lambda_stack.rows()); }
  int rank() const { return static_cast<int>(lambda_stack.cols()); }
};

struct RandLoRAGrads {
  Matrix d_lambda;  // n x r
  Matrix d_gamma;   // n x d
  Matrix d_x;       // batch x D
};

/// Lambda = 0 and Gamma = 1, so the initial update is exactly zero.
inline RandLoRAAdapter make_randlora_adapter(const BasisSet& set, const LayerSlice& slice,
                                             double alpha) {
  RandLoRAAdapter a;
  a.slice = slice;
  a.lambda_stack = Matrix::Zero(slice.n_used, set.r);
  a.gamma_stack = Matrix::Ones(slice.n_used, slice.d);
  a.alpha = alpha;
  return a;
}

namespace detail {

inline void check_adapter(const char* where, const RandLoRAAdapter& a, const BasisSet& set) {
  const auto& s = a.slice;
  if (s.D > set.big_d_max || s.d > set.d_max || s.n_used > set.n_bases || s.n_used < 1) {
    fail<DimensionError>(where, "slice exceeds basis set extents");
  }
  if (a.lambda_stack.rows() != s.n_used || a.lambda_stack.cols() > set.r ||
      a.lambda_stack.cols() < 1) {
    fail<DimensionError>(where, "lambda_stack must be n_used x r (r <= basis rank)");
  }
  if (a.gamma_stack.rows() != s.n_used || a.gamma_stack.cols() != s.d) {
    fail<DimensionError>(where, "gamma_stack must be n_used x d");
  }
}

} // namespace detail

/// alpha * sum_j B_j diag(lambda_j) A diag(gamma_j), shape D x d.
inline Matrix delta_weight(const RandLoRAAdapter& a, const BasisSet& set) {
  detail::check_adapter("adapters::delta_weight", a, set);
  const auto& s = a.slice;
  const int r = a.rank();
  const Matrix A = slice_a(set, s, r);
  Matrix out = Matrix::Zero(s.D, s.d);
  for (int j = 0; j < s.n_used; ++j) {
    const Matrix B = slice_b(set, s, j, r);
    const Matrix left = B * a.lambda_stack.row(j).transpose().asDiagonal();
    const Matrix right = A * a.gamma_stack.row(j).transpose().asDiagonal();
    out.noalias() += left * right;
  }
  out *= a.alpha;
  return out;
}

inline Matrix merge(const Matrix& W0, const RandLoRAAdapter& a, const BasisSet& set) {
  if (W0.rows() != a.slice.D || W0.cols() != a.slice.d) {
    detail::fail<DimensionError>("adapters::merge", "W0 must be D x d");
  }
  return W0 + delta_weight(a, set);
}

/// Y = X W0 + alpha * sum_j ((X B_j) Lambda_j)(A Gamma_j); never forms the
/// D x d update.
inline Matrix forward(const RandLoRAAdapter& a, const BasisSet& set, const Matrix& W0,
                      const Matrix& X) {
  constexpr const char* where = "adapters::forward";
  detail::check_adapter(where, a, set);
  const auto& s = a.slice;
  if (W0.rows() != s.D || W0.cols() != s.d) detail::fail<DimensionError>(where, "W0 must be D x d");
  if (X.cols() != s.D) detail::fail<DimensionError>(where, "X must have D columns");
  const int r = a.rank();
  const Matrix A = slice_a(set, s, r);
  Matrix Y = X * W0;
  Matrix acc = Matrix::Zero(X.rows(), s.d);
  for (int j = 0; j < s.n_used; ++j) {
    const Matrix xb = X * slice_b(set, s, j, r);
    const Matrix scaled = xb * a.lambda_stack.row(j).transpose().asDiagonal();
    acc.noalias() += scaled * (A * a.gamma_stack.row(j).transpose().asDiagonal());
  }
  Y += a.alpha * acc;
  return Y;
}

/// Gradients of a loss L given G = dL/dY for Y = forward(a, set, W0, X).
inline RandLoRAGrads grad_params(const RandLoRAAdapter& a, const BasisSet& set, const Matrix& W0,
                                 const Matrix& X, const Matrix& G) {
  constexpr const char* where = "adapters::grad_params";
  detail::check_adapter(where, a, set);
  const auto& s = a.slice;
  if (W0.rows() != s.D || W0.cols() != s.d) detail::fail<DimensionError>(where, "W0 must be D x d");
  if (X.cols() != s.D) detail::fail<DimensionError>(where, "X must have D columns");
  if (G.rows() != X.rows() || G.cols() != s.d) {
    detail::fail<DimensionError>(where, "G must be batch x d");
  }
  const int r = a.rank();
  const Matrix A = slice_a(set, s, r);

  RandLoRAGrads g;
  g.d_lambda.resize(s.n_used, r);
  g.d_gamma.resize(s.n_used, s.d);
  Matrix dx_low = Matrix::Zero(X.rows(), s.D);
  for (int j = 0; j < s.n_used; ++j) {
    const Matrix B = slice_b(set, s, j, r);
    const Matrix xb = X * B;                                           // batch x r
    const Matrix ga = G * a.gamma_stack.row(j).transpose().asDiagonal() * A.transpose();  // batch x r
    // dlambda_j[k] = alpha * sum_b xb[b,k] * ga[b,k]
    g.d_lambda.row(j) = a.alpha * (xb.array() * ga.array()).colwise().sum();
    // dgamma_j[q] = alpha * sum_b (xb Lambda_j A)[b,q] * G[b,q]
    const Matrix h = xb * a.lambda_stack.row(j).transpose().asDiagonal() * A;  // batch x d
    g.d_gamma.row(j) = a.alpha * (h.array() * G.array()).colwise().sum();
    // dX through the adapter branch: G Gamma_j A^T Lambda_j B_j^T
    dx_low.noalias() += (ga * a.lambda_stack.row(j).transpose().asDiagonal()) * B.transpose();
  }
  g.d_x = G * W0.transpose() + a.alpha * dx_low;
  return g;
}

// ---------------------------------------------------------------------------
// Generic adapter over every spec variant
// ---------------------------------------------------------------------------

/// Frozen matrices a spec needs on one layer, materialized once.
struct BoundBases {
  int D = 0;
  int d = 0;
  std::vector<Matrix> B;  // per-term left bases (or the single wide B)
  std::vector<Matrix> A;  // one shared right basis, or one per term
};

inline BoundBases bind_bases(const AdapterSpec& spec, const BasisSet& set, int D, int d) {
  constexpr const char* where = "adapters::bind_bases";
  BoundBases bound;
  bound.D = D;
  bound.d = d;
  if (std::holds_alternative<LoRASpec>(spec.kind) ||
      std::holds_alternative<FullFineTuneSpec>(spec.kind)) {
    return bound;
  }
  const int n = resolved_terms(spec, D, d);
  const int r = basis_rank(spec, D, d);
  if (const auto* vera = std::get_if<VeRALikeSpec>(&spec.kind)) {
    if (D > set.big_d_max || d > set.d_max) detail::fail<SliceError>(where, "layer exceeds basis set");
    auto [wb, wa] = wide_pair(set, vera->r_big);
    bound.B.push_back(wb.topRows(D));
    bound.A.push_back(wa.leftCols(d));
    return bound;
  }
  if (r > set.r) {
    detail::fail<DimensionError>(where, "spec rank " + std::to_string(r) +
                                            " exceeds basis rank " + std::to_string(set.r));
  }
  const LayerSlice slice = slice_for_layer(set, "bound", D, d, n);
  for (int j = 0; j < n; ++j) bound.B.push_back(slice_b(set, slice, j, r));
  const bool per_term_a = std::holds_alternative<NoLALikeSpec>(spec.kind) ||
                          std::holds_alternative<RandLoRAAvgSpec>(spec.kind);
  if (per_term_a) {
    for (int j = 0; j < n; ++j) bound.A.push_back(term_a(set, j).topLeftCorner(r, d));
  } else {
    bound.A.push_back(slice_a(set, slice, r));
  }
  return bound;
}

/// Trainable state for any spec variant. Parameters live in one flat vector
/// so optimizers stay variant-agnostic; layouts (row-major blocks):
///   RandLoRA, -a, -b : [Lambda (n x r), Gamma (n x d)]
///   LoRA             : [B (D x r), A (r x d)]
///   VeRA-like        : [b (D), v (r_big)]
///   NoLA-like        : [a (n), b (n)]
///   full             : [dW (D x d)]
class Adapter {
public:
  Adapter(AdapterSpec spec, BoundBases bases)
      : spec_(std::move(spec)), bases_(std::move(bases)),
        terms_(resolved_terms(spec_, bases_.D, bases_.d)),
        rank_(basis_rank(spec_, bases_.D, bases_.d)),
        alpha_(resolved_alpha(spec_, bases_.D, bases_.d)),
        params_(Vector::Zero(param_count(spec_, bases_.D, bases_.d))) {
    validate();
  }

  const AdapterSpec& spec() const { return spec_; }
  const BoundBases& bases() const { return bases_; }
  int rows() const { return bases_.D; }
  int cols() const { return bases_.d; }
  int terms() const { return terms_; }
  int rank() const { return rank_; }
  double alpha() const { return alpha_; }
  void set_alpha(double alpha) { alpha_ = alpha; }
  const Vector& params() const { return params_; }
  Vector& params() { return params_; }

  void set_params(const Vector& p) {
    if (p.size() != params_.size()) {
      detail::fail<DimensionError>("adapters::set_params", "parameter vector size mismatch");
    }
    params_ = p;
  }

  /// Default initialization: every variant starts with a zero update while
  /// keeping a nonzero gradient on at least one factor.
  void initialize(std::uint64_t seed) {
    const int D = bases_.D;
    const int d = bases_.d;
    std::visit(detail::overloaded{
                   [&](const LoRASpec&) {
                     params_.setZero();
                     CounterStream rng(seed, 0x10A);
                     const double scale = 1.0 / std::sqrt(static_cast<double>(d));
                     auto a = block(D * rank_, rank_ * d);
                     for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = scale * rng.normal();
                   },
                   [&](const VeRALikeSpec&) {
                     params_.setZero();
                     params_.tail(rank_).setOnes();
                   },
                   [&](const NoLALikeSpec&) {
                     params_.setZero();
                     params_.tail(terms_).setConstant(1.0 / std::sqrt(static_cast<double>(terms_)));
                   },
                   [&](const FullFineTuneSpec&) { params_.setZero(); },
                   [&](const auto&) {
                     params_.setZero();
                     params_.tail(static_cast<Eigen::Index>(terms_) * d).setOnes();
                   },
               },
               spec_.kind);
  }

  /// Merged update alpha * core(params), D x d.
  Matrix delta_weight() const { return delta_weight_of(params_); }

  Matrix delta_weight_of(const Vector& p) const {
    const int D = bases_.D;
    const int d = bases_.d;
    Matrix core = Matrix::Zero(D, d);
    std::visit(detail::overloaded{
                   [&](const LoRASpec&) { core.noalias() = mat(p, 0, D, rank_) * mat(p, D * rank_, rank_, d); },
                   [&](const VeRALikeSpec&) {
                     const auto b = p.head(D);
                     const auto v = p.segment(D, rank_);
                     core.noalias() = b.asDiagonal() * (bases_.B[0] * v.asDiagonal()) * bases_.A[0];
                   },
                   [&](const NoLALikeSpec&) {
                     const auto [P, Q] = nola_factors(p);
                     core.noalias() = P * Q;
                   },
                   [&](const RandLoRAAvgSpec&) {
                     const auto [P, Q] = avg_factors(p);
                     core.noalias() = P * Q;
                   },
                   [&](const FullFineTuneSpec&) { core = mat(p, 0, D, d); },
                   [&](const auto&) {  // RandLoRA and half-rank
                     const auto lam = mat(p, 0, terms_, rank_);
                     const auto gam = mat(p, terms_ * rank_, terms_, d);
                     for (int j = 0; j < terms_; ++j) {
                       core.noalias() += (bases_.B[j] * lam.row(j).transpose().asDiagonal()) *
                                         (bases_.A[0] * gam.row(j).transpose().asDiagonal());
                     }
                   },
               },
               spec_.kind);
    return alpha_ * core;
  }

  /// Gradient with respect to the flat parameters, given M = dL/d(DeltaW).
  Vector grad_from_delta(const Matrix& M) const {
    const int D = bases_.D;
    const int d = bases_.d;
    if (M.rows() != D || M.cols() != d) {
      detail::fail<DimensionError>("adapters::grad_from_delta", "M must be D x d");
    }
    const Matrix Ma = alpha_ * M;
    Vector g(params_.size());
    std::visit(
        detail::overloaded{
            [&](const LoRASpec&) {
              const auto B = mat(params_, 0, D, rank_);
              const auto A = mat(params_, D * rank_, rank_, d);
              mat_out(g, 0, D, rank_) = Ma * A.transpose();
              mat_out(g, D * rank_, rank_, d) = B.transpose() * Ma;
            },
            [&](const VeRALikeSpec&) {
              const auto b = params_.head(D);
              const auto v = params_.segment(D, rank_);
              const Matrix inner = (bases_.B[0] * v.asDiagonal()) * bases_.A[0];
              g.head(D) = (Ma.array() * inner.array()).rowwise().sum();
              const Matrix left = b.asDiagonal() * bases_.B[0];  // D x r_big
              g.segment(D, rank_) = ((left.transpose() * Ma).array() * bases_.A[0].array()).rowwise().sum();
            },
            [&](const NoLALikeSpec&) {
              const auto [P, Q] = nola_factors(params_);
              const Matrix dP = Ma * Q.transpose();
              const Matrix dQ = P.transpose() * Ma;
              for (int i = 0; i < terms_; ++i) {
                g[i] = (dP.array() * bases_.B[i].array()).sum();
                g[terms_ + i] = (dQ.array() * bases_.A[i].array()).sum();
              }
            },
            [&](const RandLoRAAvgSpec&) {
              const auto [P, Q] = avg_factors(params_);
              const Matrix dP = Ma * Q.transpose();  // D x r
              const Matrix dQ = P.transpose() * Ma;  // r x d
              auto dlam = mat_out(g, 0, terms_, rank_);
              auto dgam = mat_out(g, terms_ * rank_, terms_, d);
              for (int i = 0; i < terms_; ++i) {
                dlam.row(i) = (dP.array() * bases_.B[i].array()).colwise().sum();
                dgam.row(i) = (dQ.array() * bases_.A[i].array()).colwise().sum();
              }
            },
            [&](const FullFineTuneSpec&) { mat_out(g, 0, D, d) = Ma; },
            [&](const auto&) {
              const auto lam = mat(params_, 0, terms_, rank_);
              const auto gam = mat(params_, terms_ * rank_, terms_, d);
              auto dlam = mat_out(g, 0, terms_, rank_);
              auto dgam = mat_out(g, terms_ * rank_, terms_, d);
              const Matrix& A = bases_.A[0];
              for (int j = 0; j < terms_; ++j) {
                const Matrix& B = bases_.B[j];
                const Matrix btm = B.transpose() * Ma;  // r x d
                // dlambda_j = diag(B^T M Gamma_j A^T)
                dlam.row(j) = ((btm * gam.row(j).transpose().asDiagonal()).array() * A.array())
                                  .rowwise()
                                  .sum()
                                  .transpose();
                // dgamma_j = diag((B Lambda_j A)^T M) = colsum(Lambda_j A .* B^T M)
                dgam.row(j) = ((lam.row(j).transpose().asDiagonal() * A).array() * btm.array())
                                  .colwise()
                                  .sum();
              }
            },
        },
        spec_.kind);
    return g;
  }

private:
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  static Eigen::Map<const RowMajor> mat(const Vector& p, Eigen::Index offset, Eigen::Index rows,
                                        Eigen::Index cols) {
    return {p.data() + offset, rows, cols};
  }
  static Eigen::Map<RowMajor> mat_out(Vector& p, Eigen::Index offset, Eigen::Index rows,
                                      Eigen::Index cols) {
    return {p.data() + offset, rows, cols};
  }
  Eigen::VectorBlock<Vector> block(Eigen::Index offset, Eigen::Index size) {
    return params_.segment(offset, size);
  }

  std::pair<Matrix, Matrix> nola_factors(const Vector& p) const {
    Matrix P = Matrix::Zero(bases_.D, rank_);
    Matrix Q = Matrix::Zero(rank_, bases_.d);
    for (int i = 0; i < terms_; ++i) {
      P += p[i] * bases_.B[i];
      Q += p[terms_ + i] * bases_.A[i];
    }
    return {P, Q};
  }

  std::pair<Matrix, Matrix> avg_factors(const Vector& p) const {
    const auto lam = mat(p, 0, terms_, rank_);
    const auto gam = mat(p, terms_ * rank_, terms_, bases_.d);
    Matrix P = Matrix::Zero(bases_.D, rank_);
    Matrix Q = Matrix::Zero(rank_, bases_.d);
    for (int i = 0; i < terms_; ++i) {
      P.noalias() += bases_.B[i] * lam.row(i).transpose().asDiagonal();
      Q.noalias() += bases_.A[i] * gam.row(i).transpose().asDiagonal();
    }
    return {P, Q};
  }

  void validate() const {
    constexpr const char* where = "adapters::Adapter";
    if (bases_.D < 1 || bases_.d < 1) detail::fail<DimensionError>(where, "layer dims must be >= 1");
    if (terms_ < 1 || rank_ < 1) detail::fail<DimensionError>(where, "n and r must be >= 1");
    const bool needs_bases = !std::holds_alternative<LoRASpec>(spec_.kind) &&
                             !std::holds_alternative<FullFineTuneSpec>(spec_.kind);
    if (!needs_bases) return;
    const bool single = std::holds_alternative<VeRALikeSpec>(spec_.kind);
    const std::size_t want_b = single ? 1 : static_cast<std::size_t>(terms_);
    if (bases_.B.size() != want_b) detail::fail<DimensionError>(where, "wrong number of B bases");
    for (const auto& B : bases_.B) {
      if (B.rows() != bases_.D || B.cols() != rank_) detail::fail<DimensionError>(where, "B shape mismatch");
    }
    for (const auto& A : bases_.A) {
      if (A.rows() != rank_ || A.cols() != bases_.d) detail::fail<DimensionError>(where, "A shape mismatch");
    }
    const bool per_term = std::holds_alternative<NoLALikeSpec>(spec_.kind) ||
                          std::holds_alternative<RandLoRAAvgSpec>(spec_.kind);
    const std::size_t want_a = per_term ? static_cast<std::size_t>(terms_) : 1;
    if (bases_.A.size() != want_a) detail::fail<DimensionError>(where, "wrong number of A bases");
  }

  AdapterSpec spec_;
  BoundBases bases_;
  int terms_;
  int rank_;
  double alpha_;
  Vector params_;
};

inline Adapter make_adapter(const AdapterSpec& spec, const BasisSet& set, int D, int d,
                            std::uint64_t init_seed = 0) {
  Adapter a(spec, bind_bases(spec, set, D, d));
  a.initialize(init_seed);
  return a;
}

/// Merged update of any variant for an explicit parameter vector.
inline Matrix delta_weight_variant(const AdapterSpec& spec, const BasisSet& set, int D, int d,
                                   const Vector& params) {
  Adapter a(spec, bind_bases(spec, set, D, d));
  a.set_params(params);
  return a.delta_weight();
}

/// Packs a RandLoRAAdapter into the generic layout (and back), so both routes
/// can be cross-checked.
inline Vector pack_randlora(const RandLoRAAdapter& a) {
  Vector p(a.lambda_stack.size() + a.gamma_stack.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < a.lambda_stack.rows(); ++i)
    for (Eigen::Index j = 0; j < a.lambda_stack.cols(); ++j) p[k++] = a.lambda_stack(i, j);
  for (Eigen::Index i = 0; i < a.gamma_stack.rows(); ++i)
    for (Eigen::Index j = 0; j < a.gamma_stack.cols(); ++j) p[k++] = a.gamma_stack(i, j);
  return p;
}

inline void unpack_randlora(const Vector& p, RandLoRAAdapter& a) {
  if (p.size() != a.lambda_stack.size() + a.gamma_stack.size()) {
    detail::fail<DimensionError>("adapters::unpack_randlora", "parameter vector size mismatch");
  }
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < a.lambda_stack.rows(); ++i)
    for (Eigen::Index j = 0; j < a.lambda_stack.cols(); ++j) a.lambda_stack(i, j) = p[k++];
  for (Eigen::Index i = 0; i < a.gamma_stack.rows(); ++i)
    for (Eigen::Index j = 0; j < a.gamma_stack.cols(); ++j) a.gamma_stack(i, j) = p[k++];
}

} // namespace randlora
