#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "randlora/adapters.hpp"
#include "randlora/errors.hpp"
#include "randlora/optim.hpp"
#include "randlora/randbasis.hpp"

namespace randlora {

/// Thin SVD W = U diag(sigma) V^T with k = min(D, d) columns, sigma
/// descending. Each column of U has its largest-magnitude entry positive.
struct SvdResult {
  Matrix U;
  Vector sigma;
  Matrix V;

  Matrix reconstruct() const { return U * sigma.asDiagonal() * V.transpose(); }
};

namespace detail {

inline void require_finite(const char* where, const Matrix& m) {
  if (!m.allFinite()) fail<NumericalError>(where, "matrix has non-finite entries");
}

} // namespace detail

inline SvdResult svd(const Matrix& W) {
  constexpr const char* where = "spectral::svd";
  detail::require_finite(where, W);
  if (W.size() == 0) detail::fail<DimensionError>(where, "empty matrix");
  Eigen::BDCSVD<Matrix> solver(W, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success) detail::fail<NumericalError>(where, "SVD did not converge");

  SvdResult out{solver.matrixU(), solver.singularValues(), solver.matrixV()};
  for (Eigen::Index i = 0; i < out.U.cols(); ++i) {
    Eigen::Index arg = 0;
    out.U.col(i).cwiseAbs().maxCoeff(&arg);
    if (out.U(arg, i) < 0.0) {
      out.U.col(i) *= -1.0;
      out.V.col(i) *= -1.0;
    }
  }
  return out;
}

inline Vector singular_values(const Matrix& W) {
  detail::require_finite("spectral::singular_values", W);
  Eigen::BDCSVD<Matrix> solver(W);
  if (solver.info() != Eigen::Success) {
    detail::fail<NumericalError>("spectral::singular_values", "SVD did not converge");
  }
  return solver.singularValues();
}

/// Count of singular values above rel_tol * sigma_max.
inline int numerical_rank(const Matrix& M, double rel_tol = 1e-8) {
  if (M.size() == 0) return 0;
  const Vector s = singular_values(M);
  if (s.size() == 0 || s[0] == 0.0) return 0;
  const double cut = rel_tol * s[0];
  return static_cast<int>((s.array() > cut).count());
}

/// Splits W into n = ceil(min(D, d) / r) rank-r SVD blocks U_j Sigma_j V_j^T;
/// the last block takes the remainder when r does not divide min(D, d).
inline std::vector<Matrix> block_decomposition(const SvdResult& f, int r) {
  if (r < 1) detail::fail<DimensionError>("spectral::block_decomposition", "r must be >= 1");
  const int k = static_cast<int>(f.sigma.size());
  std::vector<Matrix> blocks;
  for (int start = 0; start < k; start += r) {
    const int width = std::min(r, k - start);
    blocks.push_back(f.U.middleCols(start, width) * f.sigma.segment(start, width).asDiagonal() *
                     f.V.middleCols(start, width).transpose());
  }
  return blocks;
}

inline std::vector<Matrix> block_decomposition(const Matrix& W, int r) {
  return block_decomposition(svd(W), r);
}

/// Minimum squared-Frobenius error of any rank-r approximation: sum_{i>r} sigma_i^2.
inline double eckart_young_bound(std::span<const double> sigma, int r) {
  std::vector<double> s(sigma.begin(), sigma.end());
  std::sort(s.begin(), s.end(), std::greater<>());
  double tail = 0.0;
  for (std::size_t i = static_cast<std::size_t>(std::max(r, 0)); i < s.size(); ++i) tail += s[i] * s[i];
  return tail;
}

inline double eckart_young_bound(const Vector& sigma, int r) {
  return eckart_young_bound(std::span<const double>(sigma.data(), static_cast<std::size_t>(sigma.size())), r);
}

struct BlockBoundCheck {
  double bound = 0.0;        // n * max_j eps_j
  double total_error = 0.0;  // ||W - sum_j C_j||_F
  std::vector<double> block_errors;
  bool holds = false;
};

/// Bound n * max(eps_j) from per-block (unsquared) Frobenius errors.
inline double block_error_bound(std::span<const double> per_block_errors) {
  if (per_block_errors.empty()) return 0.0;
  const double worst = *std::max_element(per_block_errors.begin(), per_block_errors.end());
  return static_cast<double>(per_block_errors.size()) * worst;
}

inline BlockBoundCheck block_bound_check(std::span<const double> per_block_errors, double measured_total) {
  BlockBoundCheck out;
  out.block_errors.assign(per_block_errors.begin(), per_block_errors.end());
  out.bound = block_error_bound(per_block_errors);
  out.total_error = measured_total;
  out.holds = measured_total <= out.bound + 1e-9;
  return out;
}

/// Measures eps_j = ||block_j - C_j||_F against the rank-r block decomposition
/// of the target and checks ||W - sum C_j||_F <= n * max eps_j.
inline BlockBoundCheck block_bound_check(const Matrix& target, int r, std::span<const Matrix> approximations) {
  constexpr const char* where = "spectral::block_bound_check";
  const auto blocks = block_decomposition(target, r);
  if (approximations.size() != blocks.size()) {
    detail::fail<DimensionError>(where, "expected " + std::to_string(blocks.size()) + " block approximations");
  }
  std::vector<double> eps;
  Matrix sum = Matrix::Zero(target.rows(), target.cols());
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    const Matrix& c = approximations[j];
    if (c.rows() != target.rows() || c.cols() != target.cols()) {
      detail::fail<DimensionError>(where, "block approximation shape mismatch");
    }
    eps.push_back((blocks[j] - c).norm());
    sum += c;
  }
  return block_bound_check(eps, (target - sum).norm());
}

// ---------------------------------------------------------------------------
// Fitting an adapter to a fixed target
// ---------------------------------------------------------------------------

struct TracePoint {
  int iteration = 0;
  double error = 0.0;
};

struct FitReport {
  AdapterSpec spec;
  std::string target_id;
  double final_sq_error = 0.0;
  std::int64_t param_count = 0;
  int iterations = 0;
  std::vector<TracePoint> trace;  // best-so-far squared error
  double bound_ey = 0.0;
  int effective_rank = 0;
};

struct FitSchedule {
  int trace_every = 10;
  int patience = 200;                // early-stop window
  double min_rel_improvement = 1e-9; // over the window
  int divergence_window = 100;
  double divergence_factor = 10.0;
};

/// Minimizes ||target - DeltaW(params)||_F^2 in place; the adapter ends at the
/// best parameters seen.
inline FitReport fit(Adapter& adapter, const Matrix& target, const OptimizerConfig& opt,
                     std::string target_id = "target", const FitSchedule& schedule = {}) {
  constexpr const char* where = "spectral::fit_adapter";
  if (target.rows() != adapter.rows() || target.cols() != adapter.cols()) {
    detail::fail<DimensionError>(where, "target shape does not match adapter");
  }
  detail::require_finite(where, target);
  Optimizer optimizer(opt);

  FitReport report;
  report.spec = adapter.spec();
  report.target_id = std::move(target_id);
  report.param_count = adapter.params().size();
  report.effective_rank = effective_rank(adapter.spec(), adapter.rows(), adapter.cols());
  report.bound_ey = eckart_young_bound(singular_values(target), report.effective_rank);

  Vector best_params = adapter.params();
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> errors;
  std::vector<double> best_hist;
  int it = 0;
  for (;; ++it) {
    const Matrix residual = target - adapter.delta_weight();
    const double err = residual.squaredNorm();
    if (!std::isfinite(err)) detail::fail<FitDivergenceError>(where, "non-finite error at iteration " + std::to_string(it));
    if (err < best) {
      best = err;
      best_params = adapter.params();
    }
    errors.push_back(err);
    best_hist.push_back(best);
    if (it % schedule.trace_every == 0) report.trace.push_back({it, best});

    // Oscillation at tiny error levels is not divergence: the error must also
    // exceed its starting value.
    if (it >= schedule.divergence_window && err > errors.front() &&
        err > schedule.divergence_factor * errors[static_cast<std::size_t>(it - schedule.divergence_window)]) {
      detail::fail<FitDivergenceError>(where, "error grew more than " + std::to_string(schedule.divergence_factor) +
                                                  "x within " + std::to_string(schedule.divergence_window) +
                                                  " iterations");
    }
    if (it >= opt.max_iters || best == 0.0) break;
    if (it >= schedule.patience) {
      const double past = best_hist[static_cast<std::size_t>(it - schedule.patience)];
      if (past - best <= schedule.min_rel_improvement * past) break;
    }
    optimizer.step(adapter.params(), adapter.grad_from_delta(-2.0 * residual));
  }
  adapter.set_params(best_params);
  report.iterations = it;
  report.final_sq_error = best;
  if (report.trace.empty() || report.trace.back().iteration != it) report.trace.push_back({it, best});
  return report;
}

inline FitReport fit_adapter(const Matrix& target, const AdapterSpec& spec, const BasisSet& bases,
                             const OptimizerConfig& opt, std::string target_id = "target",
                             const FitSchedule& schedule = {}) {
  Adapter adapter = make_adapter(spec, bases, static_cast<int>(target.rows()),
                                 static_cast<int>(target.cols()), opt.seed);
  return fit(adapter, target, opt, std::move(target_id), schedule);
}

} // namespace randlora
