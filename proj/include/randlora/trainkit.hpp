#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>

#include "randlora/adapters.hpp"
#include "randlora/errors.hpp"
#include "randlora/optim.hpp"
#include "randlora/philox.hpp"
#include "randlora/randbasis.hpp"

namespace randlora {

// ---------------------------------------------------------------------------
// Teacher-student regression tasks
// ---------------------------------------------------------------------------

struct TeacherStudentTask {
  Matrix X;       // n_samples x D
  Matrix Y;       // n_samples x d
  Matrix W0;      // frozen pre-trained weight, D x d
  Matrix W_star;  // W0 + DeltaW*, D x d
};

namespace detail {

inline Matrix gaussian(CounterStream& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

/// rows x cols matrix with orthonormal columns (rows >= cols).
inline Matrix random_orthonormal(CounterStream& rng, Eigen::Index rows, Eigen::Index cols) {
  const Matrix g = gaussian(rng, rows, cols);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
  // Fix column signs so Q does not depend on the QR sign convention.
  const Matrix R = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < cols; ++j)
    if (R(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

} // namespace detail

/// Random D x d matrix with exactly the given singular values.
inline Matrix matrix_with_spectrum(std::uint64_t seed, int D, int d, std::span<const double> spectrum) {
  constexpr const char* where = "trainkit::matrix_with_spectrum";
  const int k = std::min(D, d);
  if (D < 1 || d < 1) detail::fail<DimensionError>(where, "D and d must be >= 1");
  if (static_cast<int>(spectrum.size()) != k) {
    detail::fail<DimensionError>(where, "spectrum length must equal min(D, d) = " + std::to_string(k));
  }
  CounterStream rng(seed, 0x7E5);
  const Matrix U = detail::random_orthonormal(rng, D, k);
  const Matrix V = detail::random_orthonormal(rng, d, k);
  const Eigen::Map<const Vector> s(spectrum.data(), k);
  return U * s.asDiagonal() * V.transpose();
}

inline TeacherStudentTask make_teacher_student(std::uint64_t seed, int D, int d,
                                               std::span<const double> spectrum, int n_samples,
                                               double noise_std = 0.0) {
  if (n_samples < 1) detail::fail<DimensionError>("trainkit::make_teacher_student", "n_samples must be >= 1");
  TeacherStudentTask task;
  const Matrix delta = matrix_with_spectrum(seed, D, d, spectrum);
  CounterStream rng(seed, 0x7E6);
  task.W0 = detail::gaussian(rng, D, d, 1.0 / std::sqrt(static_cast<double>(D)));
  task.W_star = task.W0 + delta;
  task.X = detail::gaussian(rng, n_samples, D);
  task.Y = task.X * task.W_star;
  if (noise_std > 0.0) task.Y += detail::gaussian(rng, n_samples, d, noise_std);
  return task;
}

// ---------------------------------------------------------------------------
// Training an adapted linear layer with MSE
// ---------------------------------------------------------------------------

struct TrainPoint {
  int step = 0;
  double train_loss = 0.0;
  double eval_metric = 0.0;  // ||W0 + DeltaW - W_star||_F^2
};

struct TrainRun {
  std::vector<TrainPoint> history;
  Vector final_params;      // best parameters seen
  Matrix final_weight;      // W0 + DeltaW(final_params)
  double initial_loss = 0.0;
  double final_loss = 0.0;  // train loss at final_params
  AdapterSpec spec;
  OptimizerConfig opt;
  std::int64_t param_count = 0;
};

inline double mse(const Matrix& X, const Matrix& W, const Matrix& Y) {
  return (X * W - Y).squaredNorm() / static_cast<double>(Y.size());
}

inline TrainRun train(const Matrix& W0, const AdapterSpec& spec, const BasisSet& bases,
                      const TeacherStudentTask& task, const OptimizerConfig& opt, int log_every = 10) {
  constexpr const char* where = "trainkit::train";
  if (W0.rows() != task.X.cols() || W0.cols() != task.Y.cols() || task.X.rows() != task.Y.rows()) {
    detail::fail<DimensionError>(where, "W0, X and Y shapes are inconsistent");
  }
  const int D = static_cast<int>(W0.rows());
  const int d = static_cast<int>(W0.cols());
  Adapter adapter = make_adapter(spec, bases, D, d, opt.seed);
  Optimizer optimizer(opt);
  const double scale = 2.0 / static_cast<double>(task.Y.size());

  TrainRun run;
  run.spec = spec;
  run.opt = opt;
  run.param_count = adapter.params().size();
  double best = std::numeric_limits<double>::infinity();
  Vector best_params = adapter.params();
  for (int step = 0; step <= opt.max_iters; ++step) {
    const Matrix W = W0 + adapter.delta_weight();
    const Matrix residual = task.X * W - task.Y;
    const double loss = residual.squaredNorm() / static_cast<double>(task.Y.size());
    if (!std::isfinite(loss)) detail::fail<DivergenceError>(where, "loss became non-finite at step " + std::to_string(step));
    if (step == 0) run.initial_loss = loss;
    if (loss < best) {
      best = loss;
      best_params = adapter.params();
    }
    if (step % log_every == 0 || step == opt.max_iters) {
      run.history.push_back({step, loss, (W - task.W_star).squaredNorm()});
    }
    if (step == opt.max_iters) break;
    const Matrix M = scale * (task.X.transpose() * residual);
    optimizer.step(adapter.params(), adapter.grad_from_delta(M));
  }
  adapter.set_params(best_params);
  run.final_params = best_params;
  run.final_weight = W0 + adapter.delta_weight();
  run.final_loss = best;
  return run;
}

// ---------------------------------------------------------------------------
// Linear centered kernel alignment
// ---------------------------------------------------------------------------

/// Linear CKA between two feature matrices over the same m examples.
inline double cka_linear(const Matrix& F1, const Matrix& F2) {
  constexpr const char* where = "trainkit::cka_linear";
  if (F1.rows() != F2.rows()) detail::fail<DimensionError>(where, "feature matrices need the same row count");
  if (F1.rows() < 2) detail::fail<DomainError>(where, "need at least 2 examples");
  const Matrix X = F1.rowwise() - F1.colwise().mean();
  const Matrix Y = F2.rowwise() - F2.colwise().mean();
  const double xx = (X.transpose() * X).norm();
  const double yy = (Y.transpose() * Y).norm();
  if (xx == 0.0 || yy == 0.0) detail::fail<DomainError>(where, "zero-variance features");
  return (Y.transpose() * X).squaredNorm() / (xx * yy);
}

// ---------------------------------------------------------------------------
// Barycentric loss landscape
// ---------------------------------------------------------------------------

struct PlanePoint {
  double x = 0.0;
  double y = 0.0;
};

struct GridExtent {
  double x_min = -0.5;
  double x_max = 1.5;
  double y_min = -0.5;
  double y_max = 1.5;
};

struct LandscapeGrid {
  std::array<Vector, 3> anchors;
  std::array<PlanePoint, 3> anchor_coords{{{0.0, 0.0}, {1.0, 0.0}, {0.5, 1.0}}};
  std::array<double, 3> anchor_losses{};
  Vector xs;
  Vector ys;
  Matrix losses;   // raw values, rows index y, columns index x
  Matrix clamped;  // min(losses, clamp)
  double clamp = 0.0;
  double clamp_pct = 0.2;
};

/// Coefficients (a, b, c) summing to 1 with a*P_a + b*P_b + c*P_c = (x, y).
inline std::array<double, 3> barycentric(const std::array<PlanePoint, 3>& p, double x, double y) {
  const double det = (p[1].y - p[2].y) * (p[0].x - p[2].x) + (p[2].x - p[1].x) * (p[0].y - p[2].y);
  if (std::abs(det) < 1e-12) detail::fail<GeometryError>("trainkit::barycentric", "anchor coordinates are collinear");
  const double a = ((p[1].y - p[2].y) * (x - p[2].x) + (p[2].x - p[1].x) * (y - p[2].y)) / det;
  const double b = ((p[2].y - p[0].y) * (x - p[2].x) + (p[0].x - p[2].x) * (y - p[2].y)) / det;
  return {a, b, 1.0 - a - b};
}

using LossFn = std::function<double(const Vector&)>;

/// Losses of theta(x, y) = sum_i alpha_i theta_i over a resolution^2 grid.
/// Anchors default to (0,0), (1,0), (0.5,1). The clamped copy caps values
/// (1 + clamp_pct) above the shallowest (highest-loss) anchor minimum.
inline LandscapeGrid landscape_grid(const Vector& params_a, const Vector& params_b, const Vector& params_c,
                                    const LossFn& eval_fn, int resolution = 41, double clamp_pct = 0.2,
                                    const GridExtent& extent = {},
                                    std::array<PlanePoint, 3> coords = {{{0.0, 0.0}, {1.0, 0.0}, {0.5, 1.0}}}) {
  constexpr const char* where = "trainkit::landscape_grid";
  if (params_a.size() != params_b.size() || params_a.size() != params_c.size()) {
    detail::fail<DimensionError>(where, "anchor parameter vectors differ in size");
  }
  if (resolution < 2) detail::fail<GeometryError>(where, "resolution must be >= 2");
  if (!(extent.x_max > extent.x_min) || !(extent.y_max > extent.y_min)) {
    detail::fail<GeometryError>(where, "empty grid extent");
  }
  barycentric(coords, 0.0, 0.0);  // rejects degenerate anchors up front

  LandscapeGrid grid;
  grid.anchors = {params_a, params_b, params_c};
  grid.anchor_coords = coords;
  grid.clamp_pct = clamp_pct;
  for (int i = 0; i < 3; ++i) grid.anchor_losses[i] = eval_fn(grid.anchors[i]);

  const double span = resolution - 1;
  grid.xs.resize(resolution);
  grid.ys.resize(resolution);
  for (int i = 0; i < resolution; ++i) {
    grid.xs[i] = extent.x_min + (extent.x_max - extent.x_min) * i / span;
    grid.ys[i] = extent.y_min + (extent.y_max - extent.y_min) * i / span;
  }
  grid.losses.resize(resolution, resolution);
  Vector theta(params_a.size());
  for (int iy = 0; iy < resolution; ++iy) {
    for (int ix = 0; ix < resolution; ++ix) {
      const auto w = barycentric(coords, grid.xs[ix], grid.ys[iy]);
      theta = w[0] * params_a + w[1] * params_b + w[2] * params_c;
      grid.losses(iy, ix) = eval_fn(theta);
    }
  }
  const double shallowest = *std::max_element(grid.anchor_losses.begin(), grid.anchor_losses.end());
  grid.clamp = (1.0 + clamp_pct) * shallowest;
  grid.clamped = grid.losses.cwiseMin(grid.clamp);
  return grid;
}

/// Flattens a matrix row-major into a parameter vector (and back).
inline Vector flatten(const Matrix& m) {
  Vector v(m.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v[k++] = m(i, j);
  return v;
}

inline Matrix unflatten(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) detail::fail<DimensionError>("trainkit::unflatten", "size mismatch");
  Matrix m(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = v[k++];
  return m;
}

} // namespace randlora
