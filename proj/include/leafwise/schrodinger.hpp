#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "leafwise/error.hpp"
#include "leafwise/grid.hpp"
#include "leafwise/linear_solve.hpp"

namespace leafwise {

/// Least eigenvalue and positive normalized ground state of H = -L - diag(beta).
struct SpectralResult {
  double lambda0 = 0.0;
  ScalarField e0;
  double lambda1 = 0.0;
  double gap = 0.0;  ///< lambda1 - lambda0
  int iterations = 0;
  double residual = 0.0;  ///< ||H e0 - lambda0 e0|| in the weighted L2 norm
};

/// mu = -max(beta) - 1, so that H - mu is positive definite.
inline double shift_for_positivity(const ScalarField& beta) { return -beta.max() - 1.0; }

namespace detail {

/// y = (-L - diag(beta)) x
inline void apply_hamiltonian(const Grid& g, std::span<const double> beta,
                              std::span<const double> x, std::span<double> y) {
  laplacian_into(g, x, y, 0, g.rank());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = -y[i] - beta[i] * x[i];
}

inline void normalize(const Grid& g, std::vector<double>& v) {
  const double n = l2_norm(g, v);
  for (double& x : v) x /= n;
}

inline void project_out(const Grid& g, std::vector<double>& v, std::span<const double> unit) {
  const double c = inner(g, v, unit);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * unit[i];
}

struct InverseIterationOutcome {
  std::vector<double> vec;
  double rayleigh = 0.0;
  double residual = 0.0;
  int iterations = 0;
};

/**
 * Shifted inverse iteration on H - mu. Stops when successive Rayleigh
 * quotients differ by less than `tol` and, if `residual_target` > 0, the
 * eigen-residual has reached it. With `deflate` set, iterates stay
 * orthogonal to that unit vector.
 */
inline InverseIterationOutcome inverse_iteration(const Grid& g, std::span<const double> beta,
                                                 const ShiftedLaplacianSolver& solver,
                                                 std::vector<double> start, double tol,
                                                 double residual_target,
                                                 const std::vector<double>* deflate,
                                                 int max_iter) {
  const std::size_t n = start.size();
  std::vector<double> hv(n);
  InverseIterationOutcome out;
  out.vec = std::move(start);
  if (deflate) project_out(g, out.vec, *deflate);
  normalize(g, out.vec);
  double prev = std::numeric_limits<double>::infinity();
  double best_residual = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (int it = 1; it <= max_iter; ++it) {
    auto w = solver.solve(out.vec);
    if (deflate) project_out(g, w, *deflate);
    normalize(g, w);
    out.vec = std::move(w);
    apply_hamiltonian(g, beta, out.vec, hv);
    out.rayleigh = inner(g, hv, out.vec);
    for (std::size_t i = 0; i < n; ++i) hv[i] -= out.rayleigh * out.vec[i];
    out.residual = l2_norm(g, hv);
    out.iterations = it;
    const bool rq_done = std::abs(out.rayleigh - prev) < tol;
    prev = out.rayleigh;
    if (rq_done && out.residual <= residual_target) return out;
    // Residual floor from roundoff: accept once it stops improving.
    if (out.residual < (1.0 - 1e-3) * best_residual) {
      best_residual = out.residual;
      stalled = 0;
    } else if (rq_done && ++stalled >= 25) {
      return out;
    }
  }
  throw ConvergenceFailure("inverse iteration did not converge after " +
                               std::to_string(max_iter) + " iterations",
                           out.residual);
}

/**
 * Least eigenvalue of H on the orthogonal complement of `unit` by block
 * inverse iteration with Rayleigh-Ritz. The block absorbs clustered or
 * multiple eigenvalues (symmetric pairs on circles and tori), which stall
 * single-vector iteration.
 */
inline double lowest_excited(const Grid& g, std::span<const double> beta,
                             const ShiftedLaplacianSolver& solver, std::span<const double> unit,
                             double tol, int max_iter) {
  const std::size_t n = unit.size();
  const std::size_t m = std::min<std::size_t>(8, n - 1);
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<std::vector<double>> block(m, std::vector<double>(n));
  for (auto& v : block)
    for (double& x : v) x = unif(rng);
  const std::vector<double> e(unit.begin(), unit.end());
  const auto orthonormalize = [&] {
    for (std::size_t j = 0; j < m; ++j) {
      for (int pass = 0; pass < 2; ++pass) {
        project_out(g, block[j], e);
        for (std::size_t k = 0; k < j; ++k) project_out(g, block[j], block[k]);
      }
      normalize(g, block[j]);
    }
  };
  orthonormalize();
  double prev = std::numeric_limits<double>::infinity();
  std::vector<double> hv(n);
  for (int it = 1; it <= max_iter; ++it) {
    for (auto& v : block) v = solver.solve(v);
    orthonormalize();
    Eigen::MatrixXd proj(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    std::vector<std::vector<double>> hblock(m);
    for (std::size_t j = 0; j < m; ++j) {
      apply_hamiltonian(g, beta, block[j], hv);
      hblock[j] = hv;
    }
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b <= a; ++b) {
        const double v = 0.5 * (inner(g, hblock[a], block[b]) + inner(g, hblock[b], block[a]));
        proj(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
        proj(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = v;
      }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(proj);
    const double theta = es.eigenvalues()(0);
    if (std::abs(theta - prev) < tol) return theta;
    prev = theta;
    // Rotate the block onto the Ritz vectors so the lowest one leads.
    std::vector<std::vector<double>> rotated(m, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < m; ++k) {
        const double c = es.eigenvectors()(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
        for (std::size_t i = 0; i < n; ++i) rotated[j][i] += c * block[k][i];
      }
    block = std::move(rotated);
  }
  throw ConvergenceFailure("excited-state iteration did not converge", 0.0);
}

}  // namespace detail

/**
 * Ground state of H = -L - beta by shifted inverse iteration.
 *
 * The shift is mu from shift_for_positivity, which keeps the linear solves
 * well posed. After convergence the sign is fixed so that e0 has positive
 * mean, e0 is normalized in the cell-volume L2 norm, and strict positivity
 * is checked. The gap comes from a block iteration deflated against e0.
 */
inline SpectralResult ground_state(const Grid& grid, const ScalarField& beta, double tol = 1e-13) {
  require_same_grid(beta, grid, "potential");
  if (!(tol > 0.0 && tol <= 1e-6)) throw InvalidInput("ground_state tol must lie in (0, 1e-6]");
  const std::size_t n = grid.total_points();
  const double mu = shift_for_positivity(beta);
  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = -beta[i] - mu;
  const ShiftedLaplacianSolver solver(grid, std::move(diag), 1.0);

  const double scale = std::max(1.0, std::max(std::abs(beta.max()), std::abs(beta.min())));
  const double target = 1e-11 * scale;
  constexpr int kMaxIter = 20000;

  auto ground = detail::inverse_iteration(grid, beta.values(), solver,
                                          std::vector<double>(n, 1.0), tol, target, nullptr,
                                          kMaxIter);
  double mean = 0.0;
  for (double v : ground.vec) mean += v;
  if (mean < 0.0)
    for (double& v : ground.vec) v = -v;
  const double min_e0 = *std::min_element(ground.vec.begin(), ground.vec.end());
  if (!(min_e0 > 0.0))
    throw ConvergenceFailure("ground state is not strictly positive (min " +
                                 std::to_string(min_e0) + ")",
                             ground.residual);
  const double limit = 1e-10 * std::max(1.0, std::abs(ground.rayleigh));
  if (ground.residual > limit)
    throw ConvergenceFailure("ground-state residual above 1e-10 relative", ground.residual);

  const double lambda1 =
      detail::lowest_excited(grid, beta.values(), solver, ground.vec, 1e-12 * scale, kMaxIter);

  SpectralResult r{ground.rayleigh, ScalarField(grid, std::move(ground.vec)), lambda1,
                   lambda1 - ground.rayleigh, ground.iterations, ground.residual};
  if (!(r.gap > 0.0))
    throw ConvergenceFailure("least eigenvalue is not isolated (gap " + std::to_string(r.gap) +
                                 ")",
                             r.residual);
  return r;
}

/// Rayleigh quotient <H f, f> / <f, f>.
inline double rayleigh_quotient(const ScalarField& beta, const ScalarField& f) {
  const Grid& g = beta.grid();
  require_same_grid(f, g, "field");
  std::vector<double> hf(f.size());
  detail::apply_hamiltonian(g, beta.values(), f.values(), hf);
  return inner(g, hf, f.values()) / inner(g, f.values(), f.values());
}

/// Dense matrix of H = -L - diag(beta).
inline Eigen::MatrixXd hamiltonian_matrix(const Grid& grid, const ScalarField& beta) {
  require_same_grid(beta, grid, "potential");
  Eigen::MatrixXd m = -laplacian_matrix(grid);
  for (std::size_t i = 0; i < grid.total_points(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    m(k, k) -= beta[i];
  }
  return m;
}

/// The k smallest eigenvalues of -L - diag(beta), ascending, by dense
/// symmetric eigendecomposition.
inline std::vector<double> spectrum_oracle(const Grid& grid, const ScalarField& beta,
                                           std::size_t k) {
  if (k < 1 || k > grid.total_points()) throw InvalidInput("k out of range");
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hamiltonian_matrix(grid, beta),
                                                         Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw ConvergenceFailure("dense eigensolver failed", 0.0);
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = es.eigenvalues()(static_cast<Eigen::Index>(i));
  return out;
}

}  // namespace leafwise
