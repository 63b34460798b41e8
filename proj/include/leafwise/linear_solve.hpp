#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "leafwise/error.hpp"
#include "leafwise/grid.hpp"

namespace leafwise {

/**
 * Solver for (diag(d) - c L) x = b with L the periodic Laplacian on `grid`
 * and c >= 0. The operator must be symmetric positive definite.
 *
 * On a circle the cyclic tridiagonal system is factored once (LDL^T plus a
 * Sherman-Morrison correction for the wrap entries). On tori the system is
 * solved by Jacobi-preconditioned conjugate gradients.
 */
class ShiftedLaplacianSolver {
 public:
  ShiftedLaplacianSolver(const Grid& grid, std::vector<double> diag, double coef)
      : grid_(grid), diag_(std::move(diag)), coef_(coef) {
    if (diag_.size() != grid_.total_points()) throw InvalidInput("diagonal size mismatch");
    if (coef_ < 0.0) throw InvalidInput("Laplacian coefficient must be nonnegative");
    if (grid_.rank() == 1) factor_cyclic();
  }

  const Grid& grid() const noexcept { return grid_; }

  std::vector<double> solve(std::span<const double> rhs) const {
    if (rhs.size() != diag_.size()) throw InvalidInput("rhs size mismatch");
    return grid_.rank() == 1 ? solve_cyclic(rhs) : solve_cg(rhs);
  }

  /// y = (diag - c L) x
  void apply(std::span<const double> x, std::span<double> y) const {
    detail::laplacian_into(grid_, x, y, 0, grid_.rank());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = diag_[i] * x[i] - coef_ * y[i];
  }

 private:
  void factor_cyclic() {
    const std::size_t n = diag_.size();
    const double h = grid_.spacing(0);
    off_ = -coef_ / (h * h);
    main_.resize(n);
    for (std::size_t i = 0; i < n; ++i) main_[i] = diag_[i] + 2.0 * coef_ / (h * h);
    // A = T + w w^T / gamma with gamma = -main[0], w = (gamma, 0, ..., 0, off)
    gamma_ = -main_[0];
    std::vector<double> t = main_;
    t[0] -= gamma_;
    t[n - 1] -= off_ * off_ / gamma_;
    // LDL^T of the tridiagonal T with constant off-diagonal.
    d_.resize(n);
    l_.assign(n, 0.0);
    d_[0] = t[0];
    for (std::size_t i = 1; i < n; ++i) {
      l_[i] = off_ / d_[i - 1];
      d_[i] = t[i] - l_[i] * off_;
      if (!(d_[i] > 0.0)) throw InvalidInput("shifted operator is not positive definite");
    }
    if (!(d_[0] > 0.0)) throw InvalidInput("shifted operator is not positive definite");
    std::vector<double> w(n, 0.0);
    w[0] = gamma_;
    w[n - 1] = off_;
    z_ = solve_tridiagonal(w);
    const double vz = z_[0] + off_ / gamma_ * z_[n - 1];
    denom_ = 1.0 + vz;
  }

  std::vector<double> solve_tridiagonal(std::span<const double> b) const {
    const std::size_t n = b.size();
    std::vector<double> y(b.begin(), b.end());
    for (std::size_t i = 1; i < n; ++i) y[i] -= l_[i] * y[i - 1];
    for (std::size_t i = 0; i < n; ++i) y[i] /= d_[i];
    for (std::size_t i = n - 1; i-- > 0;) y[i] -= l_[i + 1] * y[i + 1];
    return y;
  }

  std::vector<double> solve_cyclic(std::span<const double> rhs) const {
    const std::size_t n = rhs.size();
    std::vector<double> y = solve_tridiagonal(rhs);
    const double vy = y[0] + off_ / gamma_ * y[n - 1];
    const double f = vy / denom_;
    for (std::size_t i = 0; i < n; ++i) y[i] -= f * z_[i];
    return y;
  }

  std::vector<double> solve_cg(std::span<const double> rhs) const {
    const std::size_t n = rhs.size();
    std::vector<double> precond(n);
    double lap_diag = 0.0;
    for (std::size_t d = 0; d < grid_.rank(); ++d)
      lap_diag += 2.0 / (grid_.spacing(d) * grid_.spacing(d));
    for (std::size_t i = 0; i < n; ++i) precond[i] = 1.0 / (diag_[i] + coef_ * lap_diag);

    std::vector<double> x(n), r(rhs.begin(), rhs.end()), z(n), p(n), q(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = precond[i] * rhs[i];
    apply(x, q);
    for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - q[i];
    const double bnorm = std::sqrt(dot(rhs, rhs));
    if (bnorm == 0.0) return std::vector<double>(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) z[i] = precond[i] * r[i];
    p = z;
    double rz = dot(r, z);
    const std::size_t max_iter = 4 * n + 200;
    for (std::size_t it = 0; it < max_iter; ++it) {
      if (std::sqrt(dot(r, r)) <= 1e-14 * bnorm) return x;
      apply(p, q);
      const double alpha = rz / dot(p, q);
      for (std::size_t i = 0; i < n; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * q[i];
      }
      for (std::size_t i = 0; i < n; ++i) z[i] = precond[i] * r[i];
      const double rz_new = dot(r, z);
      const double beta = rz_new / rz;
      rz = rz_new;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    // Stagnation at roundoff level is acceptable; anything larger is not.
    const double rel = std::sqrt(dot(r, r)) / bnorm;
    if (rel > 1e-12) throw ConvergenceFailure("conjugate gradients did not converge", rel);
    return x;
  }

  static double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }

  Grid grid_;
  std::vector<double> diag_;
  double coef_;
  // cyclic factorization
  double off_ = 0.0, gamma_ = 0.0, denom_ = 1.0;
  std::vector<double> main_, d_, l_, z_;
};

}  // namespace leafwise
