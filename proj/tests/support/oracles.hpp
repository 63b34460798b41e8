#pragma once

// Reference computations for the tests. Nothing here calls into the library
// under test except for plain data types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline constexpr double kPi = std::numbers::pi;

/// Plain bisection for a sign change of f on [lo, hi].
inline double bisect(const std::function<double(double)>& f, double lo, double hi) {
  double flo = f(lo);
  for (int i = 0; i < 400; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

struct QuarticRoots {
  double y1 = 0.0, y2 = 0.0, y3 = 0.0, y4 = 0.0;
};

/// Roots of phi(y) = -l y + A/y - B/y^3, phi' and phi'' by bracketing on
/// the original functions (no biquadratic algebra).
inline QuarticRoots phi_roots_bisection(double l, double A, double B) {
  const auto f = [&](double y) { return -l * y + A / y - B / (y * y * y); };
  const auto df = [&](double y) { return -l - A / (y * y) + 3.0 * B / (y * y * y * y); };
  const auto ddf = [&](double y) { return 2.0 * A / (y * y * y) - 12.0 * B / std::pow(y, 5); };
  double lo = 1e-8, hi = 1.0;
  while (df(hi) > 0.0) hi *= 2.0;
  QuarticRoots r;
  r.y3 = bisect(df, lo, hi);
  double big = 2.0 * r.y3;
  while (f(big) > 0.0) big *= 2.0;
  r.y1 = bisect(f, r.y3, big);
  r.y2 = bisect(f, 1e-8, r.y3);
  double hi4 = 1.0;
  while (ddf(hi4) < 0.0) hi4 *= 2.0;
  r.y4 = bisect(ddf, 1e-8, hi4);
  return r;
}

/// Dense -D2 - diag(beta) on a periodic 1D grid, built entry by entry.
inline Eigen::MatrixXd circle_hamiltonian(const std::vector<double>& beta, double length) {
  const auto n = static_cast<Eigen::Index>(beta.size());
  const double h = length / static_cast<double>(n);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m(i, i) = 2.0 / (h * h) - beta[static_cast<std::size_t>(i)];
    m(i, (i + 1) % n) -= 1.0 / (h * h);
    m(i, (i + n - 1) % n) -= 1.0 / (h * h);
  }
  return m;
}

/// Dense -L - diag(beta) on a 2D periodic grid (row-major, second index fastest).
inline Eigen::MatrixXd torus_hamiltonian(const std::vector<double>& beta, std::size_t n0,
                                         std::size_t n1, double l0, double l1) {
  const auto n = static_cast<Eigen::Index>(n0 * n1);
  const double w0 = std::pow(static_cast<double>(n0) / l0, 2);
  const double w1 = std::pow(static_cast<double>(n1) / l1, 2);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < n0; ++i)
    for (std::size_t j = 0; j < n1; ++j) {
      const auto k = static_cast<Eigen::Index>(i * n1 + j);
      m(k, k) = 2.0 * w0 + 2.0 * w1 - beta[static_cast<std::size_t>(k)];
      m(k, static_cast<Eigen::Index>(((i + 1) % n0) * n1 + j)) -= w0;
      m(k, static_cast<Eigen::Index>(((i + n0 - 1) % n0) * n1 + j)) -= w0;
      m(k, static_cast<Eigen::Index>(i * n1 + (j + 1) % n1)) -= w1;
      m(k, static_cast<Eigen::Index>(i * n1 + (j + n1 - 1) % n1)) -= w1;
    }
  return m;
}

inline Eigen::VectorXd sorted_eigenvalues(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

/// Eigenvalues 4/h^2 sin^2(pi k / N) of -D2 on a periodic circle, ascending.
inline std::vector<double> circle_laplacian_spectrum(std::size_t n, double length) {
  const double h = length / static_cast<double>(n);
  std::vector<double> ev(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double s = std::sin(kPi * static_cast<double>(k) / static_cast<double>(n));
    ev[k] = 4.0 / (h * h) * s * s;
  }
  std::sort(ev.begin(), ev.end());
  return ev;
}

/// One IMEX step for spatially constant data: (1 - dt b) u+ = u + dt (a/u - c/u^3).
inline double scalar_imex_step(double u, double dt, double b, double a, double c) {
  return (u + dt * (a / u - c / (u * u * u))) / (1.0 - dt * b);
}

/// Central difference f'(x).
inline double derivative(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Fine-step RK4 for y' = f(y), used to cross-check trajectories.
inline double rk4_reference(const std::function<double(double)>& f, double y, double T,
                            std::size_t steps) {
  const double h = T / static_cast<double>(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double k1 = f(y), k2 = f(y + 0.5 * h * k1), k3 = f(y + 0.5 * h * k2),
                 k4 = f(y + h * k3);
    y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return y;
}

/// Random trigonometric polynomial sum_k a_k cos(k x) + b_k sin(k x) of
/// degree <= `degree`, returned as coefficient arrays.
struct TrigPoly {
  double c0 = 0.0;
  std::vector<double> a, b;
  double operator()(double x) const {
    double v = c0;
    for (std::size_t k = 0; k < a.size(); ++k)
      v += a[k] * std::cos(static_cast<double>(k + 1) * x) +
           b[k] * std::sin(static_cast<double>(k + 1) * x);
    return v;
  }
};

inline TrigPoly random_trig(std::mt19937_64& rng, std::size_t degree, double amp) {
  std::uniform_real_distribution<double> u(-amp, amp);
  TrigPoly p;
  p.c0 = u(rng);
  for (std::size_t k = 0; k < degree; ++k) {
    p.a.push_back(u(rng) / static_cast<double>(k + 1));
    p.b.push_back(u(rng) / static_cast<double>(k + 1));
  }
  return p;
}

}  // namespace oracle
