#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "leafwise/error.hpp"
#include "leafwise/grid.hpp"

namespace leafwise {

enum class Side { minus, plus };

/**
 * Comparison profile phi(y) = -lambda0 y + A / y - B / y^3 on y > 0.
 *
 * y1 > y2 are the positive roots, y3 the positive root of phi' and y4 the
 * positive root of phi''. With B = 0 only y1 exists and phi is decreasing.
 */
struct PhiProfile {
  double lambda0 = 0.0;
  double A = 0.0;
  double B = 0.0;
  double y1 = 0.0;
  std::optional<double> y2;
  std::optional<double> y3;
  std::optional<double> y4;
};

/// Grid extrema of psi1 e0^-2 and psi2 e0^-4.
struct ExtremaCoeffs {
  double psi1_plus = 0.0;
  double psi1_minus = 0.0;
  double psi2_plus = 0.0;
  double psi2_minus = 0.0;
};

struct RootPair {
  double y1 = 0.0;
  std::optional<double> y2;
};

struct Admissibility {
  bool admissible = false;
  double margin = 0.0;  ///< (psi1_minus)^2 - 4 lambda0 psi2_plus
};

inline double phi(double y, double lambda0, double A, double B) {
  if (!(y > 0.0)) throw InvalidInput("phi is defined for y > 0 only");
  return -lambda0 * y + A / y - B / (y * y * y);
}
inline double phi_derivative(double y, double lambda0, double A, double B) {
  if (!(y > 0.0)) throw InvalidInput("phi' is defined for y > 0 only");
  const double y2 = y * y;
  return -lambda0 - A / y2 + 3.0 * B / (y2 * y2);
}
inline double phi(double y, const PhiProfile& p) { return phi(y, p.lambda0, p.A, p.B); }
inline double phi_derivative(double y, const PhiProfile& p) {
  return phi_derivative(y, p.lambda0, p.A, p.B);
}

/// (A, B) for a side: minus uses (psi1_minus, psi2_plus), plus uses (psi1_plus, psi2_minus).
inline std::pair<double, double> side_coefficients(const ExtremaCoeffs& c, Side side) {
  return side == Side::minus ? std::pair{c.psi1_minus, c.psi2_plus}
                             : std::pair{c.psi1_plus, c.psi2_minus};
}
inline double phi(double y, double lambda0, const ExtremaCoeffs& c, Side side) {
  const auto [a, b] = side_coefficients(c, side);
  return phi(y, lambda0, a, b);
}

inline ExtremaCoeffs extrema_coeffs(const ScalarField& psi1, const ScalarField& psi2,
                                    const ScalarField& e0) {
  require_same_grid(psi1, e0.grid(), "psi1");
  require_same_grid(psi2, e0.grid(), "psi2");
  if (!(psi1.min() > 0.0)) throw InvalidInput("psi1 must be positive");
  if (psi2.min() < 0.0) throw InvalidInput("psi2 must be nonnegative");
  if (!(e0.min() > 0.0)) throw InvalidInput("e0 must be positive");
  ExtremaCoeffs c{-INFINITY, INFINITY, -INFINITY, INFINITY};
  for (std::size_t i = 0; i < e0.size(); ++i) {
    const double e2 = e0[i] * e0[i];
    const double a = psi1[i] / e2;
    const double b = psi2[i] / (e2 * e2);
    c.psi1_plus = std::max(c.psi1_plus, a);
    c.psi1_minus = std::min(c.psi1_minus, a);
    c.psi2_plus = std::max(c.psi2_plus, b);
    c.psi2_minus = std::min(c.psi2_minus, b);
  }
  return c;
}

inline std::optional<double> critical_root_y3(double lambda0, double A, double B) {
  if (!(lambda0 > 0.0) || !(A > 0.0) || B < 0.0)
    throw InvalidInput("critical root needs lambda0 > 0, A > 0, B >= 0");
  if (B == 0.0) return std::nullopt;
  // y^2 = (-A + sqrt(A^2 + 12 B lambda0)) / (2 lambda0), written without cancellation.
  const double s = 6.0 * B / (A + std::sqrt(A * A + 12.0 * B * lambda0));
  return std::sqrt(s);
}

inline std::optional<double> inflection_root_y4(double A, double B) {
  if (!(A > 0.0)) throw InvalidInput("inflection root needs A > 0");
  if (B == 0.0) return std::nullopt;
  return std::sqrt(6.0 * B / A);
}

namespace detail {
template <class F>
double bisect(F&& f, double lo, double hi) {
  double flo = f(lo);
  for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = f(mid);
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}
}  // namespace detail

/**
 * Positive roots of phi from the biquadratic -lambda0 y^4 + A y^2 - B = 0.
 *
 * Uses y1^2 = (A + sqrt(D)) / (2 lambda0) and y2^2 = 2B / (A + sqrt(D)). When
 * D < 1e-8 A^2 both roots are re-polished by bisection on phi around y3.
 */
inline RootPair phi_roots(double lambda0, double A, double B) {
  if (!(lambda0 > 0.0)) throw InvalidInput("phi_roots needs lambda0 > 0");
  if (!(A > 0.0) || B < 0.0) throw InvalidInput("phi_roots needs A > 0 and B >= 0");
  if (B == 0.0) return {std::sqrt(A / lambda0), std::nullopt};
  const double disc = A * A - 4.0 * lambda0 * B;
  if (!(disc > 0.0))
    throw Inadmissible("comparison quartic has no simple positive roots: discriminant " +
                           std::to_string(disc),
                       disc);
  const double q = A + std::sqrt(disc);
  RootPair r{std::sqrt(q / (2.0 * lambda0)), std::sqrt(2.0 * B / q)};
  if (disc < 1e-8 * A * A) {
    const double y3 = *critical_root_y3(lambda0, A, B);
    const auto f = [&](double y) { return phi(y, lambda0, A, B); };
    double lo = 0.5 * *r.y2;
    while (f(lo) >= 0.0) lo *= 0.5;
    double hi = 2.0 * r.y1;
    while (f(hi) >= 0.0) hi *= 2.0;
    r.y2 = detail::bisect(f, lo, y3);
    r.y1 = detail::bisect(f, y3, hi);
  }
  return r;
}

inline PhiProfile make_profile(double lambda0, double A, double B) {
  const auto roots = phi_roots(lambda0, A, B);
  PhiProfile p{lambda0, A, B, roots.y1, roots.y2, std::nullopt, std::nullopt};
  p.y3 = critical_root_y3(lambda0, A, B);
  p.y4 = inflection_root_y4(A, B);
  return p;
}

inline PhiProfile make_profile(double lambda0, const ExtremaCoeffs& c, Side side) {
  const auto [a, b] = side_coefficients(c, side);
  return make_profile(lambda0, a, b);
}

/// Upper end of the admissible sigma range: y1 - y3, or y1 when B = 0.
inline double sigma_limit(const PhiProfile& p) { return p.y3 ? p.y1 - *p.y3 : p.y1; }

/// mu(sigma) = min{|phi'(y1 - sigma)|, lambda0}.
inline double decay_rate_mu(double sigma, const PhiProfile& p) {
  if (sigma < 0.0 || !(sigma < sigma_limit(p)))
    throw InvalidInput("sigma must lie in [0, y1 - y3)");
  return std::min(std::abs(phi_derivative(p.y1 - sigma, p)), p.lambda0);
}

/// -sup phi' over y >= y1 - sigma, sampled on a log grid up to 10 y4 (10 y1
/// when B = 0) and closed by the asymptote phi' -> -lambda0.
inline double decay_rate_mu_sampled(double sigma, const PhiProfile& p,
                                    std::size_t samples = 10000) {
  if (sigma < 0.0 || !(sigma < sigma_limit(p)))
    throw InvalidInput("sigma must lie in [0, y1 - y3)");
  const double lo = p.y1 - sigma;
  const double hi = std::max(10.0 * (p.y4 ? *p.y4 : p.y1), 2.0 * lo);
  double sup = -p.lambda0;
  const double ratio = std::log(hi / lo);
  for (std::size_t i = 0; i < samples; ++i) {
    const double y = lo * std::exp(ratio * static_cast<double>(i) / static_cast<double>(samples - 1));
    sup = std::max(sup, phi_derivative(y, p));
  }
  return -sup;
}

inline Admissibility check_admissible(double lambda0, const ExtremaCoeffs& c) {
  const double margin = c.psi1_minus * c.psi1_minus - 4.0 * lambda0 * c.psi2_plus;
  const bool ok = lambda0 > 0.0 && (c.psi2_plus == 0.0 || margin > 0.0);
  return {ok, margin};
}

// ------------------------------------------------------------ scalar flows

struct Trajectory {
  std::vector<double> t;
  std::vector<double> y;
};

namespace detail {
inline double rk4_step(const std::function<double(double)>& f, double y, double dt) {
  const double k1 = f(y);
  const double k2 = f(y + 0.5 * dt * k1);
  const double k3 = f(y + 0.5 * dt * k2);
  const double k4 = f(y + dt * k3);
  return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}
}  // namespace detail

/**
 * Classical RK4 for y' = f(y) on [0, T] with y kept in (0, inf): a step
 * whose stages or result leave the half-line is retried with dt halved.
 * Every `record_every`-th step is kept, plus the endpoint.
 */
inline Trajectory integrate_positive(const std::function<double(double)>& f, double y0, double T,
                                     double dt, std::size_t record_every = 1) {
  if (!(y0 > 0.0)) throw InvalidInput("initial value must be positive");
  if (!(dt > 0.0) || T < 0.0) throw InvalidInput("need dt > 0 and T >= 0");
  record_every = std::max<std::size_t>(record_every, 1);
  const auto safe = [&](double y) {
    if (!(y > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return f(y);
  };
  Trajectory tr{{0.0}, {y0}};
  double t = 0.0, y = y0;
  std::size_t k = 0;
  while (t < T) {
    double h = std::min(dt, T - t);
    double y_new = detail::rk4_step(safe, y, h);
    int halvings = 0;
    while (!(y_new > 0.0) || !std::isfinite(y_new)) {
      if (++halvings > 50) throw BasinViolation("scalar flow cannot stay positive", t);
      h *= 0.5;
      y_new = detail::rk4_step(safe, y, h);
    }
    y = y_new;
    t = (T - (t + h) < 1e-12 * dt) ? T : t + h;
    if (++k % record_every == 0 || t == T) {
      tr.t.push_back(t);
      tr.y.push_back(y);
    }
  }
  return tr;
}

/// Flow of y' = phi(y). dt <= 0 selects
/// min(0.01, 0.1 / lambda0).
inline Trajectory scalar_flow(double y0, const PhiProfile& p, double T, double dt = 0.0,
                              std::size_t record_every = 1) {
  if (!(y0 > 0.0)) throw InvalidInput("y0 must be positive");
  if (p.y2 && y0 <= *p.y2)
    throw BasinViolation("y0 <= y2: the flow blows down toward 0", 0.0);
  if (dt <= 0.0) dt = std::min(0.01, 0.1 / p.lambda0);
  return integrate_positive([&](double y) { return phi(y, p); }, y0, T, dt, record_every);
}

// --------------------------------------- constant-coefficient ODE (y' = f(y))

enum class Stability { stable, unstable, degenerate };

struct FixedPoint {
  double root = 0.0;
  Stability stability = Stability::degenerate;
  double slope = 0.0;  ///< f'(root)
};

/// f(u) = beta u + psi1 / u - psi2 / u^3
inline double ode_rhs(double u, double beta, double psi1, double psi2) {
  return beta * u + psi1 / u - psi2 / (u * u * u);
}
inline double ode_rhs_derivative(double u, double beta, double psi1, double psi2) {
  const double u2 = u * u;
  return beta - psi1 / u2 + 3.0 * psi2 / (u2 * u2);
}

/// Positive roots of u^3 f(u) = beta u^4 + psi1 u^2 - psi2, sorted with the
/// largest first. Requires psi1 >= 0 and psi2 >= 0.
inline std::vector<double> ode_positive_roots(double beta, double psi1, double psi2) {
  if (psi1 < 0.0 || psi2 < 0.0) throw InvalidInput("need psi1 >= 0 and psi2 >= 0");
  std::vector<double> s;
  if (psi2 == 0.0) {
    if (beta < 0.0 && psi1 > 0.0) s.push_back(psi1 / -beta);
  } else if (beta == 0.0) {
    if (psi1 > 0.0) s.push_back(psi2 / psi1);
  } else if (beta > 0.0) {
    s.push_back(2.0 * psi2 / (psi1 + std::sqrt(psi1 * psi1 + 4.0 * beta * psi2)));
  } else {
    const double b = -beta;
    const double disc = psi1 * psi1 - 4.0 * b * psi2;
    if (disc == 0.0) {
      s.push_back(psi1 / (2.0 * b));
    } else if (disc > 0.0) {
      const double q = psi1 + std::sqrt(disc);
      s.push_back(q / (2.0 * b));
      s.push_back(2.0 * psi2 / q);
    }
  }
  std::vector<double> roots;
  for (double v : s) roots.push_back(std::sqrt(v));
  return roots;
}

inline std::vector<FixedPoint> classify_fixed_points(double beta, double psi1, double psi2) {
  if (!(psi1 > 0.0) || psi2 < 0.0) throw InvalidInput("need psi1 > 0 and psi2 >= 0");
  std::vector<FixedPoint> out;
  for (double y : ode_positive_roots(beta, psi1, psi2)) {
    const double d = ode_rhs_derivative(y, beta, psi1, psi2);
    const Stability st = d < 0.0 ? Stability::stable
                         : d > 0.0 ? Stability::unstable
                                   : Stability::degenerate;
    out.push_back({y, st, d});
  }
  return out;
}

inline const char* to_string(Stability s) {
  switch (s) {
    case Stability::stable: return "stable";
    case Stability::unstable: return "unstable";
    default: return "degenerate";
  }
}

// ------------------------------------------------- geometric normalization

/// The leafwise heat-equation data equivalent to the mixed-curvature problem
/// with target curvature Phi: beta = beta_top + Phi/n, lambda0 = lambda0_top
/// + lambda0_shift, psi1 = |h|^2 / n, psi2 = |T|^2 / n.
struct NormalizedProblem {
  ScalarField beta;
  double lambda0_shift;
  ScalarField psi1;
  ScalarField psi2;
};

inline NormalizedProblem prop3_normalize(const ScalarField& h_sq, const ScalarField& t_sq,
                                         const ScalarField& beta_top, double Phi, int n) {
  if (n < 1) throw InvalidInput("codimension n must be >= 1");
  const Grid& g = beta_top.grid();
  require_same_grid(h_sq, g, "|h|^2");
  require_same_grid(t_sq, g, "|T|^2");
  if (!(h_sq.min() > 0.0))
    throw InvalidInput("|h|^2 vanishes somewhere: the foliation must be nowhere totally geodesic");
  if (t_sq.min() < 0.0) throw InvalidInput("|T|^2 must be nonnegative");
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> b(g.total_points()), p1(b.size()), p2(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    b[i] = beta_top[i] + Phi * inv_n;
    p1[i] = h_sq[i] * inv_n;
    p2[i] = t_sq[i] * inv_n;
  }
  return {ScalarField(g, std::move(b)), -Phi * inv_n, ScalarField(g, std::move(p1)),
          ScalarField(g, std::move(p2))};
}

/// Open interval of target curvatures Phi for which the normalized problem
/// is admissible: n lambda0_top - min(|h|^4 e0^-4) / (4 max(|T|^2 e0^-4))
/// < Phi < n lambda0_top. The lower end is -inf when |T| vanishes.
struct PhiWindow {
  double lower;
  double upper;
};

inline PhiWindow phi_window(const ScalarField& h_sq, const ScalarField& t_sq,
                            const ScalarField& e0, double lambda0_top, int n) {
  const Grid& g = e0.grid();
  require_same_grid(h_sq, g, "|h|^2");
  require_same_grid(t_sq, g, "|T|^2");
  double min_h = INFINITY, max_t = 0.0;
  for (std::size_t i = 0; i < e0.size(); ++i) {
    const double e2 = e0[i] * e0[i];
    min_h = std::min(min_h, h_sq[i] / e2);
    max_t = std::max(max_t, t_sq[i] / (e2 * e2));
  }
  const double upper = n * lambda0_top;
  if (max_t == 0.0) return {-INFINITY, upper};
  return {upper - min_h * min_h / (4.0 * max_t), upper};
}

}  // namespace leafwise
