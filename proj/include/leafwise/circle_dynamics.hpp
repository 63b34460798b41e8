#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "leafwise/attractor_theory.hpp"
#include "leafwise/error.hpp"

namespace leafwise {

/// Point of the phase half-plane u > 0 of u' = v, v' = -f(u).
struct PlanarState {
  double u = 1.0;
  double v = 0.0;
};

struct OdeParams {
  double beta = 0.0;
  double psi1 = 0.0;
  double psi2 = 0.0;
};

/// H(u, v) = (v^2 + beta u^2) / 2 + psi1 ln u + psi2 / (2 u^2)
inline double hamiltonian(const PlanarState& s, const OdeParams& c) {
  if (!(s.u > 0.0)) throw InvalidInput("hamiltonian needs u > 0");
  return 0.5 * (s.v * s.v + c.beta * s.u * s.u) + c.psi1 * std::log(s.u) +
         0.5 * c.psi2 / (s.u * s.u);
}

namespace detail {
inline PlanarState planar_rhs(const PlanarState& s, const OdeParams& c) {
  return {s.v, -ode_rhs(s.u, c.beta, c.psi1, c.psi2)};
}
inline PlanarState rk4_planar(const PlanarState& s, const OdeParams& c, double dt) {
  const auto add = [](const PlanarState& a, const PlanarState& k, double h) {
    return PlanarState{a.u + h * k.u, a.v + h * k.v};
  };
  const auto k1 = planar_rhs(s, c);
  const auto k2 = planar_rhs(add(s, k1, 0.5 * dt), c);
  const auto k3 = planar_rhs(add(s, k2, 0.5 * dt), c);
  const auto k4 = planar_rhs(add(s, k3, dt), c);
  return {s.u + dt / 6.0 * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u),
          s.v + dt / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v)};
}
}  // namespace detail

struct OrbitResult {
  std::vector<double> times;
  std::vector<PlanarState> states;
  double energy_drift = 0.0;  ///< max |H(s) - H(s0)| over every step
  std::vector<double> crossing_times;  ///< v = 0 with v increasing
  std::vector<double> crossing_u;
  bool closed = false;
  std::optional<double> period;
};

/**
 * RK4 orbit of u' = v, v' = -f(u) up to time T. Section crossings are
 * refined by Newton iteration on the partial step length. The orbit is
 * closed when two crossings land within 1e-6 of each other; the period is
 * the mean spacing of the crossings.
 */
inline OrbitResult integrate_orbit(const PlanarState& s0, const OdeParams& c, double T,
                                   double dt, std::size_t record_every = 1) {
  if (!(s0.u > 0.0)) throw InvalidInput("orbit start needs u > 0");
  if (!(T >= 0.0) || !(dt > 0.0)) throw InvalidInput("need T >= 0 and dt > 0");
  if (record_every == 0) record_every = 1;
  const double h0 = hamiltonian(s0, c);
  OrbitResult r;
  r.times.push_back(0.0);
  r.states.push_back(s0);
  PlanarState s = s0;
  double t = 0.0;
  std::size_t k = 0;
  while (t < T) {
    const double h = std::min(dt, T - t);
    const PlanarState next = detail::rk4_planar(s, c, h);
    if (!(next.u > 0.0) || !std::isfinite(next.u) || !std::isfinite(next.v))
      throw BasinViolation("orbit left the half-plane u > 0", t);
    if (s.v < 0.0 && next.v >= 0.0) {
      double tau = h * (-s.v) / (next.v - s.v);
      for (int it = 0; it < 4; ++it) {
        const PlanarState at = detail::rk4_planar(s, c, tau);
        const double dv = -ode_rhs(at.u, c.beta, c.psi1, c.psi2);
        if (dv == 0.0) break;
        tau = std::clamp(tau - at.v / dv, 0.0, h);
      }
      r.crossing_times.push_back(t + tau);
      r.crossing_u.push_back(detail::rk4_planar(s, c, tau).u);
    }
    s = next;
    t = (T - (t + h) < 1e-12 * dt) ? T : t + h;
    ++k;
    r.energy_drift = std::max(r.energy_drift, std::abs(hamiltonian(s, c) - h0));
    if (k % record_every == 0 || t == T) {
      r.times.push_back(t);
      r.states.push_back(s);
    }
  }
  if (r.crossing_times.size() >= 2) {
    r.closed = std::abs(r.crossing_u[1] - r.crossing_u[0]) < 1e-6;
    if (r.closed)
      r.period = (r.crossing_times.back() - r.crossing_times.front()) /
                 static_cast<double>(r.crossing_times.size() - 1);
  }
  return r;
}

// ------------------------------------------------------------ fixed points

enum class FixedPointType { saddle, center, degenerate };

inline const char* to_string(FixedPointType t) {
  switch (t) {
    case FixedPointType::saddle: return "saddle";
    case FixedPointType::center: return "center";
    default: return "degenerate";
  }
}

struct PlanarFixedPoint {
  double u = 0.0;
  FixedPointType type = FixedPointType::degenerate;
  double slope = 0.0;  ///< f'(u)
};

/// Matrix A of the linearization at (u, 0): [[0, 1], [-f'(u), 0]].
inline Eigen::Matrix2d linearization(double u, const OdeParams& c) {
  Eigen::Matrix2d a;
  a << 0.0, 1.0, -ode_rhs_derivative(u, c.beta, c.psi1, c.psi2), 0.0;
  return a;
}

/// Positive roots of f, largest first, typed by the sign of f'.
inline std::vector<PlanarFixedPoint> fixed_points_and_types(const OdeParams& c) {
  if (c.psi1 < 0.0 || c.psi2 < 0.0) throw InvalidInput("need psi1 >= 0 and psi2 >= 0");
  if (c.psi1 == 0.0 && c.psi2 == 0.0 && c.beta == 0.0)
    throw InvalidInput("f vanishes identically");
  std::vector<PlanarFixedPoint> out;
  for (double y : ode_positive_roots(c.beta, c.psi1, c.psi2)) {
    const double d = ode_rhs_derivative(y, c.beta, c.psi1, c.psi2);
    const auto type = d < 0.0 ? FixedPointType::saddle
                      : d > 0.0 ? FixedPointType::center
                                : FixedPointType::degenerate;
    out.push_back({y, type, d});
  }
  return out;
}

/// H at the (largest) saddle; absent without a saddle.
inline std::optional<double> separatrix_level(const OdeParams& c) {
  for (const auto& fp : fixed_points_and_types(c))
    if (fp.type == FixedPointType::saddle) return hamiltonian({fp.u, 0.0}, c);
  return std::nullopt;
}

/// v^2 on the separatrix through the saddle y1 (beta < 0):
/// |beta| (u^2 - y1^2) - 2 psi1 ln(u / y1) - psi2 (u^-2 - y1^-2).
inline double separatrix_v_squared(double u, double y1, const OdeParams& c) {
  if (!(u > 0.0) || !(y1 > 0.0)) throw InvalidInput("separatrix relation needs u, y1 > 0");
  return std::abs(c.beta) * (u * u - y1 * y1) - 2.0 * c.psi1 * std::log(u / y1) -
         c.psi2 * (1.0 / (u * u) - 1.0 / (y1 * y1));
}

// ------------------------------------------------------------ case psi1 = 0

inline constexpr double kRadicandClamp = 1e-12;

/**
 * Closed-form solutions of u'' + beta u - psi2 / u^3 = 0 with first integral
 * (u')^2 = C1 - beta u^2 - psi2 / u^2. Returns nothing where the outer
 * radicand is not positive.
 */
inline std::optional<double> closed_form_case_c(double beta, double psi2, double C1, double C2,
                                                double x) {
  if (!(psi2 > 0.0)) throw InvalidInput("psi2 must be positive");
  double w = 0.0;
  if (beta > 0.0) {
    double inner_r = C1 * C1 - 4.0 * beta * psi2;
    if (inner_r < -kRadicandClamp) throw InvalidInput("beta > 0 needs C1^2 >= 4 beta psi2");
    if (inner_r <= kRadicandClamp) inner_r = 0.0;
    w = (C1 + std::sqrt(inner_r) * std::sin(2.0 * std::sqrt(beta) * (x + C2))) / (2.0 * beta);
  } else if (beta < 0.0) {
    const double b = -beta;
    const double inner_r = C1 * C1 + 4.0 * b * psi2;
    w = (-C1 + std::sqrt(inner_r) * std::cosh(2.0 * std::sqrt(b) * (x + C2))) / (2.0 * b);
  } else {
    if (!(C1 > 0.0)) return std::nullopt;
    w = psi2 / C1 + C1 * (x + C2) * (x + C2);
  }
  if (std::abs(w) <= kRadicandClamp) w = 0.0;
  if (!(w > 0.0)) return std::nullopt;
  return std::sqrt(w);
}

enum class Periodicity { none, unique_constant, two_parameter_family };

inline const char* to_string(Periodicity p) {
  switch (p) {
    case Periodicity::unique_constant: return "unique_constant";
    case Periodicity::two_parameter_family: return "two_parameter_family";
    default: return "none";
  }
}

/// Kind of the positive 2 pi-periodic solution set for psi1 = 0.
inline Periodicity periodicity_gate(double beta) {
  if (!(beta > 0.0)) return Periodicity::none;
  const double n = 2.0 * std::sqrt(beta);
  const double k = std::round(n);
  if (k >= 1.0 && std::abs(n - k) <= 1e-12 * std::max(1.0, n))
    return Periodicity::two_parameter_family;
  return Periodicity::unique_constant;
}

// ------------------------------------------------------------ export

inline void write_orbit_csv(std::ostream& os, const OrbitResult& r, const OdeParams& c) {
  os << "t,u,v,H\n";
  char buf[160];
  for (std::size_t k = 0; k < r.times.size(); ++k) {
    const auto& s = r.states[k];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", r.times[k], s.u, s.v,
                  hamiltonian(s, c));
    os << buf;
  }
}

/// H sampled on [u_lo, u_hi] x [v_lo, v_hi] with nu x nv points, u_lo > 0.
inline void write_portrait_csv(std::ostream& os, const OdeParams& c, double u_lo, double u_hi,
                               double v_lo, double v_hi, std::size_t nu, std::size_t nv) {
  if (!(u_lo > 0.0) || !(u_hi > u_lo) || !(v_hi > v_lo) || nu < 2 || nv < 2)
    throw InvalidInput("bad portrait window");
  os << "u,v,H\n";
  char buf[128];
  for (std::size_t i = 0; i < nu; ++i) {
    const double u = u_lo + (u_hi - u_lo) * static_cast<double>(i) / static_cast<double>(nu - 1);
    for (std::size_t j = 0; j < nv; ++j) {
      const double v =
          v_lo + (v_hi - v_lo) * static_cast<double>(j) / static_cast<double>(nv - 1);
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", u, v, hamiltonian({u, v}, c));
      os << buf;
    }
  }
}

}  // namespace leafwise
