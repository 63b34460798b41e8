#pragma once

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <vector>

#include "leafwise/error.hpp"
#include "leafwise/grid.hpp"
#include "leafwise/schrodinger.hpp"

namespace leafwise {

/**
 * Doubly-twisted product B x F with metric v^2 g_B + u^2 g_F over flat
 * factors. Fields live on product_grid(base, fiber), so the first
 * base.rank() dimensions are leaf (B) directions and the rest are normal
 * (F) directions.
 */
struct TwistedProduct {
  Grid base;
  Grid fiber;
  ScalarField v;
  ScalarField u;

  TwistedProduct(Grid b, Grid f, ScalarField v_, ScalarField u_)
      : base(std::move(b)), fiber(std::move(f)), v(std::move(v_)), u(std::move(u_)) {
    const Grid g = grid();
    require_same_grid(v, g, "v");
    require_same_grid(u, g, "u");
    if (!(v.min() > 0.0) || !(u.min() > 0.0)) throw InvalidInput("warping functions must be positive");
  }

  Grid grid() const { return product_grid(base, fiber); }
  std::size_t p() const { return base.rank(); }
  std::size_t n() const { return fiber.rank(); }
};

/// S_mix = -n (Lap_B u) / u - p (Lap_F v) / v on the product grid.
inline ScalarField twisted_smix(const TwistedProduct& tp) {
  const Grid g = tp.grid();
  const std::size_t p = tp.p(), n = tp.n(), r = g.rank();
  const auto lu = apply_partial_laplacian(g, tp.u, 0, p);
  const auto lv = apply_partial_laplacian(g, tp.v, p, r);
  std::vector<double> s(g.total_points());
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = -static_cast<double>(n) * lu[i] / tp.u[i] - static_cast<double>(p) * lv[i] / tp.v[i];
  return {g, std::move(s)};
}

/// beta = (p / n) (Lap_F v) / v
inline ScalarField leafwise_potential(const Grid& base, const Grid& fiber, const ScalarField& v) {
  const Grid g = product_grid(base, fiber);
  require_same_grid(v, g, "v");
  if (!(v.min() > 0.0)) throw InvalidInput("v must be positive");
  const auto lv = apply_partial_laplacian(g, v, base.rank(), g.rank());
  const double ratio = static_cast<double>(base.rank()) / static_cast<double>(fiber.rank());
  std::vector<double> b(g.total_points());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = ratio * lv[i] / v[i];
  return {g, std::move(b)};
}

struct TwistGroundState {
  ScalarField u;  ///< per-leaf ground states assembled on the product grid
  std::vector<double> leaf_lambda0;  ///< one per fiber point
  ScalarField smix;  ///< twisted_smix with this u
  std::vector<double> leaf_smix;  ///< n * lambda0 per leaf
  std::vector<double> leaf_oscillation;  ///< max - min of smix along each leaf
  double max_oscillation = 0.0;
};

/// Leafwise values on fiber point j: indices b * fiber_total + j.
inline std::vector<double> leaf_slice(std::span<const double> f, std::size_t fiber_total,
                                      std::size_t j) {
  std::vector<double> out(f.size() / fiber_total);
  for (std::size_t b = 0; b < out.size(); ++b) out[b] = f[b * fiber_total + j];
  return out;
}

/**
 * Takes u on every leaf B x {y} to be the ground state of -Lap_B - beta(., y)
 * with beta = (p / n)(Lap_F v)/v. The resulting S_mix is n lambda0(y) along
 * each leaf.
 */
inline TwistGroundState ground_state_twist(const Grid& base, const Grid& fiber,
                                           const ScalarField& v, double tol = 1e-13) {
  const Grid g = product_grid(base, fiber);
  const auto beta = leafwise_potential(base, fiber, v);
  const std::size_t nf = fiber.total_points();
  std::vector<double> u(g.total_points());
  std::vector<double> lambdas(nf);
  for (std::size_t j = 0; j < nf; ++j) {
    ScalarField leaf_beta(base, leaf_slice(beta.values(), nf, j));
    auto gs = ground_state(base, leaf_beta, tol);
    lambdas[j] = gs.lambda0;
    for (std::size_t b = 0; b < base.total_points(); ++b) u[b * nf + j] = gs.e0[b];
  }
  ScalarField uf(g, std::move(u));
  auto smix = twisted_smix(TwistedProduct(base, fiber, v, uf));
  TwistGroundState out{uf, lambdas, smix, {}, {}, 0.0};
  for (std::size_t j = 0; j < nf; ++j) {
    const auto s = leaf_slice(smix.values(), nf, j);
    const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
    out.leaf_smix.push_back(static_cast<double>(fiber.rank()) * lambdas[j]);
    out.leaf_oscillation.push_back(*hi - *lo);
    out.max_oscillation = std::max(out.max_oscillation, *hi - *lo);
  }
  return out;
}

/// Mixed scalar curvature after scaling the normal metric by a constant u^2.
inline double scaling_smix(double s_mix, double h_sq, double t_sq, double u) {
  if (!(u > 0.0)) throw InvalidInput("scaling factor must be positive");
  if (h_sq < 0.0 || t_sq < 0.0) throw InvalidInput("squared norms must be nonnegative");
  const double u2 = u * u;
  return s_mix - (1.0 / u2 - 1.0) * h_sq + (1.0 / (u2 * u2) - 1.0) * t_sq;
}

/**
 * Sup norm of (S - S~) u - [n Lap_B u - 2 H(u) + |h|^2 (1/u - u) - |T|^2 (1/u^3 - u)]
 * where S belongs to g and S~ to the metric with the normal part scaled by
 * u^2. The normal mean curvature term H(u) is zero here. The first
 * `leaf_dims` dimensions of `grid` are leaf directions; n is the rest.
 */
inline double conformal_residual(const ScalarField& s_mix, const ScalarField& s_mix_tilde,
                                 const ScalarField& u, const ScalarField& h_sq,
                                 const ScalarField& t_sq, const Grid& grid,
                                 std::size_t leaf_dims) {
  require_same_grid(s_mix, grid, "s_mix");
  require_same_grid(s_mix_tilde, grid, "s_mix_tilde");
  require_same_grid(u, grid, "u");
  require_same_grid(h_sq, grid, "h_sq");
  require_same_grid(t_sq, grid, "t_sq");
  if (leaf_dims == 0 || leaf_dims >= grid.rank())
    throw InvalidInput("need at least one leaf and one normal dimension");
  if (!(u.min() > 0.0)) throw InvalidInput("u must be positive");
  const double n = static_cast<double>(grid.rank() - leaf_dims);
  const auto lu = apply_partial_laplacian(grid, u, 0, leaf_dims);
  double m = 0.0;
  for (std::size_t i = 0; i < grid.total_points(); ++i) {
    const double ui = u[i];
    const double h_perp = 0.0;
    const double rhs = n * lu[i] - 2.0 * h_perp + h_sq[i] * (1.0 / ui - ui) -
                       t_sq[i] * (1.0 / (ui * ui * ui) - ui);
    m = std::max(m, std::abs((s_mix[i] - s_mix_tilde[i]) * ui - rhs));
  }
  return m;
}

/// CSV with one row per grid point: x0[,x1[,x2]],value.
inline void write_field_csv(std::ostream& os, const ScalarField& f) {
  const Grid& g = f.grid();
  for (std::size_t d = 0; d < g.rank(); ++d) os << 'x' << d << ',';
  os << "value\n";
  char buf[64];
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto x = g.coordinates(i);
    for (std::size_t d = 0; d < g.rank(); ++d) {
      std::snprintf(buf, sizeof buf, "%.17g,", x[d]);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g\n", f[i]);
    os << buf;
  }
}

}  // namespace leafwise
