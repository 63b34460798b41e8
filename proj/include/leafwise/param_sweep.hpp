#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "leafwise/error.hpp"
#include "leafwise/grid.hpp"
#include "leafwise/heatflow.hpp"
#include "leafwise/schrodinger.hpp"

namespace leafwise {

using QPoint = std::array<double, 2>;
using FieldOfQ = std::function<ScalarField(const QPoint&)>;

/// Uniform parameter axis lo, lo + step, ..., hi.
struct QAxis {
  double lo = 0.0;
  double step = 1.0;
  std::size_t count = 1;

  static QAxis uniform(double lo, double hi, double step) {
    if (!(step > 0.0) || !(hi >= lo)) throw InvalidInput("bad parameter axis");
    const double n = (hi - lo) / step;
    const double k = std::round(n);
    if (std::abs(n - k) > 1e-9 * std::max(1.0, n))
      throw InvalidInput("axis step does not divide the interval");
    return {lo, step, static_cast<std::size_t>(k) + 1};
  }
  double at(std::size_t k) const { return lo + static_cast<double>(k) * step; }
};

/// Family of problems on a fixed grid indexed by q in R^m, m <= 2. Only the
/// coefficient fields depend on q.
struct ParamFamily {
  Grid grid;
  std::vector<QAxis> axes;
  FieldOfQ beta_of_q;
  FieldOfQ psi1_of_q;  ///< needed by sweep_attractor only
  FieldOfQ psi2_of_q;

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.count;
    return n;
  }
  /// Point k of the row-major parameter grid (last axis fastest).
  QPoint point(std::size_t k) const {
    QPoint q{0.0, 0.0};
    for (std::size_t a = axes.size(); a-- > 0;) {
      q[a] = axes[a].at(k % axes[a].count);
      k /= axes[a].count;
    }
    return q;
  }
  std::size_t stride(std::size_t axis) const {
    std::size_t s = 1;
    for (std::size_t a = axis + 1; a < axes.size(); ++a) s *= axes[a].count;
    return s;
  }
  void validate() const {
    if (axes.empty() || axes.size() > 2) throw InvalidInput("need 1 or 2 parameter axes");
    if (!beta_of_q) throw InvalidInput("family needs beta(q)");
  }
};

struct SweepResult {
  std::vector<QAxis> axes;
  std::vector<QPoint> q;
  std::vector<double> lambda0;
  std::vector<double> gap;
  std::vector<double> beta_min;
  std::vector<double> beta_max;
  std::vector<ScalarField> e0;
  std::vector<std::optional<ScalarField>> u_star;
  std::vector<double> min_ratio;  ///< min u*/e0 (attractor sweeps)
  std::vector<double> max_ratio;
  /// Central first and second differences of lambda0 along each axis; NaN
  /// where the stencil leaves the grid.
  std::vector<std::vector<double>> first_difference;
  std::vector<std::vector<double>> second_difference;
};

inline constexpr double kMinSweepGap = 1e-6;

namespace detail {

inline std::string describe(const QPoint& q, std::size_t m) {
  std::string s = "q = (" + std::to_string(q[0]);
  if (m > 1) s += ", " + std::to_string(q[1]);
  return s + ")";
}

inline std::size_t axis_index(const std::vector<QAxis>& axes, std::size_t k, std::size_t axis) {
  std::size_t s = 1;
  for (std::size_t a = axis + 1; a < axes.size(); ++a) s *= axes[a].count;
  return (k / s) % axes[axis].count;
}

inline void fill_differences(SweepResult& r) {
  const std::size_t n = r.lambda0.size();
  r.first_difference.assign(r.axes.size(), std::vector<double>(n, NAN));
  r.second_difference.assign(r.axes.size(), std::vector<double>(n, NAN));
  for (std::size_t a = 0; a < r.axes.size(); ++a) {
    std::size_t s = 1;
    for (std::size_t b = a + 1; b < r.axes.size(); ++b) s *= r.axes[b].count;
    const double d = r.axes[a].step;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = axis_index(r.axes, k, a);
      if (i == 0 || i + 1 >= r.axes[a].count) continue;
      const double lm = r.lambda0[k - s], l0 = r.lambda0[k], lp = r.lambda0[k + s];
      r.first_difference[a][k] = (lp - lm) / (2.0 * d);
      r.second_difference[a][k] = (lp - 2.0 * l0 + lm) / (d * d);
    }
  }
}

}  // namespace detail

/// Ground state at every parameter point. Aborts when the gap drops below 1e-6.
inline SweepResult sweep_ground_state(const ParamFamily& fam, double tol = 1e-13) {
  fam.validate();
  SweepResult r;
  r.axes = fam.axes;
  const std::size_t n = fam.size();
  for (std::size_t k = 0; k < n; ++k) {
    const QPoint q = fam.point(k);
    const auto beta = fam.beta_of_q(q);
    require_same_grid(beta, fam.grid, "beta(q)");
    std::optional<SpectralResult> found;
    try {
      found.emplace(ground_state(fam.grid, beta, tol));
    } catch (const ConvergenceFailure& e) {
      throw ConvergenceFailure(std::string(e.what()) + " at " + detail::describe(q, r.axes.size()),
                               e.residual());
    }
    auto& gs = *found;
    if (gs.gap < kMinSweepGap)
      throw ConvergenceFailure("spectral gap " + std::to_string(gs.gap) + " below 1e-6 at " +
                                   detail::describe(q, r.axes.size()),
                               gs.gap);
    r.q.push_back(q);
    r.lambda0.push_back(gs.lambda0);
    r.gap.push_back(gs.gap);
    r.beta_min.push_back(beta.min());
    r.beta_max.push_back(beta.max());
    r.e0.push_back(std::move(gs.e0));
  }
  r.u_star.assign(n, std::nullopt);
  detail::fill_differences(r);
  return r;
}

struct AttractorSweepOptions {
  double t_max = 1e4;
  bool warm_start = true;
  EvolveOptions evolve{};
};

/**
 * u* at every parameter point. Cold starts use y1-(q) e0(q); warm starts
 * begin from the previous point's u* when it lies in the current basin.
 */
inline SweepResult sweep_attractor(const ParamFamily& fam, double tol,
                                   const AttractorSweepOptions& opts = {}) {
  fam.validate();
  if (!fam.psi1_of_q || !fam.psi2_of_q) throw InvalidInput("family needs psi1(q) and psi2(q)");
  SweepResult r;
  r.axes = fam.axes;
  const std::size_t n = fam.size();
  std::optional<ScalarField> prev;
  for (std::size_t k = 0; k < n; ++k) {
    const QPoint q = fam.point(k);
    const std::string where = detail::describe(q, r.axes.size());
    const auto beta = fam.beta_of_q(q);
    std::optional<ProblemData> p;
    try {
      p.emplace(build_problem(fam.grid, beta, fam.psi1_of_q(q), fam.psi2_of_q(q)));
    } catch (const Inadmissible& e) {
      throw Inadmissible(std::string(e.what()) + " at " + where, e.margin());
    }
    if (p->spectral.gap < kMinSweepGap)
      throw ConvergenceFailure("spectral gap below 1e-6 at " + where, p->spectral.gap);
    // A new row of a 2-axis grid restarts the warm chain.
    if (r.axes.size() > 1 && k % r.axes.back().count == 0) prev.reset();
    std::vector<double> cold(p->grid.total_points());
    for (std::size_t i = 0; i < cold.size(); ++i) cold[i] = p->profile_minus.y1 * p->e0()[i];
    ScalarField u0 = (opts.warm_start && prev && in_basin(prev->values(), *p))
                         ? *prev
                         : ScalarField(p->grid, std::move(cold));
    std::optional<AttractorRun> found;
    try {
      found.emplace(evolve_to_attractor(u0, *p, tol, opts.t_max, opts.evolve));
    } catch (const ConvergenceFailure& e) {
      throw ConvergenceFailure(std::string(e.what()) + " at " + where, e.residual());
    }
    auto& run = *found;
    const auto rep = certify_sandwich(run.u_star, *p);
    r.q.push_back(q);
    r.lambda0.push_back(p->lambda0());
    r.gap.push_back(p->spectral.gap);
    r.beta_min.push_back(beta.min());
    r.beta_max.push_back(beta.max());
    r.e0.push_back(p->e0());
    r.min_ratio.push_back(rep.min_ratio);
    r.max_ratio.push_back(rep.max_ratio);
    prev = run.u_star;
    r.u_star.emplace_back(std::move(run.u_star));
  }
  detail::fill_differences(r);
  return r;
}

// ------------------------------------------------------------ diagnostics

/// max over neighbouring q along `axis` of ||f(q + d) - f(q)||_inf / d.
inline double lipschitz_quotient(const SweepResult& r, std::span<const ScalarField> fields,
                                 std::size_t axis = 0) {
  if (axis >= r.axes.size()) throw InvalidInput("axis out of range");
  std::size_t s = 1;
  for (std::size_t b = axis + 1; b < r.axes.size(); ++b) s *= r.axes[b].count;
  double m = 0.0;
  for (std::size_t k = 0; k < fields.size(); ++k) {
    if (detail::axis_index(r.axes, k, axis) + 1 >= r.axes[axis].count) continue;
    m = std::max(m, sup_distance(fields[k], fields[k + s]) / r.axes[axis].step);
  }
  return m;
}

inline double e0_lipschitz(const SweepResult& r, std::size_t axis = 0) {
  return lipschitz_quotient(r, r.e0, axis);
}

inline double u_star_lipschitz(const SweepResult& r, std::size_t axis = 0) {
  std::vector<ScalarField> f;
  for (const auto& u : r.u_star) {
    if (!u) throw InvalidInput("sweep has no attractors");
    f.push_back(*u);
  }
  return lipschitz_quotient(r, f, axis);
}

struct SmoothnessReport {
  int order = 1;
  std::size_t axis = 0;
  std::vector<double> steps;  ///< q-steps, coarse to fine
  std::vector<double> sup_quotient;  ///< max |difference quotient| per level
  std::vector<double> level_change;  ///< sup |D(d) - D(d/2)| at shared points
  std::vector<double> ratios;  ///< level_change[k] / level_change[k + 1]
  bool exact = false;  ///< all level changes at roundoff
  bool pass = false;
};

/**
 * Convergence of order-1 or order-2 central difference quotients of
 * lambda0 under q-step halving. The sweeps must cover the same interval
 * with steps d, d/2, d/4, ... Pass iff each ratio of successive changes is
 * within 20% of 4, or all changes sit at roundoff level.
 */
inline SmoothnessReport smoothness_diagnostic(std::span<const SweepResult> levels, int order,
                                              std::size_t axis = 0) {
  if (order != 1 && order != 2) throw InvalidInput("order must be 1 or 2");
  if (levels.empty()) throw InvalidInput("need at least one sweep");
  SmoothnessReport rep;
  rep.order = order;
  rep.axis = axis;
  for (const auto& r : levels) {
    if (axis >= r.axes.size() || r.axes[axis].count < 5)
      throw InvalidInput("smoothness needs at least 5 points along the axis");
    const auto& table = order == 1 ? r.first_difference[axis] : r.second_difference[axis];
    double m = 0.0;
    for (double v : table)
      if (std::isfinite(v)) m = std::max(m, std::abs(v));
    rep.steps.push_back(r.axes[axis].step);
    rep.sup_quotient.push_back(m);
  }
  if (levels.size() > 1 && levels[0].axes.size() != 1)
    throw InvalidInput("refinement study supports one-axis sweeps");
  for (std::size_t l = 0; l + 1 < levels.size(); ++l) {
    const auto& c = levels[l];
    const auto& f = levels[l + 1];
    if (f.axes[0].count != 2 * c.axes[0].count - 1)
      throw InvalidInput("sweeps must halve the q-step");
    const auto& tc = order == 1 ? c.first_difference[0] : c.second_difference[0];
    const auto& tf = order == 1 ? f.first_difference[0] : f.second_difference[0];
    double change = 0.0;
    for (std::size_t k = 0; k < tc.size(); ++k)
      if (std::isfinite(tc[k]) && std::isfinite(tf[2 * k]))
        change = std::max(change, std::abs(tc[k] - tf[2 * k]));
    rep.level_change.push_back(change);
  }
  const double floor = order == 1 ? 1e-9 : 1e-6;
  rep.exact = !rep.level_change.empty() &&
              std::all_of(rep.level_change.begin(), rep.level_change.end(),
                          [&](double v) { return v <= floor; });
  for (std::size_t l = 0; l + 1 < rep.level_change.size(); ++l)
    rep.ratios.push_back(rep.level_change[l] / rep.level_change[l + 1]);
  if (rep.exact) {
    rep.pass = true;
  } else {
    rep.pass = !rep.ratios.empty();
    for (double q : rep.ratios) rep.pass = rep.pass && std::abs(q - 4.0) <= 0.2 * 4.0;
  }
  for (double v : rep.sup_quotient) rep.pass = rep.pass && std::isfinite(v);
  return rep;
}

// ------------------------------------------------------------ export

/// CSV q1[,q2],lambda0,gap,min_ratio,max_ratio; ratio columns stay empty
/// for ground-state sweeps.
inline void write_sweep_csv(std::ostream& os, const SweepResult& r) {
  const bool two = r.axes.size() > 1;
  os << (two ? "q1,q2," : "q1,") << "lambda0,gap,min_ratio,max_ratio\n";
  char buf[64];
  const auto put = [&](double v, char sep) {
    std::snprintf(buf, sizeof buf, "%.17g%c", v, sep);
    os << buf;
  };
  for (std::size_t k = 0; k < r.q.size(); ++k) {
    put(r.q[k][0], ',');
    if (two) put(r.q[k][1], ',');
    put(r.lambda0[k], ',');
    put(r.gap[k], ',');
    if (k < r.min_ratio.size()) {
      put(r.min_ratio[k], ',');
      put(r.max_ratio[k], '\n');
    } else {
      os << ",\n";
    }
  }
}

}  // namespace leafwise
