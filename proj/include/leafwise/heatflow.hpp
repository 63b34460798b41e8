#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "leafwise/attractor_theory.hpp"
#include "leafwise/error.hpp"
#include "leafwise/grid.hpp"
#include "leafwise/linear_solve.hpp"
#include "leafwise/schrodinger.hpp"

namespace leafwise {

/**
 * Data of the stationary problem -L u - beta u = psi1 / u - psi2 / u^3 and
 * its heat flow, together with the spectral and comparison quantities the
 * attractor estimates are stated in.
 */
struct ProblemData {
  Grid grid;
  ScalarField beta;
  ScalarField psi1;
  ScalarField psi2;
  SpectralResult spectral;
  ExtremaCoeffs coeffs;
  PhiProfile profile_minus;
  PhiProfile profile_plus;

  double lambda0() const { return spectral.lambda0; }
  const ScalarField& e0() const { return spectral.e0; }
};

/// Builds the problem and verifies admissibility. Margins within 1e-12
/// (relative) of zero count as inadmissible: the boundary of the condition
/// cannot be resolved in floating point.
inline ProblemData build_problem(const Grid& grid, const ScalarField& beta, const ScalarField& psi1,
                                 const ScalarField& psi2, double eig_tol = 1e-13) {
  require_same_grid(beta, grid, "beta");
  require_same_grid(psi1, grid, "psi1");
  require_same_grid(psi2, grid, "psi2");
  if (!(psi1.min() > 0.0)) throw InvalidInput("psi1 must be positive");
  if (psi2.min() < 0.0) throw InvalidInput("psi2 must be nonnegative");
  auto spectral = ground_state(grid, beta, eig_tol);
  const auto coeffs = extrema_coeffs(psi1, psi2, spectral.e0);
  const double lambda0 = spectral.lambda0;
  if (!(lambda0 > 0.0))
    throw Inadmissible("lambda0 = " + std::to_string(lambda0) + " is not positive; shift beta",
                       coeffs.psi1_minus * coeffs.psi1_minus -
                           4.0 * lambda0 * coeffs.psi2_plus);
  const auto adm = check_admissible(lambda0, coeffs);
  const double scale = coeffs.psi1_minus * coeffs.psi1_minus;
  if (!adm.admissible || (coeffs.psi2_plus > 0.0 && adm.margin <= 1e-12 * scale))
    throw Inadmissible("admissibility fails: margin " + std::to_string(adm.margin), adm.margin);
  auto minus = make_profile(lambda0, coeffs, Side::minus);
  auto plus = make_profile(lambda0, coeffs, Side::plus);
  return {grid, beta, psi1, psi2, std::move(spectral), coeffs, std::move(minus), std::move(plus)};
}

// ------------------------------------------------------------ membership

struct MembershipReport {
  double min_ratio = 0.0;  ///< min u0 / e0
  double max_ratio = 0.0;  ///< max u0 / e0
  double lower_level = 0.0;  ///< y1_minus - epsilon
  double critical_level = 0.0;  ///< y3_minus (0 when psi2 vanishes)
  bool in_u1_eps = false;
  bool in_u1 = false;
};

inline constexpr double kMembershipSlack = 1e-12;

inline std::vector<double> ratio_to_ground_state(std::span<const double> u, const ScalarField& e0) {
  std::vector<double> r(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) r[i] = u[i] / e0[i];
  return r;
}

/// Membership of u0 in U1^eps = {u0/e0 >= y1- - eps} and the open set
/// U1 = {u0/e0 > y3-}, with a 1e-12 slack band on each comparison.
inline MembershipReport initial_condition_check(const ScalarField& u0, const ProblemData& p,
                                                double epsilon) {
  require_same_grid(u0, p.grid, "initial condition");
  const auto& pm = p.profile_minus;
  if (!(epsilon > 0.0 && epsilon < sigma_limit(pm)))
    throw InvalidInput("epsilon must lie in (0, y1- - y3-)");
  const auto r = ratio_to_ground_state(u0.values(), p.e0());
  MembershipReport m;
  m.min_ratio = *std::min_element(r.begin(), r.end());
  m.max_ratio = *std::max_element(r.begin(), r.end());
  m.lower_level = pm.y1 - epsilon;
  m.critical_level = pm.y3.value_or(0.0);
  const double slack = kMembershipSlack * std::max(1.0, pm.y1);
  m.in_u1_eps = m.min_ratio >= m.lower_level - slack;
  m.in_u1 = m.min_ratio > m.critical_level + slack;
  return m;
}

/// True when min(u0 / e0) > y3- (beyond the slack band).
inline bool in_basin(std::span<const double> u, const ProblemData& p) {
  const auto& pm = p.profile_minus;
  const double level = pm.y3.value_or(0.0) + kMembershipSlack * std::max(1.0, pm.y1);
  for (std::size_t i = 0; i < u.size(); ++i)
    if (!(u[i] / p.e0()[i] > level)) return false;
  return true;
}

// ------------------------------------------------------------ residual

/// ||-L u - beta u - psi1 / u + psi2 / u^3||_inf. Accepts psi1 >= 0 so closed
/// forms with psi1 = 0 can be checked.
inline double stationary_residual(const ScalarField& u, const ScalarField& beta,
                                  const ScalarField& psi1, const ScalarField& psi2) {
  const Grid& g = u.grid();
  require_same_grid(beta, g, "beta");
  require_same_grid(psi1, g, "psi1");
  require_same_grid(psi2, g, "psi2");
  if (!(u.min() > 0.0)) throw InvalidInput("stationary residual needs u > 0");
  const auto lu = detail::laplacian(g, u.values());
  double m = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double ui = u[i];
    const double r = -lu[i] - beta[i] * ui - psi1[i] / ui + psi2[i] / (ui * ui * ui);
    m = std::max(m, std::abs(r));
  }
  return m;
}

inline double stationary_residual(const ScalarField& u, const ProblemData& p) {
  return stationary_residual(u, p.beta, p.psi1, p.psi2);
}

// ------------------------------------------------------------ time stepping

/**
 * One-step IMEX scheme: (I - dt (L + beta)) u+ = u + dt N(u) with
 * N(u) = psi1 / u - psi2 / u^3 explicit. A step is rejected when u+ is not
 * strictly positive or when the explicit update loses monotonicity
 * (1 + dt N'(u) < 0 somewhere); under both conditions the scheme is
 * order preserving.
 */
class ImexStepper {
 public:
  explicit ImexStepper(const ProblemData& p) : p_(&p) {}

  std::optional<std::vector<double>> try_step(std::span<const double> u, double dt) {
    const std::size_t n = u.size();
    std::vector<double> rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double ui = u[i];
      if (!(ui > 0.0)) return std::nullopt;
      const double u2 = ui * ui;
      const double a = p_->psi1[i], b = p_->psi2[i];
      const double slope = -a / u2 + 3.0 * b / (u2 * u2);
      if (1.0 + dt * slope < 0.0) return std::nullopt;
      rhs[i] = ui + dt * (a / ui - b / (u2 * ui));
    }
    auto next = solver_for(dt).solve(rhs);
    for (double v : next)
      if (!(v > 0.0) || !std::isfinite(v)) return std::nullopt;
    return next;
  }

 private:
  const ShiftedLaplacianSolver& solver_for(double dt) {
    if (!solver_ || dt != cached_dt_) {
      std::vector<double> diag(p_->grid.total_points());
      for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = 1.0 - dt * p_->beta[i];
      solver_.emplace(p_->grid, std::move(diag), dt);
      cached_dt_ = dt;
    }
    return *solver_;
  }

  const ProblemData* p_;
  double cached_dt_ = -1.0;
  std::optional<ShiftedLaplacianSolver> solver_;
};

namespace detail {
inline std::vector<double> step_covering(ImexStepper& st, std::vector<double> u, double dt,
                                         int depth) {
  if (auto next = st.try_step(u, dt)) return std::move(*next);
  if (depth >= 40) throw BasinViolation("positivity lost after maximal dt halving", 0.0);
  u = step_covering(st, std::move(u), 0.5 * dt, depth + 1);
  return step_covering(st, std::move(u), 0.5 * dt, depth + 1);
}
}  // namespace detail

/// Advances u by exactly dt; a rejected step is replaced by two half steps.
inline ScalarField step(const ScalarField& u, const ProblemData& p, double dt) {
  require_same_grid(u, p.grid, "state");
  if (dt < 0.0) throw InvalidInput("dt must be nonnegative");
  if (dt == 0.0) return u;
  ImexStepper st(p);
  return {p.grid, detail::step_covering(st, {u.values().begin(), u.values().end()}, dt, 0)};
}

/// Step-size schedule: start at min(h^2/4, 0.1/lambda0), double after every
/// `grow_after` accepted steps up to dt_max, halve on rejection.
struct StepPolicy {
  double dt_initial = 0.0;  ///< <= 0: automatic
  double dt_max = 0.0;  ///< <= 0: 0.5 / lambda0
  int grow_after = 50;
  double dt_min = 1e-14;
};

class StepController {
 public:
  StepController(const ProblemData& p, const StepPolicy& policy) : policy_(policy) {
    double h_min = INFINITY;
    for (std::size_t d = 0; d < p.grid.rank(); ++d) h_min = std::min(h_min, p.grid.spacing(d));
    dt_max_ = policy.dt_max > 0.0 ? policy.dt_max : 0.5 / p.lambda0();
    dt_ = policy.dt_initial > 0.0 ? policy.dt_initial
                                  : std::min(0.25 * h_min * h_min, 0.1 / p.lambda0());
    dt_ = std::min(dt_, dt_max_);
  }
  double dt() const noexcept { return dt_; }
  void accepted() {
    if (++streak_ >= policy_.grow_after) {
      dt_ = std::min(2.0 * dt_, dt_max_);
      streak_ = 0;
    }
  }
  void rejected(double t) {
    dt_ *= 0.5;
    streak_ = 0;
    if (dt_ < policy_.dt_min) throw BasinViolation("positivity lost: step size underflow", t);
  }

 private:
  StepPolicy policy_;
  double dt_max_ = 0.0;
  double dt_ = 0.0;
  int streak_ = 0;
};

/// Heat-flow state advanced by adaptive IMEX steps. Owns its state; one run
/// is strictly sequential in t.
class HeatFlow {
 public:
  HeatFlow(const ProblemData& p, const ScalarField& u0, StepPolicy policy = {})
      : p_(&p), stepper_(p), control_(p, policy), u_(u0.values().begin(), u0.values().end()) {
    require_same_grid(u0, p.grid, "initial condition");
    if (!(u0.min() > 0.0)) throw InvalidInput("initial condition must be positive");
  }

  double time() const noexcept { return t_; }
  double next_dt() const noexcept { return control_.dt(); }
  std::span<const double> state() const noexcept { return u_; }
  ScalarField field() const { return {p_->grid, u_}; }

  struct Advance {
    double dt;
    double increment;  ///< ||u+ - u||_inf
  };

  /// Takes one accepted step.
  Advance advance() {
    for (;;) {
      const double dt = control_.dt();
      if (auto next = stepper_.try_step(u_, dt)) {
        const double inc = sup_distance(*next, u_);
        u_ = std::move(*next);
        t_ += dt;
        control_.accepted();
        return {dt, inc};
      }
      control_.rejected(t_);
    }
  }

 private:
  const ProblemData* p_;
  ImexStepper stepper_;
  StepController control_;
  std::vector<double> u_;
  double t_ = 0.0;
};

/// Fixed-step evolution by `steps` steps of size dt.
inline ScalarField evolve_fixed(const ScalarField& u0, const ProblemData& p, double dt,
                                std::size_t steps) {
  ScalarField u = u0;
  for (std::size_t k = 0; k < steps; ++k) u = step(u, p, dt);
  return u;
}

// ------------------------------------------------------------ attractor runs

struct FlowTrace {
  std::vector<double> times;
  std::vector<double> sup_distances;  ///< ||u(t) - u*||_C
  std::vector<double> ratio_distances;  ///< ||u(t)/e0 - u*/e0||_C
  std::vector<double> min_ratio;  ///< min u(t)/e0
  std::vector<double> max_ratio;  ///< max u(t)/e0
  std::vector<std::pair<double, ScalarField>> snapshots;
  std::optional<double> converged_at;
};

struct AttractorRun {
  ScalarField u_star;
  FlowTrace trace;
  double residual = 0.0;
  std::size_t steps = 0;
};

struct EvolveOptions {
  StepPolicy policy{};
  std::size_t snapshot_every = 0;  ///< 0: no snapshots
};

/**
 * Runs the heat flow from u0 until ||u+ - u||_inf / dt < tol and the
 * stationary residual is below 10 tol. The trace holds every pre-step
 * state's distance to the returned limit.
 */
inline AttractorRun evolve_to_attractor(const ScalarField& u0, const ProblemData& p, double tol,
                                        double t_max, const EvolveOptions& opts = {}) {
  require_same_grid(u0, p.grid, "initial condition");
  if (!(tol > 0.0 && tol <= 1e-4)) throw InvalidInput("tol must lie in (0, 1e-4]");
  if (!in_basin(u0.values(), p))
    throw BasinViolation("initial condition is outside U1 (u0/e0 <= y3-)", 0.0);

  HeatFlow flow(p, u0, opts.policy);
  std::vector<double> times;
  std::vector<std::vector<double>> states;
  std::optional<ScalarField> limit;
  std::size_t steps = 0;
  double residual = 0.0;
  while (!limit) {
    if (flow.time() > t_max)
      throw ConvergenceFailure("no convergence before t_max = " + std::to_string(t_max),
                               residual);
    times.push_back(flow.time());
    states.emplace_back(flow.state().begin(), flow.state().end());
    const auto adv = flow.advance();
    ++steps;
    if (!in_basin(flow.state(), p))
      throw BasinViolation("flow left U1 mid-flight", flow.time());
    if (adv.increment / adv.dt < tol) {
      auto candidate = flow.field();
      residual = stationary_residual(candidate, p);
      if (residual <= 10.0 * tol) limit = std::move(candidate);
    }
  }

  AttractorRun run{*limit, {}, residual, steps};
  FlowTrace& tr = run.trace;
  const auto star_ratio = ratio_to_ground_state(run.u_star.values(), p.e0());
  tr.converged_at = flow.time();
  for (std::size_t k = 0; k < states.size(); ++k) {
    const auto r = ratio_to_ground_state(states[k], p.e0());
    tr.times.push_back(times[k]);
    tr.sup_distances.push_back(sup_distance(states[k], run.u_star.values()));
    tr.ratio_distances.push_back(sup_distance(r, star_ratio));
    tr.min_ratio.push_back(*std::min_element(r.begin(), r.end()));
    tr.max_ratio.push_back(*std::max_element(r.begin(), r.end()));
    if (opts.snapshot_every > 0 && k % opts.snapshot_every == 0)
      tr.snapshots.emplace_back(times[k], ScalarField(p.grid, std::move(states[k])));
  }
  return run;
}

// ------------------------------------------------------------ certificates

struct SandwichReport {
  double min_ratio = 0.0;
  double max_ratio = 0.0;
  double lower = 0.0;  ///< y1 of the minus profile
  double upper = 0.0;  ///< y1 of the plus profile
  double tol_h = 0.0;
  double violation = 0.0;  ///< max(lower - min_ratio, max_ratio - upper, 0)
  bool pass = false;
};

/// y1- - tol_h <= u*/e0 <= y1+ + tol_h on the grid.
inline SandwichReport certify_sandwich(const ScalarField& u_star, const ProblemData& p,
                                       double tol_h = 0.0) {
  require_same_grid(u_star, p.grid, "attractor");
  const auto r = ratio_to_ground_state(u_star.values(), p.e0());
  SandwichReport s;
  s.min_ratio = *std::min_element(r.begin(), r.end());
  s.max_ratio = *std::max_element(r.begin(), r.end());
  s.lower = p.profile_minus.y1;
  s.upper = p.profile_plus.y1;
  s.tol_h = tol_h;
  s.violation = std::max({s.lower - s.min_ratio, s.max_ratio - s.upper, 0.0});
  s.pass = s.violation <= tol_h;
  return s;
}

/// Distance in u/e0 still left when the flow is stopped at stationary
/// residual r: r / (min e0 * mu(0)).
inline double time_convergence_slack(double residual, const ProblemData& p) {
  return residual / (p.e0().min() * decay_rate_mu(0.0, p.profile_minus));
}

/// Richardson estimate of the O(h^2) error of `coarse` from a run on the
/// grid with twice the points: ||coarse - R fine||_inf * 4/3.
inline double richardson_error(const ScalarField& coarse, const ScalarField& fine) {
  const auto r = restrict_to_coarse(fine, coarse.grid());
  return sup_distance(coarse.values(), r.values()) * 4.0 / 3.0;
}

/// u*/e0 as a field.
inline ScalarField attractor_ratio(const ScalarField& u_star, const ProblemData& p) {
  return {p.grid, ratio_to_ground_state(u_star.values(), p.e0())};
}

struct ExponentialBoundReport {
  double mu = 0.0;  ///< mu-(epsilon)
  double delta = 0.0;  ///< min e0 / max e0
  double worst_ratio = 0.0;  ///< max_t ||u - u*|| / (delta^-1 e^{-mu t} ||u0 - u*||)
  double worst_ratio_w = 0.0;  ///< same for w = u/e0 without the delta^-1 factor
  bool pass = false;
  bool pass_w = false;
};

/// Checks ||u(t) - u*||_C <= delta^-1 e^{-mu t} ||u0 - u*||_C along the trace.
inline ExponentialBoundReport certify_exponential_bound(const FlowTrace& trace,
                                                        const ProblemData& p, double epsilon) {
  ExponentialBoundReport rep;
  rep.mu = decay_rate_mu(epsilon, p.profile_minus);
  rep.delta = p.e0().min() / p.e0().max();
  if (trace.times.empty()) {
    rep.pass = rep.pass_w = true;
    return rep;
  }
  const double d0 = trace.sup_distances.front();
  const double w0 = trace.ratio_distances.front();
  for (std::size_t k = 0; k < trace.times.size(); ++k) {
    const double decay = std::exp(-rep.mu * (trace.times[k] - trace.times.front()));
    if (d0 > 0.0)
      rep.worst_ratio = std::max(rep.worst_ratio, trace.sup_distances[k] / (d0 * decay / rep.delta));
    if (w0 > 0.0)
      rep.worst_ratio_w = std::max(rep.worst_ratio_w, trace.ratio_distances[k] / (w0 * decay));
  }
  rep.pass = rep.worst_ratio <= 1.0 + 1e-6;
  rep.pass_w = rep.worst_ratio_w <= 1.0 + 1e-6;
  return rep;
}

struct ComparisonReport {
  bool pass = false;
  double worst_violation = 0.0;  ///< max over t, x of w - u (<= 1e-10 passes)
  std::size_t steps = 0;
  std::size_t checks = 0;
};

/// Evolves u0 >= w0 with identical steps up to T and checks that the order
/// is kept pointwise at every step.
inline ComparisonReport comparison_principle_test(const ScalarField& u0, const ScalarField& w0,
                                                  const ProblemData& p, double T,
                                                  const StepPolicy& policy = {}) {
  require_same_grid(u0, p.grid, "upper initial condition");
  require_same_grid(w0, p.grid, "lower initial condition");
  for (std::size_t i = 0; i < u0.size(); ++i)
    if (u0[i] < w0[i]) throw InvalidInput("comparison test needs u0 >= w0 pointwise");
  if (!in_basin(u0.values(), p) || !in_basin(w0.values(), p))
    throw BasinViolation("comparison data must lie in U1", 0.0);

  ImexStepper stepper(p);
  StepController control(p, policy);
  std::vector<double> u(u0.values().begin(), u0.values().end());
  std::vector<double> w(w0.values().begin(), w0.values().end());
  ComparisonReport rep;
  const auto check = [&] {
    for (std::size_t i = 0; i < u.size(); ++i)
      rep.worst_violation = std::max(rep.worst_violation, w[i] - u[i]);
    ++rep.checks;
  };
  check();
  double t = 0.0;
  while (t < T) {
    const double dt = std::min(control.dt(), T - t);
    auto un = stepper.try_step(u, dt);
    auto wn = un ? stepper.try_step(w, dt) : std::nullopt;
    if (!un || !wn) {
      control.rejected(t);
      continue;
    }
    u = std::move(*un);
    w = std::move(*wn);
    t = (T - (t + dt) < 1e-12 * dt) ? T : t + dt;
    control.accepted();
    ++rep.steps;
    check();
  }
  rep.pass = rep.worst_violation <= 1e-10;
  return rep;
}

// ------------------------------------------------------------ export

/// CSV with header t,sup_distance,min_ratio,max_ratio.
inline void write_trace_csv(std::ostream& os, const FlowTrace& tr) {
  os << "t,sup_distance,min_ratio,max_ratio\n";
  char buf[128];
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", tr.times[k],
                  tr.sup_distances[k], tr.min_ratio[k], tr.max_ratio[k]);
    os << buf;
  }
}

}  // namespace leafwise
