#include <catch_amalgamated.hpp>

#include <cmath>
#include <optional>
#include <functional>
#include <random>
#include <sstream>
#include <vector>

#include "leafwise/heatflow.hpp"
#include "oracles.hpp"

using namespace leafwise;
using Catch::Approx;

namespace {

const double kTwoPi = 2.0 * oracle::kPi;

ProblemData constant_problem(std::size_t n, double beta, double psi1, double psi2) {
  const Grid g = make_circle_grid(kTwoPi, n);
  return build_problem(g, ScalarField::constant(g, beta), ScalarField::constant(g, psi1),
                       ScalarField::constant(g, psi2));
}

ProblemData variable_problem(std::size_t n) {
  const Grid g = make_circle_grid(kTwoPi, n);
  return build_problem(g, ScalarField::constant(g, -0.1),
                       ScalarField::sample(g, [](const Coord& x) { return 1.0 + 0.3 * std::sin(x[0]); }),
                       ScalarField::constant(g, 1.0));
}

ScalarField ratio_field(const ProblemData& p, const std::function<double(double)>& w) {
  std::vector<double> v(p.grid.total_points());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = w(p.grid.coordinates(i)[0]) * p.e0()[i];
  return {p.grid, std::move(v)};
}

ScalarField random_start(const ProblemData& p, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> amp(0.0, 1.0), phase(0.0, kTwoPi);
  const double a = amp(rng), b = amp(rng), ph = phase(rng);
  return ratio_field(p, [&](double x) {
    const double s = 0.5 * (1.0 + a * std::sin(x + ph)) * (0.6 + 0.4 * b * std::cos(3.0 * x));
    return lo + (hi - lo) * s;
  });
}

}  // namespace

TEST_CASE("constant problem reduces to the scalar profile", "[heatflow]") {
  const auto p = constant_problem(64, -0.1, 1.0, 1.0);
  CHECK(p.lambda0() == Approx(0.1).margin(1e-12));
  CHECK(p.e0().max() - p.e0().min() <= 1e-12);
  // e0 = (2 pi)^-1/2, so psi1- = 2 pi and psi2+ = 4 pi^2
  CHECK(p.coeffs.psi1_minus == Approx(kTwoPi).epsilon(1e-11));
  CHECK(p.coeffs.psi2_plus == Approx(kTwoPi * kTwoPi).epsilon(1e-11));
  const auto fig = make_profile(0.1, 1.0, 1.0);
  CHECK(p.profile_minus.y1 * p.e0()[0] == Approx(fig.y1).epsilon(1e-11));
  CHECK(p.profile_plus.y1 == Approx(p.profile_minus.y1).epsilon(1e-11));

  const auto q = constant_problem(32, -1.0, 4.0, 0.0);
  CHECK(q.profile_minus.y1 * q.e0()[0] == Approx(2.0).epsilon(1e-12));
  CHECK_FALSE(q.profile_minus.y3);
}

TEST_CASE("inadmissible problems are rejected", "[heatflow]") {
  CHECK_THROWS_AS(constant_problem(32, 0.1, 1.0, 1.0), Inadmissible);
  CHECK_THROWS_AS(constant_problem(32, -0.25, 1.0, 1.0), Inadmissible);
  CHECK_THROWS_AS(constant_problem(32, -0.3, 1.0, 1.0), Inadmissible);
  CHECK_THROWS_AS(constant_problem(32, -0.1, 0.0, 1.0), InvalidInput);
  try {
    constant_problem(32, -0.3, 1.0, 1.0);
  } catch (const Inadmissible& e) {
    CHECK(e.margin() < 0.0);
  }
}

TEST_CASE("IMEX step on constants equals the scalar scheme", "[heatflow]") {
  const auto p = constant_problem(32, -0.1, 1.0, 1.0);
  for (double dt : {1e-3, 0.05, 0.5}) {
    for (double u : {1.5, 2.0, 4.0}) {
      const auto next = step(ScalarField::constant(p.grid, u), p, dt);
      const double ref = oracle::scalar_imex_step(u, dt, -0.1, 1.0, 1.0);
      for (double v : next.values()) CHECK(v == Approx(ref).epsilon(1e-13));
    }
  }
  CHECK(step(ScalarField::constant(p.grid, 2.0), p, 0.0)[0] == 2.0);
  CHECK_THROWS_AS(step(ScalarField::constant(p.grid, 2.0), p, -1.0), InvalidInput);
}

TEST_CASE("accepted steps keep u positive", "[heatflow][property]") {
  const auto p = variable_problem(64);
  std::mt19937_64 rng(41);
  ImexStepper st(p);
  for (int trial = 0; trial < 50; ++trial) {
    const auto u0 = random_start(p, rng, 0.05, 3.0 * p.profile_plus.y1);
    std::vector<double> u(u0.values().begin(), u0.values().end());
    const double dt = std::exp(std::uniform_real_distribution<double>(-8.0, 2.0)(rng));
    if (auto next = st.try_step(u, dt))
      for (double v : *next) CHECK(v > 0.0);
    // below y2 the flow can collapse in finite time; a refused step is fine
    std::optional<ScalarField> stepped;
    try {
      stepped = step(u0, p, dt);
    } catch (const BasinViolation&) {
    }
    if (stepped) CHECK(stepped->min() > 0.0);
  }
}

TEST_CASE("discrete semigroup property", "[heatflow][property]") {
  const auto p = variable_problem(64);
  std::mt19937_64 rng(42);
  const auto u0 = random_start(p, rng, p.profile_minus.y1 - 1.0, p.profile_plus.y1 + 1.0);
  const double dt = 0.05;
  const auto a = evolve_fixed(evolve_fixed(u0, p, dt, 30), p, dt, 45);
  const auto b = evolve_fixed(u0, p, dt, 75);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("lower and upper barriers are invariant", "[heatflow][property]") {
  const auto p = variable_problem(64);
  const double eps = 0.5 * sigma_limit(p.profile_minus);
  const double eta = 0.5;
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 5; ++trial) {
    const auto u0 = random_start(p, rng, p.profile_minus.y1 - eps, p.profile_plus.y1 + eta);
    const auto m = initial_condition_check(u0, p, eps);
    REQUIRE(m.in_u1_eps);
    REQUIRE(m.max_ratio <= p.profile_plus.y1 + eta);
    HeatFlow flow(p, u0);
    for (int k = 0; k < 400; ++k) {
      flow.advance();
      const auto r = ratio_to_ground_state(flow.state(), p.e0());
      CHECK(*std::min_element(r.begin(), r.end()) >= p.profile_minus.y1 - eps - 1e-12);
      CHECK(*std::max_element(r.begin(), r.end()) <= p.profile_plus.y1 + eta + 1e-12);
    }
  }
}

TEST_CASE("constant attractor is the outer profile root", "[heatflow]") {
  const auto p = constant_problem(64, -0.1, 1.0, 1.0);
  const auto run = evolve_to_attractor(ScalarField::constant(p.grid, 2.0), p, 1e-10, 1e5);
  const double y1 = make_profile(0.1, 1.0, 1.0).y1;
  for (double v : run.u_star.values()) CHECK(v == Approx(y1).epsilon(1e-8));
  CHECK(run.residual <= 1e-9);
  const auto sw = certify_sandwich(run.u_star, p, time_convergence_slack(run.residual, p));
  CHECK(sw.pass);

  const auto& tr = run.trace;
  REQUIRE(tr.times.size() == run.steps);
  for (std::size_t k = 1; k < tr.times.size(); ++k) CHECK(tr.times[k] > tr.times[k - 1]);
  for (double d : tr.sup_distances) CHECK(d >= 0.0);
  std::ostringstream csv;
  write_trace_csv(csv, tr);
  CHECK(csv.str().rfind("t,sup_distance,min_ratio,max_ratio\n", 0) == 0);
}

TEST_CASE("attractor is unique across initial data", "[heatflow][property]") {
  const auto p = variable_problem(64);
  const double tol = 1e-9;
  const double eps = 0.5 * sigma_limit(p.profile_minus);
  std::mt19937_64 rng(44);
  std::optional<ScalarField> first;
  for (int trial = 0; trial < 10; ++trial) {
    const auto u0 = random_start(p, rng, p.profile_minus.y1 - eps, p.profile_plus.y1 + 2.0);
    REQUIRE(initial_condition_check(u0, p, eps).in_u1_eps);
    const auto run = evolve_to_attractor(u0, p, tol, 1e5);
    if (!first) first = run.u_star;
    else CHECK(sup_distance(*first, run.u_star) <= 10.0 * tol);
  }
}

TEST_CASE("attractor converges at second order in h", "[heatflow][property]") {
  std::vector<ScalarField> ratios;
  for (std::size_t n : {32u, 64u, 128u}) {
    const auto p = variable_problem(n);
    const auto u0 = ScalarField(p.grid, [&] {
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = p.profile_minus.y1 * p.e0()[i];
      return v;
    }());
    ratios.push_back(attractor_ratio(evolve_to_attractor(u0, p, 1e-11, 1e5).u_star, p));
  }
  const double d1 = richardson_error(ratios[0], ratios[1]);
  const double d2 = richardson_error(ratios[1], ratios[2]);
  CHECK(d1 / d2 == Approx(4.0).epsilon(0.15));
}

TEST_CASE("sandwich with nonconstant psi2 = 0 coefficients", "[heatflow]") {
  const Grid g = make_circle_grid(kTwoPi, 128);
  const auto p = build_problem(g, ScalarField::constant(g, -1.0),
                               ScalarField::sample(g, [](const Coord& x) { return 2.0 + std::sin(x[0]); }),
                               ScalarField::constant(g, 0.0));
  CHECK(p.lambda0() == Approx(1.0).margin(1e-12));
  const auto u0 = ScalarField::constant(g, 1.5);
  const auto run = evolve_to_attractor(u0, p, 1e-10, 1e5);
  const auto sw = certify_sandwich(run.u_star, p, time_convergence_slack(run.residual, p));
  CHECK(sw.pass);
  // in u itself: 1 <= u* <= sqrt 3
  CHECK(run.u_star.min() >= 1.0 - 1e-8);
  CHECK(run.u_star.max() <= std::sqrt(3.0) + 1e-8);
  CHECK(run.u_star.max() - run.u_star.min() > 0.1);
}

TEST_CASE("exponential bound on constant and variable runs", "[heatflow]") {
  SECTION("constant, u0 = 1.1 u*") {
    const auto p = constant_problem(64, -0.1, 1.0, 1.0);
    const double y1 = make_profile(0.1, 1.0, 1.0).y1;
    const auto run = evolve_to_attractor(ScalarField::constant(p.grid, 1.1 * y1), p, 1e-10, 1e5);
    const double eps = 0.5 * sigma_limit(p.profile_minus);
    const auto rep = certify_exponential_bound(run.trace, p, eps);
    CHECK(rep.pass);
    CHECK(rep.pass_w);
    // observed rate log(d(t0)/d(t1)) / (t1 - t0) over the early decay
    const auto& tr = run.trace;
    std::size_t k = 0;
    while (k + 1 < tr.times.size() && tr.times[k] < 20.0) ++k;
    const double rate = std::log(tr.sup_distances[0] / tr.sup_distances[k]) / tr.times[k];
    CHECK(rate >= rep.mu);
  }
  SECTION("variable") {
    const auto p = variable_problem(128);
    const double eps = 0.5 * sigma_limit(p.profile_minus);
    std::mt19937_64 rng(45);
    const auto u0 = random_start(p, rng, p.profile_minus.y1 - eps, p.profile_plus.y1 + 1.0);
    const auto run = evolve_to_attractor(u0, p, 1e-10, 1e5);
    const auto rep = certify_exponential_bound(run.trace, p, eps);
    CHECK(rep.pass);
    CHECK(rep.worst_ratio <= 1.0 + 1e-6);
  }
}

TEST_CASE("comparison principle for the scheme", "[heatflow][property]") {
  SECTION("constant shift") {
    const auto p = constant_problem(32, -0.1, 1.0, 1.0);
    const auto w0 = ScalarField::constant(p.grid, 2.0);
    const auto u0 = ScalarField::constant(p.grid, 2.1);
    const auto rep = comparison_principle_test(u0, w0, p, 50.0);
    CHECK(rep.pass);
    CHECK(rep.worst_violation <= 1e-10);
  }
  SECTION("two-sided") {
    const auto p = variable_problem(64);
    const double eps = 0.5 * sigma_limit(p.profile_minus);
    const auto w0 = ratio_field(p, [&](double) { return p.profile_minus.y1 - eps; });
    const auto u0 = ratio_field(p, [&](double) { return p.profile_plus.y1 + 1.0; });
    const auto rep = comparison_principle_test(u0, w0, p, 100.0);
    CHECK(rep.pass);
    CHECK(rep.steps > 0);
  }
  SECTION("random ordered pairs") {
    const auto p = variable_problem(64);
    std::mt19937_64 rng(46);
    std::uniform_real_distribution<double> gap(0.0, 0.5);
    for (int k = 0; k < 5; ++k) {
      const auto w0 = random_start(p, rng, *p.profile_minus.y3 + 0.2, p.profile_plus.y1 + 1.0);
      const double g = gap(rng);
      std::vector<double> u(w0.values().begin(), w0.values().end());
      for (std::size_t i = 0; i < u.size(); ++i) u[i] += g * p.e0()[i] * (1.0 + std::sin(static_cast<double>(i)));
      CHECK(comparison_principle_test(ScalarField(p.grid, u), w0, p, 30.0).pass);
    }
  }
  const auto p = constant_problem(16, -0.1, 1.0, 1.0);
  CHECK_THROWS_AS(comparison_principle_test(ScalarField::constant(p.grid, 1.0),
                                            ScalarField::constant(p.grid, 2.0), p, 1.0),
                  InvalidInput);
}

TEST_CASE("stationary residual of the psi1 = 0 closed form", "[heatflow]") {
  const Grid g = make_circle_grid(kTwoPi, 64);
  const double u = std::pow(2.0, 0.25);
  const double r = stationary_residual(ScalarField::constant(g, u), ScalarField::constant(g, 0.5),
                                       ScalarField::constant(g, 0.0), ScalarField::constant(g, 1.0));
  CHECK(r <= 1e-12);
  CHECK(u == Approx(1.1892071).margin(1e-7));
}

TEST_CASE("membership and run preconditions", "[heatflow]") {
  const auto p = constant_problem(32, -0.1, 1.0, 1.0);
  const double eps = 0.5 * sigma_limit(p.profile_minus);
  const double y3 = *p.profile_minus.y3;
  const auto inside = ratio_field(p, [&](double) { return y3 + 0.1; });
  const auto outside = ratio_field(p, [&](double) { return y3 - 0.1; });
  const auto m = initial_condition_check(inside, p, eps);
  CHECK(m.in_u1);
  CHECK_FALSE(m.in_u1_eps);
  CHECK_FALSE(initial_condition_check(outside, p, eps).in_u1);
  CHECK_THROWS_AS(initial_condition_check(inside, p, sigma_limit(p.profile_minus)), InvalidInput);
  CHECK_THROWS_AS(evolve_to_attractor(outside, p, 1e-9, 1e3), BasinViolation);
  CHECK_THROWS_AS(evolve_to_attractor(inside, p, 1e-3, 1e3), InvalidInput);
  CHECK_THROWS_AS(evolve_to_attractor(inside, p, 1e-9, 1.0), ConvergenceFailure);
  // the flow from U1 reaches U1^eps
  const auto run = evolve_to_attractor(inside, p, 1e-9, 1e5);
  CHECK(initial_condition_check(run.u_star, p, eps).in_u1_eps);
}
