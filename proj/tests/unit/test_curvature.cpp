#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "leafwise/curvature.hpp"
#include "oracles.hpp"

using namespace leafwise;
using Catch::Approx;

namespace {

const double kTwoPi = 2.0 * oracle::kPi;

Grid circle(std::size_t n) { return make_circle_grid(kTwoPi, n); }

// sup |twisted_smix - analytic| for u = 2 + sin x on the base, v = 2 + cos y on the fiber
double analytic_error(std::size_t n, bool warp_base) {
  const Grid b = circle(n), f = circle(n);
  const Grid g = product_grid(b, f);
  const auto one = ScalarField::constant(g, 1.0);
  const auto u = warp_base ? ScalarField::sample(g, [](const Coord& x) { return 2.0 + std::sin(x[0]); }) : one;
  const auto v = warp_base ? one : ScalarField::sample(g, [](const Coord& x) { return 2.0 + std::cos(x[1]); });
  const auto s = twisted_smix(TwistedProduct(b, f, v, u));
  double err = 0.0;
  for (std::size_t i = 0; i < g.total_points(); ++i) {
    const auto x = g.coordinates(i);
    const double exact = warp_base ? std::sin(x[0]) / (2.0 + std::sin(x[0])) : std::cos(x[1]) / (2.0 + std::cos(x[1]));
    err = std::max(err, std::abs(s[i] - exact));
  }
  return err;
}

// conformal residual with the scaled curvature taken from the analytic -n u''/u
double conformal_error(std::size_t n) {
  const Grid b = circle(n), f = circle(n);
  const Grid g = product_grid(b, f);
  const auto u = ScalarField::sample(g, [](const Coord& x) { return 2.0 + std::sin(x[0]) * std::cos(x[1]); });
  const auto s_tilde = ScalarField::sample(g, [](const Coord& x) {
    const double s = std::sin(x[0]) * std::cos(x[1]);
    return s / (2.0 + s);
  });
  const auto zero = ScalarField::constant(g, 0.0);
  return conformal_residual(zero, s_tilde, u, zero, zero, g, 1);
}

}  // namespace

TEST_CASE("twisted S_mix matches the analytic warped cases", "[curvature][property]") {
  for (bool warp_base : {true, false}) {
    const double e1 = analytic_error(32, warp_base), e2 = analytic_error(64, warp_base),
                 e3 = analytic_error(128, warp_base);
    INFO("warp_base " << warp_base << " errors " << e1 << " " << e2 << " " << e3);
    CHECK(e2 < 2e-3);
    CHECK(e1 / e2 == Approx(4.0).epsilon(0.15));
    CHECK(e2 / e3 == Approx(4.0).epsilon(0.15));
  }
}

TEST_CASE("twisted S_mix is symmetric under swapping the factors", "[curvature][property]") {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> c(-0.4, 0.4);
  const Grid b{{kTwoPi, 12}, {kTwoPi, 8}};
  const Grid f = circle(10);
  const Grid g = product_grid(b, f);
  const Grid h = product_grid(f, b);
  const double a1 = c(rng), a2 = c(rng), a3 = c(rng), a4 = c(rng);
  const auto uf = [&](const Coord& x) { return 2.0 + a1 * std::sin(x[0] + x[2]) + a2 * std::cos(x[1]); };
  const auto vf = [&](const Coord& x) { return 2.0 + a3 * std::cos(x[0] - 2 * x[2]) + a4 * std::sin(x[1] + x[2]); };
  const auto u = ScalarField::sample(g, uf), v = ScalarField::sample(g, vf);
  // same functions on the swapped grid (coordinates (y, x0, x1))
  const auto back = [](const Coord& y) { return Coord{y[1], y[2], y[0]}; };
  const auto u_sw = ScalarField::sample(h, [&](const Coord& y) { return uf(back(y)); });
  const auto v_sw = ScalarField::sample(h, [&](const Coord& y) { return vf(back(y)); });
  const auto s = twisted_smix(TwistedProduct(b, f, v, u));
  const auto s_sw = twisted_smix(TwistedProduct(f, b, u_sw, v_sw));
  const std::size_t nf = f.total_points();
  for (std::size_t i = 0; i < g.total_points(); ++i) {
    const std::size_t bi = i / nf, j = i % nf;
    CHECK(s[i] == Approx(s_sw[j * b.total_points() + bi]).margin(1e-12));
  }
}

TEST_CASE("scaling S_mix", "[curvature]") {
  CHECK(scaling_smix(5.0, 2.0, 3.0, 2.0) == Approx(3.6875).epsilon(1e-15));
  CHECK(scaling_smix(1.2, 0.7, 0.3, 1.0) == 1.2);
  CHECK_THROWS_AS(scaling_smix(1.0, 1.0, 1.0, 0.0), InvalidInput);
  CHECK_THROWS_AS(scaling_smix(1.0, -1.0, 1.0, 1.0), InvalidInput);
}

TEST_CASE("constant scaling leaves no conformal residual", "[curvature][property]") {
  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> d(0.0, 3.0), uu(0.3, 3.0);
  const Grid g = product_grid(circle(8), circle(6));
  for (int t = 0; t < 50; ++t) {
    const double s = d(rng) - 1.5, hs = d(rng), ts = d(rng), u = uu(rng);
    const double r = conformal_residual(ScalarField::constant(g, s), ScalarField::constant(g, scaling_smix(s, hs, ts, u)),
                                        ScalarField::constant(g, u), ScalarField::constant(g, hs),
                                        ScalarField::constant(g, ts), g, 1);
    CHECK(r <= 1e-12 * std::max(1.0, std::abs(s) + hs + ts));
  }
}

TEST_CASE("conformal residual between the product formula and the scaling identity", "[curvature][property]") {
  SECTION("discrete consistency") {
    const Grid b = circle(64), f = circle(64);
    const Grid g = product_grid(b, f);
    const auto u = ScalarField::sample(g, [](const Coord& x) { return 2.0 + std::sin(x[0]); });
    const auto one = ScalarField::constant(g, 1.0);
    const auto zero = ScalarField::constant(g, 0.0);
    const auto s_u = twisted_smix(TwistedProduct(b, f, one, u));
    const auto s_1 = twisted_smix(TwistedProduct(b, f, one, one));
    CHECK(conformal_residual(s_1, s_u, u, zero, zero, g, 1) <= 1e-12);
  }
  SECTION("analytic curvature, O(h^2)") {
    const double e1 = conformal_error(32), e2 = conformal_error(64), e3 = conformal_error(128);
    CHECK(e1 / e2 == Approx(4.0).epsilon(0.15));
    CHECK(e2 / e3 == Approx(4.0).epsilon(0.15));
  }
  SECTION("ground state as conformal factor") {
    const Grid b = circle(64), f = circle(16);
    const Grid g = product_grid(b, f);
    const auto v = ScalarField::sample(g, [](const Coord& x) { return 2.0 + 0.5 * std::cos(x[0]) * std::sin(x[1]); });
    const auto tw = ground_state_twist(b, f, v);
    const auto one = ScalarField::constant(g, 1.0);
    const auto zero = ScalarField::constant(g, 0.0);
    const auto s = twisted_smix(TwistedProduct(b, f, v, one));
    std::vector<double> st(g.total_points());
    for (std::size_t i = 0; i < st.size(); ++i) st[i] = tw.leaf_smix[i % f.total_points()];
    CHECK(conformal_residual(s, ScalarField(g, st), tw.u, zero, zero, g, 1) <= 1e-9);
  }
}

TEST_CASE("ground-state twist gives leafwise constant S_mix", "[curvature]") {
  for (std::size_t n : {32u, 64u}) {
    const Grid b = circle(n), f = circle(n);
    const Grid g = product_grid(b, f);
    const auto v = ScalarField::sample(g, [](const Coord& x) { return 2.0 + std::cos(x[0] + x[1]) + 0.3 * std::sin(x[1]); });
    const auto tw = ground_state_twist(b, f, v);
    const double h = kTwoPi / static_cast<double>(n);
    CHECK(tw.max_oscillation <= h * h);
    CHECK(tw.u.min() > 0.0);
    REQUIRE(tw.leaf_lambda0.size() == f.total_points());
    for (std::size_t j = 0; j < f.total_points(); ++j) {
      const auto s = leaf_slice(tw.smix.values(), f.total_points(), j);
      for (double x : s) CHECK(x == Approx(tw.leaf_smix[j]).margin(1e-9));
    }
  }
  // v depending only on the fiber: beta is leafwise constant, lambda0 = -beta
  const Grid b = circle(16), f = circle(16);
  const Grid g = product_grid(b, f);
  const auto v = ScalarField::sample(g, [](const Coord& x) { return 2.0 + std::cos(x[1]); });
  const auto beta = leafwise_potential(b, f, v);
  const auto tw = ground_state_twist(b, f, v);
  for (std::size_t j = 0; j < f.total_points(); ++j) CHECK(tw.leaf_lambda0[j] == Approx(-beta[j]).margin(1e-12));
}

TEST_CASE("field CSV", "[curvature]") {
  const Grid g = product_grid(circle(4), circle(5));
  std::ostringstream os;
  write_field_csv(os, ScalarField::constant(g, 1.5));
  const std::string s = os.str();
  CHECK(s.rfind("x0,x1,value\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 21);
  CHECK_THROWS_AS(TwistedProduct(circle(4), circle(5), ScalarField::constant(g, -1.0), ScalarField::constant(g, 1.0)),
                  InvalidInput);
}
