#include <catch_amalgamated.hpp>

#include <random>
#include <vector>

#include "leafwise/linear_solve.hpp"

using namespace leafwise;

namespace {

double relative_residual(const ShiftedLaplacianSolver& s, const std::vector<double>& x,
                         const std::vector<double>& b) {
  std::vector<double> ax(b.size());
  s.apply(x, ax);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    num = std::max(num, std::abs(ax[i] - b[i]));
    den = std::max(den, std::abs(b[i]));
  }
  return num / den;
}

}  // namespace

TEST_CASE("cyclic solver agrees with a dense solve", "[linear_solve]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.1, 2.0), b(-1.0, 1.0);
  for (std::size_t n : {4u, 5u, 17u, 64u, 257u}) {
    const Grid g = make_circle_grid(2.0, n);
    std::vector<double> diag(n), rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
      diag[i] = u(rng);
      rhs[i] = b(rng);
    }
    const double c = 0.37;
    const ShiftedLaplacianSolver s(g, diag, c);
    const auto x = s.solve(rhs);

    Eigen::MatrixXd a = -c * laplacian_matrix(g);
    for (std::size_t i = 0; i < n; ++i) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += diag[i];
    const Eigen::VectorXd ref = a.ldlt().solve(Eigen::Map<const Eigen::VectorXd>(rhs.data(), n));
    for (std::size_t i = 0; i < n; ++i)
      CHECK(x[i] == Catch::Approx(ref(static_cast<Eigen::Index>(i))).margin(1e-12));
    CHECK(relative_residual(s, x, rhs) < 1e-12);
  }
}

TEST_CASE("conjugate gradients on tori", "[linear_solve]") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.05, 1.0), b(-1.0, 1.0);
  for (const Grid& g : {Grid{{1.0, 16}, {2.0, 12}}, Grid{{1.0, 6}, {1.0, 6}, {1.0, 8}}}) {
    const std::size_t n = g.total_points();
    std::vector<double> diag(n), rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
      diag[i] = u(rng);
      rhs[i] = b(rng);
    }
    const ShiftedLaplacianSolver s(g, diag, 1.0);
    CHECK(relative_residual(s, s.solve(rhs), rhs) < 1e-11);
  }
}

TEST_CASE("solver preconditions", "[linear_solve]") {
  const Grid g = make_circle_grid(1.0, 8);
  CHECK_THROWS_AS(ShiftedLaplacianSolver(g, std::vector<double>(7, 1.0), 1.0), InvalidInput);
  CHECK_THROWS_AS(ShiftedLaplacianSolver(g, std::vector<double>(8, 1.0), -1.0), InvalidInput);
  CHECK_THROWS_AS(ShiftedLaplacianSolver(g, std::vector<double>(8, -1.0), 0.0), InvalidInput);
  const ShiftedLaplacianSolver s(g, std::vector<double>(8, 1.0), 1.0);
  CHECK_THROWS_AS(s.solve(std::vector<double>(3, 1.0)), InvalidInput);
  const auto zero = s.solve(std::vector<double>(8, 0.0));
  for (double v : zero) CHECK(v == 0.0);
}
