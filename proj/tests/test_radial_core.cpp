#include <random>

#include "doctest.h"
#include "rvp/oracles.hpp"
#include "rvp/radial_core.hpp"

using namespace rvp;

TEST_CASE("grid lumped weights reproduce the ball volume") {
  for (int n : {16, 257, 2048}) {
    auto g = make_grid(n, 3.7);
    double v = g->volume();
    CHECK(std::abs(v - 4.0 * kPi * std::pow(3.7, 3) / 3.0) <= 1e-12 * v);
    for (std::size_t i = 0; i < g->size(); ++i) CHECK(g->W[i] > 0.0);
  }
  CHECK_THROWS_AS(RadialGrid::from_nodes({1.0, 0.5}), Error);
}

TEST_CASE("uniform ball closed form") {
  auto g = make_grid(2048, 1.0);
  RadialDensity rho(g, std::vector<double>(g->size(), 1.0));
  auto phi = solve_radial_poisson(rho);
  for (std::size_t i = 0; i < g->size(); i += 97)
    CHECK(std::abs(phi[i] - oracle::uniform_ball_phi(g->r[i])) <= 1e-10);
  CHECK(std::abs(phi.value(0.0) + 0.5) <= 1e-6 * 0.5);
  CHECK(std::abs(phi.value(1.0) + 1.0 / 3.0) <= 1e-12);
  CHECK(std::abs(phi.value(3.0) + 1.0 / 9.0) <= 1e-12);
  CHECK(std::abs(phi.tail_mass() - 4.0 * kPi / 3.0) <= 1e-11);
  // ||grad phi||^2 = int_0^1 4 pi r^2 (r/3)^2 + int_1^inf 4 pi r^2 /(9 r^4) = 8 pi / 15
  CHECK(std::abs(gradient_l2_norm(phi) - std::sqrt(8.0 * kPi / 15.0)) <= 1e-5);
  CHECK(std::abs(phi.scaled(2.0).grad_l2() - 2.0 * phi.grad_l2()) <= 1e-12);
  auto rep = verify_potential_class(phi, 7.0);
  CHECK(rep.in_class);
  CHECK(std::abs(rep.m - 1.0 / 3.0) <= 1e-12);
  CHECK(rep.mass_bound_holds);
}

TEST_CASE("zero density gives the zero potential, out of class") {
  auto g = make_grid(64, 2.0);
  auto phi = solve_radial_poisson(RadialDensity(g, std::vector<double>(64, 0.0)));
  for (double v : phi.values()) CHECK(v == 0.0);
  CHECK(phi.tail_mass() == 0.0);
  CHECK(phi.grad_l2() == 0.0);
  auto rep = verify_potential_class(phi, 7.0);
  CHECK_FALSE(rep.in_class);
  CHECK(rep.m == 0.0);
}

TEST_CASE("negative density rejected, roundoff clamped") {
  auto g = make_grid(8, 1.0);
  std::vector<double> v(8, 1.0);
  v[3] = -1e-3;
  CHECK_THROWS_AS(RadialDensity(g, v), Error);
  v[3] = -1e-14;
  RadialDensity ok(g, v);
  CHECK(ok.values[3] == 0.0);
}

TEST_CASE("Plummer potential against direct convolution") {
  const double R = 20.0;
  auto g = make_grid(2048, R);
  auto phi = solve_radial_poisson(g, [&](double r) { return oracle::plummer_rho(r, R); });
  for (double r : {0.05, 0.3, 1.0, 2.5, 7.0, 19.0}) {
    double ref = oracle::convolution_phi([&](double s) { return oracle::plummer_rho(s, R); }, r, R);
    CHECK(std::abs(phi.value(r) - ref) <= 1e-6 * std::abs(ref));
    CHECK(std::abs(ref - oracle::plummer_phi_closed(r, R)) <= 1e-9 * std::abs(ref));
  }
  // m(phi): scan plus golden section on the closed form, independent of the interpolant
  auto G = [&](double r) { return (1.0 + r) * std::abs(oracle::plummer_phi_closed(r, R)); };
  double best = 1e300;
  for (int k = 0; k <= 20000; ++k) best = std::min(best, G(R * k / 20000.0));
  double Mtot = 4.0 * oracle::pi * R * R * R / (3.0 * std::pow(1.0 + R * R, 1.5));
  best = std::min(best, Mtot / (4.0 * oracle::pi));
  auto rep = verify_potential_class(phi, 7.0);
  CHECK(std::abs(rep.m - best) <= 1e-5 * best);
  CHECK(rep.mass_bound_holds);
}

TEST_CASE("linearity, monotonicity and Hardy bound on random densities") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto g = make_grid(300, 5.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> a(300), b(300), c(300);
    double ca = 1 + 3 * U(rng), cb = 0.5 + U(rng);
    for (int i = 0; i < 300; ++i) {
      double r = g->r[i];
      a[i] = r < 3.0 ? std::exp(-ca * r * r) * (1 + U(rng)) : 0.0;
      b[i] = r < 2.0 ? cb * (2.0 - r) : 0.0;
      c[i] = a[i] + b[i];
    }
    auto pa = solve_radial_poisson(RadialDensity(g, a));
    auto pb = solve_radial_poisson(RadialDensity(g, b));
    auto pc = solve_radial_poisson(RadialDensity(g, c));
    double scale = std::abs(pc[0]);
    for (int i = 0; i < 300; ++i) CHECK(std::abs(pc[i] - pa[i] - pb[i]) <= 1e-12 * scale);
    double gn = pc.grad_l2();
    for (int i = 0; i < 300; ++i) {
      CHECK(pc[i] <= 0.0);
      if (i > 0) CHECK(pc[i] >= pc[i - 1]);
      CHECK(std::abs(pc[i]) * std::sqrt(kFourPi * g->r[i]) <= gn * (1 + 1e-12));
    }
    // beyond the support edge r = 3 the potential is harmonic: r phi(r) is constant
    for (int i = 1; i < 300; ++i)
      if (g->r[i - 1] > 3.0) CHECK(std::abs(g->r[i] * pc[i] - g->r[i - 1] * pc[i - 1]) <= 1e-11 * scale);
    double M = RadialDensity(g, c).total_mass;
    CHECK(std::abs(pc.tail_mass() - M) <= 1e-10 * M);
    double far = (1 + 1e8) * std::abs(pc.value(1e8));
    CHECK(std::abs(far - M / kFourPi) <= 1e-7 * M);
    auto rep = verify_potential_class(pc, 5.0);
    CHECK(rep.in_class);
    CHECK(rep.mass_bound_holds);
  }
}
