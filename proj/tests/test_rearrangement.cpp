#include <algorithm>
#include <random>

#include "doctest.h"
#include "rvp/oracles.hpp"
#include "rvp/rearrangement.hpp"

using namespace rvp;

namespace {

RadialPotential plummer_potential(int n = 2048, double R = 20.0) {
  auto g = make_grid(n, R);
  return solve_radial_poisson(g, [R](double r) { return oracle::plummer_rho(r, R); });
}

// Random decreasing step profile with k levels on total measure S.
DecreasingProfile random_profile(std::mt19937_64& rng, int k, double S, double vmax) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> cuts, vals;
  for (int i = 0; i < k - 1; ++i) cuts.push_back(S * U(rng));
  for (int i = 0; i < k; ++i) vals.push_back(vmax * (0.05 + U(rng)));
  std::sort(cuts.begin(), cuts.end());
  std::sort(vals.rbegin(), vals.rend());
  DecreasingProfile p;
  p.s.push_back(0.0);
  for (double c : cuts) p.s.push_back(c);
  p.s.push_back(S);
  p.v = vals;
  return p;
}

}  // namespace

TEST_CASE("distribution function basics") {
  auto g = make_grid(10, 1.0);
  // a region of measure 5 at node 4 carrying value 2
  double w = std::cbrt(5.0 * 3.0 / (kFourPi * g->W[4]));
  std::vector<std::vector<double>> hi(10), vals(10);
  hi[4] = {w};
  vals[4] = {2.0};
  auto f = PhaseDensity::from_segments(g, hi, vals);
  CHECK(std::abs(distribution_function(f, 1.0) - 5.0) <= 1e-12);
  CHECK(distribution_function(f, 2.0) == 0.0);
  CHECK(distribution_function(f, 7.0) == 0.0);
  CHECK_THROWS_AS(distribution_function(f, -1.0), Error);
  auto p = schwarz_rearrange(f);
  REQUIRE(p.v.size() == 1);
  CHECK(std::abs(p.s[1] - 5.0) <= 1e-12);
  CHECK(p.value(4.9) == 2.0);
  CHECK(p.value(5.1) == 0.0);
}

TEST_CASE("tent function on R^6") {
  auto g = make_grid(1500, 1.0, 1.0);
  auto f = PhaseDensity::sample(g, [](double r, double w) { return std::max(0.0, 1.0 - std::hypot(r, w)); }, 1.0, 3000);
  double ref = std::pow(oracle::pi, 3) * std::pow(0.5, 6) / 6.0;
  CHECK(std::abs(distribution_function(f, 0.5) - ref) <= 2e-3 * ref);
  auto p = schwarz_rearrange(f);
  for (double t : {0.01, 0.1, 1.0, 3.0}) {
    double ex = 1.0 - std::pow(6.0 * t / std::pow(oracle::pi, 3), 1.0 / 6.0);
    CHECK(std::abs(p.value(t) - ex) <= 5e-3);
  }
  CHECK(std::abs(p.l1() - f.l1()) <= 1e-12 * f.l1());
  CHECK(std::abs(p.lp(2.0) - f.lp(2.0)) <= 1e-12 * f.lp(2.0));
}

TEST_CASE("Schwarz rearrangement equals the sort oracle") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto g = make_grid(5, 1.0);
  std::vector<std::vector<double>> hi(5), vals(5);
  std::vector<std::pair<double, double>> cells;  // (value, measure)
  for (int i = 0; i < 5; ++i) {
    double w = 0.0;
    for (int k = 0; k < 4; ++k) {
      double wn = w + 0.1 + U(rng);
      double v = std::floor(10 * U(rng)) + 1.0;
      hi[i].push_back(wn);
      vals[i].push_back(v);
      cells.push_back({v, g->W[i] * kFourPi * (wn * wn * wn - w * w * w) / 3.0});
      w = wn;
    }
  }
  auto f = PhaseDensity::from_segments(g, hi, vals);
  auto p = schwarz_rearrange(f);
  std::sort(cells.begin(), cells.end(), [](auto a, auto b) { return a.first > b.first; });
  double acc = 0.0;
  for (auto [v, m] : cells) {
    acc += m;
    CHECK(p.value(acc * (1 - 1e-9)) == v);
  }
  CHECK(std::abs(p.support() - acc) <= 1e-12 * acc);
  for (double s : {0.0, 1.5, 3.5, 7.5, 9.5}) CHECK(std::abs(p.distribution(s) - f.distribution(s)) <= 1e-12 * acc);
  CHECK(schwarz_rearrange(PhaseDensity::zero(g)).empty());
}

TEST_CASE("constant-on-ball Jacobian closed form") {
  auto g = make_grid(400, 1.0);
  RadialPotential phi(g, std::vector<double>(g->size(), -1.0), 0.0);
  JacobianTable t(phi);
  double ref = std::pow(4.0 * kPi / 3.0, 2) * std::pow(1.25, 1.5);
  CHECK(std::abs(t.a(-0.5) - ref) <= 1e-12 * ref);
  CHECK(std::abs(ref - 24.52) < 0.01);
  CHECK(t.a(-1.0) == 0.0);
  CHECK(t.a(-2.0) == 0.0);
  CHECK(std::abs(t.inverse(ref) + 0.5) <= 1e-12);
  CHECK_THROWS_AS(t.inverse(0.0), Error);
  CHECK_THROWS_AS(t.inverse(-1.0), Error);
}

TEST_CASE("Plummer Jacobian against the sublevel-volume oracle") {
  const double R = 20.0;
  auto phi = plummer_potential();
  JacobianTable t(phi);
  auto phic = [R](double r) { return oracle::plummer_phi_closed(r, R); };
  for (double e : {-0.3, -0.25, -0.2, -0.15, -0.1, -0.06, -0.03, -0.015, -0.008, -0.004}) {
    double ref = oracle::sublevel_volume(phic, e, 1e5);
    CHECK(std::abs(t.a(e) - ref) <= 1e-4 * ref);
    CHECK(std::abs(t.a_interp(e) - t.a(e)) <= 1e-5 * ref);
    // derivative and antiderivative consistency
    double h = 1e-6;
    CHECK(std::abs((t.a(e + h) - t.a(e - h)) / (2 * h) - t.da(e)) <= 1e-5 * t.da(e));
    CHECK(std::abs((t.A(e + h) - t.A(e - h)) / (2 * h) - t.a(e)) <= 1e-6 * t.a(e));
  }
}

TEST_CASE("Jacobian inverse round trip, limits and decay bound") {
  auto phi = plummer_potential(600);
  JacobianTable t(phi);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-3.0, 4.0);
  for (int k = 0; k < 100; ++k) {
    double s = std::pow(10.0, U(rng));
    double e = t.inverse(s);
    CHECK(std::abs(t.a(e) - s) <= 1e-10 * s);
    CHECK(e >= t.inverse_lower_bound(s, 7.0));
  }
  double prev = t.e_min();
  for (double s = 1.0; s < 1e12; s *= 10.0) {
    double e = t.inverse(s);
    CHECK(e > prev);
    CHECK(e < 0.0);
    prev = e;
  }
  CHECK(prev > -1e-6);
  for (double e = -0.33; e < -1e-4; e *= 0.7) {
    CHECK(t.a(e) <= t.decay_bound(e, 7.0));
    CHECK(t.a(e) <= t.decay_bound(e, 4.5));
  }
  // strict monotonicity along the table
  for (std::size_t k = 1; k < t.table_a().size(); ++k) CHECK(t.table_a()[k] > t.table_a()[k - 1]);
}

TEST_CASE("energy rearrangement: level sets, equimeasurability and round trips") {
  auto phi = plummer_potential(600);
  JacobianTable t(phi);
  SUBCASE("indicator profile") {
    DecreasingProfile p{{0.0, 10.0}, {1.0}};
    auto f = energy_rearrange(p, t);
    double e = t.inverse(10.0);
    CHECK(std::abs(f.distribution(0.5) - 10.0) <= 1e-10 * 10.0);
    for (std::size_t i = 0; i < phi.size(); i += 50) {
      double wb = w_of_eta(e - phi[i]);
      if (wb > 0) {
        CHECK(f.value(i, 0.999 * wb) == 1.0);
        CHECK(f.value(i, 1.001 * wb) == 0.0);
      }
    }
  }
  SUBCASE("random profiles") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      auto p = random_profile(rng, 30, 20.0 + 10.0 * trial, 1.0);
      auto f = energy_rearrange(p, t);
      for (int l = 0; l < 50; ++l) {
        double lev = 1.1 * p.linf() * l / 50.0;
        CHECK(std::abs(f.distribution(lev) - p.distribution(lev)) <= 1e-9 * p.support());
      }
      CHECK(std::abs(f.l1() - p.l1()) <= 1e-9 * p.l1());
      CHECK(std::abs(f.lp(2.5) - p.lp(2.5)) <= 1e-9 * p.lp(2.5));
      auto p2 = schwarz_rearrange(f);
      auto f2 = energy_rearrange(p2, t);
      auto p3 = schwarz_rearrange(f2);
      REQUIRE(p2.v.size() == p3.v.size());
      for (std::size_t k = 0; k < p2.v.size(); ++k) {
        CHECK(p2.v[k] == p3.v[k]);
        CHECK(std::abs(p2.s[k + 1] - p3.s[k + 1]) <= 1e-9 * p2.support());
      }
    }
  }
  SUBCASE("zero profile and overflow") {
    CHECK(energy_rearrange(DecreasingProfile{}, t).l1() == 0.0);
    DecreasingProfile huge{{0.0, 1e9}, {1.0}};
    CHECK_THROWS_AS(energy_rearrange(huge, t), Error);
  }
}

TEST_CASE("pseudo inverse") {
  CHECK(std::abs(pseudo_inverse([](double e) { return -e; }, -1.0, 0.3) + 0.3) <= 1e-8);
  for (double s : {0.05, 0.2, 0.7}) {
    auto comp = [](double e) { return std::expm1(-4.0 * e) / std::expm1(4.0); };
    double e = pseudo_inverse(comp, -1.0, s);
    CHECK(std::abs(comp(e) - s) <= 1e-8);
  }
  // plateau at 0.5 on [-0.6,-0.3): the supremum edge of {comp > s}
  auto plateau = [](double e) { return e < -0.6 ? 1.0 : (e < -0.3 ? 0.5 : 0.1); };
  CHECK(std::abs(pseudo_inverse(plateau, -1.0, 0.5) + 0.6) <= 1e-12);
  CHECK(std::abs(pseudo_inverse(plateau, -1.0, 0.4) + 0.3) <= 1e-12);
  CHECK(pseudo_inverse(plateau, -1.0, 2.0) == -1.0);

  // implications on sampled (x, v) for a step profile over the Plummer well
  auto phi = plummer_potential(400);
  JacobianTable t(phi);
  std::mt19937_64 rng(9);
  auto p = random_profile(rng, 12, 30.0, 1.0);
  auto f = energy_rearrange(p, t);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (double s : {0.1, 0.3, 0.5, 0.8}) {
    double es = pseudo_inverse(p, t, s);
    auto comp = [&](double e) { return p.value(t.a(e)); };
    CHECK(std::abs(pseudo_inverse(comp, t.e_min(), s) - es) <= 1e-9);
    for (int k = 0; k < 10000; ++k) {
      std::size_t i = static_cast<std::size_t>(U(rng) * 399);
      double w = 1.2 * U(rng);
      double e = std::sqrt(1 + w * w) - 1 + phi[i];
      double fv = f.value(i, w);
      if (fv > s) CHECK(e <= es * (1 - 1e-12));
      else CHECK(e >= es * (1 + 1e-12));
    }
  }
}

TEST_CASE("change of variables: three routes") {
  auto phi = plummer_potential(300);
  JacobianTable t(phi);
  auto one = [](double) { return 1.0; };
  auto r1 = energy_space_integral(one, [](double s) { return s <= 7.0 ? 1.0 : 0.0; }, t, {7.0});
  CHECK(std::abs(r1.s_route - 7.0) <= 1e-10);
  CHECK(std::abs(r1.e_route - 7.0) <= 1e-6);
  CHECK(std::abs(r1.raw_route - 7.0) <= 1e-6);
  auto r0 = energy_space_integral(one, [](double) { return 0.0; }, t, {7.0});
  CHECK(r0.s_route == 0.0);
  CHECK(r0.raw_route == 0.0);
  std::mt19937_64 rng(1);
  auto p = random_profile(rng, 8, 25.0, 1.0);
  auto id = [](double e) { return e; };
  auto r2 = energy_space_integral(id, [&](double s) { return p.value(s); }, t, p.s);
  // closed form from the antiderivative of a
  auto e = level_energies(p, t);
  double J0 = 0.0;
  for (std::size_t k = 0; k < p.v.size(); ++k)
    J0 += p.v[k] * (e[k + 1] * p.s[k + 1] - e[k] * p.s[k] - t.A(e[k + 1]) + t.A(e[k]));
  CHECK(std::abs(r2.s_route - J0) <= 1e-7 * std::abs(J0));
  CHECK(std::abs(r2.e_route - J0) <= 1e-7 * std::abs(J0));
  CHECK(std::abs(r2.raw_route - J0) <= 1e-7 * std::abs(J0));
  // raw route also equals the phase-space integral of e against the materialized density
  auto f = energy_rearrange(p, t);
  double raw = 0.0;
  for (std::size_t i = 0; i < f.nodes(); ++i)
    for (std::size_t k = f.offsets[i]; k < f.offsets[i + 1]; ++k) {
      double lo = f.w_lo(k, i), hi = f.w_hi[k];
      raw += phi.grid()->W[i] * f.val[k] * kFourPi * (Kin(hi) - Kin(lo) + phi[i] * (hi * hi * hi - lo * lo * lo) / 3.0);
    }
  CHECK(std::abs(raw - J0) <= 1e-10 * std::abs(J0));
}

TEST_CASE("lambda derivatives of the Jacobian and its inverse") {
  auto phi = plummer_potential(400);
  const auto& g = *phi.grid();
  std::vector<double> h(g.size()), zero(g.size(), 0.0), neg(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    h[i] = 0.05 * std::sin(g.r[i]) * std::exp(-0.1 * g.r[i]);
    neg[i] = -0.05 * std::exp(-g.r[i] * g.r[i]);
  }
  CHECK(jacobian_lambda_derivative(phi, zero, 0.3, -0.2) == 0.0);
  CHECK(jacobian_inverse_lambda_derivative(phi, zero, 0.3, 5.0) == 0.0);
  CHECK_THROWS_AS(jacobian_lambda_derivative(phi, h, 0.3, 0.0), Error);
  CHECK_THROWS_AS(jacobian_inverse_lambda_derivative(phi, h, 0.3, 0.0), Error);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    double lam = U(rng), e = -0.3 + 0.29 * U(rng), s = std::pow(10.0, 3 * U(rng));
    double d = 1e-5;
    double fd = (JacobianTable(phi.plus(h, lam + d), 8).a(e) - JacobianTable(phi.plus(h, lam - d), 8).a(e)) / (2 * d);
    double an = jacobian_lambda_derivative(phi, h, lam, e);
    CHECK(std::abs(fd - an) <= 1e-4 * std::abs(an) + 1e-12);
    double fdi = (JacobianTable(phi.plus(h, lam + d)).inverse(s) - JacobianTable(phi.plus(h, lam - d)).inverse(s)) / (2 * d);
    double ani = jacobian_inverse_lambda_derivative(phi, h, lam, s);
    CHECK(std::abs(fdi - ani) <= 1e-4 * std::abs(ani) + 1e-12);
    CHECK(jacobian_lambda_derivative(phi, neg, lam, e) >= 0.0);
  }
}

TEST_CASE("Jacobian continuity in phi") {
  auto phi = plummer_potential(400);
  std::vector<double> psi(phi.size());
  for (std::size_t i = 0; i < psi.size(); ++i) psi[i] = -std::exp(-phi.grid()->r[i]);
  double e = -0.2, a0 = JacobianTable(phi, 8).a(e), prev = INFINITY;
  for (double d = 1e-1; d > 1e-7; d *= 0.1) {
    double diff = std::abs(JacobianTable(phi.plus(psi, d), 8).a(e) - a0);
    CHECK(diff < prev);
    prev = diff;
  }
  CHECK(prev <= 1e-5 * a0);
}
