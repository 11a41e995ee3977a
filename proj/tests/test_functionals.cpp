#include <random>

#include "doctest.h"
#include "rvp/fixtures.hpp"
#include "rvp/functionals.hpp"

using namespace rvp;
using fixture::golden;

TEST_CASE("hamiltonian of the steady state and the energy pairing identity") {
  const SteadyState& st = golden();
  EnergyReport e = hamiltonian(st.Q, st.p);
  CHECK(e.hamiltonian == doctest::Approx(st.H).epsilon(1e-12));
  CHECK(e.ep_norm == doctest::Approx(e.l1 + e.lp + e.gamma_moment));
  CHECK(e.gamma_moment == doctest::Approx(e.kinetic + e.l1).epsilon(1e-12));
  // H(f) = int e_{phi_f} f + (1/2)||grad phi_f||^2 for the self-generated potential
  std::mt19937_64 rng(3);
  PhaseDensity f = fixture::cell_perturbation(st, 0.15, rng);
  RadialPotential phi = solve_radial_poisson(f.radial_density());
  EnergyReport ef = hamiltonian(f);
  CHECK(energy_pairing(f, phi) + ef.potential == doctest::Approx(ef.hamiltonian).epsilon(1e-11));
  CHECK(casimir(st.Q, [](double v) { return v; }) == doctest::Approx(e.l1));
}

TEST_CASE("modulate keeps segment geometry and scales values") {
  const SteadyState& st = golden();
  PhaseDensity f = modulate(st.Q, [](double, double) { return 0.5; }, 5, 0.7);
  CHECK(f.l1() == doctest::Approx(1.5 * st.Q.l1()).epsilon(1e-12));
  PhaseDensity g = modulate(st.Q, [](double, double w) { return w < 0.35 ? 0.25 : -0.25; }, 2, 0.7);
  CHECK(g.nonnegative());
  CHECK(g.support_measure() == doctest::Approx(st.Q.support_measure()).epsilon(1e-12));
}

TEST_CASE("J: closed form against the materialized rearrangement, and J(phi_Q) = H(Q)") {
  const SteadyState& st = golden();
  JValue j = functional_J(st.phi_Q, st);
  CHECK(j.J0 == doctest::Approx(j.J0_raw).epsilon(1e-11));
  CHECK(std::abs(j.J - st.H) <= 1e-10 * std::abs(st.H));
  // a different admissible potential
  RadialPotential psi = st.phi_Q.scaled(1.3);
  JValue k = functional_J(psi, st);
  CHECK(k.J0 == doctest::Approx(k.J0_raw).epsilon(1e-10));
  CHECK(k.J > j.J);  // phi_Q minimizes J along this ray
  std::vector<double> bad = st.phi_Q.values();
  bad[3] = 0.1;
  CHECK_THROWS_AS(functional_J(RadialPotential(st.phi_Q.grid(), bad), st), Error);
}

TEST_CASE("first variation vanishes at phi_Q and Pi fixes constants") {
  const SteadyState& st = golden();
  const double scale = st.phi_Q.grad_l2();
  for (double c : {0.5, 2.0, 4.0, 6.0}) {
    RadialTestFunction h = RadialTestFunction::bump(st.phi_Q.grid(), c, 1.2);
    CHECK(std::abs(first_variation_residual(st, h)) <= 1e-9 * h.grad_l2() * scale);
  }
  RadialTestFunction one = RadialTestFunction::from_callable(st.phi_Q.grid(), [](double) {
    return std::pair<double, double>{1.0, 0.0};
  });
  std::vector<double> es{-0.3, -0.2, -0.1, -0.05};
  for (double v : projector_Pi(st, one, es)) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(projector_Pi(st, one, {0.01}), Error);
  CHECK_THROWS_AS(projector_Pi(st, one, {st.phi_Q.inf_value() - 0.01}), Error);
}

TEST_CASE("second variation: exact level sum matches finite differences; orthogonality of h - Pi h") {
  const SteadyState& st = golden();
  HessianData hd(st);
  for (double c : {1.0, 3.5, 5.5}) {
    RadialTestFunction h = RadialTestFunction::bump(st.phi_Q.grid(), c, 1.5);
    const double eps = 1e-3 * std::abs(st.profile.e_Q) / h.sup_norm();
    auto J = [&](double e) { return functional_J(st.phi_Q.plus(h.values, e), st, false).J; };
    const double fd = (J(eps) - 2 * J(0) + J(-eps)) / (eps * eps);
    const double d2 = second_variation(hd, st, h);
    CHECK(d2 > 0.0);
    CHECK(std::abs(fd - d2) <= 0.01 * std::abs(d2));
    const double o = hd.orthogonality(h.values, [](double e) { return 1.0 + e * e; });
    CHECK(std::abs(o) <= 1e-12 * hd.I(h.values, h.values) + 1e-14);
  }
  // Pi at a level agrees with the table-based projector
  RadialTestFunction h = RadialTestFunction::bump(st.phi_Q.grid(), 2.0, 1.5);
  const std::size_t k = hd.level_e().size() / 3;
  auto pi = projector_Pi(st, h, {hd.level_e()[k]});
  CHECK(hd.Pi_at_level(k, h.values) == doctest::Approx(pi[0]).epsilon(1e-10));
  // matrix form agrees with the bilinear form
  RadialTestFunction g = RadialTestFunction::bump(st.phi_Q.grid(), 4.0, 1.0);
  auto M = hd.I_matrix({h.values, g.values});
  CHECK(M[0][1] == doctest::Approx(hd.I(h.values, g.values)).epsilon(1e-10));
  CHECK(M[1][1] == doctest::Approx(hd.I(g.values, g.values)).epsilon(1e-10));
}

TEST_CASE("Taylor remainder of J shrinks under halving") {
  const SteadyState& st = golden();
  HessianData hd(st);
  RadialTestFunction h = RadialTestFunction::bump(st.phi_Q.grid(), 3.0, 2.0);
  const double d2 = second_variation(hd, st, h), J0 = functional_J(st.phi_Q, st, false).J;
  double prev = 0.0;
  for (int m = 0; m < 5; ++m) {
    const double eps = 1e-1 * std::pow(0.5, m) * std::abs(st.profile.e_Q) / h.sup_norm();
    const double R = std::abs(functional_J(st.phi_Q.plus(h.values, eps), st, false).J - J0 - 0.5 * eps * eps * d2);
    if (m) CHECK(prev / R >= 2.0);
    prev = R;
  }
}

TEST_CASE("stability gap: nonnegative slack, equality at Q, bathtub split") {
  const SteadyState& st = golden();
  GapReport q = stability_gap(st.Q, st);
  CHECK(std::abs(q.slack) <= 1e-9 * q.scale);
  std::mt19937_64 rng(11);
  for (int n = 0; n < 4; ++n) {
    const double d = (n % 2 ? -1.0 : 1.0) * (0.05 + 0.05 * n);
    PhaseDensity f = fixture::cell_perturbation(st, d, rng);
    GapReport g = stability_gap(f, st);
    CHECK(g.slack >= -1e-6 * g.scale);
    CHECK(g.slack == doctest::Approx(g.bathtub - g.fixed_point_defect).epsilon(1e-6));
    CHECK(g.s_integral == doctest::Approx(g.s_integral_below1 + g.s_integral_above1));
    CHECK(std::abs(g.s_integral_below1) <= g.below1_bound);
  }
  CHECK_THROWS_AS(stability_gap(PhaseDensity::zero(st.Q.grid), st), Error);
}

TEST_CASE("rearrangement inequality and its precondition") {
  const SteadyState& st = golden();
  std::mt19937_64 rng(5);
  PhaseDensity g = fixture::level_shuffle(st, rng);
  auto r = rearrangement_inequality_check(g, g, st.phi_Q);
  CHECK(r.value >= -1e-12);
  CHECK(r.H_g >= r.H_rearranged - 1e-12);
  // H(g) - H(f^{*phi_g}) splits into the pairing at phi_g and the gradient gap
  auto rg = rearrangement_inequality_check(g, g, solve_radial_poisson(g.radial_density()));
  // a smaller distribution is admissible too
  CHECK(rearrangement_inequality_check(g.scaled(0.9), g, st.phi_Q).value >= -1e-12);
  CHECK(rg.H_g - rg.H_rearranged == doctest::Approx(rg.value + rg.gradient_gap).epsilon(1e-8));
  CHECK_THROWS_AS(rearrangement_inequality_check(st.Q.scaled(1.1), st.Q, st.phi_Q), Error);
}

TEST_CASE("subcritical constants calibrate and transfer") {
  const SteadyState& st = golden();
  auto train = random_density_ensemble(st, 60, 1);
  auto test = random_density_ensemble(st, 30, 2);
  const double C = calibrate_interpolation_constant(train, 2.0);
  const double K = calibrate_difference_constant(train, 2.0);
  CHECK(C > 0.0);
  CHECK(K > 0.0);
  for (const PhaseDensity& f : test) {
    SubcriticalReport s = check_subcritical(f, 2.0, C);
    CHECK(s.interpolation_holds);
    CHECK(s.lower_bound_holds);
  }
  for (std::size_t k = 0; k + 1 < test.size(); ++k) CHECK(difference_ratio(test[k], test[k + 1], 2.0) <= K);
  CHECK_THROWS_AS(check_subcritical(st.Q, 1.5, C), Error);
  SubcriticalReport sq = check_subcritical(st.Q, 2.0, C);
  CHECK(sq.smallness == doctest::Approx(C * std::pow(st.l1, 1.0 / 3.0) * std::pow(st.lp, 2.0 / 3.0)));

  KineticControlReport kc = kinetic_control(st.Q, st.phi_Q, 2.0, K);
  CHECK(kc.quadratic <= 0.0);
  CHECK(kc.cauchy_schwarz <= 1e-12);
  CHECK(kc.X <= kc.bound);
}
