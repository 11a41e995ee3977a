#include <cmath>

#include "doctest.h"
#include "rvp/fixtures.hpp"
#include "rvp/dynamics.hpp"

using namespace rvp;

namespace {

double mean_rho_error(const PhaseDensity& f, std::size_t N, int seeds) {
  const RadialGrid& g = *f.grid;
  const std::vector<double> rho = f.density();
  double acc = 0.0;
  for (int s = 0; s < seeds; ++s) {
    const auto e = sample_from(f, N, 100 + s);
    const auto M = deposit_mass(e, g);
    double err = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) err += std::abs(M[i] - g.W[i] * rho[i]);
    acc += err / f.l1();
  }
  return acc / seeds;
}

}  // namespace

TEST_CASE("radial equations of motion") {
  auto [rd, pd] = radial_rhs(2.0, 0.7, 0.0, 0.0);
  CHECK(rd == doctest::Approx(0.7 / std::sqrt(1.0 + 0.49)));
  CHECK(pd == 0.0);
  // turning point: p_r = 0 gives no radial velocity
  auto [rd2, pd2] = radial_rhs(1.5, 0.0, 0.8, 0.3);
  CHECK(rd2 == 0.0);
  CHECK(pd2 == doctest::Approx(0.64 / (1.5 * 1.5 * 1.5 * std::sqrt(1.0 + 0.64 / 2.25)) - 0.3));
}

TEST_CASE("free streaming in a zero field") {
  for (auto integ : {Integrator::Leapfrog, Integrator::ImplicitMidpoint, Integrator::Midpoint4, Integrator::RK4}) {
    ParticleEnsemble e;
    e.push_back(1.0, 0.6, 0.0, 1.0);
    e.push_back(2.0, -0.1, 0.5, 1.0);
    const double v = 0.6 / std::sqrt(1.36);
    for (int s = 0; s < 100; ++s) step(e, Field::zero(), 0.01, integ);
    CHECK(e.r(0) == doctest::Approx(1.0 + v).epsilon(1e-12));
    CHECK(e.p_r(0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(e.L(1) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("trace through the simulation driver") {
    const auto& st = fixture::golden();
    ParticleEnsemble e;
    e.push_back(1.0, 0.6, 0.0, 1.0);
    SimConfig cfg;
    cfg.field_mode = FieldMode::None;
    cfg.dt = 0.05;
    cfg.horizon = 2.0;
    const SplineMap map = make_sim_map(st, cfg);
    Simulation sim(e, cfg, map);
    while (sim.time() < cfg.horizon - 1e-12) sim.advance();
    CHECK(sim.ensemble().r(0) == doctest::Approx(1.0 + sim.time() * 0.6 / std::sqrt(1.36)).epsilon(1e-12));
    CHECK(sim.hamiltonian() == doctest::Approx(std::sqrt(1.36) - 1.0).epsilon(1e-14));
  }
}

TEST_CASE("frozen steady field: microscopic energy and angular momentum") {
  const auto& st = fixture::golden();
  auto e = sample_steady(st, 300, 4);
  const Field f = Field::shooting(st.shoot);
  std::vector<double> e0(e.size()), L0(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    e0[i] = e.gamma(i) - 1.0 + f.phi(e.r(i));
    L0[i] = e.L(i);
  }
  const double dt = default_dt(st, FieldMode::Frozen);
  double drift = 0.0, ldev = 0.0;
  for (int s = 0; s < 10000; ++s) {
    step(e, f, dt);
    if (s % 100 == 99)
      for (std::size_t i = 0; i < e.size(); ++i) {
        drift = std::max(drift, std::abs(e.gamma(i) - 1.0 + f.phi(e.r(i)) - e0[i]));
        ldev = std::max(ldev, std::abs(e.L(i) - L0[i]) / (L0[i] + 1e-300));
      }
  }
  CHECK(drift <= 1e-6);
  CHECK(ldev <= 1e-10);
}

TEST_CASE("blowup is reported with the particle index") {
  ParticleEnsemble e;
  e.push_back(1.0, 0.1, 0.2, 1.0);
  e.push_back(1.0, std::nan(""), 0.2, 1.0);
  try {
    step(e, Field::zero(), 0.1);
    FAIL("expected IntegrationBlowup");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::IntegrationBlowup);
    CHECK(std::string(err.what()).find("particle 1") != std::string::npos);
  }
}

TEST_CASE("sampling") {
  const auto& st = fixture::golden();
  CHECK_THROWS_AS(sample_from(PhaseDensity::zero(st.Q.grid), 100, 1), Error);
  const auto a = sample_from(st.Q, 5000, 7), b = sample_from(st.Q, 5000, 7);
  CHECK(a.x == b.x);
  CHECK(a.px == b.px);
  CHECK(a.py == b.py);
  CHECK(a.mass() == doctest::Approx(st.Q.l1()).epsilon(1e-12));
  const auto M = deposit_mass(a, *st.Q.grid);
  double tot = 0.0;
  for (double x : M) tot += x;
  CHECK(std::abs(tot - st.Q.l1()) <= 5e-3 * st.Q.l1());
  // refinement: four times the particles halves the radial density error
  const double e1 = mean_rho_error(st.Q, 2000, 4), e4 = mean_rho_error(st.Q, 8000, 4);
  CHECK(e4 <= 0.6 * e1);
  const auto s = sample_steady(st, 20000, 3);
  CHECK(s.kinetic() == doctest::Approx(st.kinetic).epsilon(1e-2));
  CHECK(s.mass() == doctest::Approx(st.mass).epsilon(1e-3));
}

TEST_CASE("self-consistent evolution of the steady state") {
  const auto& st = fixture::golden();
  SimConfig cfg;
  cfg.dt = default_dt(st, FieldMode::SelfConsistent);
  cfg.horizon = 5 * dynamical_time(st);
  cfg.record_every = 25;
  const SplineMap map = make_sim_map(st, cfg);
  const DiagGrid dg = make_diag_grid(st, cfg);
  const PhaseDensity PQ = project_phase(
      [&](double r, double w) { return st.profile.F(std::sqrt(1 + w * w) - 1 + st.shoot.phi_at(r)); }, dg);
  const auto ens = sample_steady(st, 5000, 11);
  const auto tr = evolve(ens, cfg, map, &dg, &PQ);
  CHECK(tr.max_rel_H_drift <= 1e-2);
  CHECK(tr.max_mass_dev == 0.0);
  CHECK_FALSE(tr.kinetic_flag);
  for (std::size_t k = 1; k < tr.t.size(); ++k) CHECK(tr.t[k] > tr.t[k - 1]);
  for (double l : tr.l1) CHECK(l == doctest::Approx(tr.l1.front()).epsilon(1e-9));
  // the L^p estimate of the deposit stays at its start within reconstruction noise
  for (double l : tr.lp) CHECK(l == doctest::Approx(tr.lp.front()).epsilon(0.05));
  // determinism
  const auto tr2 = evolve(ens, cfg, map, &dg, &PQ);
  CHECK(tr2.H == tr.H);
  CHECK(tr2.distance == tr.distance);
}

TEST_CASE("distance noise floor halves at four times the particles") {
  const auto& st = fixture::golden();
  SimConfig cfg;
  const DiagGrid dg = make_diag_grid(st, cfg);
  const PhaseDensity PQ = project_phase(
      [&](double r, double w) { return st.profile.F(std::sqrt(1 + w * w) - 1 + st.shoot.phi_at(r)); }, dg);
  auto floor_at = [&](std::size_t N) {
    double acc = 0.0;
    for (int s = 0; s < 4; ++s) acc += deposit_phase(sample_steady(st, N, 50 + s), dg).minus(PQ).ep_norm(2.0);
    return acc / 4 / PQ.ep_norm(2.0);
  };
  CHECK(floor_at(40000) <= 0.6 * floor_at(10000));
}

TEST_CASE("kinetic monitor flags a collapsing state") {
  const auto& st = fixture::golden();
  SimConfig cfg;
  cfg.dt = default_dt(st, FieldMode::SelfConsistent);
  cfg.horizon = 2 * dynamical_time(st);
  cfg.kinetic_growth_limit = 1.5;
  cfg.record_every = 5;
  auto ens = sample_steady(st, 3000, 2);
  for (double& m : ens.m) m *= 4.0;  // far from equilibrium: deep infall
  const SplineMap map = make_sim_map(st, cfg);
  const auto tr = evolve(ens, cfg, map);
  CHECK(tr.kinetic_flag);
  CHECK(tr.kinetic_flag_time > 0.0);
}

TEST_CASE("stability experiment plumbing") {
  const auto& st = fixture::golden();
  SimConfig cfg;
  cfg.N = 3000;
  cfg.dt = default_dt(st, FieldMode::SelfConsistent);
  cfg.horizon = 2 * dynamical_time(st);
  cfg.record_every = 10;
  const auto z = stability_experiment(st, 0.0, cfg);
  CHECK(z.sup_distance == 0.0);
  CHECK(z.noise_floor > 0.0);
  const auto r = stability_experiment(st, 0.02, cfg);
  CHECK(r.distance.front() == doctest::Approx(0.02).epsilon(0.02));
  CHECK(r.ratio == doctest::Approx(r.sup_distance / 0.02));
  const auto w = stability_experiment(st, 0.15, cfg);
  CHECK(w.outside_window);
  CHECK_THROWS_AS(stability_experiment(st, -0.1, cfg), Error);
}

TEST_CASE("non-monotone control run") {
  const auto& st = fixture::golden();
  SimConfig cfg;
  cfg.N = 3000;
  cfg.dt = default_dt(st, FieldMode::SelfConsistent);
  cfg.horizon = 2 * dynamical_time(st);
  const auto c = nonmonotone_control(st, cfg);
  CHECK_FALSE(c.profile_monotone);
  CHECK(std::isfinite(c.sup_distance));
  CHECK(c.sup_distance > 0.0);
}
