#pragma once
#include <vector>

#include "rvp/rearrangement.hpp"

namespace rvp {

// F(e) = 0 for e >= e_Q. Polytrope: kappa (e_Q - e)^k. Table: piecewise linear in e
// through (table_e, table_F) with F(e_Q) = 0, linear extrapolation below table_e.front().
struct CutoffProfile {
  enum class Family { Polytrope, Table };
  Family family = Family::Polytrope;
  double kappa = 1.0, k = 1.0, e_Q = -0.1;
  std::vector<double> table_e, table_F;

  static CutoffProfile polytrope(double kappa, double k, double e_Q);
  static CutoffProfile table(std::vector<double> e, std::vector<double> F, double e_Q);

  double F(double e) const;
  double dF(double e) const;
  bool is_zero() const;
  bool decreasing() const;  // strictly decreasing below e_Q
  // rho_F(phi) = 4 pi int F(sqrt(1+w^2)-1+phi) w^2 dw
  double rho_of_phi(double phi) const;
  // (4 pi / 3) int |F'(e)| u(e)^3 de with u = sqrt((1+e-phi)^2-1)
  double rho_identity(double phi) const;
};

// Continuous shooting solution, Hermite interpolated from dense ODE output.
struct ShootingSolution {
  double phi_center = 0.0, R = 0.0, mass = 0.0, far_constant = 0.0;
  std::vector<double> r, phi, dphi, d2phi;
  double phi_at(double x) const;
  double dphi_at(double x) const;
  double d2phi_at(double x, const CutoffProfile& F) const;
  // r(e) = phi^{-1}(e) for e in (phi_center, e_Q]
  double r_of_e(double e) const;
};

struct SteadyOptions {
  int nodes = 400;
  double rmax_factor = 2.5;
  int levels = 2000;
  double far_tol = 1e-8;  // |phi(inf)| <= far_tol |e_Q|
  double r_budget = 1e4;
  double p = 2.0;
  bool require_decreasing = true;
};

struct SteadyState {
  CutoffProfile profile;
  ShootingSolution shoot;
  RadialPotential phi_Q;
  RadialDensity rho_Q;
  PhaseDensity Q;
  DecreasingProfile Q_star;
  std::vector<double> levels;        // eps_0 = e_Q > eps_1 > ...
  std::vector<double> level_values;  // value on [eps_{j+1}, eps_j)
  double R_Q = 0.0;                  // radius where the discrete phi_Q reaches e_Q
  double L0 = 0.0, mass = 0.0, l1 = 0.0, lp = 0.0, p = 2.0, linf = 0.0;
  double kinetic = 0.0, potential = 0.0, H = 0.0;
  double poisson_residual = 0.0;
  int shooting_iterations = 0;
  int newton_iterations = 0;

  double F_h(double e) const;  // step model of F actually used
};

SteadyState build_steady_state(const CutoffProfile& F, double phi_center, const SteadyOptions& opt = {});

struct FixedPointReport {
  double l1_rel = 0.0;          // ||Q - Q^{*phi_Q}||_1 / ||Q||_1
  double profile_dev = 0.0;     // max |F - Q* o a| / ||Q||_inf on an energy grid
  double profile_dev_h = 0.0;   // same against the step model F_h
  double L0_vs_a = 0.0;         // |L0 - a(e_Q)| / L0
};
FixedPointReport fixed_point_check(const SteadyState& st, int n_energies = 400);

struct DensityIdentityReport {
  double identity_residual = 0.0;  // analytic: velocity quadrature vs |F'| u^3 form
  double state_residual = 0.0;     // discrete rho_Q vs analytic identity
  double outside_max = 0.0;        // largest |rho| at nodes beyond R_Q
};
DensityIdentityReport density_identity_check(const SteadyState& st);

double microscopic_energy(const SteadyState& st, double r, double w);
double evaluate_Q(const SteadyState& st, double r, double w);

}  // namespace rvp
