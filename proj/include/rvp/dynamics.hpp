#pragma once
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "rvp/functionals.hpp"

namespace rvp {

// Each particle moves in its own orbital plane; (x, y, px, py) are Cartesian coordinates in that
// plane. r = |x|, p_r = x.p / r and L = x py - y px are derived. The planar form has no centrifugal
// singularity at r -> 0 and the midpoint rules conserve L exactly (it is a quadratic invariant).
struct ParticleEnsemble {
  std::vector<double> x, y, px, py, m;
  std::uint64_t seed = 0;

  std::size_t size() const { return m.size(); }
  double r(std::size_t i) const;
  double p_r(std::size_t i) const;
  double L(std::size_t i) const;
  double speed(std::size_t i) const;  // |v|
  double gamma(std::size_t i) const;  // sqrt(1 + |v|^2)
  double mass() const;                // pairwise sum of the weights
  double kinetic() const;             // sum m (gamma - 1)
  void push_back(double r, double p_r, double L, double weight);
};

// Quadratic B-splines in the (smooth) node index of a geometric grid. Used as the deposit and
// gather shape functions of the self-consistent field, so the force is continuous in r and the
// semi-discrete particle system is Hamiltonian. Weights of indices outside [0, n) fold onto the ends.
struct SplineMap {
  GridPtr grid;
  int n = 0;
  double r_max = 0.0, stretch = 0.0;
  double c = 0.0, a = 0.0;  // xi = a log1p(c r) - 1
  static SplineMap geometric(int n, double r_max, double stretch = 2.0);
  double xi(double r) const;  // fractional node index; xi(r_i) = i
  // Three (index, weight, d weight / dr) triples; indices may repeat after folding.
  void weights(double r, std::size_t idx[3], double w[3], double dw[3]) const;
};

// Spherically symmetric external or self-consistent field.
class Field {
 public:
  static Field zero();
  static Field potential(const RadialPotential& phi);    // finite-element interpolant (kept by value)
  static Field shooting(const ShootingSolution& s);      // continuous steady solution (referenced)
  static Field spline(const SplineMap& map, std::vector<double> nodal);  // sum_i phi_i S_i(r)
  double phi(double r) const;
  double dphi(double r) const;

 private:
  int kind_ = 0;
  std::optional<RadialPotential> pot_;
  const ShootingSolution* shoot_ = nullptr;
  const SplineMap* map_ = nullptr;
  std::vector<double> nodal_;
};

// dr/dt = p_r / gamma, dp_r/dt = L^2 / (r^3 gamma) - phi'(r), gamma = sqrt(1 + p_r^2 + L^2/r^2).
std::pair<double, double> radial_rhs(double r, double p_r, double L, double dphi);

// In planar Cartesian coordinates H = sqrt(1+|p|^2) - 1 + phi(|x|) is separable, so kick-drift-kick
// leapfrog is explicit, symplectic and symmetric. The midpoint rules are kept for comparison.
enum class Integrator { Leapfrog, ImplicitMidpoint, Midpoint4, RK4 };
enum class FieldMode { SelfConsistent, Frozen, None };

struct SimConfig {
  double dt = 0.05;
  double horizon = 10.0;
  std::size_t N = 10000;
  int field_cadence = 1;  // re-solve the field every k steps; frozen in between
  int sim_nodes = 160;    // Poisson grid for the self-consistent field
  double sim_rmax_factor = 1.6;  // x R_Q
  int diag_nodes = 16;    // coarse (r, w) deposit grid for norms and distances: noise ~ sqrt(cells / N)
  int diag_w_cells = 8;
  double diag_rmax_factor = 1.05;
  double w_cap_factor = 1.3;  // x the largest speed in the initial state
  Integrator integrator = Integrator::Leapfrog;
  FieldMode field_mode = FieldMode::SelfConsistent;
  int record_every = 20;
  double kinetic_growth_limit = 10.0;  // flag when kinetic energy exceeds this multiple of its start
  double p = 2.0;
  std::uint64_t seed = 1;
  int max_field_iterations = 12;
  double midpoint_tol = 1e-12;
};

// (r, w) deposit grid used for every phase-space norm of a particle state.
struct DiagGrid {
  GridPtr grid;
  double w_cap = 1.0;
  int nw = 16;
};
DiagGrid make_diag_grid(const SteadyState& st, const SimConfig& cfg);
// Hat weights in r, cell indicator in w; value = deposited mass / cell measure.
PhaseDensity deposit_phase(const ParticleEnsemble& ens, const DiagGrid& dg);
// The same averaging applied to a continuous density f(r, w).
PhaseDensity project_phase(const std::function<double(double, double)>& f, const DiagGrid& dg);
// Nodal mass sum_p m_p psi_i(r_p) on a radial grid.
std::vector<double> deposit_mass(const ParticleEnsemble& ens, const RadialGrid& g);
// Nodal mass sum_p m_p S_i(r_p) with the spline shape functions.
std::vector<double> deposit_mass(const ParticleEnsemble& ens, const SplineMap& map);
SplineMap make_sim_map(const SteadyState& st, const SimConfig& cfg);

// Stratified sampling: systematic over (node, speed segment) cells by mass, r from psi_i r^2 and
// w from w^2 inside the cell, isotropic direction. Equal weights ||f||_1 / N.
ParticleEnsemble sample_from(const PhaseDensity& f, std::size_t N, std::uint64_t seed);
// Sampling of the continuous steady state F(e(r, w)) on the shooting potential; r by stratified
// quantiles of the enclosed mass, w by rejection against F at w = 0.
ParticleEnsemble sample_steady(const SteadyState& st, std::size_t N, std::uint64_t seed);

// One step in a fixed field. Throws IntegrationBlowup naming the particle on a non-finite state.
void step(ParticleEnsemble& ens, const Field& field, double dt, Integrator integ = Integrator::Leapfrog,
          double tol = 1e-14);

double dynamical_time(const SteadyState& st);  // sqrt(4 pi R_Q^3 / M)
// t_dyn / 2000 for characteristics in a fixed field, t_dyn / 50 for self-consistent runs.
double default_dt(const SteadyState& st, FieldMode mode);

// Time stepping with the field re-solved from the particles (or frozen / absent).
class Simulation {
 public:
  // The map must outlive the simulation.
  Simulation(ParticleEnsemble ens, const SimConfig& cfg, const SplineMap& map, std::optional<Field> frozen = {});
  void advance();  // one step of cfg.dt
  double time() const { return t_; }
  const ParticleEnsemble& ensemble() const { return ens_; }
  // H = sum m (gamma - 1) + (1/2) sum_i M_i phi_i in the self-consistent mode, sum m e otherwise.
  double hamiltonian() const;
  std::vector<double> self_field() const;  // nodal phi solving K phi = -M
  int last_iterations() const { return iters_; }

 private:
  void leapfrog_substep(double h);
  void midpoint_substep(double h);
  void rk4_substep(double h);
  ParticleEnsemble ens_;
  SimConfig cfg_;
  const SplineMap* map_;
  std::optional<Field> frozen_;
  double t_ = 0.0;
  int step_count_ = 0;
  std::optional<Field> held_;  // field held between re-solves when cadence > 1
  int iters_ = 0;
  std::optional<Field> cached_;  // self-consistent field at the current positions
};

struct StabilityTrace {
  std::vector<double> t, H, mass, l1, lp, kinetic, distance;
  double H0 = 0.0;
  double max_rel_H_drift = 0.0;  // max |H(t) - H(0)| / |H(0)|
  double max_mass_dev = 0.0;     // max |M(t) - M(0)|
  bool kinetic_flag = false;     // kinetic energy crossed the growth limit
  double kinetic_flag_time = -1.0;
};

// Evolve to cfg.horizon. When ref is given, distance = ||D(f_N) - ref||_{E_p} / ||ref||_{E_p}.
StabilityTrace evolve(const ParticleEnsemble& ens, const SimConfig& cfg, const SplineMap& map,
                      const DiagGrid* dg = nullptr, const PhaseDensity* ref = nullptr,
                      std::optional<Field> frozen = {});

struct StabilityReport {
  double delta = 0.0;
  double amplitude = 0.0;     // multiplier of chi giving ||f0 - Q||_{E_p} = delta ||Q||_{E_p}
  double sup_distance = 0.0;  // sup_t ||f(t) - Q(t)||_{E_p} / ||Q||_{E_p}, common random numbers
  double ratio = 0.0;         // sup_distance / delta
  double noise_floor = 0.0;   // sup_t ||D(Q_N(t)) - P(Q)||_{E_p} / ||P(Q)||_{E_p}
  bool outside_window = false;
  std::vector<double> t, distance;
};
// f0 = Q (1 + amplitude chi(r)). The perturbed ensemble reuses the reference particles with
// reweighted masses, so both runs share their sampling noise.
StabilityReport stability_experiment(const SteadyState& st, double delta, const SimConfig& cfg,
                                     const std::function<double(double)>& chi = {});

struct LadderReport {
  std::vector<StabilityReport> runs;
  bool nondecreasing = false;
  double C = 0.0;  // max ratio over the ladder
};
LadderReport stability_ladder(const SteadyState& st, const std::vector<double>& deltas, const SimConfig& cfg);

// Control run with a profile that increases somewhere: Q reweighted by 1 + amp sin(3 pi s(e)).
// Reports the sup relative distance to the initial deposit; no bound is claimed.
struct ControlReport {
  double sup_distance = 0.0;
  bool profile_monotone = true;
};
ControlReport nonmonotone_control(const SteadyState& st, const SimConfig& cfg, double amp = 0.9);

}  // namespace rvp
