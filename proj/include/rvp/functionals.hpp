#pragma once
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "rvp/steady_state.hpp"

namespace rvp {

struct EnergyReport {
  double kinetic = 0.0, potential = 0.0, hamiltonian = 0.0;
  double l1 = 0.0, lp = 0.0, p = 2.0, gamma_moment = 0.0, ep_norm = 0.0;
};
EnergyReport hamiltonian(const PhaseDensity& f, double p = 2.0);
// int (sqrt(1+|v|^2) - 1 + phi) f
double energy_pairing(const PhaseDensity& f, const RadialPotential& phi);
double casimir(const PhaseDensity& f, const std::function<double(double)>& beta);

// Multiply f by (1 + chi(r, w)), with chi sampled at cell midpoints of nw equal speed cells on [0, w_cap].
PhaseDensity modulate(const PhaseDensity& f, const std::function<double(double, double)>& chi, int nw, double w_cap);

// Exponents of the interpolation inequality.
struct InterpolationExponents {
  double a, b;  // ||f||_1^a ||f||_p^b
};
InterpolationExponents interpolation_exponents(double p);

struct SubcriticalReport {
  double p = 2.0, C_p = 0.0;
  double smallness = 0.0;  // C_p ||f||_1^a ||f||_p^b
  bool subcritical = true; // smallness < 1
  double potential = 0.0;  // (1/2) ||grad phi_f||^2
  double interpolation_rhs = 0.0;
  bool interpolation_holds = true;
  double kinetic_lower_bound = 0.0;  // (1 - smallness) ||sqrt(1+v^2) f||_1 - ||f||_1
  double H = 0.0;
  bool lower_bound_holds = true;
};
SubcriticalReport check_subcritical(const PhaseDensity& f, double p, double C_p);

// Random ensemble of densities on a grid, used to calibrate the non-explicit constants.
std::vector<PhaseDensity> random_density_ensemble(const SteadyState& st, int count, std::uint64_t seed);
// 1.5 x the largest observed ratio (1/2)||grad phi_f||^2 / (||f||_1^a ||f||_p^b ||sqrt(1+v^2)f||_1).
double calibrate_interpolation_constant(const std::vector<PhaseDensity>& ensemble, double p);
// Difference form: ||grad phi_f - grad phi_g|| <= K ||f-g||_1^{a/2} ||f-g||_p^{b/2} || |v|(f-g) ||_1^{1/2}.
double difference_ratio(const PhaseDensity& f, const PhaseDensity& g, double p);
double calibrate_difference_constant(const std::vector<PhaseDensity>& ensemble, double p);

struct KineticControlReport {
  double X = 0.0;              // || |v| f^{*phi} ||_1
  double coefficient = 0.0;    // K ||grad phi|| ||f||_1^{a/2} ||f||_p^{b/2}
  double quadratic = 0.0;      // X - coefficient sqrt(X) - ||f||_1, expected <= 0
  double cauchy_schwarz = 0.0; // X - ||grad phi|| ||grad phi_{f*}|| - ||f||_1, expected <= 0
  double bound = 0.0;          // explicit root bound on X
};
KineticControlReport kinetic_control(const PhaseDensity& f, const RadialPotential& phi, double p, double K);

// h in the homogeneous radial energy space; beyond r_max it continues as h_N r_N / r.
struct RadialTestFunction {
  GridPtr grid;
  std::vector<double> values;
  std::function<std::pair<double, double>(double)> analytic;  // optional exact (h, h')

  static RadialTestFunction zero(GridPtr g);
  static RadialTestFunction from_callable(GridPtr g, std::function<std::pair<double, double>(double)> f);
  // C^1 bump amp (1 - ((r-c)/w)^2)^2 on |r - c| < w
  static RadialTestFunction bump(GridPtr g, double c, double w, double amp = 1.0);
  // amp exp(-((r-c)/w)^2); smooth, used where derivatives are taken numerically
  static RadialTestFunction gaussian(GridPtr g, double c, double w, double amp = 1.0);

  double value(double r) const;
  double deriv(double r) const;
  double grad_l2_sq() const;
  double grad_l2() const { return std::sqrt(grad_l2_sq()); }
  double sup_norm() const;
  RadialTestFunction scaled(double c) const;
  RadialTestFunction plus(const RadialTestFunction& o, double c = 1.0) const;
};

// J0(phi) = int e Q^{*phi} = -int G(a_phi(e)) de for the profile Q*.
struct JValue {
  double J = 0.0, J0 = 0.0, gradient = 0.0;
  double J0_raw = 0.0;  // int (sqrt(1+|v|^2)-1+phi) Q^{*phi} over the materialized rearrangement
};
JValue functional_J(const RadialPotential& phi, const DecreasingProfile& Qstar, bool raw_route = true);
JValue functional_J(const RadialPotential& phi, const SteadyState& st, bool raw_route = true);

double first_variation_residual(const SteadyState& st, const RadialTestFunction& h);

// Pi h(e) = int K(e - phi_Q) h / int K(e - phi_Q).
std::vector<double> projector_Pi(const SteadyState& st, const RadialTestFunction& h, const std::vector<double>& e_grid);

// Level data of the exact discrete Hessian of J0 at phi_Q.
class HessianData {
 public:
  explicit HessianData(const SteadyState& st);
  // I(h, g) = sum_k jump_k sum_i W_i 4 pi K(e_k - phi_i) (h_i - Pi h(e_k)) (g_i - Pi g(e_k))
  double I(const std::vector<double>& h, const std::vector<double>& g) const;
  double Pi_at_level(std::size_t k, const std::vector<double>& h) const;
  // Weighted orthogonality sum_k jump_k sum_i W_i 4pi K (h_i - Pi h(e_k)) kappa(e_k)
  double orthogonality(const std::vector<double>& h, const std::function<double(double)>& kappa) const;
  const std::vector<double>& level_e() const { return e_; }
  const std::vector<double>& jumps() const { return jump_; }
  // Dense I-matrix for a basis (columns); O(levels * nodes * basis).
  std::vector<std::vector<double>> I_matrix(const std::vector<std::vector<double>>& basis) const;

 private:
  const SteadyState* st_;
  std::vector<double> e_, jump_;
  std::vector<std::size_t> start_;     // CSR over levels
  std::vector<std::size_t> node_;
  std::vector<double> M_;              // jump_k W_i 4 pi K(e_k - phi_i)
  std::vector<double> S_;              // row sums
};

double second_variation(const SteadyState& st, const RadialTestFunction& h);
double second_variation(const HessianData& hd, const SteadyState& st, const RadialTestFunction& h);

struct GapReport {
  double H_f = 0.0, H_Q = 0.0, J_f = 0.0, J_Q = 0.0;
  double lhs = 0.0, rhs = 0.0, slack = 0.0;
  double s_integral = 0.0, s_integral_below1 = 0.0, s_integral_above1 = 0.0;
  double below1_bound = 0.0;  // Holder-type control using the inverse lower bound
  double bathtub = 0.0;       // int e_{phi_f} (f - f^{*phi_f}) >= 0
  double fixed_point_defect = 0.0;  // H(Q) - J(phi_Q)
  double scale = 0.0;         // |H(Q)|
};
GapReport stability_gap(const PhaseDensity& f, const SteadyState& st, double q = 7.0);

struct RearrangementInequalityReport {
  double value = 0.0;            // int (sqrt(1+v^2)-1+phi)(g - f^{*phi})
  double H_g = 0.0, H_rearranged = 0.0;  // H(g) and H(f^{*phi_g})
  double gradient_gap = 0.0;     // (1/2) ||grad phi_g - grad phi_{f^{*phi_g}}||^2
};
RearrangementInequalityReport rearrangement_inequality_check(const PhaseDensity& g, const PhaseDensity& f,
                                                             const RadialPotential& phi);

}  // namespace rvp
