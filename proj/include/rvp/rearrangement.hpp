#pragma once
#include <functional>
#include <vector>

#include "rvp/radial_core.hpp"

namespace rvp {

// Isotropic phase-space density on the lumped node x speed measure space.
// At node i the density is a step function of w = |v| with segments
// [w_lo, w_hi) and values val; w_lo of the first segment is 0 and segments are
// contiguous. Segment measure: W_i * 4 pi (w_hi^3 - w_lo^3) / 3.
// Values may be signed only for differences of densities.
struct PhaseDensity {
  GridPtr grid;
  std::vector<std::size_t> offsets;  // size()+1 entries
  std::vector<double> w_hi;
  std::vector<double> val;

  static PhaseDensity zero(GridPtr g);
  // Midpoint samples of f(r_i, w) on nw equal speed cells of [0, w_max].
  static PhaseDensity sample(GridPtr g, const std::function<double(double, double)>& f, double w_max, int nw);
  // Build from per-node breakpoint lists; drops empty segments.
  static PhaseDensity from_segments(GridPtr g, const std::vector<std::vector<double>>& w_hi,
                                    const std::vector<std::vector<double>>& vals);

  std::size_t nodes() const { return offsets.size() - 1; }
  double w_lo(std::size_t k, std::size_t i) const { return k == offsets[i] ? 0.0 : w_hi[k - 1]; }
  double segment_measure(std::size_t i, std::size_t k) const;
  double value(std::size_t i, double w) const;

  double l1() const;
  double lp(double p) const;
  double lp_pow(double p) const;
  double linf() const;
  double integral() const;  // signed integral
  double distribution(double s) const;  // meas{f > s}
  double support_measure() const { return distribution(0.0); }
  double kinetic() const;       // int (sqrt(1+w^2)-1) f
  double gamma_moment() const;  // int sqrt(1+w^2) |f|
  double speed_moment() const;  // int |v| |f|
  double ep_norm(double p) const { return l1() + lp(p) + gamma_moment(); }
  std::vector<double> density() const;  // rho_i
  RadialDensity radial_density() const;
  double casimir(const std::function<double(double)>& beta) const;

  PhaseDensity scaled(double c) const;
  PhaseDensity minus(const PhaseDensity& o) const;
  bool nonnegative() const;
};

double distribution_function(const PhaseDensity& f, double s);

// Nonincreasing right-continuous step profile: value v[k] on [s[k], s[k+1]),
// zero beyond s.back(). s[0] = 0; v strictly decreasing and positive.
struct DecreasingProfile {
  std::vector<double> s;
  std::vector<double> v;

  bool empty() const { return v.empty(); }
  double support() const { return s.empty() ? 0.0 : s.back(); }
  double value(double t) const;
  double G(double t) const;  // int_0^t f*
  double distribution(double level) const;  // meas{f* > level}
  double l1() const;
  double lp(double p) const;
  double linf() const { return v.empty() ? 0.0 : v.front(); }
  double casimir(const std::function<double(double)>& beta) const;
};

DecreasingProfile schwarz_rearrange(const PhaseDensity& f);

// a(e) = meas{ sqrt(1+|v|^2) - 1 + phi(x) < e } on the lumped measure space,
// with the exterior region r > r_max handled by quadrature on the analytic tail.
class JacobianTable {
 public:
  explicit JacobianTable(const RadialPotential& phi, int n_table = 1000);

  const RadialPotential& phi() const { return phi_; }
  double e_min() const { return phi_min_; }
  // Exact evaluations.
  double a(double e) const;
  double da(double e) const;
  double A(double e) const;  // int_{-inf}^e a
  // Monotone cubic Hermite interpolant of a on the tabulated grid.
  double a_interp(double e) const;
  // e with a(e) = s, polished against the exact a.
  double inverse(double s) const;
  double sup_value() const;  // lim_{e->0-} a(e); +inf when the tail carries mass
  // Inverses of an ascending list, warm-started from the previous root.
  std::vector<double> inverse_sorted(const std::vector<double>& s) const;
  // Phi(s) = int_0^s a^{-1} = e s - A(e) for an ascending list.
  std::vector<double> Phi_sorted(const std::vector<double>& s) const;

  // Weighted node sums used by derivative formulas: sum_i W_i K(e - phi_i) h_i (+ exterior part).
  double kernel_moment(double e, const std::vector<double>& h) const;

  // Two-Holder decay bound a(e) <= B_q(e) and the resulting lower bound on the inverse.
  double lq_pow(double q) const;
  double decay_bound(double e, double q) const;
  double inverse_lower_bound(double s, double q) const;

  const std::vector<double>& table_e() const { return te_; }
  const std::vector<double>& table_a() const { return ta_; }

 private:
  double tail_integral(double e, int which, double hN = 0.0) const;
  RadialPotential phi_;
  std::vector<double> sphi_, sW_;  // node potentials ascending with weights
  std::vector<std::size_t> sidx_;
  double phi_min_ = 0.0, phiN_ = 0.0, c_ = 0.0;
  std::vector<double> te_, ta_, tda_;
};

JacobianTable compute_jacobian(const RadialPotential& phi, int n_table = 1000);
double invert_jacobian(const JacobianTable& table, double s);

// f^{*phi}(x,v) = f*(a(e(x,v))) materialized on phi's grid.
PhaseDensity energy_rearrange(const DecreasingProfile& profile, const JacobianTable& table);
PhaseDensity energy_rearrange(const DecreasingProfile& profile, const RadialPotential& phi);
// Level energies e_k = a^{-1}(s_k) of a step profile (e_0 = inf phi).
std::vector<double> level_energies(const DecreasingProfile& profile, const JacobianTable& table);

// sup{ e in (e_lo, 0) : comp(e) > s } for a nonincreasing composite; e_lo when empty.
double pseudo_inverse(const std::function<double(double)>& comp, double e_lo, double s);
double pseudo_inverse(const DecreasingProfile& profile, const JacobianTable& table, double s);

struct ChangeOfVariables {
  double s_route, e_route, raw_route;
};
// int alpha(a^{-1}(s)) G(s) ds over [0, S]; G continuous between the given breakpoints.
ChangeOfVariables energy_space_integral(const std::function<double(double)>& alpha,
                                        const std::function<double(double)>& G, const JacobianTable& table,
                                        std::vector<double> s_breaks, int gl_points = 16);

// d/dlambda a_{phi+lambda h}(e) and d/dlambda a^{-1}_{phi+lambda h}(s).
double jacobian_lambda_derivative(const RadialPotential& phi, const std::vector<double>& h, double lambda, double e);
double jacobian_inverse_lambda_derivative(const RadialPotential& phi, const std::vector<double>& h, double lambda,
                                          double s);

}  // namespace rvp
