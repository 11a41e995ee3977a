#pragma once
#include <functional>
#include <vector>

#include "rvp/functionals.hpp"

namespace rvp {

// Quadrature frame on U = {(r,e) : phi_Q(0) < e < e_Q, 0 < r < r(e)} built on the continuous
// shooting solution. e = phi_c + (e_Q - phi_c) sigma^2 and r = r(e)(1 - t^2) with sigma, t on
// Gauss-Legendre nodes, so no node touches u = 0 or r = 0. Index (j,k) -> j*nt + k.
struct AntonovFrame {
  const SteadyState* st = nullptr;
  int ne = 0, nt = 0;
  double phi_c = 0.0, e_Q = 0.0;
  std::vector<double> sigma, wsigma, t, wt;
  std::vector<double> e, re, Fp;          // per energy: e_j, r(e_j), |F'(e_j)|
  std::vector<double> r, u, gam, dphi, d2phi, rho;  // per node
  std::vector<double> w;                  // dr de quadrature weight per node
  std::vector<std::vector<double>> Dt;    // local d/dt stencils on the t nodes

  int edge_skip = 4;    // t nodes flagged at each end of a line (u -> 0 and r -> 0)
  int bottom_skip = 1;  // lowest energy lines flagged: r(e) -> 0 at the bottom of the well

  static AntonovFrame build(const SteadyState& st, int ne = 48, int nt = 64);
  bool interior(int k) const { return k >= edge_skip && k < nt - edge_skip; }
  bool interior(int j, int k) const { return j >= bottom_skip && interior(k); }
  std::size_t size() const { return r.size(); }
  std::size_t idx(int j, int k) const { return static_cast<std::size_t>(j) * nt + k; }
  // int G dx dv with dx dv = 16 pi^2 r^2 u sqrt(1+u^2) dr de
  double integrate(const std::vector<double>& G) const;
};

// Tf = d_r f / (r^2 u sqrt(1+u^2)), differentiated along each energy line with local stencils.
// Precision degrades like 1/(t u) toward the turning point; see AntonovFrame::interior.
std::vector<double> operator_T(const AntonovFrame& fr, const std::vector<double>& f);
// Pointwise version for a callable, by Richardson-extrapolated centered differences.
double operator_T_at(const SteadyState& st, const std::function<double(double, double)>& f, double r, double e);
// Closed forms for g = r^3 u^3.
double Tg_closed(const SteadyState& st, double r, double e);
double T2g_closed(const SteadyState& st, double r, double e);

struct AntonovFunction {
  std::vector<double> f;       // on the frame nodes
  std::vector<double> Pi;      // per energy
  std::vector<double> hmPi;    // h - Pi h on the nodes
  double boundary_max = 0.0;   // max_e |f(r(e), e)| / int |integrand|
  double Tf_dev = 0.0;         // max |T f - (h - Pi h)| / max |h - Pi h| on interior nodes, when checked
};
// f(r,e) = int_0^r (h - Pi h(e)) u (1+e-phi_Q) tau^2 dtau, accumulated from the nearer end of [0, r(e)].
AntonovFunction antonov_f(const AntonovFrame& fr, const RadialTestFunction& h, bool check_T = false);

struct HardyReport {
  double I = 0.0;          // int |F'| (h - Pi h)^2
  double P = 0.0;          // 3 int rho_Q |F'| f^2 / (r^4 u^4 sqrt(1+u^2))
  double X = 0.0;          // 3 int phi'/(r(1+u^2)) |F'| f^2 / (r^4 u^4 sqrt(1+u^2))
  double lower = 0.0;      // P + X
  double upper = 0.0;      // ||grad h|| sqrt(P)
  double grad_sq = 0.0;    // ||grad h||^2 of the continuous h
  double lower_slack = 0.0, upper_slack = 0.0, chain_slack = 0.0;
  double boundary_residual = 0.0;  // int |F'| T(f^2 Tg/g)
  double boundary_abs = 0.0;       // same with |integrand|
  double f_boundary = 0.0;         // max_e |f(r(e),e)| relative
  double scale = 0.0;              // ||grad h||^2
};
HardyReport hardy_control_check(const AntonovFrame& fr, const RadialTestFunction& h);
double continuous_grad_sq(const RadialTestFunction& h);

struct CoercivityReport {
  int dimension = 0;
  double lambda_min = 0.0;
  std::vector<double> coefficients;  // achieving combination of the basis
  double C0 = 0.0;                   // estimated coercivity constant (lambda_min)
  double gram_condition = 0.0;
  std::vector<std::pair<int, double>> trace;  // (dimension, lambda_min) under refinement
};
CoercivityReport assemble_and_minimize(const SteadyState& st, const std::vector<RadialTestFunction>& basis,
                                       const HessianData* hd = nullptr);
// n C^1 bumps on [0, r_hi]: three quarters at the fine spacing, the rest twice as wide.
std::vector<RadialTestFunction> bump_basis(const GridPtr& g, int n, double r_lo, double r_hi);
// lambda_min for n0, 2 n0, ... ; report of the finest with the trace filled.
CoercivityReport refinement_trace(const SteadyState& st, int n0, int doublings, double r_hi);

// phi^# = -(-phi)^*: radial, |phi^#| nonincreasing, equimeasurable with phi.
// Level radii are refined until the interpolant's sublevel volumes match to vol_tol.
RadialPotential symmetrize_potential(const RadialPotential& phi, double vol_tol = 1e-6);
// a_phi(e) by Gauss-Legendre over the continuous interpolant (elements split at phi = e).
double jacobian_continuous(const RadialPotential& phi, double e, int gl = 20);

struct TaylorRow {
  double eps = 0.0;
  double R = 0.0;      // |J(phi+eps h) - J(phi) - eps^2 D2J / 2| / eps^2
  double R_raw = 0.0;  // the same without the eps^2 normalization
  double dJ = 0.0;     // |J(phi + eps h) - J(phi)|
  bool admissible = true;
};
std::vector<TaylorRow> taylor_remainder_scan(const SteadyState& st, const HessianData& hd, const RadialTestFunction& h,
                                             const std::vector<double>& eps);

}  // namespace rvp
