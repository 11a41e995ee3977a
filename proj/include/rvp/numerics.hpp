#pragma once
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

// Small numerical building blocks shared by every module.
namespace rvp {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kFourPi = 4.0 * kPi;

// Gauss-Legendre rule on [-1,1]; nodes ascending.
struct GaussRule {
  std::vector<double> x, w;
};
const GaussRule& gauss_legendre(int n);

// Integrate f over [a,b] with an n-point rule.
template <class F>
double gl_integrate(F&& f, double a, double b, int n = 16) {
  const GaussRule& g = gauss_legendre(n);
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double s = 0.0;
  for (std::size_t k = 0; k < g.x.size(); ++k) s += g.w[k] * f(c + h * g.x[k]);
  return s * h;
}

// Fixed-order pairwise summation; result independent of thread count.
double pairwise_sum(std::span<const double> v);

// Relativistic kinetic kernels. eta is the energy excess above the local potential.
//   U3(eta) = (eta(2+eta))^{3/2}, so (4pi/3) U3 is the velocity-ball volume.
//   Kker(eta) = sqrt(eta(2+eta)) (1+eta) = U3'(eta)/3.
//   Pint(eta) = int_0^eta U3.
double U3(double eta);
double Kker(double eta);
double Pint(double eta);
// Speed at which sqrt(1+w^2)-1 = eta.
double w_of_eta(double eta);
// S(w) = int_0^w t^2 sqrt(1+t^2) dt, Kin(w) = int_0^w t^2 (sqrt(1+t^2)-1) dt.
double Sint(double w);
double Kin(double w);

}  // namespace rvp
