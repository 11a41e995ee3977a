#pragma once
// Independent reference computations. None of these call into the library.
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <functional>

namespace oracle {

inline constexpr double pi = 3.14159265358979323846;

// rho = 1 on r < 1: potential with Delta phi = rho, vanishing at infinity.
inline double uniform_ball_phi(double r) { return r < 1.0 ? -(0.5 - r * r / 6.0) : -1.0 / (3.0 * r); }

// Plummer-type density truncated at R.
inline double plummer_rho(double r, double R) { return r <= R ? std::pow(1.0 + r * r, -2.5) : 0.0; }

// Closed form potential of the truncated Plummer density.
inline double plummer_phi_closed(double r, double R) {
  if (r <= R) return -1.0 / (3.0 * std::sqrt(1.0 + r * r)) + std::pow(1.0 + R * R, -1.5) / 3.0;
  double M = R * R * R / (3.0 * std::pow(1.0 + R * R, 1.5));  // int_0^R rho s^2 ds
  return -M / r;
}

// phi(x) = -(1/4pi) int rho(y)/|x-y| dy by direct quadrature over shells and polar angle.
inline double convolution_phi(const std::function<double(double)>& rho, double r, double R) {
  using boost::math::quadrature::gauss_kronrod;
  auto shell = [&](double s) {
    // int_{-1}^{1} 2 pi / sqrt(r^2 + s^2 - 2 r s mu) dmu, integrated numerically
    boost::math::quadrature::tanh_sinh<double> ts;
    double inner = ts.integrate([&](double mu) { return 2.0 * pi / std::sqrt(std::max(r * r + s * s - 2.0 * r * s * mu, 1e-300)); },
                                -1.0, 1.0);
    return rho(s) * s * s * inner;
  };
  double a = gauss_kronrod<double, 61>::integrate(shell, 0.0, std::min(r, R), 12, 1e-13);
  double b = r < R ? gauss_kronrod<double, 61>::integrate(shell, r, R, 12, 1e-13) : 0.0;
  return -(a + b) / (4.0 * pi);
}

// Phase-space volume of {sqrt(1+|v|^2) - 1 + phi(|x|) < e}: integrate 4 pi r^2 times the
// velocity-ball volume over the radial sublevel set, adaptively.
inline double sublevel_volume(const std::function<double(double)>& phi, double e, double r_hi) {
  using boost::math::quadrature::gauss_kronrod;
  auto f = [&](double r) {
    double y = 1.0 + e - phi(r);
    if (y <= 1.0) return 0.0;
    double w = std::sqrt(y * y - 1.0);
    return 4.0 * pi * r * r * (4.0 * pi / 3.0) * w * w * w;
  };
  // locate the radius where the integrand switches off by bisection (phi increasing)
  double lo = 0.0, hi = r_hi;
  if (e - phi(hi) > 0.0) hi = r_hi;
  else {
    for (int i = 0; i < 200; ++i) {
      double m = 0.5 * (lo + hi);
      if (e - phi(m) > 0.0) lo = m; else hi = m;
    }
  }
  return gauss_kronrod<double, 61>::integrate(f, 0.0, hi, 20, 1e-14);
}

}  // namespace oracle

namespace oracle {
// Golden polytrope kappa = 1, k = 1, e_Q = -0.1, obtained with an independent
// DOP853 shooting (rtol 1e-12) and adaptive quadrature of the continuous energies.
inline constexpr double golden_phi_center = -0.3564530256328869;
inline constexpr double golden_R = 6.6507250275425775;
inline constexpr double golden_mass = 8.3575475550296;
inline constexpr double golden_H = -0.49223355471331165;
inline constexpr double golden_kinetic = 0.5383300476250505;
}  // namespace oracle
