#pragma once
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "rvp/errors.hpp"
#include "rvp/numerics.hpp"

namespace rvp {

// Radial grid with finite elements whose shape functions are linear in 1/r.
// Node i carries the lumped volume W[i] = int psi_i 4 pi r^2 dr over [0, r_max];
// sum(W) equals 4 pi r_max^3 / 3 up to roundoff. psi_0 is 1 on [0, r_0].
struct RadialGrid {
  std::vector<double> r;
  std::vector<double> W;
  double r_max = 0.0;
  // Tridiagonal stiffness of int 4 pi r^2 phi' h' dr, including the exterior
  // harmonic tail 4 pi r_max on the last diagonal entry.
  std::vector<double> kdiag, koff;

  static RadialGrid geometric(int n, double r_max, double stretch = 4.0);
  static RadialGrid from_nodes(std::vector<double> nodes);

  std::size_t size() const { return r.size(); }
  double volume() const;
  // Index j with r[j] <= x < r[j+1]; -1 below r[0]; size()-1 at or beyond r_max.
  int locate(double x) const;
  // Shape-function weight of the right node on element [r[j], r[j+1]] at x.
  double right_weight(int j, double x) const;
};

using GridPtr = std::shared_ptr<const RadialGrid>;
GridPtr make_grid(int n, double r_max, double stretch = 4.0);

struct RadialDensity {
  GridPtr grid;
  std::vector<double> values;
  double total_mass = 0.0;  // sum W_i rho_i

  RadialDensity() = default;
  RadialDensity(GridPtr g, std::vector<double> v);
};

// phi <= 0 on the grid, phi(r) = -A/(4 pi r) beyond r_max.
class RadialPotential {
 public:
  RadialPotential() = default;
  // Tail mass chosen for continuity at r_max unless given explicitly.
  RadialPotential(GridPtr g, std::vector<double> v);
  RadialPotential(GridPtr g, std::vector<double> v, double tail_mass);

  const GridPtr& grid() const { return grid_; }
  const std::vector<double>& values() const { return v_; }
  double tail_mass() const { return tail_; }
  std::size_t size() const { return v_.size(); }
  double operator[](std::size_t i) const { return v_[i]; }

  double value(double r) const;
  double deriv(double r) const;
  double inf_value() const;  // minimum nodal value (the interpolant attains it)

  // ||grad phi||^2 including the exterior tail energy A^2/(4 pi r_max).
  double grad_l2_sq() const;
  double grad_l2() const;
  // int |phi|^q dx, elementwise Gauss-Legendre plus the analytic tail.
  double lq_norm_q(double q) const;
  double lq_norm(double q) const;
  // Mass enclosed by the element containing r, from Gauss's law (constant per element).
  double enclosed_mass(double r) const;

  struct MinInfo {
    double m;
    double r_argmin;  // +inf when attained only in the limit r -> infinity
  };
  MinInfo m_value() const;

  bool continuous_tail() const;
  RadialPotential scaled(double c) const;
  RadialPotential plus(const std::vector<double>& h, double eps) const;

 private:
  GridPtr grid_;
  std::vector<double> v_;
  double tail_ = 0.0;
};

// K phi = -W rho (lumped load): the exact potential of shells of mass W_i rho_i.
RadialPotential solve_radial_poisson(const RadialDensity& rho);
// Consistent load from a callable density (zero beyond r_max); nodally exact to quadrature.
RadialPotential solve_radial_poisson(const GridPtr& grid, const std::function<double(double)>& rho);
// Solve K phi = -b for a given load vector.
std::vector<double> solve_stiffness(const RadialGrid& g, const std::vector<double>& b);
// y = K x
std::vector<double> apply_stiffness(const RadialGrid& g, const std::vector<double>& x);
double stiffness_form(const RadialGrid& g, const std::vector<double>& x, const std::vector<double>& y);

double gradient_l2_norm(const RadialPotential& phi);

struct ClassReport {
  bool nonpositive = false;
  double lq_norm = 0.0;
  double grad_l2 = 0.0;
  bool finite_norms = false;
  double m = 0.0;
  double m_argmin = 0.0;
  bool m_positive = false;
  // Lower bound min(1,1/R) M_R/(4 pi) from the enclosed-mass argument, best over R.
  double mass_bound = 0.0;
  double mass_bound_radius = 0.0;
  bool mass_bound_holds = true;
  bool in_class = false;
};
ClassReport verify_potential_class(const RadialPotential& phi, double q);

}  // namespace rvp
