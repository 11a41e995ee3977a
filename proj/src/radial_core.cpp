#include "rvp/radial_core.hpp"

#include <algorithm>
#include <cmath>

namespace rvp {

RadialGrid RadialGrid::from_nodes(std::vector<double> nodes) {
  RadialGrid g;
  if (nodes.size() < 2) fail(ErrorKind::DomainError, "grid needs at least two nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!(nodes[i] > 0.0) || (i > 0 && !(nodes[i] > nodes[i - 1])))
      fail(ErrorKind::DomainError, "grid nodes must be positive and strictly increasing");
  }
  const std::size_t n = nodes.size();
  g.r = std::move(nodes);
  g.r_max = g.r.back();
  g.W.assign(n, 0.0);
  g.kdiag.assign(n, 0.0);
  g.koff.assign(n - 1, 0.0);
  g.W[0] = kFourPi * g.r[0] * g.r[0] * g.r[0] / 3.0;
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const double a = g.r[j], b = g.r[j + 1], d = b - a;
    g.W[j] += kFourPi * a * d * (b + 2.0 * a) / 6.0;
    g.W[j + 1] += kFourPi * b * d * (2.0 * b + a) / 6.0;
    const double k = kFourPi * a * b / d;
    g.kdiag[j] += k;
    g.kdiag[j + 1] += k;
    g.koff[j] = -k;
  }
  g.kdiag[n - 1] += kFourPi * g.r_max;
  return g;
}

RadialGrid RadialGrid::geometric(int n, double r_max, double stretch) {
  if (n < 2 || !(r_max > 0.0)) fail(ErrorKind::DomainError, "invalid grid parameters");
  std::vector<double> nodes(n);
  const double den = std::expm1(stretch);
  for (int i = 0; i < n; ++i) nodes[i] = r_max * std::expm1(stretch * (i + 1) / n) / den;
  nodes.back() = r_max;
  return from_nodes(std::move(nodes));
}

GridPtr make_grid(int n, double r_max, double stretch) {
  return std::make_shared<const RadialGrid>(RadialGrid::geometric(n, r_max, stretch));
}

double RadialGrid::volume() const { return pairwise_sum(W); }

int RadialGrid::locate(double x) const {
  if (x < r.front()) return -1;
  if (x >= r_max) return static_cast<int>(r.size()) - 1;
  auto it = std::upper_bound(r.begin(), r.end(), x);
  return static_cast<int>(it - r.begin()) - 1;
}

double RadialGrid::right_weight(int j, double x) const {
  const double a = r[j], b = r[j + 1];
  return b * (x - a) / (x * (b - a));
}

RadialDensity::RadialDensity(GridPtr g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
  if (values.size() != grid->size()) fail(ErrorKind::DomainError, "density size mismatch");
  double vmax = 0.0;
  for (double x : values) vmax = std::max(vmax, std::abs(x));
  for (double& x : values) {
    if (x < 0.0) {
      if (x < -1e-12 * vmax) fail(ErrorKind::InvalidDensity, "negative density value");
      x = 0.0;
    }
  }
  std::vector<double> m(values.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = grid->W[i] * values[i];
  total_mass = pairwise_sum(m);
}

RadialPotential::RadialPotential(GridPtr g, std::vector<double> v) : grid_(std::move(g)), v_(std::move(v)) {
  if (v_.size() != grid_->size()) fail(ErrorKind::DomainError, "potential size mismatch");
  tail_ = -kFourPi * grid_->r_max * v_.back();
}

RadialPotential::RadialPotential(GridPtr g, std::vector<double> v, double tail_mass)
    : grid_(std::move(g)), v_(std::move(v)), tail_(tail_mass) {
  if (v_.size() != grid_->size()) fail(ErrorKind::DomainError, "potential size mismatch");
}

double RadialPotential::value(double r) const {
  const RadialGrid& g = *grid_;
  if (r < g.r.front()) return v_.front();
  if (r > g.r_max) return -tail_ / (kFourPi * r);
  int j = g.locate(r);
  if (j >= static_cast<int>(g.size()) - 1) return v_.back();
  double t = g.right_weight(j, r);
  return v_[j] + t * (v_[j + 1] - v_[j]);
}

double RadialPotential::deriv(double r) const {
  const RadialGrid& g = *grid_;
  if (r < g.r.front()) return 0.0;
  if (r >= g.r_max) return tail_ / (kFourPi * r * r);
  int j = g.locate(r);
  const double a = g.r[j], b = g.r[j + 1];
  return (v_[j + 1] - v_[j]) * a * b / ((b - a) * r * r);
}

double RadialPotential::enclosed_mass(double r) const {
  const RadialGrid& g = *grid_;
  if (r < g.r.front()) return 0.0;
  if (r >= g.r_max) return tail_;
  int j = g.locate(r);
  const double a = g.r[j], b = g.r[j + 1];
  return kFourPi * (v_[j + 1] - v_[j]) * a * b / (b - a);
}

double RadialPotential::inf_value() const { return *std::min_element(v_.begin(), v_.end()); }

bool RadialPotential::continuous_tail() const {
  return std::abs(tail_ + kFourPi * grid_->r_max * v_.back()) <= 1e-12 * (std::abs(tail_) + 1e-300);
}

double RadialPotential::grad_l2_sq() const {
  const RadialGrid& g = *grid_;
  std::vector<double> parts(g.size());
  for (std::size_t j = 0; j + 1 < g.size(); ++j) {
    double d = v_[j + 1] - v_[j];
    parts[j] = -g.koff[j] * d * d;
  }
  parts.back() = tail_ * tail_ / (kFourPi * g.r_max);
  return pairwise_sum(parts);
}

double RadialPotential::grad_l2() const { return std::sqrt(grad_l2_sq()); }

double gradient_l2_norm(const RadialPotential& phi) { return phi.grad_l2(); }

double RadialPotential::lq_norm_q(double q) const {
  const RadialGrid& g = *grid_;
  std::vector<double> parts(g.size() + 1);
  parts[0] = std::pow(std::abs(v_[0]), q) * kFourPi * std::pow(g.r[0], 3) / 3.0;
  for (std::size_t j = 0; j + 1 < g.size(); ++j) {
    parts[j + 1] = gl_integrate(
        [&](double r) { return std::pow(std::abs(value(r)), q) * kFourPi * r * r; }, g.r[j], g.r[j + 1], 8);
  }
  if (q > 3.0 && tail_ > 0.0)
    parts.back() = kFourPi * std::pow(tail_ / kFourPi, q) * std::pow(g.r_max, 3.0 - q) / (q - 3.0);
  return pairwise_sum(parts);
}

double RadialPotential::lq_norm(double q) const { return std::pow(lq_norm_q(q), 1.0 / q); }

RadialPotential::MinInfo RadialPotential::m_value() const {
  const RadialGrid& g = *grid_;
  auto G = [&](double r) { return (1.0 + r) * std::abs(value(r)); };
  MinInfo best{std::abs(v_[0]), 0.0};
  std::size_t ibest = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double val = G(g.r[i]);
    if (val < best.m) {
      best = {val, g.r[i]};
      ibest = i;
    }
  }
  // Golden-section refinement on the elements adjacent to the best node.
  auto golden = [&](double a, double b) {
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = G(c), fd = G(d);
    for (int it = 0; it < 80 && b - a > 1e-15 * b; ++it) {
      if (fc < fd) {
        b = d; d = c; fd = fc; c = b - gr * (b - a); fc = G(c);
      } else {
        a = c; c = d; fc = fd; d = a + gr * (b - a); fd = G(d);
      }
    }
    double x = 0.5 * (a + b);
    double fx = G(x);
    if (fx < best.m) best = {fx, x};
  };
  if (ibest > 0) golden(g.r[ibest - 1], g.r[ibest]);
  else golden(0.0, g.r[0]);
  if (ibest + 1 < g.size()) golden(g.r[ibest], g.r[ibest + 1]);
  // Exterior: (1+r) A/(4 pi r) decreases to A/(4 pi).
  double lim = tail_ / kFourPi;
  if (lim < best.m) best = {lim, std::numeric_limits<double>::infinity()};
  return best;
}

RadialPotential RadialPotential::scaled(double c) const {
  std::vector<double> v = v_;
  for (double& x : v) x *= c;
  return RadialPotential(grid_, std::move(v), tail_ * c);
}

RadialPotential RadialPotential::plus(const std::vector<double>& h, double eps) const {
  std::vector<double> v = v_;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += eps * h[i];
  return RadialPotential(grid_, std::move(v));
}

std::vector<double> solve_stiffness(const RadialGrid& g, const std::vector<double>& b) {
  // Thomas algorithm for K x = -b; K is symmetric positive definite.
  const std::size_t n = g.size();
  std::vector<double> c(n), d(n), x(n);
  double den = g.kdiag[0];
  c[0] = (n > 1 ? g.koff[0] : 0.0) / den;
  d[0] = -b[0] / den;
  for (std::size_t i = 1; i < n; ++i) {
    den = g.kdiag[i] - g.koff[i - 1] * c[i - 1];
    c[i] = (i + 1 < n ? g.koff[i] : 0.0) / den;
    d[i] = (-b[i] - g.koff[i - 1] * d[i - 1]) / den;
  }
  x[n - 1] = d[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) x[i] = d[i] - c[i] * x[i + 1];
  return x;
}

std::vector<double> apply_stiffness(const RadialGrid& g, const std::vector<double>& x) {
  const std::size_t n = g.size();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = g.kdiag[i] * x[i];
    if (i > 0) s += g.koff[i - 1] * x[i - 1];
    if (i + 1 < n) s += g.koff[i] * x[i + 1];
    y[i] = s;
  }
  return y;
}

double stiffness_form(const RadialGrid& g, const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> Ky = apply_stiffness(g, y);
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = x[i] * Ky[i];
  return pairwise_sum(p);
}

RadialPotential solve_radial_poisson(const RadialDensity& rho) {
  const RadialGrid& g = *rho.grid;
  std::vector<double> b(g.size());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = g.W[i] * rho.values[i];
  return RadialPotential(rho.grid, solve_stiffness(g, b));
}

RadialPotential solve_radial_poisson(const GridPtr& grid, const std::function<double(double)>& rho) {
  const RadialGrid& g = *grid;
  std::vector<double> b(g.size(), 0.0);
  auto check = [](double v) {
    if (v < 0.0) fail(ErrorKind::InvalidDensity, "negative density value");
    return v;
  };
  b[0] = gl_integrate([&](double r) { return check(rho(r)) * kFourPi * r * r; }, 0.0, g.r[0], 16);
  for (std::size_t j = 0; j + 1 < g.size(); ++j) {
    const double a = g.r[j], c = g.r[j + 1];
    b[j] += gl_integrate(
        [&](double r) { return check(rho(r)) * (1.0 - g.right_weight(j, r)) * kFourPi * r * r; }, a, c, 16);
    b[j + 1] += gl_integrate(
        [&](double r) { return check(rho(r)) * g.right_weight(j, r) * kFourPi * r * r; }, a, c, 16);
  }
  return RadialPotential(grid, solve_stiffness(g, b));
}

ClassReport verify_potential_class(const RadialPotential& phi, double q) {
  ClassReport rep;
  rep.nonpositive = phi.tail_mass() >= 0.0;
  for (double v : phi.values()) rep.nonpositive = rep.nonpositive && v <= 0.0;
  rep.lq_norm = phi.lq_norm(q);
  rep.grad_l2 = phi.grad_l2();
  rep.finite_norms = std::isfinite(rep.lq_norm) && std::isfinite(rep.grad_l2);
  auto mi = phi.m_value();
  rep.m = mi.m;
  rep.m_argmin = mi.r_argmin;
  rep.m_positive = rep.m > 0.0;
  const RadialGrid& g = *phi.grid();
  // (|x|+R)|phi(x)| >= M_R/(4 pi) with M_R the mass inside radius R; hence m >= min(1,1/R) M_R/(4 pi).
  auto consider = [&](double R, double M) {
    if (M <= 0.0) return;
    double bnd = std::min(1.0, 1.0 / R) * M / kFourPi;
    if (bnd > rep.mass_bound) {
      rep.mass_bound = bnd;
      rep.mass_bound_radius = R;
    }
  };
  for (std::size_t j = 0; j + 1 < g.size(); ++j) consider(g.r[j], phi.enclosed_mass(0.5 * (g.r[j] + g.r[j + 1])));
  consider(g.r_max, phi.tail_mass());
  rep.mass_bound_holds = rep.m >= rep.mass_bound * (1.0 - 1e-10);
  rep.in_class = rep.nonpositive && rep.finite_norms && rep.m_positive;
  return rep;
}

}  // namespace rvp
