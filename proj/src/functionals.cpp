#include "rvp/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace rvp {

namespace {

// Phi(s) = int_0^s a^{-1} = e s - A(e) with e = a^{-1}(s); Phi(0) = 0.
// int_lo^hi a^{-1}(s) profile(s) ds, restricted to [lo, hi].
double level_pairing(const DecreasingProfile& prof, const JacobianTable& t, double lo = 0.0,
                     double hi = INFINITY) {
  std::vector<double> cuts;
  cuts.reserve(prof.s.size() + 2);
  for (double x : prof.s) cuts.push_back(std::clamp(x, lo, hi));
  if (cuts.empty()) return 0.0;
  const std::vector<double> Phi = t.Phi_sorted(cuts);
  std::vector<double> parts(prof.v.size());
  for (std::size_t k = 0; k < prof.v.size(); ++k) parts[k] = prof.v[k] * (Phi[k + 1] - Phi[k]);
  return pairwise_sum(parts);
}

void require_potential(const RadialPotential& phi) {
  const double scale = std::max(std::abs(phi.inf_value()), 1e-300);
  for (double v : phi.values())
    if (v > 1e-12 * scale) fail(ErrorKind::InvalidPotential, "potential must be nonpositive");
  if (phi.tail_mass() < 0.0) fail(ErrorKind::InvalidPotential, "negative exterior mass");
}

double signed_gradient_sq(const PhaseDensity& d) {
  const RadialGrid& g = *d.grid;
  std::vector<double> rho = d.density(), b(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) b[i] = g.W[i] * rho[i];
  std::vector<double> x = solve_stiffness(g, b);
  return stiffness_form(g, x, x);
}

}  // namespace

EnergyReport hamiltonian(const PhaseDensity& f, double p) {
  EnergyReport r;
  r.p = p;
  RadialPotential phi = solve_radial_poisson(f.radial_density());
  r.kinetic = f.kinetic();
  r.potential = 0.5 * phi.grad_l2_sq();
  r.hamiltonian = r.kinetic - r.potential;
  r.l1 = f.l1();
  r.lp = f.lp(p);
  r.gamma_moment = f.gamma_moment();
  r.ep_norm = r.l1 + r.lp + r.gamma_moment;
  return r;
}

double energy_pairing(const PhaseDensity& f, const RadialPotential& phi) {
  std::vector<double> rho = f.density(), parts(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) parts[i] = f.grid->W[i] * phi[i] * rho[i];
  return f.kinetic() + pairwise_sum(parts);
}

double casimir(const PhaseDensity& f, const std::function<double(double)>& beta) { return f.casimir(beta); }

PhaseDensity modulate(const PhaseDensity& f, const std::function<double(double, double)>& chi, int nw, double w_cap) {
  std::vector<std::vector<double>> hi(f.nodes()), vals(f.nodes());
  const double dw = w_cap / nw;
  for (std::size_t i = 0; i < f.nodes(); ++i) {
    const double r = f.grid->r[i];
    int cell = 0;
    for (std::size_t k = f.offsets[i]; k < f.offsets[i + 1]; ++k) {
      const double top = f.w_hi[k];
      // cells [c dw, (c+1) dw); the last cell extends to infinity
      while (cell < nw - 1 && (cell + 1) * dw < top) {
        hi[i].push_back((cell + 1) * dw);
        vals[i].push_back(f.val[k] * (1.0 + chi(r, (cell + 0.5) * dw)));
        ++cell;
      }
      hi[i].push_back(top);
      vals[i].push_back(f.val[k] * (1.0 + chi(r, (cell + 0.5) * dw)));
      if (cell < nw - 1 && (cell + 1) * dw == top) ++cell;
    }
  }
  return PhaseDensity::from_segments(f.grid, hi, vals);
}

InterpolationExponents interpolation_exponents(double p) {
  if (!(p > 1.5)) fail(ErrorKind::DomainError, "interpolation requires p > 3/2");
  return {(2.0 * p - 3.0) / (3.0 * (p - 1.0)), p / (3.0 * (p - 1.0))};
}

SubcriticalReport check_subcritical(const PhaseDensity& f, double p, double C_p) {
  const InterpolationExponents ex = interpolation_exponents(p);
  SubcriticalReport r;
  r.p = p;
  r.C_p = C_p;
  const EnergyReport e = hamiltonian(f, p);
  r.smallness = C_p * std::pow(e.l1, ex.a) * std::pow(e.lp, ex.b);
  r.subcritical = r.smallness < 1.0;
  r.potential = e.potential;
  r.interpolation_rhs = r.smallness * e.gamma_moment;
  const double tol = 1e-12 * std::max(1.0, e.gamma_moment);
  r.interpolation_holds = r.potential <= r.interpolation_rhs + tol;
  r.kinetic_lower_bound = (1.0 - r.smallness) * e.gamma_moment - e.l1;
  r.H = e.hamiltonian;
  r.lower_bound_holds = r.H >= r.kinetic_lower_bound - tol;
  return r;
}

std::vector<PhaseDensity> random_density_ensemble(const SteadyState& st, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const GridPtr& g = st.Q.grid;
  std::vector<PhaseDensity> out;
  out.reserve(count);
  for (int n = 0; n < count; ++n) {
    const int kind = n % 3;
    if (kind == 0) {
      out.push_back(st.Q.scaled(0.2 + 1.8 * U(rng)));
    } else if (kind == 1) {
      const double d = 0.9 * U(rng), kr = 1 + 4 * U(rng), kw = 1 + 4 * U(rng), ph = 6.3 * U(rng);
      const double RQ = st.R_Q;
      out.push_back(modulate(st.Q, [=](double r, double w) {
        return d * std::sin(kr * r / RQ * kPi + ph) * std::cos(kw * w * 3.0);
      }, 8, 1.0));
    } else {
      const double R = (0.1 + 0.9 * U(rng)) * st.R_Q, wmax = 0.05 + 1.5 * U(rng), amp = 0.05 + U(rng);
      std::vector<double> cells(6);
      for (double& c : cells) c = amp * U(rng);
      out.push_back(PhaseDensity::sample(g, [&](double r, double w) {
        if (r > R) return 0.0;
        return cells[std::min<std::size_t>(5, static_cast<std::size_t>(6 * w / wmax))];
      }, wmax, 6));
    }
  }
  return out;
}

double calibrate_interpolation_constant(const std::vector<PhaseDensity>& ensemble, double p) {
  const InterpolationExponents ex = interpolation_exponents(p);
  double best = 0.0;
  for (const PhaseDensity& f : ensemble) {
    if (f.l1() <= 0.0) continue;
    const EnergyReport e = hamiltonian(f, p);
    best = std::max(best, e.potential / (std::pow(e.l1, ex.a) * std::pow(e.lp, ex.b) * e.gamma_moment));
  }
  return 1.5 * best;
}

double difference_ratio(const PhaseDensity& f, const PhaseDensity& g, double p) {
  const InterpolationExponents ex = interpolation_exponents(p);
  const PhaseDensity d = f.minus(g);
  const double l1 = d.l1();
  if (l1 <= 0.0) return 0.0;
  const double den = std::pow(l1, 0.5 * ex.a) * std::pow(d.lp(p), 0.5 * ex.b) * std::sqrt(d.speed_moment());
  return std::sqrt(signed_gradient_sq(d)) / den;
}

double calibrate_difference_constant(const std::vector<PhaseDensity>& ensemble, double p) {
  double best = 0.0;
  for (std::size_t k = 0; k + 1 < ensemble.size(); ++k) {
    best = std::max(best, difference_ratio(ensemble[k], ensemble[k + 1], p));
    best = std::max(best, difference_ratio(ensemble[k], PhaseDensity::zero(ensemble[k].grid), p));
  }
  return 1.5 * best;
}

KineticControlReport kinetic_control(const PhaseDensity& f, const RadialPotential& phi, double p, double K) {
  const InterpolationExponents ex = interpolation_exponents(p);
  require_potential(phi);
  KineticControlReport r;
  const PhaseDensity fs = energy_rearrange(schwarz_rearrange(f), phi);
  const double l1 = f.l1(), grad = std::sqrt(stiffness_form(*phi.grid(), phi.values(), phi.values()));
  r.X = fs.speed_moment();
  r.coefficient = K * grad * std::pow(l1, 0.5 * ex.a) * std::pow(f.lp(p), 0.5 * ex.b);
  r.quadratic = r.X - r.coefficient * std::sqrt(r.X) - l1;
  const RadialPotential phis = solve_radial_poisson(fs.radial_density());
  r.cauchy_schwarz = r.X - grad * phis.grad_l2() - l1;
  const double root = 0.5 * (r.coefficient + std::sqrt(r.coefficient * r.coefficient + 4.0 * l1));
  r.bound = root * root;
  return r;
}

// ------------------------------------------------------------ test functions

RadialTestFunction RadialTestFunction::zero(GridPtr g) {
  RadialTestFunction h;
  h.values.assign(g->size(), 0.0);
  h.grid = std::move(g);
  return h;
}

RadialTestFunction RadialTestFunction::from_callable(GridPtr g, std::function<std::pair<double, double>(double)> f) {
  RadialTestFunction h;
  h.values.resize(g->size());
  for (std::size_t i = 0; i < g->size(); ++i) h.values[i] = f(g->r[i]).first;
  h.analytic = std::move(f);
  h.grid = std::move(g);
  return h;
}

RadialTestFunction RadialTestFunction::bump(GridPtr g, double c, double w, double amp) {
  return from_callable(std::move(g), [=](double r) -> std::pair<double, double> {
    const double t = (r - c) / w;
    if (std::abs(t) >= 1.0) return {0.0, 0.0};
    const double q = 1.0 - t * t;
    return {amp * q * q, -4.0 * amp * q * t / w};
  });
}

RadialTestFunction RadialTestFunction::gaussian(GridPtr g, double c, double w, double amp) {
  return from_callable(std::move(g), [=](double r) -> std::pair<double, double> {
    const double t = (r - c) / w, v = amp * std::exp(-t * t);
    return {v, -2.0 * t / w * v};
  });
}

double RadialTestFunction::value(double r) const {
  if (analytic) return analytic(r).first;
  const RadialGrid& g = *grid;
  if (r < g.r.front()) return values.front();
  if (r >= g.r_max) return values.back() * g.r_max / r;
  const int j = g.locate(r);
  return values[j] + g.right_weight(j, r) * (values[j + 1] - values[j]);
}

double RadialTestFunction::deriv(double r) const {
  if (analytic) return analytic(r).second;
  const RadialGrid& g = *grid;
  if (r < g.r.front()) return 0.0;
  if (r >= g.r_max) return -values.back() * g.r_max / (r * r);
  const int j = g.locate(r);
  const double a = g.r[j], b = g.r[j + 1];
  return (values[j + 1] - values[j]) * a * b / ((b - a) * r * r);
}

double RadialTestFunction::grad_l2_sq() const { return stiffness_form(*grid, values, values); }

double RadialTestFunction::sup_norm() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

RadialTestFunction RadialTestFunction::scaled(double c) const {
  RadialTestFunction h;
  h.grid = grid;
  h.values = values;
  for (double& v : h.values) v *= c;
  if (analytic) {
    auto a = analytic;
    h.analytic = [a, c](double r) {
      auto [v, d] = a(r);
      return std::pair<double, double>{c * v, c * d};
    };
  }
  return h;
}

RadialTestFunction RadialTestFunction::plus(const RadialTestFunction& o, double c) const {
  RadialTestFunction h;
  h.grid = grid;
  h.values = values;
  for (std::size_t i = 0; i < values.size(); ++i) h.values[i] += c * o.values[i];
  if (analytic && o.analytic) {
    auto a = analytic, b = o.analytic;
    h.analytic = [a, b, c](double r) {
      auto [v1, d1] = a(r);
      auto [v2, d2] = b(r);
      return std::pair<double, double>{v1 + c * v2, d1 + c * d2};
    };
  }
  return h;
}

// ------------------------------------------------------------ J and derivatives

JValue functional_J(const RadialPotential& phi, const DecreasingProfile& Qstar, bool raw_route) {
  require_potential(phi);
  JacobianTable t(phi, 64);
  JValue j;
  j.J0 = level_pairing(Qstar, t);
  j.gradient = 0.5 * phi.grad_l2_sq();
  j.J = j.J0 + j.gradient;
  if (raw_route) j.J0_raw = energy_pairing(energy_rearrange(Qstar, t), phi);
  return j;
}

JValue functional_J(const RadialPotential& phi, const SteadyState& st, bool raw_route) {
  return functional_J(phi, st.Q_star, raw_route);
}

double first_variation_residual(const SteadyState& st, const RadialTestFunction& h) {
  const PhaseDensity Qp = energy_rearrange(st.Q_star, JacobianTable(st.phi_Q, 64));
  const std::vector<double> rho = Qp.density();
  const RadialGrid& g = *st.phi_Q.grid();
  std::vector<double> parts(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) parts[i] = g.W[i] * rho[i] * h.values[i];
  return pairwise_sum(parts) + stiffness_form(g, st.phi_Q.values(), h.values);
}

std::vector<double> projector_Pi(const SteadyState& st, const RadialTestFunction& h, const std::vector<double>& e_grid) {
  JacobianTable t(st.phi_Q, 16);
  std::vector<double> out;
  out.reserve(e_grid.size());
  for (double e : e_grid) {
    if (!(e > t.e_min() && e < 0.0)) fail(ErrorKind::DomainError, "projector energy outside (inf phi_Q, 0)");
    out.push_back(t.kernel_moment(e, h.values) / (t.da(e) / kFourPi));
  }
  return out;
}

HessianData::HessianData(const SteadyState& st) : st_(&st) {
  const RadialPotential& phi = st.phi_Q;
  const RadialGrid& g = *phi.grid();
  JacobianTable t(phi, 64);
  std::vector<double> lev = level_energies(st.Q_star, t);
  const auto& v = st.Q_star.v;
  const std::size_t K = v.size();
  const double edge = phi.tail_mass() > 0.0 ? -phi.tail_mass() / (kFourPi * g.r_max) : 0.0;
  if (K && lev.back() >= edge) fail(ErrorKind::PreconditionError, "steady support reaches the exterior tail");
  start_.push_back(0);
  for (std::size_t k = 1; k <= K; ++k) {
    const double J = v[k - 1] - (k < K ? v[k] : 0.0);
    e_.push_back(lev[k]);
    jump_.push_back(J);
    double S = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!(phi[i] < lev[k])) continue;
      const double m = J * g.W[i] * kFourPi * Kker(lev[k] - phi[i]);
      node_.push_back(i);
      M_.push_back(m);
      S += m;
    }
    S_.push_back(S);
    start_.push_back(node_.size());
  }
}

double HessianData::Pi_at_level(std::size_t k, const std::vector<double>& h) const {
  double s = 0.0;
  for (std::size_t q = start_[k]; q < start_[k + 1]; ++q) s += M_[q] * h[node_[q]];
  return S_[k] > 0.0 ? s / S_[k] : 0.0;
}

double HessianData::I(const std::vector<double>& h, const std::vector<double>& g) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < e_.size(); ++k) {
    if (!(S_[k] > 0.0)) continue;
    double hh = 0.0, sh = 0.0, sg = 0.0;
    for (std::size_t q = start_[k]; q < start_[k + 1]; ++q) {
      const std::size_t i = node_[q];
      hh += M_[q] * h[i] * g[i];
      sh += M_[q] * h[i];
      sg += M_[q] * g[i];
    }
    acc += hh - sh * sg / S_[k];
  }
  return acc;
}

double HessianData::orthogonality(const std::vector<double>& h, const std::function<double(double)>& kappa) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < e_.size(); ++k) {
    const double P = Pi_at_level(k, h);
    double s = 0.0;
    for (std::size_t q = start_[k]; q < start_[k + 1]; ++q) s += M_[q] * (h[node_[q]] - P);
    acc += kappa(e_[k]) * s;
  }
  return acc;
}

std::vector<std::vector<double>> HessianData::I_matrix(const std::vector<std::vector<double>>& basis) const {
  const std::size_t n = basis.size(), N = st_->phi_Q.size();
  std::vector<double> D(N, 0.0);
  for (std::size_t k = 0; k < e_.size(); ++k)
    for (std::size_t q = start_[k]; q < start_[k + 1]; ++q) D[node_[q]] += M_[q];
  std::vector<std::vector<double>> I(n, std::vector<double>(n, 0.0));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a; b < n; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < N; ++i) s += D[i] * basis[a][i] * basis[b][i];
      I[a][b] = s;
    }
  std::vector<double> P(n);
  for (std::size_t k = 0; k < e_.size(); ++k) {
    if (!(S_[k] > 0.0)) continue;
    for (std::size_t a = 0; a < n; ++a) {
      double s = 0.0;
      for (std::size_t q = start_[k]; q < start_[k + 1]; ++q) s += M_[q] * basis[a][node_[q]];
      P[a] = s;
    }
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a; b < n; ++b) I[a][b] -= P[a] * P[b] / S_[k];
  }
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < a; ++b) I[a][b] = I[b][a];
  return I;
}

double second_variation(const HessianData& hd, const SteadyState& st, const RadialTestFunction& h) {
  return stiffness_form(*st.phi_Q.grid(), h.values, h.values) - hd.I(h.values, h.values);
}

double second_variation(const SteadyState& st, const RadialTestFunction& h) {
  return second_variation(HessianData(st), st, h);
}

// ------------------------------------------------------------ gap and inequalities

GapReport stability_gap(const PhaseDensity& f, const SteadyState& st, double q) {
  if (!(f.l1() > 0.0)) fail(ErrorKind::DomainError, "stability gap of the zero density");
  GapReport r;
  const RadialPotential phi_f = solve_radial_poisson(f.radial_density());
  r.H_f = f.kinetic() - 0.5 * phi_f.grad_l2_sq();
  r.H_Q = st.H;
  r.scale = std::abs(st.H);
  const JacobianTable tf(phi_f, 64);
  const DecreasingProfile fs = schwarz_rearrange(f);
  const double half_grad = 0.5 * phi_f.grad_l2_sq();

  const double Qlo = level_pairing(st.Q_star, tf, 0.0, 1.0), Qhi = level_pairing(st.Q_star, tf, 1.0);
  const double flo = level_pairing(fs, tf, 0.0, 1.0), fhi = level_pairing(fs, tf, 1.0);
  r.J_f = Qlo + Qhi + half_grad;
  r.J_Q = functional_J(st.phi_Q, st, false).J;
  r.s_integral_below1 = flo - Qlo;
  r.s_integral_above1 = fhi - Qhi;
  r.s_integral = r.s_integral_below1 + r.s_integral_above1;
  r.lhs = r.H_f - r.H_Q;
  r.rhs = r.J_f - r.J_Q + r.s_integral;
  r.slack = r.lhs - r.rhs;
  r.bathtub = energy_pairing(f, phi_f) - (flo + fhi);
  r.fixed_point_defect = r.H_Q - r.J_Q;

  // |a^{-1}(s)| <= |e_B(s)| on a log grid of [sigma0, 1], with f* + Q* bounding |f* - Q*|.
  const int nb = 80;
  const double sigma0 = 1e-10;
  auto mass = [&](double a, double b) { return fs.G(b) - fs.G(a) + st.Q_star.G(b) - st.Q_star.G(a); };
  double prev = sigma0, eprev = std::abs(tf.inverse_lower_bound(sigma0, q));
  double bound = eprev * sigma0 * (q - 3.0) / (q - 4.0) * (fs.linf() + st.Q_star.linf());
  for (int j = 1; j <= nb; ++j) {
    const double s = sigma0 * std::pow(1.0 / sigma0, static_cast<double>(j) / nb);
    bound += eprev * mass(prev, s);
    prev = s;
    eprev = std::abs(tf.inverse_lower_bound(s, q));
  }
  r.below1_bound = bound;
  return r;
}

RearrangementInequalityReport rearrangement_inequality_check(const PhaseDensity& g, const PhaseDensity& f,
                                                             const RadialPotential& phi) {
  require_potential(phi);
  const DecreasingProfile gs = schwarz_rearrange(g), fs = schwarz_rearrange(f);
  auto check = [&](double t) {
    if (gs.distribution(t) > fs.distribution(t) * (1.0 + 1e-12) + 1e-300)
      fail(ErrorKind::PreconditionError, "distribution of g exceeds that of f");
  };
  check(0.0);
  for (double t : gs.v) check(t);
  for (double t : fs.v) check(t);

  RearrangementInequalityReport r;
  r.value = energy_pairing(g, phi) - level_pairing(fs, JacobianTable(phi, 64));
  const RadialPotential phi_g = solve_radial_poisson(g.radial_density());
  const PhaseDensity fr = energy_rearrange(fs, JacobianTable(phi_g, 64));
  r.H_g = g.kinetic() - 0.5 * phi_g.grad_l2_sq();
  const RadialPotential phi_r = solve_radial_poisson(fr.radial_density());
  r.H_rearranged = fr.kinetic() - 0.5 * phi_r.grad_l2_sq();
  std::vector<double> d(phi_g.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = phi_g[i] - phi_r[i];
  r.gradient_gap = 0.5 * stiffness_form(*phi_g.grid(), d, d);
  return r;
}

}  // namespace rvp
