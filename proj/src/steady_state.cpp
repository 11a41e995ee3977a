#include "rvp/steady_state.hpp"

#include <algorithm>
#include <array>
#include <boost/numeric/odeint.hpp>
#include <cmath>

namespace rvp {

// ------------------------------------------------------------ CutoffProfile

CutoffProfile CutoffProfile::polytrope(double kappa, double k, double e_Q) {
  if (!(e_Q < 0.0)) fail(ErrorKind::DomainError, "cutoff energy must be negative");
  if (!(kappa >= 0.0) || !(k > 0.0)) fail(ErrorKind::DomainError, "polytrope needs kappa >= 0, k > 0");
  CutoffProfile p;
  p.family = Family::Polytrope;
  p.kappa = kappa;
  p.k = k;
  p.e_Q = e_Q;
  return p;
}

CutoffProfile CutoffProfile::table(std::vector<double> e, std::vector<double> F, double e_Q) {
  if (!(e_Q < 0.0)) fail(ErrorKind::DomainError, "cutoff energy must be negative");
  if (e.size() != F.size() || e.size() < 2) fail(ErrorKind::DomainError, "profile table needs matching columns");
  for (std::size_t i = 1; i < e.size(); ++i)
    if (!(e[i] > e[i - 1])) fail(ErrorKind::DomainError, "profile table energies must increase");
  if (std::abs(e.back() - e_Q) > 1e-14 * std::abs(e_Q) || F.back() != 0.0)
    fail(ErrorKind::DomainError, "profile table must end at (e_Q, 0) for continuity");
  for (double v : F)
    if (v < 0.0) fail(ErrorKind::DomainError, "profile values must be nonnegative");
  CutoffProfile p;
  p.family = Family::Table;
  p.e_Q = e_Q;
  p.table_e = std::move(e);
  p.table_F = std::move(F);
  return p;
}

double CutoffProfile::F(double e) const {
  if (e >= e_Q) return 0.0;
  if (family == Family::Polytrope) return kappa * std::pow(e_Q - e, k);
  std::size_t j = std::upper_bound(table_e.begin(), table_e.end(), e) - table_e.begin();
  j = std::clamp<std::size_t>(j, 1, table_e.size() - 1);
  double t = (e - table_e[j - 1]) / (table_e[j] - table_e[j - 1]);
  return std::max(0.0, table_F[j - 1] + t * (table_F[j] - table_F[j - 1]));
}

double CutoffProfile::dF(double e) const {
  if (e >= e_Q) return 0.0;
  if (family == Family::Polytrope) return -kappa * k * std::pow(e_Q - e, k - 1.0);
  std::size_t j = std::upper_bound(table_e.begin(), table_e.end(), e) - table_e.begin();
  j = std::clamp<std::size_t>(j, 1, table_e.size() - 1);
  return (table_F[j] - table_F[j - 1]) / (table_e[j] - table_e[j - 1]);
}

bool CutoffProfile::is_zero() const {
  if (family == Family::Polytrope) return kappa == 0.0;
  return std::all_of(table_F.begin(), table_F.end(), [](double v) { return v == 0.0; });
}

bool CutoffProfile::decreasing() const {
  if (family == Family::Polytrope) return kappa > 0.0;
  for (std::size_t i = 1; i < table_F.size(); ++i)
    if (!(table_F[i] < table_F[i - 1])) return false;
  return true;
}

double CutoffProfile::rho_of_phi(double phi) const {
  const double H = e_Q - phi;
  if (H <= 0.0) return 0.0;
  if (family == Family::Polytrope && k == 1.0) {
    // 4 pi kappa int_0^H (H - eta) K(eta) d eta in closed form.
    const double W = w_of_eta(H);
    return kFourPi * kappa * ((1.0 + H) * W * W * W / 3.0 - Sint(W));
  }
  // e = phi + H sigma^2 removes the square-root onset at e = phi.
  auto f = [&](double s) { return F(phi + H * s * s) * Kker(H * s * s) * 2.0 * H * s; };
  if (family == Family::Table) {
    double acc = 0.0, lo = 0.0;
    for (double te : table_e) {
      if (te <= phi) continue;
      double hi = std::sqrt(std::min(1.0, (te - phi) / H));
      acc += gl_integrate(f, lo, hi, 24);
      lo = hi;
    }
    return kFourPi * acc;
  }
  return kFourPi * gl_integrate(f, 0.0, 1.0, 64);
}

double CutoffProfile::rho_identity(double phi) const {
  const double H = e_Q - phi;
  if (H <= 0.0) return 0.0;
  constexpr double c = kFourPi / 3.0;
  if (family == Family::Polytrope && k == 1.0) return c * kappa * Pint(H);
  std::vector<double> br{phi};
  if (family == Family::Table)
    for (double te : table_e)
      if (te > phi && te < e_Q) br.push_back(te);
  br.push_back(e_Q);
  double acc = 0.0;
  for (std::size_t j = 0; j + 1 < br.size(); ++j)
    acc += gl_integrate([&](double e) { return std::abs(dF(e)) * U3(e - phi); }, br[j], br[j + 1], 48);
  return c * acc;
}

// ------------------------------------------------------------ ShootingSolution

namespace {
using State = std::array<double, 2>;  // (phi, m = r^2 phi')

int bracket_index(const std::vector<double>& r, double x) {
  auto it = std::upper_bound(r.begin(), r.end(), x);
  return std::clamp<int>(static_cast<int>(it - r.begin()) - 1, 0, static_cast<int>(r.size()) - 2);
}
}  // namespace

// Quintic Hermite through (phi, phi', phi'') at the samples; phi'' comes from the ODE,
// so the interpolant is C^2 and its second derivative is accurate to O(h^4).
double ShootingSolution::phi_at(double x) const {
  if (x >= R) return -mass / (kFourPi * x) + far_constant;
  if (x <= r.front()) return phi.front() + (phi[1] - phi[0]) * (x * x) / (r[1] * r[1]);
  int j = bracket_index(r, x);
  const double h = r[j + 1] - r[j], t = (x - r[j]) / h, t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
  const double H0 = 1 - 10 * t3 + 15 * t4 - 6 * t5, H1 = t - 6 * t3 + 8 * t4 - 3 * t5,
               H2 = 0.5 * (t2 - 3 * t3 + 3 * t4 - t5), H3 = 10 * t3 - 15 * t4 + 6 * t5,
               H4 = -4 * t3 + 7 * t4 - 3 * t5, H5 = 0.5 * (t3 - 2 * t4 + t5);
  return H0 * phi[j] + H3 * phi[j + 1] + h * (H1 * dphi[j] + H4 * dphi[j + 1]) +
         h * h * (H2 * d2phi[j] + H5 * d2phi[j + 1]);
}

double ShootingSolution::dphi_at(double x) const {
  if (x >= R) return mass / (kFourPi * x * x);
  if (x <= r.front()) return dphi.front() * x / r.front();
  int j = bracket_index(r, x);
  const double h = r[j + 1] - r[j], t = (x - r[j]) / h, t2 = t * t, t3 = t2 * t, t4 = t3 * t;
  const double D0 = -30 * t2 + 60 * t3 - 30 * t4, D1 = 1 - 18 * t2 + 32 * t3 - 15 * t4,
               D2 = 0.5 * (2 * t - 9 * t2 + 12 * t3 - 5 * t4), D4 = -12 * t2 + 28 * t3 - 15 * t4,
               D5 = 0.5 * (3 * t2 - 8 * t3 + 5 * t4);
  return D0 * (phi[j] - phi[j + 1]) / h + D1 * dphi[j] + D4 * dphi[j + 1] + h * (D2 * d2phi[j] + D5 * d2phi[j + 1]);
}

double ShootingSolution::d2phi_at(double x, const CutoffProfile& F) const {
  // From the ODE: phi'' = rho_F(phi) - 2 phi'/r; at the center phi'' = rho_F(phi_c)/3.
  if (x <= 0.0) return F.rho_of_phi(phi_center) / 3.0;
  return F.rho_of_phi(phi_at(x)) - 2.0 * dphi_at(x) / x;
}

double ShootingSolution::r_of_e(double e) const {
  if (e <= phi_center) return 0.0;
  if (e >= phi.back()) return R;
  double lo = 0.0, hi = R;
  for (int it = 0; it < 200 && hi - lo > 1e-16 * R; ++it) {
    double m = 0.5 * (lo + hi);
    if (phi_at(m) < e) lo = m; else hi = m;
  }
  return 0.5 * (lo + hi);
}

namespace {

struct ShotResult {
  bool reached = false;
  double R = 0.0, m = 0.0, a = 0.0;
  std::vector<double> r, phi, dphi, d2phi;
};

ShotResult shoot(const CutoffProfile& F, double phic, double r_budget, bool record) {
  using namespace boost::numeric::odeint;
  ShotResult out;
  const double eQ = F.e_Q;
  auto rhs = [&](const State& y, State& dy, double r) {
    dy[0] = y[1] / (r * r);
    dy[1] = r * r * F.rho_of_phi(y[0]);
  };
  const double rhoc = F.rho_of_phi(phic);
  const double r0 = 1e-4 * std::sqrt((eQ - phic) / std::max(rhoc, 1e-300));
  State y{phic + rhoc * r0 * r0 / 6.0, rhoc * r0 * r0 * r0 / 3.0};
  auto stepper = make_dense_output(1e-14, 1e-12, runge_kutta_dopri5<State>());
  stepper.initialize(y, r0, r0);
  auto push = [&](double r, const State& s) {
    if (!record) return;
    out.r.push_back(r);
    out.phi.push_back(s[0]);
    out.dphi.push_back(s[1] / (r * r));
    out.d2phi.push_back(F.rho_of_phi(s[0]) - 2.0 * s[1] / (r * r * r));
  };
  push(r0, y);
  while (true) {
    auto [t0, t1] = stepper.do_step(rhs);
    State s1 = stepper.current_state();
    if (s1[0] >= eQ) {
      double lo = t0, hi = t1;
      State s;
      for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        double mid = 0.5 * (lo + hi);
        stepper.calc_state(mid, s);
        if (s[0] < eQ) lo = mid; else hi = mid;
      }
      double R = 0.5 * (lo + hi);
      stepper.calc_state(R, s);
      // Dense samples between the last accepted point and R keep the interpolant accurate.
      if (record) {
        for (int q = 1; q < 8; ++q) {
          double rq = t0 + (R - t0) * q / 8.0;
          State sq;
          stepper.calc_state(rq, sq);
          push(rq, sq);
        }
      }
      s[0] = eQ;
      push(R, s);
      out.reached = true;
      out.R = R;
      out.m = s[1];
      out.a = eQ + s[1] / R;
      return out;
    }
    if (record) {
      for (int q = 1; q < 4; ++q) {
        double rq = t0 + (t1 - t0) * q / 4.0;
        State sq;
        stepper.calc_state(rq, sq);
        push(rq, sq);
      }
      push(t1, s1);
    }
    if (t1 > r_budget || !std::isfinite(s1[0])) return out;
  }
}

}  // namespace

// ------------------------------------------------------------ build

double SteadyState::F_h(double e) const {
  // levels descend: j with eps_j > e >= eps_{j+1}
  std::size_t cnt = std::partition_point(levels.begin(), levels.end(), [&](double x) { return x > e; }) - levels.begin();
  if (cnt == 0) return 0.0;
  return level_values[std::min(cnt - 1, level_values.size() - 1)];
}

namespace {

// rho_h(phi) = sum_j Fbar_j (4 pi/3) [U3(eps_j - phi) - U3(eps_{j+1} - phi)] and its phi-derivative.
void step_density(const std::vector<double>& lv, const std::vector<double>& vals, double phi, double& rho,
                  double& drho) {
  constexpr double c = kFourPi / 3.0;
  rho = 0.0;
  drho = 0.0;
  for (std::size_t j = 0; j < vals.size(); ++j) {
    if (lv[j] <= phi) break;
    rho += vals[j] * c * (U3(lv[j] - phi) - U3(lv[j + 1] - phi));
    drho -= vals[j] * kFourPi * (Kker(lv[j] - phi) - Kker(lv[j + 1] - phi));
  }
}

}  // namespace

SteadyState build_steady_state(const CutoffProfile& F, double phi_center, const SteadyOptions& opt) {
  if (F.is_zero()) fail(ErrorKind::EmptySupport, "profile F vanishes identically");
  if (!(phi_center < F.e_Q)) fail(ErrorKind::DomainError, "central potential must lie below e_Q");
  if (opt.require_decreasing && !F.decreasing())
    fail(ErrorKind::PreconditionError, "profile F must be strictly decreasing below e_Q");
  const double eQ = F.e_Q;
  SteadyState st;
  st.profile = F;
  st.p = opt.p;

  // Bracket the central depth: a(phic) < 0 for shallow wells, > 0 for deep ones.
  auto far = [&](double pc) {
    ShotResult s = shoot(F, pc, opt.r_budget, false);
    if (!s.reached) fail(ErrorKind::SupportOverflow, "density support exceeds the radial budget");
    return s.a;
  };
  double x0 = phi_center, a0 = far(x0);
  double x1 = x0, a1 = a0;
  int iters = 1;
  const double grow = 1.25;
  while (a0 * a1 > 0.0) {
    if (++iters > 80) fail(ErrorKind::NoSelfConsistentState, "no sign change of the far-field constant");
    x0 = x1;
    a0 = a1;
    x1 = a1 < 0.0 ? eQ + (x1 - eQ) * grow : eQ + (x1 - eQ) / grow;
    try {
      a1 = far(x1);
    } catch (const Error&) {
      fail(ErrorKind::NoSelfConsistentState, "shooting bracket left the admissible range");
    }
  }
  // Illinois regula falsi on the far-field constant.
  double lo = x0, flo = a0, hi = x1, fhi = a1, x = x1, fx = a1;
  int side = 0;
  const double tol = opt.far_tol * std::abs(eQ);
  for (int it = 0; it < 200 && std::abs(fx) > tol; ++it, ++iters) {
    x = (lo * fhi - hi * flo) / (fhi - flo);
    fx = far(x);
    if (fx * fhi > 0.0) {
      hi = x;
      fhi = fx;
      if (side == -1) flo *= 0.5;
      side = -1;
    } else {
      lo = x;
      flo = fx;
      if (side == 1) fhi *= 0.5;
      side = 1;
    }
  }
  if (std::abs(fx) > tol) fail(ErrorKind::NoSelfConsistentState, "far-field constant did not converge");
  st.shooting_iterations = iters;
  ShotResult best = shoot(F, x, opt.r_budget, true);
  st.shoot.phi_center = x;
  st.shoot.R = best.R;
  st.shoot.mass = kFourPi * best.m;
  st.shoot.far_constant = best.a;
  st.shoot.r = std::move(best.r);
  st.shoot.phi = std::move(best.phi);
  st.shoot.dphi = std::move(best.dphi);
  st.shoot.d2phi = std::move(best.d2phi);

  // Step model of F on uniform energy levels reaching below the center.
  const double depth = (eQ - x) * 1.05;
  const int L = opt.levels;
  const double d = depth / L;
  st.levels.resize(L + 1);
  st.level_values.resize(L);
  for (int j = 0; j <= L; ++j) st.levels[j] = eQ - j * d;
  for (int j = 0; j < L; ++j) st.level_values[j] = F.F(eQ - (j + 0.5) * d);

  // Newton on K phi + W rho_h(phi) = 0 starting from the shooting solution.
  auto grid = make_grid(opt.nodes, opt.rmax_factor * st.shoot.R);
  const RadialGrid& g = *grid;
  const std::size_t n = g.size();
  std::vector<double> phi(n), rho(n), drho(n), res(n);
  for (std::size_t i = 0; i < n; ++i) phi[i] = st.shoot.phi_at(g.r[i]);
  double scale = 0.0;
  for (int it = 0; it < 60; ++it) {
    for (std::size_t i = 0; i < n; ++i) step_density(st.levels, st.level_values, phi[i], rho[i], drho[i]);
    std::vector<double> Kphi = apply_stiffness(g, phi);
    double rn = 0.0;
    scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      res[i] = Kphi[i] + g.W[i] * rho[i];
      rn = std::max(rn, std::abs(res[i]));
      scale = std::max(scale, g.W[i] * rho[i]);
    }
    st.newton_iterations = it;
    if (rn <= 1e-14 * scale) break;
    // Tridiagonal Jacobian K + diag(W rho'): Thomas sweep.
    std::vector<double> c(n), dd(n), dx(n);
    double den = g.kdiag[0] + g.W[0] * drho[0];
    c[0] = g.koff[0] / den;
    dd[0] = -res[0] / den;
    for (std::size_t i = 1; i < n; ++i) {
      den = g.kdiag[i] + g.W[i] * drho[i] - g.koff[i - 1] * c[i - 1];
      c[i] = (i + 1 < n ? g.koff[i] : 0.0) / den;
      dd[i] = (-res[i] - g.koff[i - 1] * dd[i - 1]) / den;
    }
    dx[n - 1] = dd[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) dx[i] = dd[i] - c[i] * dx[i + 1];
    double step = 0.0, size = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      phi[i] += dx[i];
      step = std::max(step, std::abs(dx[i]));
      size = std::max(size, std::abs(phi[i]));
    }
    if (step <= 1e-12 * size) break;  // roundoff floor of K phi reached
    if (it == 59) fail(ErrorKind::NoSelfConsistentState, "discrete Newton iteration did not converge");
  }
  for (std::size_t i = 0; i < n; ++i) step_density(st.levels, st.level_values, phi[i], rho[i], drho[i]);
  {
    std::vector<double> Kphi = apply_stiffness(g, phi);
    double rn = 0.0, bn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      rn = std::max(rn, std::abs(Kphi[i] + g.W[i] * rho[i]));
      bn = std::max(bn, g.W[i] * rho[i]);
    }
    st.poisson_residual = rn / bn;
  }
  for (std::size_t i = 1; i < n; ++i)
    if (!(phi[i] > phi[i - 1]) && phi[i - 1] < eQ)
      fail(ErrorKind::NoSelfConsistentState, "discrete potential is not increasing inside the support");
  if (phi.back() <= eQ) fail(ErrorKind::SupportOverflow, "support reaches the grid edge");
  if (phi.front() <= st.levels.back()) fail(ErrorKind::NoSelfConsistentState, "energy levels do not cover the well");
  st.phi_Q = RadialPotential(grid, phi);
  st.rho_Q = RadialDensity(grid, rho);

  // Q on the node x speed space: value Fbar_j for energies in [eps_{j+1}, eps_j).
  std::vector<std::vector<double>> whi(n), vals(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (phi[i] >= eQ) continue;
    std::size_t j = 0;
    while (j + 1 <= static_cast<std::size_t>(L) && st.levels[j + 1] > phi[i]) ++j;
    for (std::size_t jj = j + 1; jj-- > 0;) {
      whi[i].push_back(w_of_eta(st.levels[jj] - phi[i]));
      vals[i].push_back(st.level_values[jj]);
    }
  }
  st.Q = PhaseDensity::from_segments(grid, whi, vals);
  st.Q_star = schwarz_rearrange(st.Q);
  st.L0 = st.Q_star.support();
  st.mass = st.rho_Q.total_mass;
  st.l1 = st.Q.l1();
  st.lp = st.Q.lp(opt.p);
  st.linf = st.Q.linf();
  st.kinetic = st.Q.kinetic();
  st.potential = 0.5 * st.phi_Q.grad_l2_sq();
  st.H = st.kinetic - st.potential;
  // Discrete support radius: phi_Q interpolant reaches e_Q.
  {
    std::size_t j = 0;
    while (j + 1 < n && phi[j + 1] < eQ) ++j;
    double a = g.r[j], b = g.r[j + 1];
    // linear in 1/r between nodes
    double t = (eQ - phi[j]) / (phi[j + 1] - phi[j]);
    st.R_Q = 1.0 / (1.0 / a + t * (1.0 / b - 1.0 / a));
  }
  return st;
}

FixedPointReport fixed_point_check(const SteadyState& st, int n_energies) {
  FixedPointReport rep;
  JacobianTable t(st.phi_Q);
  PhaseDensity re = energy_rearrange(st.Q_star, t);
  rep.l1_rel = st.Q.minus(re).l1() / st.l1;
  const double emin = st.phi_Q.inf_value(), eQ = st.profile.e_Q;
  for (int k = 0; k < n_energies; ++k) {
    double e = emin + (eQ - emin) * (k + 0.5) / n_energies;
    double comp = st.Q_star.value(t.a(e));
    rep.profile_dev = std::max(rep.profile_dev, std::abs(st.profile.F(e) - comp) / st.linf);
    rep.profile_dev_h = std::max(rep.profile_dev_h, std::abs(st.F_h(e) - comp) / st.linf);
  }
  rep.L0_vs_a = std::abs(st.L0 - t.a(eQ)) / st.L0;
  return rep;
}

DensityIdentityReport density_identity_check(const SteadyState& st) {
  DensityIdentityReport rep;
  const auto& phi = st.phi_Q;
  double rmax = 0.0;
  for (double v : st.rho_Q.values) rmax = std::max(rmax, v);
  for (std::size_t i = 0; i < phi.size(); ++i) {
    double r = phi.grid()->r[i];
    double a = st.profile.rho_of_phi(phi[i]), b = st.profile.rho_identity(phi[i]);
    rep.identity_residual = std::max(rep.identity_residual, std::abs(a - b) / rmax);
    rep.state_residual = std::max(rep.state_residual, std::abs(st.rho_Q.values[i] - b) / rmax);
    if (r > st.R_Q) rep.outside_max = std::max({rep.outside_max, std::abs(st.rho_Q.values[i]), std::abs(b)});
  }
  return rep;
}

double microscopic_energy(const SteadyState& st, double r, double w) {
  if (r < 0.0 || w < 0.0) fail(ErrorKind::DomainError, "r and w must be nonnegative");
  return std::sqrt(1.0 + w * w) - 1.0 + st.phi_Q.value(r);
}

double evaluate_Q(const SteadyState& st, double r, double w) { return st.profile.F(microscopic_energy(st, r, w)); }

}  // namespace rvp
