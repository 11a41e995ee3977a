#include "rvp/dynamics.hpp"

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/core.h>

namespace rvp {

namespace {

constexpr std::size_t kBlock = 4096;  // fixed partition: reductions are merged in block order

std::size_t block_count(std::size_t n) { return (n + kBlock - 1) / kBlock; }

template <class Body>
void for_blocks(std::size_t n, Body&& body) {
  const std::size_t nb = block_count(n);
  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, nb, 1), [&](const tbb::blocked_range<std::size_t>& br) {
    for (std::size_t b = br.begin(); b != br.end(); ++b) body(b, b * kBlock, std::min(n, (b + 1) * kBlock));
  });
}

// Hat-function weights of r on g: node j gets (1 - t), node j+1 gets t.
struct HatWeight {
  std::size_t j;
  double t;
  bool split;
};
HatWeight hat(const RadialGrid& g, double r) {
  const int j = g.locate(r);
  if (j < 0) return {0, 0.0, false};
  if (j >= static_cast<int>(g.size()) - 1) return {g.size() - 1, 0.0, false};
  return {static_cast<std::size_t>(j), g.right_weight(j, r), true};
}

struct State {
  double x, y, px, py;
};

State load(const ParticleEnsemble& e, std::size_t i) { return {e.x[i], e.y[i], e.px[i], e.py[i]}; }
void store(ParticleEnsemble& e, std::size_t i, const State& s) {
  e.x[i] = s.x;
  e.y[i] = s.y;
  e.px[i] = s.px;
  e.py[i] = s.py;
}

// Time derivative in a field with radial force factor k = phi'(r)/r.
State rhs(const State& s, const Field& f) {
  const double r = std::hypot(s.x, s.y);
  const double k = r > 0.0 ? f.dphi(r) / r : 0.0;
  const double g = std::sqrt(1.0 + s.px * s.px + s.py * s.py);
  return {s.px / g, s.py / g, -k * s.x, -k * s.y};
}

State axpy(const State& a, double h, const State& d) { return {a.x + h * d.x, a.y + h * d.y, a.px + h * d.px, a.py + h * d.py}; }

double dist(const State& a, const State& b) {
  return std::max({std::abs(a.x - b.x), std::abs(a.y - b.y), std::abs(a.px - b.px), std::abs(a.py - b.py)});
}

double scale_of(const State& a) { return 1.0 + std::max({std::abs(a.x), std::abs(a.y), std::abs(a.px), std::abs(a.py)}); }

bool finite(const State& s) {
  return std::isfinite(s.x) && std::isfinite(s.y) && std::isfinite(s.px) && std::isfinite(s.py);
}

void check_finite(const ParticleEnsemble& e) {
  for (std::size_t i = 0; i < e.size(); ++i)
    if (!finite(load(e, i))) fail(ErrorKind::IntegrationBlowup, fmt::format("non-finite state at particle {}", i));
}

State midpoint_one(const State& z0, const Field& f, double h, double tol) {
  State zm = axpy(z0, 0.5 * h, rhs(z0, f));
  for (int it = 0; it < 100; ++it) {
    const State zn = axpy(z0, 0.5 * h, rhs(zm, f));
    const double d = dist(zn, zm);
    zm = zn;
    if (d <= tol * scale_of(zm)) break;
  }
  return {2 * zm.x - z0.x, 2 * zm.y - z0.y, 2 * zm.px - z0.px, 2 * zm.py - z0.py};
}

State leapfrog_one(const State& z, const Field& f, double h) {
  State s = z;
  double r = std::sqrt(s.x * s.x + s.y * s.y), k = r > 0.0 ? f.dphi(r) / r : 0.0;
  s.px -= 0.5 * h * k * s.x;
  s.py -= 0.5 * h * k * s.y;
  const double g = std::sqrt(1.0 + s.px * s.px + s.py * s.py);
  s.x += h * s.px / g;
  s.y += h * s.py / g;
  r = std::sqrt(s.x * s.x + s.y * s.y);
  k = r > 0.0 ? f.dphi(r) / r : 0.0;
  s.px -= 0.5 * h * k * s.x;
  s.py -= 0.5 * h * k * s.y;
  return s;
}

State rk4_one(const State& z, const Field& f, double h) {
  const State k1 = rhs(z, f), k2 = rhs(axpy(z, 0.5 * h, k1), f), k3 = rhs(axpy(z, 0.5 * h, k2), f),
              k4 = rhs(axpy(z, h, k3), f);
  return {z.x + h / 6 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x), z.y + h / 6 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y),
          z.px + h / 6 * (k1.px + 2 * k2.px + 2 * k3.px + k4.px),
          z.py + h / 6 * (k1.py + 2 * k2.py + 2 * k3.py + k4.py)};
}

// Triple-jump composition: symmetric, fourth order.
constexpr double kYoshida1 = 1.3512071919596578;   // 1 / (2 - 2^{1/3})
constexpr double kYoshida2 = -1.7024143839193153;  // 1 - 2 kYoshida1

std::vector<double> solve_nodal(const ParticleEnsemble& e, const SplineMap& map) {
  return solve_stiffness(*map.grid, deposit_mass(e, map));
}

}  // namespace

// ---- ensemble ----

double ParticleEnsemble::r(std::size_t i) const { return std::hypot(x[i], y[i]); }
double ParticleEnsemble::p_r(std::size_t i) const {
  const double rr = r(i);
  return rr > 0.0 ? (x[i] * px[i] + y[i] * py[i]) / rr : std::hypot(px[i], py[i]);
}
double ParticleEnsemble::L(std::size_t i) const { return std::abs(x[i] * py[i] - y[i] * px[i]); }
double ParticleEnsemble::speed(std::size_t i) const { return std::hypot(px[i], py[i]); }
double ParticleEnsemble::gamma(std::size_t i) const { return std::sqrt(1.0 + px[i] * px[i] + py[i] * py[i]); }
double ParticleEnsemble::mass() const { return pairwise_sum(m); }
double ParticleEnsemble::kinetic() const {
  std::vector<double> k(size());
  for (std::size_t i = 0; i < size(); ++i) k[i] = m[i] * (px[i] * px[i] + py[i] * py[i]) / (gamma(i) + 1.0);
  return pairwise_sum(k);
}
void ParticleEnsemble::push_back(double rr, double pr, double LL, double w) {
  if (!(rr > 0.0) || LL < 0.0 || !(w > 0.0)) fail(ErrorKind::DomainError, "particle needs r > 0, L >= 0, weight > 0");
  x.push_back(rr);
  y.push_back(0.0);
  px.push_back(pr);
  py.push_back(LL / rr);
  m.push_back(w);
}

// ---- spline map ----

SplineMap SplineMap::geometric(int n, double r_max, double stretch) {
  SplineMap m;
  m.grid = make_grid(n, r_max, stretch);
  m.n = n;
  m.r_max = r_max;
  m.stretch = stretch;
  m.c = std::expm1(stretch) / r_max;
  m.a = n / stretch;
  return m;
}

// inverse of r_i = r_max expm1(s (i+1) / n) / expm1(s)
double SplineMap::xi(double r) const { return a * std::log1p(c * r) - 1.0; }

void SplineMap::weights(double r, std::size_t idx[3], double w[3], double dw[3]) const {
  const double x = xi(r), dx = a * c / (1.0 + r * c);
  const double base = std::floor(x + 0.5), d = x - base;
  const double wl = 0.5 * (0.5 - d) * (0.5 - d), wc = 0.75 - d * d, wr = 0.5 * (0.5 + d) * (0.5 + d);
  const double dl = -(0.5 - d), dc = -2.0 * d, dr = 0.5 + d;
  const double ib = base;
  auto fold = [&](double i) {
    return static_cast<std::size_t>(std::clamp(i, 0.0, static_cast<double>(n - 1)));
  };
  idx[0] = fold(ib - 1);
  idx[1] = fold(ib);
  idx[2] = fold(ib + 1);
  w[0] = wl;
  w[1] = wc;
  w[2] = wr;
  // folded weights add on the end node and so do their derivatives; the dw still sum to zero
  dw[0] = dl * dx;
  dw[1] = dc * dx;
  dw[2] = dr * dx;
}

// ---- field ----

Field Field::zero() { return Field{}; }
Field Field::potential(const RadialPotential& phi) {
  Field f;
  f.kind_ = 1;
  f.pot_ = phi;
  return f;
}
Field Field::shooting(const ShootingSolution& s) {
  Field f;
  f.kind_ = 2;
  f.shoot_ = &s;
  return f;
}
Field Field::spline(const SplineMap& map, std::vector<double> nodal) {
  Field f;
  f.kind_ = 3;
  f.map_ = &map;
  f.nodal_ = std::move(nodal);
  return f;
}
double Field::phi(double r) const {
  if (kind_ == 1) return pot_->value(r);
  if (kind_ == 2) return shoot_->phi_at(r);
  if (kind_ == 3) {
    std::size_t i[3];
    double w[3], dw[3];
    map_->weights(r, i, w, dw);
    return w[0] * nodal_[i[0]] + w[1] * nodal_[i[1]] + w[2] * nodal_[i[2]];
  }
  return 0.0;
}
double Field::dphi(double r) const {
  if (kind_ == 1) return pot_->deriv(r);
  if (kind_ == 2) return shoot_->dphi_at(r);
  if (kind_ == 3) {
    std::size_t i[3];
    double w[3], dw[3];
    map_->weights(r, i, w, dw);
    return dw[0] * nodal_[i[0]] + dw[1] * nodal_[i[1]] + dw[2] * nodal_[i[2]];
  }
  return 0.0;
}

std::pair<double, double> radial_rhs(double r, double p_r, double L, double dphi) {
  const double g = std::sqrt(1.0 + p_r * p_r + L * L / (r * r));
  return {p_r / g, L * L / (r * r * r * g) - dphi};
}

// ---- deposits ----

std::vector<double> deposit_mass(const ParticleEnsemble& ens, const RadialGrid& g) {
  const std::size_t nb = block_count(ens.size());
  std::vector<std::vector<double>> part(nb, std::vector<double>(g.size(), 0.0));
  for_blocks(ens.size(), [&](std::size_t b, std::size_t lo, std::size_t hi) {
    auto& acc = part[b];
    for (std::size_t i = lo; i < hi; ++i) {
      const HatWeight h = hat(g, ens.r(i));
      acc[h.j] += ens.m[i] * (1.0 - h.t);
      if (h.split) acc[h.j + 1] += ens.m[i] * h.t;
    }
  });
  std::vector<double> M(g.size(), 0.0);
  for (const auto& p : part)
    for (std::size_t k = 0; k < M.size(); ++k) M[k] += p[k];
  return M;
}

std::vector<double> deposit_mass(const ParticleEnsemble& ens, const SplineMap& map) {
  const std::size_t nb = block_count(ens.size());
  std::vector<std::vector<double>> part(nb, std::vector<double>(map.grid->size(), 0.0));
  for_blocks(ens.size(), [&](std::size_t b, std::size_t lo, std::size_t hi) {
    auto& acc = part[b];
    std::size_t id[3];
    double w[3], dw[3];
    for (std::size_t i = lo; i < hi; ++i) {
      map.weights(ens.r(i), id, w, dw);
      for (int k = 0; k < 3; ++k) acc[id[k]] += ens.m[i] * w[k];
    }
  });
  std::vector<double> M(map.grid->size(), 0.0);
  for (const auto& p : part)
    for (std::size_t k = 0; k < M.size(); ++k) M[k] += p[k];
  return M;
}

SplineMap make_sim_map(const SteadyState& st, const SimConfig& cfg) {
  return SplineMap::geometric(cfg.sim_nodes, cfg.sim_rmax_factor * st.R_Q, 2.0);
}

DiagGrid make_diag_grid(const SteadyState& st, const SimConfig& cfg) {
  DiagGrid dg;
  dg.grid = make_grid(cfg.diag_nodes, cfg.diag_rmax_factor * st.R_Q, 2.0);
  dg.w_cap = cfg.w_cap_factor * w_of_eta(st.profile.e_Q - st.shoot.phi_center);
  dg.nw = cfg.diag_w_cells;
  return dg;
}

namespace {

PhaseDensity cells_to_density(const DiagGrid& dg, const std::vector<double>& mass) {
  const RadialGrid& g = *dg.grid;
  std::vector<std::vector<double>> hi(g.size()), val(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    for (int c = 0; c < dg.nw; ++c) {
      const double a = dg.w_cap * c / dg.nw, b = dg.w_cap * (c + 1) / dg.nw;
      const double meas = g.W[i] * kFourPi * (b * b * b - a * a * a) / 3.0;
      hi[i].push_back(b);
      val[i].push_back(mass[i * dg.nw + c] / meas);
    }
  return PhaseDensity::from_segments(dg.grid, hi, val);
}

}  // namespace

PhaseDensity deposit_phase(const ParticleEnsemble& ens, const DiagGrid& dg) {
  const RadialGrid& g = *dg.grid;
  const std::size_t cells = g.size() * dg.nw;
  const std::size_t nb = block_count(ens.size());
  std::vector<std::vector<double>> part(nb, std::vector<double>(cells, 0.0));
  for_blocks(ens.size(), [&](std::size_t b, std::size_t lo, std::size_t hi) {
    auto& acc = part[b];
    for (std::size_t i = lo; i < hi; ++i) {
      const HatWeight h = hat(g, ens.r(i));
      const int c = std::min(dg.nw - 1, static_cast<int>(dg.nw * ens.speed(i) / dg.w_cap));
      acc[h.j * dg.nw + c] += ens.m[i] * (1.0 - h.t);
      if (h.split) acc[(h.j + 1) * dg.nw + c] += ens.m[i] * h.t;
    }
  });
  std::vector<double> mass(cells, 0.0);
  for (const auto& p : part)
    for (std::size_t k = 0; k < cells; ++k) mass[k] += p[k];
  return cells_to_density(dg, mass);
}

PhaseDensity project_phase(const std::function<double(double, double)>& f, const DiagGrid& dg) {
  const RadialGrid& g = *dg.grid;
  std::vector<double> mass(g.size() * dg.nw, 0.0);
  auto wcell = [&](double r, int c) {
    const double a = dg.w_cap * c / dg.nw, b = dg.w_cap * (c + 1) / dg.nw;
    return gl_integrate([&](double w) { return kFourPi * w * w * f(r, w); }, a, b, 8);
  };
  // element [lo, hi] with hat weight psi(r) toward node i
  auto add = [&](std::size_t i, double lo, double hi, const std::function<double(double)>& psi) {
    for (int c = 0; c < dg.nw; ++c)
      mass[i * dg.nw + c] += gl_integrate([&](double r) { return kFourPi * r * r * psi(r) * wcell(r, c); }, lo, hi, 8);
  };
  add(0, 0.0, g.r[0], [](double) { return 1.0; });
  for (std::size_t j = 0; j + 1 < g.size(); ++j) {
    add(j, g.r[j], g.r[j + 1], [&](double r) { return 1.0 - g.right_weight(static_cast<int>(j), r); });
    add(j + 1, g.r[j], g.r[j + 1], [&](double r) { return g.right_weight(static_cast<int>(j), r); });
  }
  return cells_to_density(dg, mass);
}

// ---- sampling ----

ParticleEnsemble sample_from(const PhaseDensity& f, std::size_t N, std::uint64_t seed) {
  if (!f.nonnegative()) fail(ErrorKind::DomainError, "sampling needs a nonnegative density");
  const RadialGrid& g = *f.grid;
  struct Cell {
    std::size_t i;
    double wlo, whi, cum;
  };
  std::vector<Cell> cells;
  double total = 0.0;
  for (std::size_t i = 0; i < f.nodes(); ++i)
    for (std::size_t k = f.offsets[i]; k < f.offsets[i + 1]; ++k) {
      if (!(f.val[k] > 0.0)) continue;
      total += f.val[k] * f.segment_measure(i, k);
      cells.push_back({i, f.w_lo(k, i), f.w_hi[k], total});
    }
  if (!(total > 0.0) || N == 0) fail(ErrorKind::DomainError, "sampling a zero density");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  ParticleEnsemble e;
  e.seed = seed;
  const double u0 = U(rng), w = total / static_cast<double>(N);
  std::size_t c = 0;
  for (std::size_t n = 0; n < N; ++n) {
    const double target = (static_cast<double>(n) + u0) * w;
    while (c + 1 < cells.size() && cells[c].cum <= target) ++c;
    const Cell& cell = cells[c];
    // r from psi_i(r) r^2 by rejection against r^2 on the hat support
    const std::size_t i = cell.i;
    const double a = i == 0 ? 0.0 : g.r[i - 1], b = i + 1 < g.size() ? g.r[i + 1] : g.r[i];
    double r = g.r[i];
    for (int tries = 0; tries < 1000; ++tries) {
      const double rr = std::cbrt(a * a * a + U(rng) * (b * b * b - a * a * a));
      double psi = 1.0;
      if (rr < g.r[i] && i > 0) psi = g.right_weight(static_cast<int>(i) - 1, rr);
      if (rr > g.r[i] && i + 1 < g.size()) psi = 1.0 - g.right_weight(static_cast<int>(i), rr);
      if (U(rng) < psi) {
        r = rr;
        break;
      }
    }
    const double sp = std::cbrt(std::pow(cell.wlo, 3) + U(rng) * (std::pow(cell.whi, 3) - std::pow(cell.wlo, 3)));
    const double mu = 2.0 * U(rng) - 1.0;
    e.push_back(std::max(r, 1e-12 * g.r[0]), sp * mu, r * sp * std::sqrt(1.0 - mu * mu), w);
  }
  return e;
}

ParticleEnsemble sample_steady(const SteadyState& st, std::size_t N, std::uint64_t seed) {
  const ShootingSolution& s = st.shoot;
  const CutoffProfile& F = st.profile;
  const int nt = 4000;
  std::vector<double> rt(nt + 1), cm(nt + 1, 0.0);
  for (int k = 0; k <= nt; ++k) rt[k] = s.R * k / nt;
  for (int k = 0; k < nt; ++k)
    cm[k + 1] = cm[k] + gl_integrate([&](double r) { return kFourPi * r * r * F.rho_of_phi(s.phi_at(r)); }, rt[k],
                                     rt[k + 1], 6);
  const double total = cm.back();
  if (!(total > 0.0) || N == 0) fail(ErrorKind::DomainError, "sampling an empty steady state");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  ParticleEnsemble e;
  e.seed = seed;
  const double w = total / static_cast<double>(N);
  for (std::size_t n = 0; n < N; ++n) {
    const double target = (static_cast<double>(n) + U(rng)) * w;
    const auto it = std::upper_bound(cm.begin(), cm.end(), target);
    const std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(it - cm.begin()), 1, nt) - 1;
    const double frac = (target - cm[k]) / std::max(cm[k + 1] - cm[k], 1e-300);
    const double r = std::max(rt[k] + std::clamp(frac, 0.0, 1.0) * (rt[k + 1] - rt[k]), 1e-9 * s.R);
    const double phi = s.phi_at(r), F0 = F.F(phi), wmax = w_of_eta(std::max(F.e_Q - phi, 0.0));
    double sp = 0.0;
    for (int tries = 0; tries < 10000; ++tries) {
      const double c = wmax * std::cbrt(U(rng));
      if (U(rng) * F0 <= F.F(std::sqrt(1.0 + c * c) - 1.0 + phi)) {
        sp = c;
        break;
      }
    }
    const double mu = 2.0 * U(rng) - 1.0;
    e.push_back(r, sp * mu, r * sp * std::sqrt(1.0 - mu * mu), w);
  }
  return e;
}

// ---- stepping ----

void step(ParticleEnsemble& ens, const Field& field, double dt, Integrator integ, double tol) {
  auto one = [&](const State& z, double h) { return midpoint_one(z, field, h, tol); };
  for_blocks(ens.size(), [&](std::size_t, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      State z = load(ens, i);
      switch (integ) {
        case Integrator::Leapfrog: z = leapfrog_one(z, field, dt); break;
        case Integrator::ImplicitMidpoint: z = one(z, dt); break;
        case Integrator::Midpoint4: z = one(one(one(z, kYoshida1 * dt), kYoshida2 * dt), kYoshida1 * dt); break;
        case Integrator::RK4: z = rk4_one(z, field, dt); break;
      }
      store(ens, i, z);
    }
  });
  check_finite(ens);
}

double dynamical_time(const SteadyState& st) { return std::sqrt(kFourPi * st.R_Q * st.R_Q * st.R_Q / st.mass); }

double default_dt(const SteadyState& st, FieldMode mode) {
  return dynamical_time(st) / (mode == FieldMode::SelfConsistent ? 50.0 : 2000.0);
}

// ---- simulation ----

Simulation::Simulation(ParticleEnsemble ens, const SimConfig& cfg, const SplineMap& map, std::optional<Field> frozen)
    : ens_(std::move(ens)), cfg_(cfg), map_(&map), frozen_(std::move(frozen)) {
  if (!(cfg_.dt > 0.0)) fail(ErrorKind::DomainError, "dt must be positive");
  if (cfg_.field_mode == FieldMode::Frozen && !frozen_) fail(ErrorKind::DomainError, "frozen mode needs a field");
  if (cfg_.field_mode == FieldMode::None) frozen_ = Field::zero();
}

std::vector<double> Simulation::self_field() const { return solve_nodal(ens_, *map_); }

double Simulation::hamiltonian() const {
  if (cfg_.field_mode != FieldMode::SelfConsistent) {
    std::vector<double> parts(ens_.size());
    for (std::size_t i = 0; i < ens_.size(); ++i)
      parts[i] = ens_.m[i] * (ens_.gamma(i) - 1.0 + frozen_->phi(ens_.r(i)));
    return pairwise_sum(parts);
  }
  const std::vector<double> M = deposit_mass(ens_, *map_);
  const std::vector<double> phi = solve_stiffness(*map_->grid, M);
  std::vector<double> pe(M.size());
  for (std::size_t i = 0; i < M.size(); ++i) pe[i] = 0.5 * M[i] * phi[i];
  return ens_.kinetic() + pairwise_sum(pe);
}

void Simulation::leapfrog_substep(double h) {
  const std::size_t n = ens_.size();
  auto kick = [&](const Field& f, double hk) {
    for_blocks(n, [&](std::size_t, std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        const double r = std::sqrt(ens_.x[i] * ens_.x[i] + ens_.y[i] * ens_.y[i]);
        const double k = r > 0.0 ? f.dphi(r) / r : 0.0;
        ens_.px[i] -= hk * k * ens_.x[i];
        ens_.py[i] -= hk * k * ens_.y[i];
      }
    });
  };
  if (!cached_) cached_ = Field::spline(*map_, solve_nodal(ens_, *map_));
  kick(*cached_, 0.5 * h);
  for_blocks(n, [&](std::size_t, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const double g = std::sqrt(1.0 + ens_.px[i] * ens_.px[i] + ens_.py[i] * ens_.py[i]);
      ens_.x[i] += h * ens_.px[i] / g;
      ens_.y[i] += h * ens_.py[i] / g;
    }
  });
  cached_ = Field::spline(*map_, solve_nodal(ens_, *map_));
  kick(*cached_, 0.5 * h);
  iters_ = 1;
}

void Simulation::midpoint_substep(double h) {
  const std::size_t n = ens_.size();
  const ParticleEnsemble z0 = ens_;
  // explicit guess of the midpoint, then fixed-point sweeps with the field re-solved at the midpoint
  ParticleEnsemble zm = z0;
  {
    const Field f = Field::spline(*map_, solve_nodal(z0, *map_));
    for_blocks(n, [&](std::size_t, std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) store(zm, i, axpy(load(z0, i), 0.5 * h, rhs(load(z0, i), f)));
    });
  }
  iters_ = 0;
  for (int it = 0; it < cfg_.max_field_iterations; ++it) {
    ++iters_;
    const Field f = Field::spline(*map_, solve_nodal(zm, *map_));
    std::vector<double> dmax(block_count(n), 0.0);
    for_blocks(n, [&](std::size_t b, std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        const State cur = load(zm, i);
        const State nxt = axpy(load(z0, i), 0.5 * h, rhs(cur, f));
        dmax[b] = std::max(dmax[b], dist(nxt, cur) / scale_of(cur));
        store(zm, i, nxt);
      }
    });
    if (*std::max_element(dmax.begin(), dmax.end()) <= cfg_.midpoint_tol) break;
  }
  for_blocks(n, [&](std::size_t, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const State a = load(z0, i), b = load(zm, i);
      store(ens_, i, {2 * b.x - a.x, 2 * b.y - a.y, 2 * b.px - a.px, 2 * b.py - a.py});
    }
  });
}

void Simulation::rk4_substep(double h) {
  const std::size_t n = ens_.size();
  const ParticleEnsemble z0 = ens_;
  std::vector<State> k[4];
  ParticleEnsemble stage = z0;
  const double c[4] = {0.0, 0.5, 0.5, 1.0};
  for (int s = 0; s < 4; ++s) {
    if (s > 0)
      for (std::size_t i = 0; i < n; ++i) store(stage, i, axpy(load(z0, i), c[s] * h, k[s - 1][i]));
    const Field f = Field::spline(*map_, solve_nodal(stage, *map_));
    k[s].resize(n);
    for_blocks(n, [&](std::size_t, std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) k[s][i] = rhs(load(stage, i), f);
    });
  }
  for (std::size_t i = 0; i < n; ++i) {
    State z = load(z0, i);
    z = axpy(z, h / 6, k[0][i]);
    z = axpy(z, h / 3, k[1][i]);
    z = axpy(z, h / 3, k[2][i]);
    z = axpy(z, h / 6, k[3][i]);
    store(ens_, i, z);
  }
}

void Simulation::advance() {
  const double h = cfg_.dt;
  if (frozen_) {
    step(ens_, *frozen_, h, cfg_.integrator, cfg_.midpoint_tol);
  } else if (cfg_.field_cadence > 1) {
    if (step_count_ % cfg_.field_cadence == 0 || !held_) held_ = Field::spline(*map_, solve_nodal(ens_, *map_));
    step(ens_, *held_, h, cfg_.integrator, cfg_.midpoint_tol);
  } else {
    switch (cfg_.integrator) {
      case Integrator::Leapfrog: leapfrog_substep(h); break;
      case Integrator::ImplicitMidpoint: midpoint_substep(h); break;
      case Integrator::Midpoint4:
        midpoint_substep(kYoshida1 * h);
        midpoint_substep(kYoshida2 * h);
        midpoint_substep(kYoshida1 * h);
        break;
      case Integrator::RK4: rk4_substep(h); break;
    }
    check_finite(ens_);
  }
  ++step_count_;
  t_ += h;
}

// ---- traces and experiments ----

StabilityTrace evolve(const ParticleEnsemble& ens, const SimConfig& cfg, const SplineMap& map, const DiagGrid* dg,
                      const PhaseDensity* ref, std::optional<Field> frozen) {
  Simulation sim(ens, cfg, map, std::move(frozen));
  StabilityTrace tr;
  const double ref_norm = ref ? ref->ep_norm(cfg.p) : 0.0;
  const double K0 = ens.kinetic();
  auto record = [&] {
    const auto& e = sim.ensemble();
    tr.t.push_back(sim.time());
    tr.H.push_back(sim.hamiltonian());
    tr.mass.push_back(e.mass());
    tr.kinetic.push_back(e.kinetic());
    if (dg) {
      const PhaseDensity D = deposit_phase(e, *dg);
      tr.l1.push_back(D.l1());
      tr.lp.push_back(D.lp(cfg.p));
      tr.distance.push_back(ref ? D.minus(*ref).ep_norm(cfg.p) / ref_norm : 0.0);
    } else {
      tr.l1.push_back(tr.mass.back());
      tr.lp.push_back(0.0);
      tr.distance.push_back(0.0);
    }
    if (!tr.kinetic_flag && K0 > 0.0 && tr.kinetic.back() > cfg.kinetic_growth_limit * K0) {
      tr.kinetic_flag = true;
      tr.kinetic_flag_time = sim.time();
    }
  };
  record();
  tr.H0 = tr.H.front();
  const long steps = std::lround(cfg.horizon / cfg.dt);
  for (long s = 1; s <= steps; ++s) {
    sim.advance();
    if (s % cfg.record_every == 0 || s == steps) record();
  }
  for (std::size_t k = 0; k < tr.t.size(); ++k) {
    tr.max_rel_H_drift = std::max(tr.max_rel_H_drift, std::abs(tr.H[k] - tr.H0) / std::abs(tr.H0));
    tr.max_mass_dev = std::max(tr.max_mass_dev, std::abs(tr.mass[k] - tr.mass.front()));
  }
  return tr;
}

namespace {

double steady_value(const SteadyState& st, double r, double w) {
  return st.profile.F(std::sqrt(1.0 + w * w) - 1.0 + st.shoot.phi_at(r));
}

std::vector<StabilityReport> run_ladder(const SteadyState& st, const std::vector<double>& deltas, const SimConfig& cfg,
                                        std::function<double(double)> chi) {
  if (!chi) chi = [R = st.R_Q](double r) { return std::cos(kPi * std::min(r / R, 1.0)); };
  const DiagGrid dg = make_diag_grid(st, cfg);
  const SplineMap sg = make_sim_map(st, cfg);
  const PhaseDensity PQ = project_phase([&](double r, double w) { return steady_value(st, r, w); }, dg);
  const PhaseDensity PchiQ =
      project_phase([&](double r, double w) { return chi(r) * steady_value(st, r, w); }, dg);
  const double nQ = PQ.ep_norm(cfg.p), nchi = PchiQ.ep_norm(cfg.p);

  const ParticleEnsemble base = sample_steady(st, cfg.N, cfg.seed);
  std::vector<StabilityReport> rep(deltas.size());
  std::vector<Simulation> sims;
  sims.emplace_back(base, cfg, sg);
  std::vector<int> sim_of(deltas.size(), -1);
  for (std::size_t d = 0; d < deltas.size(); ++d) {
    rep[d].delta = deltas[d];
    rep[d].amplitude = deltas[d] * nQ / nchi;
    if (deltas[d] > 0.1) {
      rep[d].outside_window = true;
      fmt::print(stderr, "warning: delta = {} is outside the validated window (0, 0.1]\n", deltas[d]);
    }
    if (rep[d].amplitude >= 1.0) fail(ErrorKind::DomainError, "perturbation would make f0 negative");
    if (deltas[d] == 0.0) continue;
    ParticleEnsemble pe = base;
    for (std::size_t i = 0; i < pe.size(); ++i) pe.m[i] *= 1.0 + rep[d].amplitude * chi(pe.r(i));
    sim_of[d] = static_cast<int>(sims.size());
    sims.emplace_back(std::move(pe), cfg, sg);
  }
  double noise = 0.0;
  auto record = [&] {
    const PhaseDensity D0 = deposit_phase(sims[0].ensemble(), dg);
    noise = std::max(noise, D0.minus(PQ).ep_norm(cfg.p) / nQ);
    for (std::size_t d = 0; d < deltas.size(); ++d) {
      double dist = 0.0;
      if (sim_of[d] >= 0) dist = deposit_phase(sims[sim_of[d]].ensemble(), dg).minus(D0).ep_norm(cfg.p) / nQ;
      rep[d].t.push_back(sims[0].time());
      rep[d].distance.push_back(dist);
      rep[d].sup_distance = std::max(rep[d].sup_distance, dist);
    }
  };
  record();
  const long steps = std::lround(cfg.horizon / cfg.dt);
  for (long s = 1; s <= steps; ++s) {
    for (auto& sim : sims) sim.advance();
    if (s % cfg.record_every == 0 || s == steps) record();
  }
  for (auto& r : rep) {
    r.noise_floor = noise;
    r.ratio = r.delta > 0.0 ? r.sup_distance / r.delta : 0.0;
  }
  return rep;
}

}  // namespace

StabilityReport stability_experiment(const SteadyState& st, double delta, const SimConfig& cfg,
                                     const std::function<double(double)>& chi) {
  if (delta < 0.0) fail(ErrorKind::DomainError, "delta must be nonnegative");
  return run_ladder(st, {delta}, cfg, chi).front();
}

LadderReport stability_ladder(const SteadyState& st, const std::vector<double>& deltas, const SimConfig& cfg) {
  for (double d : deltas)
    if (d < 0.0) fail(ErrorKind::DomainError, "delta must be nonnegative");
  LadderReport L;
  L.runs = run_ladder(st, deltas, cfg, {});
  L.nondecreasing = true;
  for (std::size_t k = 0; k < L.runs.size(); ++k) {
    L.C = std::max(L.C, L.runs[k].ratio);
    if (k && L.runs[k].delta >= L.runs[k - 1].delta && L.runs[k].sup_distance < L.runs[k - 1].sup_distance)
      L.nondecreasing = false;
  }
  return L;
}

ControlReport nonmonotone_control(const SteadyState& st, const SimConfig& cfg, double amp) {
  const double ec = st.shoot.phi_center, eQ = st.profile.e_Q;
  auto mod = [&](double e) { return 1.0 + amp * std::sin(3.0 * kPi * std::clamp((e - ec) / (eQ - ec), 0.0, 1.0)); };
  ControlReport rep;
  double prev = st.profile.F(ec) * mod(ec);
  for (int k = 1; k <= 400; ++k) {
    const double e = ec + (eQ - ec) * k / 400.0, v = st.profile.F(e) * mod(e);
    if (v > prev) rep.profile_monotone = false;
    prev = v;
  }
  ParticleEnsemble pe = sample_steady(st, cfg.N, cfg.seed);
  for (std::size_t i = 0; i < pe.size(); ++i) pe.m[i] *= mod(pe.gamma(i) - 1.0 + st.shoot.phi_at(pe.r(i)));
  const DiagGrid dg = make_diag_grid(st, cfg);
  const PhaseDensity D0 = deposit_phase(pe, dg);
  const SplineMap sg = make_sim_map(st, cfg);
  const StabilityTrace tr = evolve(pe, cfg, sg, &dg, &D0);
  rep.sup_distance = *std::max_element(tr.distance.begin(), tr.distance.end());
  return rep;
}

}  // namespace rvp
