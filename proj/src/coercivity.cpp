#include "rvp/coercivity.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

namespace rvp {

namespace {

constexpr double kSixteenPi2 = 16.0 * kPi * kPi;

struct UnitRule {
  std::vector<double> x, w;
};
UnitRule unit_gl(int n) {
  const GaussRule& g = gauss_legendre(n);
  UnitRule r;
  for (std::size_t k = 0; k < g.x.size(); ++k) {
    r.x.push_back(0.5 * (1.0 + g.x[k]));
    r.w.push_back(0.5 * g.w[k]);
  }
  return r;
}

// First-derivative weights of the interpolating polynomial through x[lo..lo+w) at x0 (Fornberg).
std::vector<double> fd_weights(const std::vector<double>& x, std::size_t lo, std::size_t w, double x0) {
  std::vector<std::vector<double>> c(w, std::vector<double>(2, 0.0));
  double c1 = 1.0, c4 = x[lo] - x0;
  c[0][0] = 1.0;
  for (std::size_t i = 1; i < w; ++i) {
    const std::size_t mn = std::min<std::size_t>(i, 1);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[lo + i] - x0;
    for (std::size_t j = 0; j < i; ++j) {
      const double c3 = x[lo + i] - x[lo + j];
      c2 *= c3;
      if (j == i - 1) {
        for (std::size_t k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (std::size_t k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> out(w);
  for (std::size_t i = 0; i < w; ++i) out[i] = c[i][1];
  return out;
}

// Local differentiation matrix: 9-point stencils, centred inside and one-sided at the ends.
std::vector<std::vector<double>> diff_matrix(const std::vector<double>& x, std::size_t width = 9) {
  const std::size_t n = x.size(), w = std::min(width, n);
  std::vector<std::vector<double>> D(n, std::vector<double>(n, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t lo = std::min(k > w / 2 ? k - w / 2 : 0, n - w);
    const std::vector<double> c = fd_weights(x, lo, w, x[k]);
    for (std::size_t i = 0; i < w; ++i) D[k][lo + i] = c[i];
  }
  return D;
}

struct Local {
  double u, gam, dphi;
};
Local local(const SteadyState& st, double r, double e) {
  const double gam = 1.0 + e - st.shoot.phi_at(r);
  return {std::sqrt(std::max(0.0, gam * gam - 1.0)), gam, st.shoot.dphi_at(r)};
}

}  // namespace

AntonovFrame AntonovFrame::build(const SteadyState& st, int ne, int nt) {
  AntonovFrame fr;
  fr.st = &st;
  fr.ne = ne;
  fr.nt = nt;
  fr.phi_c = st.shoot.phi_center;
  fr.e_Q = st.profile.e_Q;
  const UnitRule gs = unit_gl(ne), gt = unit_gl(nt);
  fr.sigma = gs.x;
  fr.wsigma = gs.w;
  fr.t = gt.x;
  fr.wt = gt.w;
  fr.Dt = diff_matrix(fr.t);
  const double span = fr.e_Q - fr.phi_c;
  for (int j = 0; j < ne; ++j) {
    const double s = fr.sigma[j], e = fr.phi_c + span * s * s;
    const double re = st.shoot.r_of_e(e);
    fr.e.push_back(e);
    fr.re.push_back(re);
    fr.Fp.push_back(std::abs(st.profile.dF(e)));
    for (int k = 0; k < nt; ++k) {
      const double tk = fr.t[k], r = re * (1.0 - tk * tk);
      const double phi = st.shoot.phi_at(r), gam = 1.0 + e - phi;
      fr.r.push_back(r);
      fr.gam.push_back(gam);
      fr.u.push_back(std::sqrt(gam * gam - 1.0));
      fr.dphi.push_back(st.shoot.dphi_at(r));
      fr.d2phi.push_back(st.shoot.d2phi_at(r, st.profile));
      fr.rho.push_back(st.profile.rho_of_phi(phi));
      fr.w.push_back(fr.wsigma[j] * 2.0 * span * s * fr.wt[k] * 2.0 * re * tk);
    }
  }
  return fr;
}

double AntonovFrame::integrate(const std::vector<double>& G) const {
  std::vector<double> parts(size());
  for (std::size_t n = 0; n < size(); ++n) parts[n] = w[n] * r[n] * r[n] * u[n] * gam[n] * G[n];
  return kSixteenPi2 * pairwise_sum(parts);
}

std::vector<double> operator_T(const AntonovFrame& fr, const std::vector<double>& f) {
  std::vector<double> out(fr.size());
  for (int j = 0; j < fr.ne; ++j)
    for (int k = 0; k < fr.nt; ++k) {
      // rows sum to zero: differencing against f_k keeps roundoff proportional to the variation of f
      const std::size_t n = fr.idx(j, k);
      double df = 0.0;
      for (int m = 0; m < fr.nt; ++m) df += fr.Dt[k][m] * (f[fr.idx(j, m)] - f[n]);
      const double drdt = -2.0 * fr.re[j] * fr.t[k];
      out[n] = df / drdt / (fr.r[n] * fr.r[n] * fr.u[n] * fr.gam[n]);
    }
  return out;
}

double operator_T_at(const SteadyState& st, const std::function<double(double, double)>& f, double r, double e) {
  const double re = st.shoot.r_of_e(e);
  const double h = 1e-3 * std::min(r, re - r);
  auto D = [&](double s) { return (f(r + s, e) - f(r - s, e)) / (2.0 * s); };
  const double d = (4.0 * D(0.5 * h) - D(h)) / 3.0;
  const Local L = local(st, r, e);
  return d / (r * r * L.u * L.gam);
}

double Tg_closed(const SteadyState& st, double r, double e) {
  const Local L = local(st, r, e);
  return 3.0 * L.u * L.u / L.gam - 3.0 * r * L.dphi;
}

double T2g_closed(const SteadyState& st, double r, double e) {
  const Local L = local(st, r, e);
  const double d2 = st.shoot.d2phi_at(r, st.profile);
  return -3.0 / (r * L.u * L.gam) * (d2 + L.dphi / r * (2.0 + 1.0 / (L.gam * L.gam)));
}

AntonovFunction antonov_f(const AntonovFrame& fr, const RadialTestFunction& h, bool check_T) {
  const SteadyState& st = *fr.st;
  AntonovFunction A;
  A.f.assign(fr.size(), 0.0);
  A.hmPi.assign(fr.size(), 0.0);
  const int m = 10;
  const GaussRule& g = gauss_legendre(m);
  for (int j = 0; j < fr.ne; ++j) {
    const double e = fr.e[j], re = fr.re[j];
    // weight u (1+e-phi) tau^2 in the t variable, including d tau = 2 r(e) t dt
    auto weight = [&](double t) {
      const double tau = re * (1.0 - t * t);
      const double gam = 1.0 + e - st.shoot.phi_at(tau);
      return std::sqrt(std::max(0.0, gam * gam - 1.0)) * gam * tau * tau * 2.0 * re * t;
    };
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    const double num = GK::integrate([&](double t) { return weight(t) * h.value(re * (1.0 - t * t)); }, 0.0, 1.0, 12, 1e-14);
    const double den = GK::integrate(weight, 0.0, 1.0, 12, 1e-14);
    const double Pi = num / den;
    A.Pi.push_back(Pi);
    auto G = [&](double t) { return (h.value(re * (1.0 - t * t)) - Pi) * weight(t); };
    // panel integrals between consecutive t nodes (and the two ends)
    std::vector<double> edges{0.0};
    edges.insert(edges.end(), fr.t.begin(), fr.t.end());
    edges.push_back(1.0);
    std::vector<double> pan(edges.size() - 1), pabs(edges.size() - 1);
    for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
      const double a = edges[p], b = edges[p + 1], c = 0.5 * (a + b), hw = 0.5 * (b - a);
      double s = 0.0, sa = 0.0;
      for (int q = 0; q < m; ++q) {
        const double v = G(c + hw * g.x[q]);
        s += g.w[q] * v;
        sa += g.w[q] * std::abs(v);
      }
      pan[p] = s * hw;
      pabs[p] = sa * hw;
    }
    const double total = pairwise_sum(pan), total_abs = pairwise_sum(pabs);
    A.boundary_max = std::max(A.boundary_max, total_abs > 0.0 ? std::abs(total) / total_abs : 0.0);
    // node k sits at edges[k+1]; f = -int_0^{t_k} G near r(e), f = int_{t_k}^1 G near the centre
    std::vector<double> below(fr.nt), above(fr.nt);
    double acc = 0.0;
    for (int k = 0; k < fr.nt; ++k) {
      acc += pan[k];
      below[k] = acc;
    }
    acc = 0.0;
    for (int k = fr.nt - 1; k >= 0; --k) {
      acc += pan[k + 1];
      above[k] = acc;
    }
    for (int k = 0; k < fr.nt; ++k) {
      const std::size_t n = fr.idx(j, k);
      A.f[n] = 2 * k < fr.nt ? -below[k] : above[k];
      A.hmPi[n] = h.value(fr.r[n]) - Pi;
    }
  }
  if (check_T) {
    const std::vector<double> Tf = operator_T(fr, A.f);
    double dev = 0.0, sc = 0.0;
    for (int j = 0; j < fr.ne; ++j)
      for (int k = 0; k < fr.nt; ++k) {
        const std::size_t n = fr.idx(j, k);
        sc = std::max(sc, std::abs(A.hmPi[n]));
        if (fr.interior(j, k)) dev = std::max(dev, std::abs(Tf[n] - A.hmPi[n]));
      }
    A.Tf_dev = dev / std::max(sc, 1e-300);
  }
  return A;
}

double continuous_grad_sq(const RadialTestFunction& h) {
  if (!h.analytic) return h.grad_l2_sq();
  auto integrand = [&](double r) {
    const double d = h.deriv(r);
    return kFourPi * r * r * d * d;
  };
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double rm = h.grid->r_max;
  double s = GK::integrate(integrand, 0.0, rm, 20, 1e-13);
  boost::math::quadrature::exp_sinh<double> es;
  s += es.integrate([&](double x) { return integrand(rm + x); }, 0.0, INFINITY);
  return s;
}

HardyReport hardy_control_check(const AntonovFrame& fr, const RadialTestFunction& h) {
  const AntonovFunction A = antonov_f(fr, h);
  const std::size_t n = fr.size();
  std::vector<double> gI(n), gP(n), gX(n), gB(n), gBa(n);
  for (int j = 0; j < fr.ne; ++j)
    for (int k = 0; k < fr.nt; ++k) {
      const std::size_t q = fr.idx(j, k);
      const double Fp = fr.Fp[j], r = fr.r[q], u = fr.u[q], gam = fr.gam[q], f = A.f[q], hp = A.hmPi[q];
      const double core = Fp * f * f / (r * r * r * r * u * u * u * u * gam);
      gI[q] = Fp * hp * hp;
      gP[q] = 3.0 * fr.rho[q] * core;
      gX[q] = 3.0 * fr.dphi[q] / (r * gam * gam) * core;
      const double g = r * r * r * u * u * u;
      const double Tg = 3.0 * u * u / gam - 3.0 * r * fr.dphi[q];
      const double T2g = -3.0 / (r * u * gam) * (fr.d2phi[q] + fr.dphi[q] / r * (2.0 + 1.0 / (gam * gam)));
      const double a = Tg / g;
      gB[q] = Fp * (2.0 * f * hp * a + f * f * (T2g / g - a * a));
      gBa[q] = std::abs(gB[q]);
    }
  HardyReport R;
  R.I = fr.integrate(gI);
  R.P = fr.integrate(gP);
  R.X = fr.integrate(gX);
  R.lower = R.P + R.X;
  R.grad_sq = continuous_grad_sq(h);
  R.upper = std::sqrt(R.grad_sq * std::max(0.0, R.P));
  R.lower_slack = R.I - R.lower;
  R.upper_slack = R.upper - R.I;
  R.chain_slack = R.grad_sq - R.I - R.X;
  R.boundary_residual = fr.integrate(gB);
  R.boundary_abs = fr.integrate(gBa);
  R.f_boundary = A.boundary_max;
  R.scale = R.grad_sq;
  return R;
}

// ------------------------------------------------------------ Rayleigh quotient

CoercivityReport assemble_and_minimize(const SteadyState& st, const std::vector<RadialTestFunction>& basis,
                                       const HessianData* hd) {
  if (basis.empty()) fail(ErrorKind::IllConditionedBasis, "empty basis");
  std::unique_ptr<HessianData> own;
  if (!hd) {
    own = std::make_unique<HessianData>(st);
    hd = own.get();
  }
  const RadialGrid& g = *st.phi_Q.grid();
  const std::size_t n = basis.size();
  std::vector<std::vector<double>> B;
  B.reserve(n);
  for (const auto& b : basis) B.push_back(b.values);
  const auto I = hd->I_matrix(B);
  Eigen::MatrixXd G(n, n), A(n, n);
  for (std::size_t a = 0; a < n; ++a) {
    const std::vector<double> Kb = apply_stiffness(g, B[a]);
    for (std::size_t b = 0; b < n; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < Kb.size(); ++i) s += Kb[i] * B[b][i];
      G(a, b) = s;
    }
  }
  G = 0.5 * (G + G.transpose());
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) A(a, b) = G(a, b) - I[a][b];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> gs(G, Eigen::EigenvaluesOnly);
  const double gmin = gs.eigenvalues()(0), gmax = gs.eigenvalues()(n - 1);
  if (!(gmin > 1e-13 * gmax)) fail(ErrorKind::IllConditionedBasis, "Gram matrix of the basis is singular");
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, G);
  if (es.info() != Eigen::Success) fail(ErrorKind::IllConditionedBasis, "generalized eigensolver failed");
  CoercivityReport R;
  R.dimension = static_cast<int>(n);
  R.lambda_min = es.eigenvalues()(0);
  R.C0 = R.lambda_min;
  R.gram_condition = gmax / gmin;
  R.coefficients.resize(n);
  for (std::size_t a = 0; a < n; ++a) R.coefficients[a] = es.eigenvectors()(a, 0);
  R.trace.emplace_back(R.dimension, R.lambda_min);
  return R;
}

std::vector<RadialTestFunction> bump_basis(const GridPtr& g, int n, double r_lo, double r_hi) {
  std::vector<RadialTestFunction> out;
  const int n_wide = n / 4, n_fine = n - n_wide;
  const double d = (r_hi - r_lo) / n_fine;
  for (int k = 0; k < n_fine; ++k) out.push_back(RadialTestFunction::bump(g, r_lo + (k + 0.5) * d, 2.0 * d));
  if (n_wide > 0) {
    const double dw = (r_hi - r_lo) / n_wide;
    for (int k = 0; k < n_wide; ++k) out.push_back(RadialTestFunction::bump(g, r_lo + (k + 0.5) * dw, 4.0 * d));
  }
  return out;
}

CoercivityReport refinement_trace(const SteadyState& st, int n0, int doublings, double r_hi) {
  HessianData hd(st);
  CoercivityReport last;
  std::vector<std::pair<int, double>> trace;
  for (int m = 0; m <= doublings; ++m) {
    last = assemble_and_minimize(st, bump_basis(st.phi_Q.grid(), n0 << m, 0.0, r_hi), &hd);
    trace.emplace_back(last.dimension, last.lambda_min);
  }
  last.trace = trace;
  return last;
}

// ------------------------------------------------------------ symmetrization

namespace {

// meas{ phi <= -t } for the interpolant (t > 0), elements linear in 1/r.
double sublevel_measure(const RadialPotential& phi, double t) {
  const RadialGrid& g = *phi.grid();
  const double c = kFourPi / 3.0;
  auto vol = [&](double lo, double hi) { return c * (hi * hi * hi - lo * lo * lo); };
  double m = 0.0;
  if (phi[0] <= -t) m += vol(0.0, g.r[0]);
  for (std::size_t i = 0; i + 1 < g.size(); ++i) {
    const double a = g.r[i], b = g.r[i + 1], pa = phi[i], pb = phi[i + 1];
    const bool ina = pa <= -t, inb = pb <= -t;
    if (ina && inb) {
      m += vol(a, b);
    } else if (ina || inb) {
      // phi linear in s = 1/r
      const double sa = 1.0 / a, sb = 1.0 / b;
      const double ss = sb + (-t - pb) * (sa - sb) / (pa - pb);
      const double rs = std::clamp(1.0 / ss, a, b);
      m += ina ? vol(a, rs) : vol(rs, b);
    }
  }
  const double A = phi.tail_mass();
  if (A > 0.0) {
    const double re = A / (kFourPi * t);
    if (re > g.r_max) m += vol(g.r_max, re);
  }
  return m;
}

}  // namespace

RadialPotential symmetrize_potential(const RadialPotential& phi, double vol_tol) {
  const auto& v = phi.values();
  for (double x : v)
    if (x > 0.0) fail(ErrorKind::InvalidPotential, "symmetrization needs a nonpositive potential");
  bool monotone = phi.continuous_tail();
  for (std::size_t i = 0; i + 1 < v.size() && monotone; ++i) monotone = v[i] <= v[i + 1];
  if (monotone) return phi;

  std::vector<double> lv;
  for (double x : v)
    if (x < 0.0) lv.push_back(-x);
  std::sort(lv.begin(), lv.end(), std::greater<>());
  lv.erase(std::unique(lv.begin(), lv.end()), lv.end());
  if (lv.empty()) return phi;
  const double top = lv.front();
  const bool plateau = v[0] == -top;  // minimum on the central ball: phi^# starts flat
  auto radius = [&](double t) { return std::cbrt(3.0 * sublevel_measure(phi, t) / kFourPi); };

  // (level, radius) pairs, levels descending; the very top has zero measure without a plateau
  std::vector<double> levels(lv.begin() + (plateau ? 0 : 1), lv.end());
  if (!plateau)
    for (int k = 14; k >= 1; --k) levels.push_back(top * (1.0 - std::pow(10.0, -k)));
  std::sort(levels.begin(), levels.end(), std::greater<>());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  std::vector<std::pair<double, double>> pts;
  for (double t : levels) pts.emplace_back(t, radius(t));

  // Bisect level intervals until the interpolant (linear in 1/r) matches the exact sublevel volume.
  // done[k] marks the interval (k, k+1) as accepted so later passes skip it.
  std::vector<char> done(pts.size(), 0);
  for (int pass = 0; pass < 40; ++pass) {
    std::vector<std::pair<double, double>> next;
    std::vector<char> nd;
    bool changed = false;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      next.push_back(pts[k]);
      nd.push_back(1);
      if (k + 1 == pts.size() || done[k]) continue;
      const auto [t0, R0] = pts[k];
      const auto [t1, R1] = pts[k + 1];
      if (!(R0 > 0.0) || t0 - t1 <= 1e-14 * t0 || pts.size() > 200000) continue;
      const double tm = 0.5 * (t0 + t1), Rm = radius(tm);
      const double Ri = 2.0 / (1.0 / R0 + 1.0 / R1);
      if (std::abs(Rm * Rm * Rm - Ri * Ri * Ri) > vol_tol * R1 * R1 * R1) {
        nd.back() = 0;
        next.emplace_back(tm, Rm);
        nd.push_back(0);
        changed = true;
      }
    }
    pts.swap(next);
    done.swap(nd);
    if (!changed) break;
  }

  std::vector<double> nodes, vals;
  for (const auto& [t, R] : pts) {
    if (!(R > 0.0)) continue;
    if (!nodes.empty() && R <= nodes.back() * (1.0 + 1e-13)) {
      vals.back() = -t;  // coincident radius: keep the lower level
      continue;
    }
    nodes.push_back(R);
    vals.push_back(-t);
  }
  GridPtr g = std::make_shared<const RadialGrid>(RadialGrid::from_nodes(nodes));
  return RadialPotential(g, vals);
}

double jacobian_continuous(const RadialPotential& phi, double e, int gl) {
  if (!(e < 0.0)) fail(ErrorKind::DomainError, "continuous Jacobian needs e < 0");
  const RadialGrid& g = *phi.grid();
  const double c = kFourPi / 3.0;
  double s = 0.0;
  if (phi[0] < e) s += c * g.r[0] * g.r[0] * g.r[0] * c * U3(e - phi[0]);
  auto piece = [&](double lo, double hi, auto&& pot) {
    return gl_integrate([&](double r) { return kFourPi * r * r * c * U3(e - pot(r)); }, lo, hi, gl);
  };
  for (std::size_t i = 0; i + 1 < g.size(); ++i) {
    const double a = g.r[i], b = g.r[i + 1], pa = phi[i], pb = phi[i + 1];
    auto pot = [&](double r) { return pa + g.right_weight(static_cast<int>(i), r) * (pb - pa); };
    const bool ina = pa < e, inb = pb < e;
    if (ina && inb) {
      s += piece(a, b, pot);
    } else if (ina || inb) {
      const double sa = 1.0 / a, sb = 1.0 / b;
      const double rs = std::clamp(1.0 / (sb + (e - pb) * (sa - sb) / (pa - pb)), a, b);
      s += ina ? piece(a, rs, pot) : piece(rs, b, pot);
    }
  }
  const double A = phi.tail_mass();
  if (A > 0.0) {
    const double re = A / (kFourPi * -e);
    if (re > g.r_max) s += piece(g.r_max, re, [&](double r) { return -A / (kFourPi * r); });
  }
  return s;
}

// ------------------------------------------------------------ Taylor scan

std::vector<TaylorRow> taylor_remainder_scan(const SteadyState& st, const HessianData& hd, const RadialTestFunction& h,
                                             const std::vector<double>& eps) {
  const double d2 = second_variation(hd, st, h);
  const double J0 = functional_J(st.phi_Q, st, false).J;
  std::vector<TaylorRow> rows;
  for (double e : eps) {
    TaylorRow row;
    row.eps = e;
    try {
      const double J = functional_J(st.phi_Q.plus(h.values, e), st, false).J;
      row.dJ = std::abs(J - J0);
      row.R_raw = std::abs(J - J0 - 0.5 * e * e * d2);
      row.R = row.R_raw / (e * e);
    } catch (const Error&) {
      row.admissible = false;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace rvp
