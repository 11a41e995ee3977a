#include "rvp/rearrangement.hpp"

#include <algorithm>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <numeric>

namespace rvp {

// ---------------------------------------------------------------- PhaseDensity

PhaseDensity PhaseDensity::zero(GridPtr g) {
  PhaseDensity f;
  f.offsets.assign(g->size() + 1, 0);
  f.grid = std::move(g);
  return f;
}

PhaseDensity PhaseDensity::from_segments(GridPtr g, const std::vector<std::vector<double>>& w_hi,
                                         const std::vector<std::vector<double>>& vals) {
  PhaseDensity f;
  const std::size_t n = g->size();
  f.offsets.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    f.offsets[i] = f.w_hi.size();
    if (i < w_hi.size()) {
      double prev = 0.0;
      for (std::size_t k = 0; k < w_hi[i].size(); ++k) {
        double hi = w_hi[i][k], v = vals[i][k];
        if (!(hi > prev)) continue;  // empty segment
        if (f.w_hi.size() > f.offsets[i] && f.val.back() == v) {
          f.w_hi.back() = hi;  // merge equal neighbours
        } else {
          f.w_hi.push_back(hi);
          f.val.push_back(v);
        }
        prev = hi;
      }
      while (f.w_hi.size() > f.offsets[i] && f.val.back() == 0.0) {  // trailing zeros carry nothing
        f.w_hi.pop_back();
        f.val.pop_back();
      }
    }
  }
  f.offsets[n] = f.w_hi.size();
  f.grid = std::move(g);
  return f;
}

PhaseDensity PhaseDensity::sample(GridPtr g, const std::function<double(double, double)>& fn, double w_max,
                                  int nw) {
  std::vector<std::vector<double>> hi(g->size()), vals(g->size());
  for (std::size_t i = 0; i < g->size(); ++i) {
    for (int k = 0; k < nw; ++k) {
      double wl = w_max * k / nw, wh = w_max * (k + 1) / nw;
      hi[i].push_back(wh);
      vals[i].push_back(fn(g->r[i], 0.5 * (wl + wh)));
    }
  }
  return from_segments(std::move(g), hi, vals);
}

double PhaseDensity::segment_measure(std::size_t i, std::size_t k) const {
  double lo = w_lo(k, i), hi = w_hi[k];
  return grid->W[i] * kFourPi * (hi * hi * hi - lo * lo * lo) / 3.0;
}

double PhaseDensity::value(std::size_t i, double w) const {
  auto b = w_hi.begin() + offsets[i], e = w_hi.begin() + offsets[i + 1];
  auto it = std::upper_bound(b, e, w);
  if (it == e) return 0.0;
  return val[it - w_hi.begin()];
}

namespace {
template <class F>
double accumulate_segments(const PhaseDensity& f, F&& per_segment) {
  std::vector<double> parts(f.nodes(), 0.0);
  for (std::size_t i = 0; i < f.nodes(); ++i) {
    double s = 0.0;
    for (std::size_t k = f.offsets[i]; k < f.offsets[i + 1]; ++k) s += per_segment(i, k, f.w_lo(k, i), f.w_hi[k], f.val[k]);
    parts[i] = f.grid->W[i] * s;
  }
  return pairwise_sum(parts);
}
constexpr double kVol = kFourPi / 3.0;
}  // namespace

double PhaseDensity::l1() const {
  return accumulate_segments(*this, [](auto, auto, double lo, double hi, double v) {
    return std::abs(v) * kVol * (hi * hi * hi - lo * lo * lo);
  });
}

double PhaseDensity::integral() const {
  return accumulate_segments(*this, [](auto, auto, double lo, double hi, double v) {
    return v * kVol * (hi * hi * hi - lo * lo * lo);
  });
}

double PhaseDensity::lp_pow(double p) const {
  return accumulate_segments(*this, [p](auto, auto, double lo, double hi, double v) {
    return std::pow(std::abs(v), p) * kVol * (hi * hi * hi - lo * lo * lo);
  });
}

double PhaseDensity::lp(double p) const { return std::pow(lp_pow(p), 1.0 / p); }

double PhaseDensity::linf() const {
  double m = 0.0;
  for (double v : val) m = std::max(m, std::abs(v));
  return m;
}

double PhaseDensity::distribution(double s) const {
  return accumulate_segments(*this, [s](auto, auto, double lo, double hi, double v) {
    return v > s ? kVol * (hi * hi * hi - lo * lo * lo) : 0.0;
  });
}

double distribution_function(const PhaseDensity& f, double s) {
  if (s < 0.0) fail(ErrorKind::DomainError, "distribution level must be nonnegative");
  return f.distribution(s);
}

double PhaseDensity::kinetic() const {
  return accumulate_segments(*this, [](auto, auto, double lo, double hi, double v) {
    return v * kFourPi * (Kin(hi) - Kin(lo));
  });
}

double PhaseDensity::gamma_moment() const {
  return accumulate_segments(*this, [](auto, auto, double lo, double hi, double v) {
    return std::abs(v) * kFourPi * (Sint(hi) - Sint(lo));
  });
}

double PhaseDensity::speed_moment() const {
  return accumulate_segments(*this, [](auto, auto, double lo, double hi, double v) {
    return std::abs(v) * kPi * (hi * hi * hi * hi - lo * lo * lo * lo);
  });
}

double PhaseDensity::casimir(const std::function<double(double)>& beta) const {
  return accumulate_segments(*this, [&](auto, auto, double lo, double hi, double v) {
    return beta(v) * kVol * (hi * hi * hi - lo * lo * lo);
  });
}

std::vector<double> PhaseDensity::density() const {
  std::vector<double> rho(nodes(), 0.0);
  for (std::size_t i = 0; i < nodes(); ++i) {
    double s = 0.0;
    for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) {
      double lo = w_lo(k, i), hi = w_hi[k];
      s += val[k] * kVol * (hi * hi * hi - lo * lo * lo);
    }
    rho[i] = s;
  }
  return rho;
}

RadialDensity PhaseDensity::radial_density() const { return RadialDensity(grid, density()); }

PhaseDensity PhaseDensity::scaled(double c) const {
  PhaseDensity g = *this;
  for (double& v : g.val) v *= c;
  return g;
}

PhaseDensity PhaseDensity::minus(const PhaseDensity& o) const {
  if (grid != o.grid && grid->r != o.grid->r) fail(ErrorKind::DomainError, "densities live on different grids");
  std::vector<std::vector<double>> hi(nodes()), vals(nodes());
  for (std::size_t i = 0; i < nodes(); ++i) {
    std::size_t a = offsets[i], ae = offsets[i + 1], b = o.offsets[i], be = o.offsets[i + 1];
    while (a < ae || b < be) {
      double wa = a < ae ? w_hi[a] : INFINITY, wb = b < be ? o.w_hi[b] : INFINITY;
      double va = a < ae ? val[a] : 0.0, vb = b < be ? o.val[b] : 0.0;
      double w = std::min(wa, wb);
      hi[i].push_back(w);
      vals[i].push_back(va - vb);
      if (wa == w) ++a;
      if (wb == w) ++b;
    }
  }
  return from_segments(grid, hi, vals);
}

bool PhaseDensity::nonnegative() const {
  return std::all_of(val.begin(), val.end(), [](double v) { return v >= 0.0; });
}

// ----------------------------------------------------------- DecreasingProfile

double DecreasingProfile::value(double t) const {
  if (v.empty() || t < 0.0 || t >= s.back()) return 0.0;
  std::size_t k = std::upper_bound(s.begin(), s.end(), t) - s.begin() - 1;
  return v[k];
}

double DecreasingProfile::G(double t) const {
  double g = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (t <= s[k]) break;
    g += v[k] * (std::min(t, s[k + 1]) - s[k]);
  }
  return g;
}

double DecreasingProfile::distribution(double level) const {
  if (v.empty()) return 0.0;
  // v is strictly decreasing: first index with v <= level.
  std::size_t k = std::partition_point(v.begin(), v.end(), [&](double x) { return x > level; }) - v.begin();
  return s[k];
}

double DecreasingProfile::l1() const { return G(support()); }

double DecreasingProfile::lp(double p) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) acc += std::pow(v[k], p) * (s[k + 1] - s[k]);
  return std::pow(acc, 1.0 / p);
}

double DecreasingProfile::casimir(const std::function<double(double)>& beta) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) acc += beta(v[k]) * (s[k + 1] - s[k]);
  return acc;
}

DecreasingProfile schwarz_rearrange(const PhaseDensity& f) {
  struct Seg {
    double v, m;
  };
  std::vector<Seg> segs;
  for (std::size_t i = 0; i < f.nodes(); ++i)
    for (std::size_t k = f.offsets[i]; k < f.offsets[i + 1]; ++k) {
      if (f.val[k] < 0.0) fail(ErrorKind::InvalidDensity, "rearrangement of a signed density");
      double m = f.segment_measure(i, k);
      if (f.val[k] > 0.0 && m > 0.0) segs.push_back({f.val[k], m});
    }
  std::stable_sort(segs.begin(), segs.end(), [](const Seg& a, const Seg& b) { return a.v > b.v; });
  DecreasingProfile p;
  if (segs.empty()) return p;
  p.s.push_back(0.0);
  double acc = 0.0;
  for (std::size_t j = 0; j < segs.size();) {
    double m = 0.0, v = segs[j].v;
    while (j < segs.size() && segs[j].v == v) m += segs[j++].m;
    acc += m;
    p.v.push_back(v);
    p.s.push_back(acc);
  }
  return p;
}

// --------------------------------------------------------------- JacobianTable

JacobianTable::JacobianTable(const RadialPotential& phi, int n_table) : phi_(phi) {
  const RadialGrid& g = *phi_.grid();
  const std::size_t n = g.size();
  sidx_.resize(n);
  std::iota(sidx_.begin(), sidx_.end(), 0);
  std::stable_sort(sidx_.begin(), sidx_.end(), [&](auto a, auto b) { return phi_[a] < phi_[b]; });
  for (auto i : sidx_) {
    sphi_.push_back(phi_[i]);
    sW_.push_back(g.W[i]);
  }
  phi_min_ = std::min(sphi_.front(), 0.0);
  c_ = std::max(phi_.tail_mass(), 0.0) / kFourPi;
  phiN_ = -c_ / g.r_max;
  if (phi_min_ >= 0.0) return;  // no negative energies: empty table
  const int n1 = n_table / 3, n2 = n_table - n1;
  for (int k = 0; k < n1; ++k) te_.push_back(phi_min_ + (0.5 * phi_min_ - phi_min_) * k / n1);
  for (int k = 0; k < n2; ++k) te_.push_back(0.5 * phi_min_ * std::pow(1e-9, static_cast<double>(k) / (n2 - 1)));
  for (double e : te_) {
    ta_.push_back(a(e));
    tda_.push_back(da(e));
  }
}

JacobianTable compute_jacobian(const RadialPotential& phi, int n_table) { return JacobianTable(phi, n_table); }

double JacobianTable::tail_integral(double e, int which, double hN) const {
  const double rmax = phi_.grid()->r_max;
  if (c_ <= 0.0 || e <= phiN_ || e >= 0.0) return 0.0;
  const double xe = -e / c_, x1 = 1.0 / rmax, L = std::log(x1 / xe);
  auto integrand = [&](double t) {
    double x = xe * std::exp(t);
    double eta = e + c_ * x;
    double fx = 0.0;
    switch (which) {
      case 0: fx = U3(eta); break;
      case 1: fx = Kker(eta); break;
      case 2: fx = Pint(eta); break;
      case 3: fx = Kker(eta) * hN * rmax * x; break;
    }
    return fx / (x * x * x);
  };
  boost::math::quadrature::tanh_sinh<double> ts;
  double I = ts.integrate(integrand, 0.0, L, 1e-13);
  switch (which) {
    case 0: return 16.0 * kPi * kPi / 3.0 * I;
    case 1: return 16.0 * kPi * kPi * I / kFourPi;  // per unit 4 pi, see da()
    case 2: return 16.0 * kPi * kPi / 3.0 * I;
    default: return 16.0 * kPi * kPi * I / kFourPi;
  }
}

double JacobianTable::a(double e) const {
  if (e <= phi_min_) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < sphi_.size() && sphi_[k] < e; ++k) s += sW_[k] * U3(e - sphi_[k]);
  return kVol * s + tail_integral(e, 0);
}

double JacobianTable::da(double e) const {
  if (e <= phi_min_) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < sphi_.size() && sphi_[k] < e; ++k) s += sW_[k] * Kker(e - sphi_[k]);
  return kFourPi * (s + tail_integral(e, 1));
}

double JacobianTable::A(double e) const {
  if (e <= phi_min_) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < sphi_.size() && sphi_[k] < e; ++k) s += sW_[k] * Pint(e - sphi_[k]);
  return kVol * s + tail_integral(e, 2);
}

double JacobianTable::kernel_moment(double e, const std::vector<double>& h) const {
  if (e <= phi_min_) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < sphi_.size() && sphi_[k] < e; ++k) s += sW_[k] * Kker(e - sphi_[k]) * h[sidx_[k]];
  return s + tail_integral(e, 3, h.back());
}

double JacobianTable::a_interp(double e) const {
  if (e <= phi_min_ || te_.empty()) return 0.0;
  if (e >= te_.back()) return a(e);
  std::size_t k = std::upper_bound(te_.begin(), te_.end(), e) - te_.begin() - 1;
  const double h = te_[k + 1] - te_[k], t = (e - te_[k]) / h;
  const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
  const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
  double y = h00 * ta_[k] + h10 * h * tda_[k] + h01 * ta_[k + 1] + h11 * h * tda_[k + 1];
  return std::clamp(y, ta_[k], ta_[k + 1]);  // keep the interpolant monotone
}

double JacobianTable::sup_value() const {
  if (phi_min_ >= 0.0) return 0.0;
  if (c_ > 0.0) return INFINITY;
  double s = 0.0;
  for (std::size_t k = 0; k < sphi_.size() && sphi_[k] < 0.0; ++k) s += sW_[k] * U3(-sphi_[k]);
  return kVol * s;
}

double JacobianTable::inverse(double s) const {
  if (!(s > 0.0)) fail(ErrorKind::DomainError, "a^{-1}(s) requires s > 0");
  if (te_.empty() || !(s < sup_value())) fail(ErrorKind::DomainError, "s beyond the range of a");
  double lo, hi;
  if (s > ta_.back()) {
    lo = te_.back();
    hi = 0.0;
  } else {
    std::size_t k = std::lower_bound(ta_.begin(), ta_.end(), s) - ta_.begin();
    lo = k == 0 ? phi_min_ : te_[k - 1];
    hi = te_[k];
  }
  double e = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    double f = a(e) - s;
    if (f == 0.0) return e;
    if (f > 0.0) hi = e; else lo = e;
    double d = da(e), en = d > 0.0 ? e - f / d : 0.5 * (lo + hi);
    if (!(en > lo && en < hi)) en = 0.5 * (lo + hi);
    if (std::abs(en - e) <= 1e-16 * std::abs(e) || hi - lo <= 4e-16 * std::abs(e)) return en;
    e = en;
  }
  return e;
}

std::vector<double> JacobianTable::inverse_sorted(const std::vector<double>& s) const {
  std::vector<double> out(s.size());
  double e = phi_min_, sp = 0.0, dp = 0.0;  // previous root, its s and a'
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (j && s[j] < s[j - 1]) fail(ErrorKind::DomainError, "inverse_sorted needs ascending input");
    bool ok = false;
    if (s[j] <= 0.0) {
      out[j] = phi_min_;
      continue;
    }
    if (dp > 0.0 && !(c_ > 0.0 && e > phiN_)) {
      // a and da in one sweep; only valid on the node part (no tail contribution)
      double x = e + (s[j] - sp) / dp;
      for (int it = 0; it < 8 && x < 0.0; ++it) {
        if (c_ > 0.0 && x > phiN_) break;
        double av = 0.0, dv = 0.0;
        for (std::size_t k = 0; k < sphi_.size() && sphi_[k] < x; ++k) {
          const double eta = x - sphi_[k], q = eta * (2.0 + eta), sq = std::sqrt(q);
          av += sW_[k] * q * sq;
          dv += sW_[k] * sq * (1.0 + eta);
        }
        av *= kVol;
        dv *= kFourPi;
        if (!(dv > 0.0)) break;
        const double dx = (av - s[j]) / dv;
        x -= dx;
        if (std::abs(dx) <= 1e-15 * std::abs(x)) {
          ok = x > phi_min_ && x < 0.0 && !(c_ > 0.0 && x > phiN_);
          break;
        }
      }
      if (ok) e = x;
    }
    if (!ok) e = inverse(s[j]);
    out[j] = e;
    sp = s[j];
    dp = da(e);
  }
  return out;
}

std::vector<double> JacobianTable::Phi_sorted(const std::vector<double>& s) const {
  std::vector<double> e = inverse_sorted(s), out(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) out[j] = s[j] > 0.0 ? e[j] * s[j] - A(e[j]) : 0.0;
  return out;
}

double invert_jacobian(const JacobianTable& table, double s) { return table.inverse(s); }

double JacobianTable::lq_pow(double q) const {
  double s = 0.0;
  for (std::size_t k = 0; k < sphi_.size(); ++k) s += sW_[k] * std::pow(std::abs(sphi_[k]), q);
  if (c_ > 0.0 && q > 3.0) s += kFourPi * std::pow(c_, q) * std::pow(phi_.grid()->r_max, 3.0 - q) / (q - 3.0);
  return s;
}

double JacobianTable::decay_bound(double e, double q) const {
  // Chebyshev on meas{|phi| > |e|}, then Holder with exponents q/(q-3) and q/3.
  const double Lq = lq_pow(q), ae = std::abs(e);
  const double meas = Lq / std::pow(ae, q);
  const double inner = std::pow(2.0, 0.5 * q - 1.0) * (std::pow(2.0, 0.5 * q) * std::pow(ae, -0.5 * q) + 1.0) * Lq;
  return kVol * std::pow(meas, (q - 3.0) / q) * std::pow(inner, 3.0 / q);
}

double JacobianTable::inverse_lower_bound(double s, double q) const {
  if (!(s > 0.0)) fail(ErrorKind::DomainError, "s must be positive");
  // decay_bound increases as e -> 0-; solve decay_bound(e) = s in log|e|.
  double lo = std::log(1e-300), hi = std::log(1e300);  // log|e| bracket
  for (int it = 0; it < 300; ++it) {
    double mid = 0.5 * (lo + hi);
    if (decay_bound(-std::exp(mid), q) > s) lo = mid; else hi = mid;
  }
  return -std::exp(hi);
}

// ------------------------------------------------------------ Rearrangement

std::vector<double> level_energies(const DecreasingProfile& profile, const JacobianTable& table) {
  std::vector<double> e(profile.s.size());
  for (std::size_t k = 0; k < e.size(); ++k) e[k] = k == 0 ? table.e_min() : table.inverse(profile.s[k]);
  return e;
}

PhaseDensity energy_rearrange(const DecreasingProfile& profile, const JacobianTable& table) {
  const RadialPotential& phi = table.phi();
  if (profile.empty()) return PhaseDensity::zero(phi.grid());
  std::vector<double> e = level_energies(profile, table);
  const double edge = phi.tail_mass() > 0.0 ? -phi.tail_mass() / (kFourPi * phi.grid()->r_max) : 0.0;
  if (e.back() > edge * (1.0 - 1e-12))
    fail(ErrorKind::SupportOverflow, "rearranged support reaches beyond the radial grid");
  const std::size_t n = phi.size();
  std::vector<std::vector<double>> hi(n), vals(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 1; k < e.size(); ++k) {
      if (e[k] <= phi[i]) continue;
      hi[i].push_back(w_of_eta(e[k] - phi[i]));
      vals[i].push_back(profile.v[k - 1]);
    }
  }
  return PhaseDensity::from_segments(phi.grid(), hi, vals);
}

PhaseDensity energy_rearrange(const DecreasingProfile& profile, const RadialPotential& phi) {
  return energy_rearrange(profile, JacobianTable(phi));
}

double pseudo_inverse(const std::function<double(double)>& comp, double e_lo, double s) {
  double lo = e_lo, hi = 0.0;
  double probe = e_lo + 1e-14 * std::max(1.0, std::abs(e_lo));
  if (!(comp(probe) > s)) return e_lo;
  lo = probe;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::abs(lo); ++it) {
    double mid = 0.5 * (lo + hi);
    if (comp(mid) > s) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double pseudo_inverse(const DecreasingProfile& profile, const JacobianTable& table, double s) {
  // f*(a(e)) > s  <=>  a(e) < meas{f* > s}  <=>  e < a^{-1}(meas{f* > s}).
  double m = profile.distribution(s);
  if (m <= 0.0) return table.e_min();
  return table.inverse(m);
}

ChangeOfVariables energy_space_integral(const std::function<double(double)>& alpha,
                                        const std::function<double(double)>& G, const JacobianTable& table,
                                        std::vector<double> s_breaks, int gl_points) {
  ChangeOfVariables out{0.0, 0.0, 0.0};
  if (table.table_e().empty()) return out;
  const RadialPotential& phi = table.phi();
  std::sort(s_breaks.begin(), s_breaks.end());
  s_breaks.erase(std::remove_if(s_breaks.begin(), s_breaks.end(), [](double s) { return !(s > 0.0); }),
                 s_breaks.end());
  if (s_breaks.empty()) return out;
  const double S = s_breaks.back();
  const double eS = table.inverse(S);
  // Energy breakpoints: images of the s-breaks and every node potential below eS.
  std::vector<double> eb{table.e_min()};
  for (double s : s_breaks) eb.push_back(table.inverse(s));
  for (std::size_t i = 0; i < phi.size(); ++i)
    if (phi[i] > table.e_min() && phi[i] < eS) eb.push_back(phi[i]);
  std::sort(eb.begin(), eb.end());
  eb.erase(std::unique(eb.begin(), eb.end()), eb.end());
  std::vector<double> sb{0.0};
  for (double e : eb) if (e > table.e_min()) sb.push_back(table.a(e));
  for (double s : s_breaks) sb.push_back(s);
  std::sort(sb.begin(), sb.end());
  sb.erase(std::unique(sb.begin(), sb.end()), sb.end());

  // Each panel uses x = lo + (hi-lo) t^2 to absorb square-root onsets at the left end.
  auto panel = [&](auto&& f, double lo, double hi) {
    return gl_integrate([&](double t) { return 2.0 * t * (hi - lo) * f(lo + (hi - lo) * t * t); }, 0.0, 1.0,
                        gl_points);
  };
  std::vector<double> parts;
  for (std::size_t k = 0; k + 1 < sb.size(); ++k) {
    double lo = sb[k], hi = sb[k + 1];
    parts.push_back(panel([&](double s) { return s > 0.0 ? alpha(table.inverse(s)) * G(s) : 0.0; }, lo, hi));
  }
  out.s_route = pairwise_sum(parts);
  parts.clear();
  for (std::size_t k = 0; k + 1 < eb.size(); ++k)
    parts.push_back(panel([&](double e) { return alpha(e) * G(table.a(e)) * table.da(e); }, eb[k], eb[k + 1]));
  out.e_route = pairwise_sum(parts);
  parts.assign(phi.size(), 0.0);
  // Raw route: node by node integral over speeds of alpha(e) G(a(e)). The interpolated a is
  // clamped to the exact image of each energy panel so G never sees the wrong side of a break.
  std::vector<double> ab(eb.size());
  for (std::size_t k = 0; k < eb.size(); ++k) ab[k] = table.a(eb[k]);
  for (std::size_t i = 0; i < phi.size(); ++i) {
    if (phi[i] >= eS) continue;
    double acc = 0.0;
    std::size_t k0 = std::upper_bound(eb.begin(), eb.end(), phi[i]) - eb.begin();
    double wl = 0.0;
    for (std::size_t k = k0; k < eb.size(); ++k) {
      double wh = w_of_eta(eb[k] - phi[i]);
      double slo = k == 0 ? 0.0 : ab[k - 1], shi = ab[k];
      acc += gl_integrate(
          [&](double w) {
            double e = std::sqrt(1.0 + w * w) - 1.0 + phi[i];
            return alpha(e) * G(std::clamp(table.a_interp(e), slo, shi)) * kFourPi * w * w;
          },
          wl, wh, gl_points);
      wl = wh;
    }
    parts[i] = phi.grid()->W[i] * acc;
  }
  out.raw_route = pairwise_sum(parts);
  return out;
}

double jacobian_lambda_derivative(const RadialPotential& phi, const std::vector<double>& h, double lambda, double e) {
  if (!(e < 0.0)) fail(ErrorKind::DomainError, "energy must be negative");
  JacobianTable t(phi.plus(h, lambda), 8);
  return -kFourPi * t.kernel_moment(e, h);
}

double jacobian_inverse_lambda_derivative(const RadialPotential& phi, const std::vector<double>& h, double lambda,
                                          double s) {
  if (!(s > 0.0)) fail(ErrorKind::DomainError, "s must be positive");
  JacobianTable t(phi.plus(h, lambda));
  double e = t.inverse(s);
  return t.kernel_moment(e, h) / (t.da(e) / kFourPi);
}

}  // namespace rvp
