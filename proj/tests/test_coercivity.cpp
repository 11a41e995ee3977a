#include <cmath>
#include <random>

#include "doctest.h"
#include "rvp/fixtures.hpp"
#include "rvp/coercivity.hpp"

using namespace rvp;

namespace {

const AntonovFrame& frame() {
  static const AntonovFrame fr = AntonovFrame::build(fixture::golden());
  return fr;
}

const HessianData& hessian() {
  static const HessianData hd(fixture::golden());
  return hd;
}

// Widths >= 0.8 are resolved by the default 64-node t lines; narrower h need a finer frame.
RadialTestFunction random_gaussian(const SteadyState& st, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  return RadialTestFunction::gaussian(st.phi_Q.grid(), 1.2 * st.R_Q * U(rng), 0.8 + 2.0 * U(rng),
                                      U(rng) < 0.5 ? 1.0 : -1.0);
}

}  // namespace

TEST_CASE("frame geometry") {
  const auto& fr = frame();
  for (int j = 1; j < fr.ne; ++j) CHECK(fr.re[j] > fr.re[j - 1]);
  for (std::size_t n = 0; n < fr.size(); ++n) {
    CHECK(fr.u[n] > 0.0);
    CHECK(fr.r[n] > 0.0);
  }
  const auto& st = fixture::golden();
  for (int j = 0; j < fr.ne; ++j) CHECK(st.shoot.phi_at(fr.re[j]) == doctest::Approx(fr.e[j]).epsilon(1e-10));
}

TEST_CASE("operator T: constants, g = r^3 u^3, second application") {
  const auto& fr = frame();
  const auto& st = fixture::golden();
  std::vector<double> one(fr.size(), 1.0), g(fr.size());
  for (std::size_t n = 0; n < fr.size(); ++n) g[n] = std::pow(fr.r[n] * fr.u[n], 3);
  const auto T1 = operator_T(fr, one);
  const auto Tg = operator_T(fr, g);
  const auto TTg = operator_T(fr, Tg);
  double c0 = 0.0, d1 = 0.0, d2 = 0.0;
  const int skip2 = 2 * fr.edge_skip;  // T(Tg) reads T values up to one stencil half-width inward
  for (int j = 0; j < fr.ne; ++j)
    for (int k = 0; k < fr.nt; ++k) {
      const auto n = fr.idx(j, k);
      if (!fr.interior(j, k)) continue;
      c0 = std::max(c0, std::abs(T1[n]));
      d1 = std::max(d1, std::abs(Tg[n] - Tg_closed(st, fr.r[n], fr.e[j])));
      if (k >= skip2 && k < fr.nt - skip2) {
        const double c = T2g_closed(st, fr.r[n], fr.e[j]);
        d2 = std::max(d2, std::abs(TTg[n] - c) / std::abs(c));
      }
    }
  CHECK(c0 < 1e-10);
  CHECK(d1 < 1e-4);
  CHECK(d2 < 1e-3);
}

TEST_CASE("operator T against a finite-difference oracle for smooth f") {
  const auto& fr = frame();
  const auto& st = fixture::golden();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    const double a = U(rng), b = U(rng), c = U(rng), k = 0.5 + 0.5 * std::abs(U(rng));
    auto f = [=](double r, double e) { return a * std::sin(k * r) + b * r * r * e + c * std::exp(-r * r / 4.0); };
    std::vector<double> fv(fr.size());
    for (int j = 0; j < fr.ne; ++j)
      for (int q = 0; q < fr.nt; ++q) fv[fr.idx(j, q)] = f(fr.r[fr.idx(j, q)], fr.e[j]);
    const auto Tf = operator_T(fr, fv);
    double dev = 0.0, mag = 0.0;
    for (int j = fr.bottom_skip; j < fr.ne; j += 5)
      for (int q = fr.edge_skip; q < fr.nt - fr.edge_skip; q += 3) {
        const auto n = fr.idx(j, q);
        const double o = operator_T_at(st, f, fr.r[n], fr.e[j]);
        dev = std::max(dev, std::abs(Tf[n] - o));
        mag = std::max(mag, std::abs(o));
      }
    CHECK(dev <= 1e-6 * std::max(1.0, mag));
  }
}

TEST_CASE("antonov_f: constants vanish, boundary vanishing, Tf = h - Pi h") {
  const auto& fr = frame();
  const auto& st = fixture::golden();
  auto cst = RadialTestFunction::from_callable(st.phi_Q.grid(), [](double) { return std::make_pair(0.7, 0.0); });
  const auto A0 = antonov_f(fr, cst);
  double fm = 0.0;
  for (double x : A0.f) fm = std::max(fm, std::abs(x));
  CHECK(fm < 1e-12);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    const auto h = random_gaussian(st, rng);
    const auto A = antonov_f(fr, h, true);
    CHECK(A.boundary_max < 1e-6);
    CHECK(A.Tf_dev < 1e-4);
  }
  const auto narrow = RadialTestFunction::gaussian(st.phi_Q.grid(), 2.0, 0.4);
  CHECK(antonov_f(fr, narrow, true).Tf_dev > 1e-4);
  CHECK(antonov_f(AntonovFrame::build(st, 48, 128), narrow, true).Tf_dev < 1e-4);
}

TEST_CASE("Hardy control") {
  const auto& fr = frame();
  const auto& st = fixture::golden();
  SUBCASE("h = 0") {
    const auto H = hardy_control_check(fr, RadialTestFunction::zero(st.phi_Q.grid()));
    CHECK(H.I == 0.0);
    CHECK(H.P == 0.0);
    CHECK(H.X == 0.0);
    CHECK(H.upper == 0.0);
  }
  SUBCASE("exterior support") {
    const auto h = RadialTestFunction::bump(st.phi_Q.grid(), 1.5 * st.R_Q + 2.0, 1.0);
    const auto H = hardy_control_check(fr, h);
    CHECK(std::abs(H.I) < 1e-14);
    CHECK(std::abs(H.P) < 1e-14);
    CHECK(H.grad_sq > 0.0);
  }
  SUBCASE("random h") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 5; ++trial) {
      const auto h = random_gaussian(st, rng);
      const auto H = hardy_control_check(fr, h);
      CHECK(H.lower_slack >= -1e-6 * H.scale);
      CHECK(H.upper_slack >= -1e-6 * H.scale);
      CHECK(H.chain_slack >= -1e-6 * H.scale);
      CHECK(std::abs(H.boundary_residual) <= 1e-5 * H.scale);
      // continuous I agrees with the exact discrete Hessian form
      CHECK(H.I == doctest::Approx(hessian().I(h.values, h.values)).epsilon(2e-3));
    }
  }
}

TEST_CASE("Rayleigh quotient") {
  const auto& st = fixture::golden();
  const auto& g = st.phi_Q.grid();
  SUBCASE("single element") {
    const auto h = RadialTestFunction::bump(g, 0.4 * st.R_Q, 0.3 * st.R_Q);
    const auto R = assemble_and_minimize(st, {h}, &hessian());
    CHECK(R.dimension == 1);
    CHECK(R.lambda_min == doctest::Approx(second_variation(hessian(), st, h) / h.grad_l2_sq()).epsilon(1e-10));
  }
  SUBCASE("exterior basis") {
    std::vector<RadialTestFunction> b;
    for (int k = 0; k < 8; ++k) b.push_back(RadialTestFunction::bump(g, 1.1 * st.R_Q + 1.0 + 0.5 * k, 0.8));
    CHECK(std::abs(assemble_and_minimize(st, b, &hessian()).lambda_min - 1.0) < 1e-6);
  }
  SUBCASE("dependent basis") {
    const auto h = RadialTestFunction::bump(g, 0.4 * st.R_Q, 0.3 * st.R_Q);
    CHECK_THROWS_AS(assemble_and_minimize(st, {h, h.scaled(2.0)}, &hessian()), Error);
  }
  SUBCASE("refinement") {
    const auto R = refinement_trace(st, 20, 1, 1.5 * st.R_Q);
    REQUIRE(R.trace.size() == 2);
    CHECK(R.trace[0].second > 0.0);
    CHECK(R.trace[1].second > 0.0);
    CHECK(std::abs(R.trace[1].second - R.trace[0].second) < 0.2 * R.trace[0].second);
    CHECK(R.coefficients.size() == 40);
  }
}

TEST_CASE("potential symmetrization") {
  const auto& st = fixture::golden();
  const auto& g = st.phi_Q.grid();
  SUBCASE("monotone input is unchanged") {
    const auto ps = symmetrize_potential(st.phi_Q);
    CHECK(ps.values() == st.phi_Q.values());
  }
  SUBCASE("double well") {
    std::vector<double> v(g->size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double r = g->r[i];
      v[i] = -0.3 * std::exp(-r * r) - 0.5 * std::exp(-(r - 3) * (r - 3)) - 0.02 / (1 + r);
    }
    RadialPotential phi(g, v);
    const auto ps = symmetrize_potential(phi);
    for (int k = 0; k < 20; ++k) {
      const double e = -0.52 + 0.5 * (k + 0.5) / 20.0;
      const double a1 = jacobian_continuous(phi, e), a2 = jacobian_continuous(ps, e);
      CHECK(std::abs(a2 - a1) <= 1e-6 * a1);
    }
    CHECK(ps.grad_l2() <= phi.grad_l2());
    CHECK(functional_J(ps, st, false).J <= functional_J(phi, st, false).J);
  }
  SUBCASE("minimum near the centre: near-top levels interleave with node values") {
    std::vector<double> v(g->size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double r = g->r[i];
      v[i] = -0.17 * std::exp(-std::pow((r - 0.92) / 1.04, 2)) - 0.33 * std::exp(-std::pow((r - 0.14) / 0.63, 2)) -
             0.056 / (1 + r);
    }
    RadialPotential phi(g, v);
    const auto ps = symmetrize_potential(phi);
    for (std::size_t i = 1; i < ps.size(); ++i) CHECK(ps[i] >= ps[i - 1]);
    const double lo = phi.inf_value(), hi = *std::max_element(v.begin(), v.end());
    for (int k = 0; k < 20; ++k) {
      const double e = lo + (hi - lo) * (k + 0.5) / 20.0;
      const double a1 = jacobian_continuous(phi, e);
      CHECK(std::abs(jacobian_continuous(ps, e) - a1) <= 1e-6 * a1);
    }
    CHECK(ps.grad_l2() <= phi.grad_l2());
  }
  SUBCASE("gradient never increases") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
      const double c1 = 4 * U(rng), c2 = 4 * U(rng), a1 = U(rng), a2 = U(rng);
      std::vector<double> v(g->size());
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double r = g->r[i];
        v[i] = -a1 * std::exp(-(r - c1) * (r - c1)) - a2 * std::exp(-(r - c2) * (r - c2) / 2) - 0.01 / (1 + r);
      }
      RadialPotential phi(g, v);
      CHECK(symmetrize_potential(phi).grad_l2() <= phi.grad_l2() * (1 + 1e-12));
    }
  }
  SUBCASE("positive input rejected") {
    std::vector<double> v(g->size(), -0.1);
    v[3] = 0.1;
    CHECK_THROWS_AS(symmetrize_potential(RadialPotential(g, v)), Error);
  }
}

TEST_CASE("Taylor remainder scan") {
  const auto& st = fixture::golden();
  const std::vector<double> eps{0.1, 0.05, 0.025, 0.0125};
  const auto z = taylor_remainder_scan(st, hessian(), RadialTestFunction::zero(st.phi_Q.grid()), eps);
  for (const auto& row : z) {
    CHECK(row.R == 0.0);
    CHECK(row.dJ == 0.0);
  }
  const auto h = RadialTestFunction::bump(st.phi_Q.grid(), 0.5 * st.R_Q, 0.4 * st.R_Q);
  const auto rows = taylor_remainder_scan(st, hessian(), h, eps);
  REQUIRE(rows.size() == eps.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    CHECK(rows[k].admissible);
    CHECK(rows[k].R * rows[k].eps * rows[k].eps <= rows[k].dJ * (1 + 1e-12));
    if (k) CHECK(rows[k - 1].R_raw >= 2.0 * rows[k].R_raw);
  }
}
