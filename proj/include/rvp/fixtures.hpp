#pragma once
// Shared states and perturbation families for the tests and the acceptance suite.
#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "rvp/functionals.hpp"

namespace fixture {

inline const rvp::SteadyState& golden() {
  static const rvp::SteadyState st = rvp::build_steady_state(rvp::CutoffProfile::polytrope(1, 1, -0.1), -0.5);
  return st;
}

// Q (1 + delta chi) with chi piecewise constant on nr radial bands x nw speed cells, |chi| <= 1.
// Coarse cells keep the number of distinct values (and so the cost of f*) bounded.
inline rvp::PhaseDensity cell_perturbation(const rvp::SteadyState& st, double delta, std::mt19937_64& rng,
                                           int nr = 6, int nw = 4) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  std::vector<double> c(static_cast<std::size_t>(nr * nw));
  for (double& x : c) x = U(rng);
  const double RQ = st.R_Q, wcap = 1.0;
  return rvp::modulate(st.Q, [=](double r, double w) {
    int br = std::min(nr - 1, static_cast<int>(nr * r / RQ));
    int bw = std::min(nw - 1, static_cast<int>(nw * w / wcap));
    return delta * c[static_cast<std::size_t>(br * nw + bw)];
  }, nw, wcap);
}

// Q with its level values permuted within random blocks of consecutive levels.
inline rvp::PhaseDensity level_shuffle(const rvp::SteadyState& st, std::mt19937_64& rng, int block = 40) {
  const std::size_t L = st.level_values.size();
  std::vector<double> perm(st.level_values);
  for (std::size_t b = 0; b < L; b += block) {
    auto e = std::min(L, b + block);
    std::shuffle(perm.begin() + b, perm.begin() + e, rng);
  }
  std::vector<std::vector<double>> hi(st.Q.nodes()), vals(st.Q.nodes());
  const auto& lev = st.levels;  // descending
  for (std::size_t i = 0; i < st.Q.nodes(); ++i) {
    const double phi = st.phi_Q[i];
    // segment of level j spans energies [lev[j+1], lev[j]); walk from the deepest level up
    for (std::size_t j = L; j-- > 0;) {
      if (lev[j] <= phi) continue;
      hi[i].push_back(rvp::w_of_eta(lev[j] - phi));
      vals[i].push_back(perm[j]);
    }
  }
  return rvp::PhaseDensity::from_segments(st.Q.grid, hi, vals);
}

}  // namespace fixture
