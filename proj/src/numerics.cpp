#include "rvp/numerics.hpp"

#include <algorithm>
#include <boost/math/special_functions/legendre.hpp>
#include <map>
#include <mutex>

namespace rvp {

const GaussRule& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, GaussRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  GaussRule g;
  std::vector<double> z = boost::math::legendre_p_zeros<double>(n);  // nonnegative half
  for (double x : z) {
    double p = boost::math::legendre_p_prime(n, x);
    double w = 2.0 / ((1.0 - x * x) * p * p);
    if (x == 0.0) {
      g.x.push_back(0.0);
      g.w.push_back(w);
    } else {
      g.x.push_back(x);
      g.w.push_back(w);
      g.x.push_back(-x);
      g.w.push_back(w);
    }
  }
  std::vector<std::size_t> idx(g.x.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return g.x[a] < g.x[b]; });
  GaussRule s;
  for (auto i : idx) {
    s.x.push_back(g.x[i]);
    s.w.push_back(g.w[i]);
  }
  return cache.emplace(n, std::move(s)).first->second;
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 16) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  std::size_t h = v.size() / 2;
  return pairwise_sum(v.subspan(0, h)) + pairwise_sum(v.subspan(h));
}

double U3(double eta) {
  if (eta <= 0.0) return 0.0;
  double q = eta * (2.0 + eta);
  return q * std::sqrt(q);
}

double Kker(double eta) {
  if (eta <= 0.0) return 0.0;
  return std::sqrt(eta * (2.0 + eta)) * (1.0 + eta);
}

double Pint(double eta) {
  if (eta <= 0.0) return 0.0;
  if (eta < 1e-2) {
    // 2^{3/2} sum_n C(3/2,n) 2^{-n} eta^{n+5/2}/(n+5/2); terms shrink like (eta/2)^n.
    double s = 0.0, c = 1.0, pw = 1.0;
    for (int n = 0; n < 14; ++n) {
      s += c * pw / (n + 2.5);
      c *= (1.5 - n) / (n + 1.0);
      pw *= 0.5 * eta;
    }
    return 2.0 * std::sqrt(2.0) * s * eta * eta * std::sqrt(eta);
  }
  double y = 1.0 + eta;
  double t = std::sqrt(eta * (2.0 + eta));
  return (y * (2.0 * y * y - 5.0) * t + 3.0 * std::log(y + t)) / 8.0;  // acosh(y) = log(y + t)
}

double w_of_eta(double eta) {
  if (eta <= 0.0) return 0.0;
  return std::sqrt(eta * (2.0 + eta));
}

namespace {
// sum_{n>=n0} C(1/2,n) w^{2n+3}/(2n+3)
double half_binomial_series(double w, int n0) {
  double x = w * w, s = 0.0;
  for (int n = n0; n < n0 + 14; ++n) {
    double cb = 1.0;
    for (int j = 0; j < n; ++j) cb *= (0.5 - j) / (j + 1.0);
    s += cb * std::pow(x, n) * w * w * w / (2.0 * n + 3.0);
  }
  return s;
}
}  // namespace

double Sint(double w) {
  if (w <= 0.0) return 0.0;
  if (w < 0.05) return half_binomial_series(w, 0);
  return (w * (2.0 * w * w + 1.0) * std::sqrt(1.0 + w * w) - std::asinh(w)) / 8.0;
}

double Kin(double w) {
  if (w <= 0.0) return 0.0;
  if (w < 0.05) return half_binomial_series(w, 1);
  return Sint(w) - w * w * w / 3.0;
}

}  // namespace rvp
