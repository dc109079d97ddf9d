#pragma once

// Test-only generators and brute-force oracles. Nothing here calls into the
// code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "hypkt/manifold.hpp"

namespace hypkt::testing {

inline std::vector<double> uniform_vec(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Point on the hyperboloid from random space coordinates (time solved directly).
inline manifold::HyperbolicPoint random_point(std::mt19937_64& rng, std::size_t n, manifold::Curvature k,
                                              double spread = 1.5) {
  auto space = uniform_vec(rng, n, -spread, spread);
  manifold::HyperbolicPoint p{std::vector<double>(n + 1, 0.0), k};
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p.coords[i + 1] = space[i];
    sq += space[i] * space[i];
  }
  p.coords[0] = std::sqrt(sq - 1.0 / k.value());
  return p;
}

// Tangent vector at x with Lorentz norm `norm`, built by hand: remove the
// normal component of a random ambient vector, then rescale.
inline std::vector<double> random_tangent(std::mt19937_64& rng, const manifold::HyperbolicPoint& x, double norm) {
  const std::size_t m = x.coords.size();
  auto raw = uniform_vec(rng, m, -1, 1);
  auto inner = [](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = -a[0] * b[0];
    for (std::size_t i = 1; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
  };
  const double kappa = x.curvature.value();
  const double c = kappa * inner(x.coords, raw);
  for (std::size_t i = 0; i < m; ++i) raw[i] -= c * x.coords[i];
  const double len = std::sqrt(std::max(inner(raw, raw), 0.0));
  for (double& r : raw) r *= norm / len;
  return raw;
}

// Exhaustive four-point delta over an all-pairs distance matrix.
inline double brute_force_delta(const std::vector<std::vector<int>>& dist) {
  const std::size_t n = dist.size();
  double best = 0.0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t c = 0; c < n; ++c)
        for (std::size_t d = 0; d < n; ++d) {
          double s[3] = {double(dist[a][b] + dist[c][d]), double(dist[a][c] + dist[b][d]),
                         double(dist[a][d] + dist[b][c])};
          std::sort(s, s + 3);
          best = std::max(best, (s[2] - s[1]) / 2.0);
        }
  return best;
}

// Floyd-Warshall over an undirected edge list (unit weights).
inline std::vector<std::vector<int>> floyd(std::size_t n, const std::vector<std::pair<int, int>>& edges) {
  const int inf = 1 << 20;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0;
  for (auto [a, b] : edges) d[a][b] = d[b][a] = 1;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  return d;
}

// Probability a random positive outranks a random negative, ties 1/2.
inline double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

}  // namespace hypkt::testing
