#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace hrl {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix_seed(mix_seed(master) ^ (index + 0x632be59bd9b4e019ULL));
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline Eigen::VectorXd dirichlet(Rng& rng, int n, double concentration) {
  std::gamma_distribution<double> g(concentration, 1.0);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = g(rng);
  double total = x.sum();
  if (total <= 0.0) return Eigen::VectorXd::Constant(n, 1.0 / n);
  return x / total;
}

/// Index drawn from a probability vector by inverse CDF.
template <typename Row>
int sample_categorical(Rng& rng, const Row& probs) {
  double u = uniform01(rng);
  double acc = 0.0;
  const int n = static_cast<int>(probs.size());
  for (int i = 0; i < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  for (int i = n - 1; i >= 0; --i)
    if (probs[i] > 0.0) return i;
  return n - 1;
}

}  // namespace hrl
