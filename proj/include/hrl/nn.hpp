#pragma once

#include <vector>

#include "hrl/mdp.hpp"
#include "hrl/random.hpp"

namespace hrl::nn {

/// Fully connected network with tanh hidden layers and a linear output layer.
/// Parameters live in an external flat buffer so models can concatenate
/// several networks and run one optimizer over them.
class Mlp {
 public:
  struct Cache {
    std::vector<Vec> activations;  // activations[0] is the input
  };

  Mlp() = default;
  explicit Mlp(std::vector<int> sizes);

  int num_params() const { return num_params_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }

  Vec forward(const double* params, const Vec& x, Cache* cache = nullptr) const;

  /// Accumulates d(loss)/d(params) into `grad_params` and returns d(loss)/d(input).
  Vec backward(const double* params, const Cache& cache, const Vec& grad_out, double* grad_params) const;

  /// Gaussian hidden weights with variance scale/fan_in; zero biases. With
  /// `zero_output` the last layer starts at exactly zero.
  void init(double* params, Rng& rng, bool zero_output, double scale = 1.0) const;

 private:
  std::vector<int> sizes_;
  int num_params_ = 0;
};

/// Adam over a flat parameter vector.
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Vec m;
  Vec v;
  long t = 0;

  void step(Vec& params, const Vec& grad);
};

/// Smooth map of a raw network output onto (lo, hi) with raw = 0 -> 0.
/// Requires lo < 0 < hi.
struct SoftClamp {
  double lo = -5.0;
  double hi = 2.0;

  double value(double raw) const;
  double derivative(double raw) const;
};

constexpr double kLog2Pi = 1.8378770664093454836;

/// log N(x; mean, diag(exp(logstd))^2)
double gaussian_log_density(const Vec& x, const Vec& mean, const Vec& logstd);

/// KL(N(mq, sq^2) || N(mp, sp^2)) for diagonal Gaussians parameterized by log-std.
double gaussian_kl(const Vec& mean_q, const Vec& logstd_q, const Vec& mean_p, const Vec& logstd_p);

}  // namespace hrl::nn
