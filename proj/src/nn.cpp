#include "hrl/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace hrl::nn {

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("an MLP needs at least an input and an output size");
  for (int s : sizes_)
    if (s < 0) throw std::invalid_argument("layer sizes must be non-negative");
  for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) num_params_ += sizes_[i + 1] * sizes_[i] + sizes_[i + 1];
}

Vec Mlp::forward(const double* params, const Vec& x, Cache* cache) const {
  if (x.size() != sizes_.front()) throw std::invalid_argument("MLP input has the wrong size");
  const std::size_t layers = sizes_.size() - 1;
  if (cache) {
    cache->activations.clear();
    cache->activations.reserve(layers + 1);
    cache->activations.push_back(x);
  }
  Vec a = x;
  const double* p = params;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    Eigen::Map<const Mat> w(p, out, in);
    Eigen::Map<const Vec> b(p + static_cast<std::ptrdiff_t>(out) * in, out);
    p += static_cast<std::ptrdiff_t>(out) * in + out;
    Vec z = w * a + b;
    if (l + 1 < layers) z = z.array().tanh();
    a = std::move(z);
    if (cache) cache->activations.push_back(a);
  }
  return a;
}

Vec Mlp::backward(const double* params, const Cache& cache, const Vec& grad_out, double* grad_params) const {
  const std::size_t layers = sizes_.size() - 1;
  std::vector<std::ptrdiff_t> offsets(layers);
  std::ptrdiff_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = off;
    off += static_cast<std::ptrdiff_t>(sizes_[l + 1]) * sizes_[l] + sizes_[l + 1];
  }
  Vec g = grad_out;
  for (std::size_t l = layers; l-- > 0;) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    if (l + 1 < layers) g = g.array() * (1.0 - cache.activations[l + 1].array().square());
    Eigen::Map<const Mat> w(params + offsets[l], out, in);
    Eigen::Map<Mat> gw(grad_params + offsets[l], out, in);
    Eigen::Map<Vec> gb(grad_params + offsets[l] + static_cast<std::ptrdiff_t>(out) * in, out);
    gw.noalias() += g * cache.activations[l].transpose();
    gb += g;
    g = w.transpose() * g;
  }
  return g;
}

void Mlp::init(double* params, Rng& rng, bool zero_output, double scale) const {
  const std::size_t layers = sizes_.size() - 1;
  double* p = params;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    const bool zero = zero_output && l + 1 == layers;
    const double sd = in > 0 ? std::sqrt(scale / in) : 0.0;
    for (int i = 0; i < out * in; ++i) p[i] = zero ? 0.0 : sd * standard_normal(rng);
    for (int i = 0; i < out; ++i) p[out * in + i] = 0.0;
    p += static_cast<std::ptrdiff_t>(out) * in + out;
  }
}

void Adam::step(Vec& params, const Vec& grad) {
  if (m.size() != params.size()) {
    m = Vec::Zero(params.size());
    v = Vec::Zero(params.size());
    t = 0;
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

double SoftClamp::value(double raw) const {
  const double shift = std::log(-lo / hi);
  return lo + (hi - lo) / (1.0 + std::exp(-(raw + shift)));
}

double SoftClamp::derivative(double raw) const {
  const double shift = std::log(-lo / hi);
  const double sig = 1.0 / (1.0 + std::exp(-(raw + shift)));
  return (hi - lo) * sig * (1.0 - sig);
}

double gaussian_log_density(const Vec& x, const Vec& mean, const Vec& logstd) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double u = (x[i] - mean[i]) * std::exp(-logstd[i]);
    total += -0.5 * u * u - logstd[i] - 0.5 * kLog2Pi;
  }
  return total;
}

double gaussian_kl(const Vec& mean_q, const Vec& logstd_q, const Vec& mean_p, const Vec& logstd_p) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < mean_q.size(); ++i) {
    const double var_ratio = std::exp(2.0 * (logstd_q[i] - logstd_p[i]));
    const double diff = (mean_q[i] - mean_p[i]) * std::exp(-logstd_p[i]);
    total += logstd_p[i] - logstd_q[i] + 0.5 * (var_ratio + diff * diff) - 0.5;
  }
  return total;
}

}  // namespace hrl::nn
