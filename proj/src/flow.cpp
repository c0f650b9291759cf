#include "hrl/flow.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

namespace hrl {

void FlowConfig::validate() const {
  if (c < 1) throw std::invalid_argument("FlowConfig: c must be >= 1");
  if (m < 1) throw std::invalid_argument("FlowConfig: m must be >= 1");
  if (state_dim < 0) throw std::invalid_argument("FlowConfig: state_dim must be >= 0");
  if (k < 1) throw std::invalid_argument("FlowConfig: k must be >= 1");
  if (H < 1) throw std::invalid_argument("FlowConfig: H must be >= 1");
  if (!(kl_weight >= 0.0)) throw std::invalid_argument("FlowConfig: kl_weight must be non-negative");
  if (!(clamp > 0.0)) throw std::invalid_argument("FlowConfig: clamp must be positive");
}

CouplingFlow::CouplingFlow(const FlowConfig& cfg) : config(cfg) {
  config.validate();
  for (int b = 0; b < config.k; ++b) {
    int cb, cl, tb, tl;
    block_ranges(b, cb, cl, tb, tl);
    for (int net = 0; net < 2; ++net) {
      offsets_.push_back(num_params_);
      nets_.emplace_back(std::vector<int>{cl + config.state_dim, config.H, tl});
      num_params_ += nets_.back().num_params();
    }
  }
}

void CouplingFlow::block_ranges(int block, int& cond_begin, int& cond_len, int& trans_begin, int& trans_len) const {
  const int D = config.dim();
  const int d1 = D / 2;
  if (block % 2 == 0) {
    cond_begin = 0;
    cond_len = d1;
    trans_begin = d1;
    trans_len = D - d1;
  } else {
    cond_begin = d1;
    cond_len = D - d1;
    trans_begin = 0;
    trans_len = d1;
  }
}

void CouplingFlow::init(Rng& rng) {
  params = Vec::Zero(num_params_);
  for (std::size_t i = 0; i < nets_.size(); ++i) nets_[i].init(params.data() + offsets_[i], rng, true);
}

Vec CouplingFlow::net_input(const Vec& x, int cond_begin, int cond_len, const Vec& s0) const {
  Vec in(cond_len + s0.size());
  in.head(cond_len) = x.segment(cond_begin, cond_len);
  in.tail(s0.size()) = s0;
  return in;
}

void CouplingFlow::check_ready(const Vec& x, const Vec& s0) const {
  if (!trained()) throw std::logic_error("flow has no parameters");
  if (x.size() != config.dim())
    throw std::invalid_argument(fmt::format("flow input has size {}, expected {}", x.size(), config.dim()));
  if (s0.size() != config.state_dim)
    throw std::invalid_argument(fmt::format("flow state has size {}, expected {}", s0.size(), config.state_dim));
  if (!x.allFinite() || !s0.allFinite()) throw std::invalid_argument("flow input is not finite");
}

Vec CouplingFlow::forward(const Vec& z, const Vec& s0) const {
  check_ready(z, s0);
  Vec x = z;
  for (int b = 0; b < config.k; ++b) {
    int cb, cl, tb, tl;
    block_ranges(b, cb, cl, tb, tl);
    const Vec in = net_input(x, cb, cl, s0);
    const Vec raw = scale_net(b).forward(params.data() + net_offset(b, false), in);
    const Vec t = shift_net(b).forward(params.data() + net_offset(b, true), in);
    const Vec v = config.clamp * (raw / config.clamp).array().tanh();
    x.segment(tb, tl) = x.segment(tb, tl).cwiseProduct(v.array().exp().matrix()) + t;
  }
  return x;
}

std::pair<Vec, double> CouplingFlow::inverse(const Vec& a, const Vec& s0) const {
  check_ready(a, s0);
  Vec y = a;
  double log_det = 0.0;
  for (int b = config.k - 1; b >= 0; --b) {
    int cb, cl, tb, tl;
    block_ranges(b, cb, cl, tb, tl);
    const Vec in = net_input(y, cb, cl, s0);
    const Vec raw = scale_net(b).forward(params.data() + net_offset(b, false), in);
    const Vec t = shift_net(b).forward(params.data() + net_offset(b, true), in);
    const Vec v = config.clamp * (raw / config.clamp).array().tanh();
    y.segment(tb, tl) = (y.segment(tb, tl) - t).cwiseProduct((-v).array().exp().matrix());
    log_det -= v.sum();
  }
  return {y, log_det};
}

Vec CouplingFlow::inverse_backward(const Vec& a, const Vec& s0, const Vec& grad_z, double grad_log_det,
                                   Vec& grad_params) const {
  check_ready(a, s0);
  if (grad_params.size() != num_params_) grad_params = Vec::Zero(num_params_);
  std::vector<BlockCache> caches(config.k);
  Vec y = a;
  for (int b = config.k - 1; b >= 0; --b) {
    int cb, cl, tb, tl;
    block_ranges(b, cb, cl, tb, tl);
    BlockCache& cache = caches[b];
    cache.input = y;
    const Vec in = net_input(y, cb, cl, s0);
    cache.raw = scale_net(b).forward(params.data() + net_offset(b, false), in, &cache.scale_cache);
    const Vec t = shift_net(b).forward(params.data() + net_offset(b, true), in, &cache.shift_cache);
    cache.v = config.clamp * (cache.raw / config.clamp).array().tanh();
    y.segment(tb, tl) = (y.segment(tb, tl) - t).cwiseProduct((-cache.v).array().exp().matrix());
    cache.output = y;
  }

  Vec g = grad_z;
  for (int b = 0; b < config.k; ++b) {
    int cb, cl, tb, tl;
    block_ranges(b, cb, cl, tb, tl);
    const BlockCache& cache = caches[b];
    const Eigen::ArrayXd e = (-cache.v).array().exp();
    const Eigen::ArrayXd gx_t = g.segment(tb, tl).array();
    const Eigen::ArrayXd x_t = cache.output.segment(tb, tl).array();
    Vec gy = g;
    gy.segment(tb, tl) = (gx_t * e).matrix();
    const Vec gt = (-gx_t * e).matrix();
    const Eigen::ArrayXd gv = -gx_t * x_t - grad_log_det;
    const Eigen::ArrayXd th = (cache.raw / config.clamp).array().tanh();
    const Vec graw = (gv * (1.0 - th.square())).matrix();
    const Vec gin_s = scale_net(b).backward(params.data() + net_offset(b, false), cache.scale_cache, graw,
                                            grad_params.data() + net_offset(b, false));
    const Vec gin_t = shift_net(b).backward(params.data() + net_offset(b, true), cache.shift_cache, gt,
                                            grad_params.data() + net_offset(b, true));
    gy.segment(cb, cl) += gin_s.head(cl) + gin_t.head(cl);
    g = std::move(gy);
  }
  return g;
}

SkillPrior::SkillPrior(int dim, int state_dim, int hidden)
    : mean_net_({state_dim, hidden, dim}), logstd_net_({state_dim, hidden, dim}) {}

void SkillPrior::init(Rng& rng) {
  params = Vec::Zero(num_params());
  mean_net_.init(params.data(), rng, true);
  logstd_net_.init(params.data() + mean_net_.num_params(), rng, true);
}

void SkillPrior::distribution(const Vec& s0, Vec& mean, Vec& logstd) const {
  if (!trained()) throw std::logic_error("prior has no parameters");
  mean = mean_net_.forward(params.data(), s0);
  const Vec raw = logstd_net_.forward(params.data() + mean_net_.num_params(), s0);
  logstd = raw.unaryExpr([&](double r) { return clamp.value(r); });
}

double SkillPrior::log_density(const Vec& z, const Vec& s0) const {
  Vec mean, logstd;
  distribution(s0, mean, logstd);
  return nn::gaussian_log_density(z, mean, logstd);
}

Vec SkillPrior::neg_log_density_backward(const Vec& z, const Vec& s0, double weight, Vec& grad_params) const {
  if (grad_params.size() != num_params()) grad_params = Vec::Zero(num_params());
  nn::Mlp::Cache mc, sc;
  const Vec mean = mean_net_.forward(params.data(), s0, &mc);
  const Vec raw = logstd_net_.forward(params.data() + mean_net_.num_params(), s0, &sc);
  const Eigen::Index D = z.size();
  Vec g_mean(D), g_raw(D), g_z(D);
  for (Eigen::Index i = 0; i < D; ++i) {
    const double ls = clamp.value(raw[i]);
    const double inv = std::exp(-ls);
    const double u = (z[i] - mean[i]) * inv;
    g_z[i] = weight * u * inv;
    g_mean[i] = -weight * u * inv;
    g_raw[i] = weight * (1.0 - u * u) * clamp.derivative(raw[i]);
  }
  mean_net_.backward(params.data(), mc, g_mean, grad_params.data());
  logstd_net_.backward(params.data() + mean_net_.num_params(), sc, g_raw, grad_params.data() + mean_net_.num_params());
  return g_z;
}

Vec SkillPrior::sample(const Vec& s0, Rng& rng) const {
  Vec mean, logstd;
  distribution(s0, mean, logstd);
  Vec z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = mean[i] + std::exp(logstd[i]) * standard_normal(rng);
  return z;
}

Vec flow_forward(const CouplingFlow& flow, const Vec& z, const Vec& s0) { return flow.forward(z, s0); }

std::pair<Vec, double> flow_inverse(const CouplingFlow& flow, const Vec& a, const Vec& s0) {
  return flow.inverse(a, s0);
}

FlowLoss flow_objective(const CouplingFlow& flow, const SkillPrior& prior, const std::vector<FlowSample>& batch,
                        Vec* grad_flow, Vec* grad_prior) {
  if (batch.empty()) throw std::invalid_argument("flow objective needs a non-empty batch");
  const double kappa = flow.config.kl_weight;
  const double D = flow.config.dim();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  if (grad_flow) *grad_flow = Vec::Zero(flow.num_params());
  if (grad_prior) *grad_prior = Vec::Zero(prior.num_params());
  Vec scratch_prior;

  FlowLoss out;
  for (const FlowSample& sample : batch) {
    auto [z, log_det] = flow.inverse(sample.a, sample.s0);
    const double neg_log_base = 0.5 * z.squaredNorm() + 0.5 * D * nn::kLog2Pi;
    const double neg_log_prior = -prior.log_density(z, sample.s0);
    out.nll += inv_b * (neg_log_base - log_det);
    out.prior_term += inv_b * (neg_log_prior - neg_log_base);
    out.mean_log_det += inv_b * log_det;
    if (grad_flow || grad_prior) {
      Vec& gp = grad_prior ? *grad_prior : scratch_prior;
      Vec gz = (1.0 - kappa) * inv_b * z;
      if (kappa != 0.0) gz += prior.neg_log_density_backward(z, sample.s0, kappa * inv_b, gp);
      if (grad_flow) {
        Vec gf = Vec::Zero(flow.num_params());
        flow.inverse_backward(sample.a, sample.s0, gz, -inv_b, gf);
        *grad_flow += gf;
      }
    }
  }
  out.loss = out.nll + kappa * out.prior_term;
  return out;
}

Vec flow_coordinates(const FlowConfig& config, const ContinuousSegment& segment) {
  Vec flat = segment.flat_actions();
  if (flat.size() != config.action_dim())
    throw std::invalid_argument(
        fmt::format("segment has {} action coordinates, flow expects {}", flat.size(), config.action_dim()));
  if (!config.padded()) return flat;
  Vec padded = Vec::Zero(2);
  padded[0] = flat[0];
  return padded;
}

FlowTrainResult train_flow(const ContinuousSkillDataset& data, const FlowConfig& config, const TrainOptions& options) {
  config.validate();
  if (data.segments.empty()) throw std::invalid_argument("cannot train a flow on an empty dataset");
  if (data.c != config.c || data.action_dim != config.m || data.state_dim != config.state_dim)
    throw std::invalid_argument(fmt::format("dataset (c={}, m={}, state_dim={}) does not match flow config (c={}, m={}, state_dim={})",
                                            data.c, data.action_dim, data.state_dim, config.c, config.m,
                                            config.state_dim));
  if (options.steps < 0 || options.batch_size < 1) throw std::invalid_argument("bad training options");

  Rng rng(derive_seed(options.seed, 0xf10));
  FlowTrainResult res;
  res.flow = CouplingFlow(config);
  res.flow.init(rng);
  res.prior = SkillPrior(config.dim(), config.state_dim, config.H);
  res.prior.init(rng);

  std::vector<FlowSample> all;
  all.reserve(data.segments.size());
  for (const auto& seg : data.segments) all.push_back({flow_coordinates(config, seg), seg.initial_state()});

  const int nf = res.flow.num_params();
  const int np = res.prior.num_params();
  Vec joint(nf + np);
  joint << res.flow.params, res.prior.params;
  nn::Adam adam;
  adam.lr = options.lr;
  std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
  std::vector<FlowSample> batch(options.batch_size);
  Vec gf, gp, grad(nf + np);
  res.loss_trace.reserve(options.steps);
  for (int step = 0; step < options.steps; ++step) {
    for (auto& b : batch) {
      b = all[pick(rng)];
      if (config.padded()) b.a[1] = standard_normal(rng);
    }
    FlowLoss loss = flow_objective(res.flow, res.prior, batch, &gf, &gp);
    res.loss_trace.push_back(loss.loss);
    grad << gf, gp;
    adam.step(joint, grad);
    res.flow.params = joint.head(nf);
    res.prior.params = joint.tail(np);
  }
  return res;
}

FlowSkillDecoder::FlowSkillDecoder(CouplingFlow flow, SkillPrior prior, HighPolicy high_policy, Vec action_low,
                                   Vec action_high)
    : flow_(std::move(flow)),
      prior_(std::move(prior)),
      high_policy_(std::move(high_policy)),
      low_(std::move(action_low)),
      high_(std::move(action_high)) {}

Mat FlowSkillDecoder::decode(const Vec& z, const Vec& s0) const {
  const FlowConfig& cfg = flow_.config;
  const Vec a = flow_.forward(z, s0);
  Mat out(cfg.c, cfg.m);
  for (int t = 0; t < cfg.c; ++t)
    for (int j = 0; j < cfg.m; ++j) {
      double v = a[t * cfg.m + j];
      if (low_.size() == cfg.m) v = std::clamp(v, low_[j], high_[j]);
      out(t, j) = v;
    }
  return out;
}

Vec FlowSkillDecoder::encode(const ContinuousSegment& segment) const {
  return flow_.inverse(flow_coordinates(flow_.config, segment), segment.initial_state()).first;
}

Mat FlowSkillDecoder::sample(const Vec& s0, Rng& rng) const {
  Vec z = high_policy_ ? high_policy_(s0, rng) : prior_.sample(s0, rng);
  return decode(z, s0);
}

FlowSkillDecoder flow_decode_policy(const CouplingFlow& flow, const SkillPrior& prior,
                                    FlowSkillDecoder::HighPolicy high_policy, Vec action_low, Vec action_high) {
  if (!flow.trained() || !prior.trained()) throw std::logic_error("flow decoder needs trained components");
  if (action_low.size() != action_high.size()) throw std::invalid_argument("action bounds differ in size");
  return FlowSkillDecoder(flow, prior, std::move(high_policy), std::move(action_low), std::move(action_high));
}

}  // namespace hrl
