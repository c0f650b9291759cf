#include "hrl/vae.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

namespace hrl {

void VaeConfig::validate() const {
  if (c < 1) throw std::invalid_argument("VaeConfig: c must be >= 1");
  if (m < 1) throw std::invalid_argument("VaeConfig: m must be >= 1");
  if (state_dim < 0) throw std::invalid_argument("VaeConfig: state_dim must be >= 0");
  if (L < 1) throw std::invalid_argument("VaeConfig: L must be >= 1");
  if (H < 1) throw std::invalid_argument("VaeConfig: H must be >= 1");
  if (!(kl_weight >= 0.0)) throw std::invalid_argument("VaeConfig: kl_weight must be non-negative");
}

namespace {

std::vector<int> layers(int in, int hidden, int out, bool linear) {
  if (linear) return {in, out};
  return {in, hidden, out};
}

}  // namespace

VaeModel::VaeModel(const VaeConfig& cfg)
    : config(cfg),
      encoder_(layers(cfg.c * (cfg.state_dim + cfg.m), cfg.H, 2 * cfg.L, cfg.linear)),
      decoder_(layers(cfg.state_dim + cfg.L, cfg.H, 2 * cfg.m, cfg.linear)),
      prior_(layers(cfg.state_dim, cfg.H, 2 * cfg.L, cfg.linear)) {
  config.validate();
  num_params_ = encoder_.num_params() + decoder_.num_params() + prior_.num_params();
}

void VaeModel::init(Rng& rng) {
  params = Vec::Zero(num_params_);
  encoder_.init(params.data() + encoder_offset(), rng, false, 0.5);
  decoder_.init(params.data() + decoder_offset(), rng, false, 0.5);
  prior_.init(params.data() + prior_offset(), rng, true);
  if (!config.linear) return;
  // W is out x in, column-major.
  const int in_enc = encoder_.input_size();
  Eigen::Map<Mat> we(params.data() + encoder_offset(), 2 * config.L, in_enc);
  we.setZero();
  const int step = config.state_dim + config.m;
  for (int i = 0; i < std::min(config.L, config.c * config.m); ++i) {
    const int t = i / config.m;
    const int j = i % config.m;
    we(i, t * step + config.state_dim + j) = 1.0;
  }
  Eigen::Map<Mat> wd(params.data() + decoder_offset(), 2 * config.m, decoder_.input_size());
  wd.setZero();
  for (int j = 0; j < std::min(config.m, config.L); ++j) wd(j, config.state_dim + j) = 1.0;
}

void VaeModel::check_segment(const ContinuousSegment& seg) const {
  if (!trained()) throw std::logic_error("VAE has no parameters");
  if (seg.states.rows() != config.c || seg.actions.rows() != config.c || seg.states.cols() != config.state_dim ||
      seg.actions.cols() != config.m)
    throw std::invalid_argument(fmt::format("segment shape ({}x{}, {}x{}) does not match VAE (c={}, state_dim={}, m={})",
                                            seg.states.rows(), seg.states.cols(), seg.actions.rows(),
                                            seg.actions.cols(), config.c, config.state_dim, config.m));
}

Vec VaeModel::encoder_input(const ContinuousSegment& seg) const {
  const int step = config.state_dim + config.m;
  Vec x(config.c * step);
  for (int t = 0; t < config.c; ++t) {
    x.segment(t * step, config.state_dim) = seg.states.row(t).transpose();
    x.segment(t * step + config.state_dim, config.m) = seg.actions.row(t).transpose();
  }
  return x;
}

namespace {

void split_gaussian(const Vec& out, int n, const nn::SoftClamp& clamp, Vec& mean, Vec& logstd) {
  mean = out.head(n);
  logstd = out.tail(n).unaryExpr([&](double r) { return clamp.value(r); });
}

Vec concat(const Vec& a, const Vec& b) {
  Vec out(a.size() + b.size());
  out << a, b;
  return out;
}

}  // namespace

void VaeModel::encode_distribution(const ContinuousSegment& seg, Vec& mean, Vec& logstd) const {
  check_segment(seg);
  split_gaussian(encoder_.forward(params.data() + encoder_offset(), encoder_input(seg)), config.L, clamp, mean,
                 logstd);
}

void VaeModel::decode_distribution(const Vec& state, const Vec& z, Vec& mean, Vec& logstd) const {
  if (!trained()) throw std::logic_error("VAE has no parameters");
  split_gaussian(decoder_.forward(params.data() + decoder_offset(), concat(state, z)), config.m, clamp, mean, logstd);
}

void VaeModel::prior_distribution(const Vec& s0, Vec& mean, Vec& logstd) const {
  if (!trained()) throw std::logic_error("VAE has no parameters");
  split_gaussian(prior_.forward(params.data() + prior_offset(), s0), config.L, clamp, mean, logstd);
}

VaeLoss elbo(const VaeModel& model, const std::vector<ContinuousSegment>& batch, const std::vector<Vec>& eps,
             Vec* grad) {
  if (batch.empty()) throw std::invalid_argument("ELBO needs a non-empty batch");
  if (eps.size() != batch.size()) throw std::invalid_argument("need one noise vector per segment");
  const VaeConfig& cfg = model.config;
  const int L = cfg.L;
  const int m = cfg.m;
  const double kappa = cfg.kl_weight;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const nn::SoftClamp& cl = model.clamp;
  if (grad) *grad = Vec::Zero(model.num_params());
  const double* p = model.params.data();

  VaeLoss out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ContinuousSegment& seg = batch[i];
    model.check_segment(seg);
    nn::Mlp::Cache enc_cache, prior_cache;
    const Vec enc_out = model.encoder().forward(p + model.encoder_offset(), model.encoder_input(seg), &enc_cache);
    const Vec prior_out = model.prior().forward(p + model.prior_offset(), seg.initial_state(), &prior_cache);
    Vec mq, lq, mp, lp;
    split_gaussian(enc_out, L, cl, mq, lq);
    split_gaussian(prior_out, L, cl, mp, lp);
    const Vec sq = lq.array().exp();
    const Vec z = mq + sq.cwiseProduct(eps[i]);

    double rec = 0.0;
    Vec gz = Vec::Zero(L);
    for (int t = 0; t < cfg.c; ++t) {
      nn::Mlp::Cache dec_cache;
      const Vec state = seg.states.row(t).transpose();
      const Vec dec_out = model.decoder().forward(p + model.decoder_offset(), concat(state, z), &dec_cache);
      Vec ma, la;
      split_gaussian(dec_out, m, cl, ma, la);
      const Vec a = seg.actions.row(t).transpose();
      rec -= nn::gaussian_log_density(a, ma, la);
      if (!grad) continue;
      Vec g_out(2 * m);
      for (int j = 0; j < m; ++j) {
        const double inv = std::exp(-la[j]);
        const double u = (a[j] - ma[j]) * inv;
        g_out[j] = -inv_b * u * inv;
        g_out[m + j] = inv_b * (1.0 - u * u) * cl.derivative(dec_out[m + j]);
      }
      const Vec g_in = model.decoder().backward(p + model.decoder_offset(), dec_cache, g_out,
                                                grad->data() + model.decoder_offset());
      gz += g_in.tail(L);
    }
    const double kl = nn::gaussian_kl(mq, lq, mp, lp);
    out.reconstruction += inv_b * rec;
    out.kl += inv_b * kl;
    if (!grad) continue;

    Vec g_enc(2 * L), g_prior(2 * L);
    for (int j = 0; j < L; ++j) {
      const double ratio = std::exp(2.0 * (lq[j] - lp[j]));
      const double diff = mq[j] - mp[j];
      const double inv_var_p = std::exp(-2.0 * lp[j]);
      const double g_mq = kappa * inv_b * diff * inv_var_p + gz[j];
      const double g_lq = kappa * inv_b * (ratio - 1.0) + gz[j] * sq[j] * eps[i][j];
      const double g_mp = -kappa * inv_b * diff * inv_var_p;
      const double g_lp = kappa * inv_b * (1.0 - ratio - diff * diff * inv_var_p);
      g_enc[j] = g_mq;
      g_enc[L + j] = g_lq * cl.derivative(enc_out[L + j]);
      g_prior[j] = g_mp;
      g_prior[L + j] = g_lp * cl.derivative(prior_out[L + j]);
    }
    model.encoder().backward(p + model.encoder_offset(), enc_cache, g_enc, grad->data() + model.encoder_offset());
    model.prior().backward(p + model.prior_offset(), prior_cache, g_prior, grad->data() + model.prior_offset());
  }
  out.loss = out.reconstruction + kappa * out.kl;
  return out;
}

VaeTrainResult train_vae(const ContinuousSkillDataset& data, const VaeConfig& config, const TrainOptions& options) {
  config.validate();
  if (data.segments.empty()) throw std::invalid_argument("cannot train a VAE on an empty dataset");
  if (data.c != config.c || data.action_dim != config.m || data.state_dim != config.state_dim)
    throw std::invalid_argument(fmt::format("dataset (c={}, m={}, state_dim={}) does not match VAE config (c={}, m={}, state_dim={})",
                                            data.c, data.action_dim, data.state_dim, config.c, config.m,
                                            config.state_dim));
  if (options.steps < 0 || options.batch_size < 1) throw std::invalid_argument("bad training options");
  Rng rng(derive_seed(options.seed, 0x7ae));
  VaeTrainResult res;
  res.model = VaeModel(config);
  res.model.init(rng);
  nn::Adam adam;
  adam.lr = options.lr;
  std::uniform_int_distribution<std::size_t> pick(0, data.segments.size() - 1);
  std::vector<ContinuousSegment> batch(options.batch_size);
  std::vector<Vec> eps(options.batch_size, Vec(config.L));
  Vec grad;
  for (int step = 0; step < options.steps; ++step) {
    for (int i = 0; i < options.batch_size; ++i) {
      batch[i] = data.segments[pick(rng)];
      for (int j = 0; j < config.L; ++j) eps[i][j] = standard_normal(rng);
    }
    VaeLoss loss = elbo(res.model, batch, eps, &grad);
    res.loss_trace.push_back(loss.loss);
    res.reconstruction_trace.push_back(loss.reconstruction);
    adam.step(res.model.params, grad);
  }
  return res;
}

Vec vae_encode(const VaeModel& model, const ContinuousSegment& seg) {
  Vec mean, logstd;
  model.encode_distribution(seg, mean, logstd);
  return mean;
}

Mat vae_decode(const VaeModel& model, const Vec& z, const Mat& states) {
  if (!model.trained()) throw std::logic_error("VAE has no parameters");
  if (z.size() != model.config.L) throw std::invalid_argument("latent has the wrong size");
  Mat out(states.rows(), model.config.m);
  for (Eigen::Index t = 0; t < states.rows(); ++t) {
    Vec mean, logstd;
    model.decode_distribution(states.row(t).transpose(), z, mean, logstd);
    out.row(t) = mean.transpose();
  }
  return out;
}

}  // namespace hrl
