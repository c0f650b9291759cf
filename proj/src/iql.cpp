#include "hrl/iql.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <fmt/core.h>

namespace hrl {

DiscountMode parse_discount_mode(const std::string& name) {
  if (name == "effective") return DiscountMode::Effective;
  if (name == "literal") return DiscountMode::Literal;
  throw std::invalid_argument(fmt::format("unknown discount mode '{}' (expected effective or literal)", name));
}

double iql_discount(double gamma, int c, DiscountMode mode) {
  if (c < 1) throw std::invalid_argument("skill length must be >= 1");
  return mode == DiscountMode::Effective ? std::pow(gamma, c) : gamma;
}

double expectile_loss(double u, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument(fmt::format("expectile must lie in (0, 1), got {}", lambda));
  const double w = u < 0.0 ? 1.0 - lambda : lambda;
  return w * u * u;
}

void IqlConfig::validate() const {
  if (!(expectile > 0.0 && expectile < 1.0)) throw std::invalid_argument("IqlConfig: expectile must lie in (0, 1)");
  if (!(temperature > 0.0)) throw std::invalid_argument("IqlConfig: temperature must be > 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("IqlConfig: alpha must lie in (0, 1]");
  if (!(lr > 0.0)) throw std::invalid_argument("IqlConfig: lr must be > 0");
  if (steps < 0) throw std::invalid_argument("IqlConfig: steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("IqlConfig: batch_size must be >= 1");
  if (hidden < 1) throw std::invalid_argument("IqlConfig: hidden must be >= 1");
  if (!(advantage_clip > 0.0)) throw std::invalid_argument("IqlConfig: advantage_clip must be > 0");
}

namespace {

double expectile_grad(double u, double lambda) {
  const double w = u < 0.0 ? 1.0 - lambda : lambda;
  return 2.0 * w * u;
}

struct Weight {
  double value;
  bool clipped;
};

Weight advantage_weight(double advantage, const IqlConfig& cfg) {
  const double x = cfg.temperature * advantage;
  if (x >= std::log(cfg.advantage_clip)) return {cfg.advantage_clip, true};
  return {std::exp(x), false};
}

void check_finite(double v_term, double q_term, double pi_term, std::size_t index) {
  if (!std::isfinite(v_term) || !std::isfinite(q_term) || !std::isfinite(pi_term))
    throw std::runtime_error(fmt::format("non-finite IQL loss at batch index {} (J_V {}, J_Q {}, J_pi {})", index,
                                         v_term, q_term, pi_term));
}

void mix(Vec& target, const Vec& live, double alpha) { target = (1.0 - alpha) * target + alpha * live; }

Vec concat(const Vec& a, const Vec& b) {
  Vec out(a.size() + b.size());
  out << a, b;
  return out;
}

}  // namespace

TabularIql::TabularIql(int S, int K) : num_states(S), num_skills(K) {
  if (S < 1 || K < 1) throw std::invalid_argument("tabular IQL needs S >= 1 and K >= 1");
  q = Vec::Zero(S * K);
  q_target = q;
  v = Vec::Zero(S);
  v_target = v;
  logits = Vec::Zero(S * K);
}

PolicyTable TabularIql::policy() const {
  PolicyTable p;
  p.kind = PolicyKind::HighLevel;
  p.probs = Mat(num_states, num_skills);
  for (int s = 0; s < num_states; ++s) {
    const Vec row = logits.segment(s * num_skills, num_skills);
    const Vec e = (row.array() - row.maxCoeff()).exp();
    p.probs.row(s) = (e / e.sum()).transpose();
  }
  return p;
}

PolicyTable TabularIql::greedy_policy() const {
  PolicyTable p;
  p.kind = PolicyKind::HighLevel;
  p.probs = Mat::Zero(num_states, num_skills);
  for (int s = 0; s < num_states; ++s) {
    Eigen::Index best = 0;
    logits.segment(s * num_skills, num_skills).maxCoeff(&best);
    p.probs(s, best) = 1.0;
  }
  return p;
}

IqlLosses iql_losses(const TabularIql& model, const std::vector<HighLevelTuple>& batch, const IqlConfig& cfg,
                     double gamma_eff, IqlGrads* grads) {
  if (batch.empty()) throw std::invalid_argument("IQL batch is empty");
  const int K = model.num_skills;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  if (grads) {
    grads->q = Vec::Zero(model.q.size());
    grads->v = Vec::Zero(model.v.size());
    grads->pi = Vec::Zero(model.logits.size());
  }
  IqlLosses out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const HighLevelTuple& t = batch[i];
    if (t.s0 < 0 || t.s0 >= model.num_states || t.sc < 0 || t.sc >= model.num_states || t.z < 0 || t.z >= K)
      throw std::out_of_range(fmt::format("IQL tuple {} has indices outside S={}, K={}", i, model.num_states, K));
    const int row = t.s0 * K + t.z;
    const double u = model.q_target[row] - model.v[t.s0];
    const double v_term = expectile_loss(u, cfg.expectile);
    const double y = t.reward + gamma_eff * model.v[t.sc];
    const double q_term = (y - model.q[row]) * (y - model.q[row]);
    const Vec logit_row = model.logits.segment(t.s0 * K, K);
    const double mx = logit_row.maxCoeff();
    const double lse = mx + std::log((logit_row.array() - mx).exp().sum());
    const Weight w = advantage_weight(model.q[row] - model.v[t.s0], cfg);
    const double pi_term = w.value * (lse - logit_row[t.z]);
    check_finite(v_term, q_term, pi_term, i);
    out.jv += inv_b * v_term;
    out.jq += inv_b * q_term;
    out.jpi += inv_b * pi_term;
    out.clipped += w.clipped;
    if (!grads) continue;
    grads->v[t.s0] -= inv_b * expectile_grad(u, cfg.expectile);
    grads->q[row] -= inv_b * 2.0 * (y - model.q[row]);
    const Vec probs = (logit_row.array() - lse).exp();
    grads->pi.segment(t.s0 * K, K) += inv_b * w.value * probs;
    grads->pi[row] -= inv_b * w.value;
  }
  return out;
}

IqlLosses iql_step(TabularIql& model, const std::vector<HighLevelTuple>& batch, const IqlConfig& cfg,
                   double gamma_eff, IqlOptimizer& opt) {
  IqlGrads g;
  const IqlLosses out = iql_losses(model, batch, cfg, gamma_eff, &g);
  opt.q.lr = opt.v.lr = opt.pi.lr = cfg.lr;
  opt.q.step(model.q, g.q);
  opt.v.step(model.v, g.v);
  opt.pi.step(model.logits, g.pi);
  mix(model.q_target, model.q, cfg.alpha);
  mix(model.v_target, model.v, cfg.alpha);
  return out;
}

LatentIql::LatentIql(int sd, int L, int hidden)
    : state_dim(sd),
      latent_dim(L),
      q_net({sd + L, hidden, 1}),
      v_net({sd, hidden, 1}),
      pi_net({sd, hidden, 2 * L}) {
  if (sd < 0 || L < 1 || hidden < 1) throw std::invalid_argument("latent IQL needs state_dim >= 0, L >= 1, hidden >= 1");
}

void LatentIql::init(Rng& rng) {
  q = Vec::Zero(q_net.num_params());
  v = Vec::Zero(v_net.num_params());
  pi = Vec::Zero(pi_net.num_params());
  q_net.init(q.data(), rng, false);
  v_net.init(v.data(), rng, false);
  pi_net.init(pi.data(), rng, true);
  q_target = q;
  v_target = v;
}

double LatentIql::q_value(const Vec& s0, const Vec& z, bool target) const {
  return q_net.forward(target ? q_target.data() : q.data(), concat(s0, z))[0];
}

double LatentIql::v_value(const Vec& s0, bool target) const {
  return v_net.forward(target ? v_target.data() : v.data(), s0)[0];
}

void LatentIql::policy_distribution(const Vec& s0, Vec& mean, Vec& logstd) const {
  const Vec out = pi_net.forward(pi.data(), s0);
  mean = out.head(latent_dim);
  logstd = out.tail(latent_dim).unaryExpr([&](double r) { return clamp.value(r); });
}

double LatentIql::log_prob(const Vec& s0, const Vec& z) const {
  Vec mean, logstd;
  policy_distribution(s0, mean, logstd);
  return nn::gaussian_log_density(z, mean, logstd);
}

Vec LatentIql::policy_mean(const Vec& s0) const {
  Vec mean, logstd;
  policy_distribution(s0, mean, logstd);
  return mean;
}

Vec LatentIql::sample(const Vec& s0, Rng& rng) const {
  Vec mean, logstd;
  policy_distribution(s0, mean, logstd);
  for (int j = 0; j < latent_dim; ++j) mean[j] += std::exp(logstd[j]) * standard_normal(rng);
  return mean;
}

IqlLosses iql_losses(const LatentIql& model, const std::vector<LatentHighTuple>& batch, const IqlConfig& cfg,
                     double gamma_eff, IqlGrads* grads) {
  if (batch.empty()) throw std::invalid_argument("IQL batch is empty");
  if (model.q.size() == 0) throw std::logic_error("latent IQL is not initialized");
  const int L = model.latent_dim;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  if (grads) {
    grads->q = Vec::Zero(model.q.size());
    grads->v = Vec::Zero(model.v.size());
    grads->pi = Vec::Zero(model.pi.size());
  }
  IqlLosses out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const LatentHighTuple& t = batch[i];
    if (t.s0.size() != model.state_dim || t.sc.size() != model.state_dim || t.z.size() != L)
      throw std::invalid_argument(fmt::format("IQL tuple {} does not match state_dim={}, L={}", i, model.state_dim, L));
    nn::Mlp::Cache q_cache, v_cache, pi_cache;
    const Vec sz = concat(t.s0, t.z);
    const double q_tgt = model.q_net.forward(model.q_target.data(), sz)[0];
    const double q_live = model.q_net.forward(model.q.data(), sz, &q_cache)[0];
    const double v_live = model.v_net.forward(model.v.data(), t.s0, &v_cache)[0];
    const double v_next = model.v_net.forward(model.v.data(), t.sc)[0];
    const Vec pi_out = model.pi_net.forward(model.pi.data(), t.s0, &pi_cache);
    const Vec mean = pi_out.head(L);
    const Vec logstd = pi_out.tail(L).unaryExpr([&](double r) { return model.clamp.value(r); });

    const double u = q_tgt - v_live;
    const double v_term = expectile_loss(u, cfg.expectile);
    const double y = t.reward + gamma_eff * v_next;
    const double q_term = (y - q_live) * (y - q_live);
    const Weight w = advantage_weight(q_live - v_live, cfg);
    const double pi_term = -w.value * nn::gaussian_log_density(t.z, mean, logstd);
    check_finite(v_term, q_term, pi_term, i);
    out.jv += inv_b * v_term;
    out.jq += inv_b * q_term;
    out.jpi += inv_b * pi_term;
    out.clipped += w.clipped;
    if (!grads) continue;
    model.v_net.backward(model.v.data(), v_cache, Vec::Constant(1, -inv_b * expectile_grad(u, cfg.expectile)),
                         grads->v.data());
    model.q_net.backward(model.q.data(), q_cache, Vec::Constant(1, -inv_b * 2.0 * (y - q_live)), grads->q.data());
    Vec g(2 * L);
    for (int j = 0; j < L; ++j) {
      const double inv_var = std::exp(-2.0 * logstd[j]);
      const double d = t.z[j] - mean[j];
      g[j] = -inv_b * w.value * d * inv_var;
      g[L + j] = inv_b * w.value * (1.0 - d * d * inv_var) * model.clamp.derivative(pi_out[L + j]);
    }
    model.pi_net.backward(model.pi.data(), pi_cache, g, grads->pi.data());
  }
  return out;
}

IqlLosses iql_step(LatentIql& model, const std::vector<LatentHighTuple>& batch, const IqlConfig& cfg,
                   double gamma_eff, IqlOptimizer& opt) {
  IqlGrads g;
  const IqlLosses out = iql_losses(model, batch, cfg, gamma_eff, &g);
  opt.q.lr = opt.v.lr = opt.pi.lr = cfg.lr;
  opt.q.step(model.q, g.q);
  opt.v.step(model.v, g.v);
  opt.pi.step(model.pi, g.pi);
  mix(model.q_target, model.q, cfg.alpha);
  mix(model.v_target, model.v, cfg.alpha);
  return out;
}

namespace {

template <typename Model, typename Tuple>
void run_training(Model& model, const std::vector<Tuple>& tuples, const std::vector<double>& weights,
                  const IqlConfig& cfg, double gamma_eff, Rng& rng, IqlTraces& traces) {
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  IqlOptimizer opt;
  std::vector<Tuple> batch(cfg.batch_size);
  for (int step = 0; step < cfg.steps; ++step) {
    for (auto& b : batch) b = tuples[pick(rng)];
    const IqlLosses l = iql_step(model, batch, cfg, gamma_eff, opt);
    traces.jv.push_back(l.jv);
    traces.jq.push_back(l.jq);
    traces.jpi.push_back(l.jpi);
    traces.clipped += l.clipped;
    traces.weights += cfg.batch_size;
  }
}

}  // namespace

TabularIqlResult train_iql(const HighLevelDataset& data, int num_states, int num_skills, const IqlConfig& cfg) {
  cfg.validate();
  if (data.tuples.empty()) throw std::invalid_argument("cannot train IQL on an empty D_hi");
  std::vector<double> weights;
  for (const auto& t : data.tuples) {
    if (!(t.weight >= 0.0)) throw std::invalid_argument("D_hi tuple weights must be non-negative");
    weights.push_back(t.weight);
  }
  TabularIqlResult res;
  res.model = TabularIql(num_states, num_skills);
  Rng rng(derive_seed(cfg.seed, 0x1a1));
  run_training(res.model, data.tuples, weights, cfg, iql_discount(data.gamma, data.c, cfg.discount), rng,
               res.traces);
  return res;
}

LatentIqlResult train_iql(const LatentHighDataset& data, const IqlConfig& cfg) {
  cfg.validate();
  if (data.tuples.empty()) throw std::invalid_argument("cannot train IQL on an empty D_hi");
  const int sd = static_cast<int>(data.tuples.front().s0.size());
  const int L = static_cast<int>(data.tuples.front().z.size());
  LatentIqlResult res;
  res.model = LatentIql(sd, L, cfg.hidden);
  Rng rng(derive_seed(cfg.seed, 0x1a2));
  res.model.init(rng);
  const std::vector<double> weights(data.tuples.size(), 1.0);
  run_training(res.model, data.tuples, weights, cfg, iql_discount(data.gamma, data.c, cfg.discount), rng,
               res.traces);
  return res;
}

}  // namespace hrl
