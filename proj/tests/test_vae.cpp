#include <cmath>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "hrl/vae.hpp"

using namespace hrl;

namespace {

ContinuousSegment random_segment(Rng& rng, int c, int state_dim, int m, double scale = 1.0) {
  ContinuousSegment seg;
  seg.states = Mat(c, state_dim);
  seg.actions = Mat(c, m);
  for (int t = 0; t < c; ++t) {
    for (int j = 0; j < state_dim; ++j) seg.states(t, j) = scale * standard_normal(rng);
    for (int j = 0; j < m; ++j) seg.actions(t, j) = scale * standard_normal(rng);
  }
  return seg;
}

Vec random_noise(Rng& rng, int n) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = standard_normal(rng);
  return v;
}

VaeModel random_model(const VaeConfig& cfg, Rng& rng, double jitter) {
  VaeModel model(cfg);
  model.init(rng);
  for (Eigen::Index i = 0; i < model.params.size(); ++i) model.params[i] += jitter * standard_normal(rng);
  return model;
}

}  // namespace

TEST_CASE("gaussian KL hand values") {
  CHECK(nn::gaussian_kl(Vec::Constant(1, 1.0), Vec::Zero(1), Vec::Zero(1), Vec::Zero(1)) == doctest::Approx(0.5));
  const double l2 = std::log(2.0);
  CHECK(nn::gaussian_kl(Vec::Zero(1), Vec::Constant(1, l2), Vec::Zero(1), Vec::Zero(1)) ==
        doctest::Approx(1.5 - l2));
  Vec m(2), l(2);
  m << 0.3, -1.2;
  l << -0.4, 0.7;
  CHECK(nn::gaussian_kl(m, l, m, l) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("gaussian KL closed form matches Monte Carlo") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec mq = random_noise(rng, 2), mp = random_noise(rng, 2);
    const Vec lq = 0.4 * random_noise(rng, 2), lp = 0.4 * random_noise(rng, 2);
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vec x = mq + lq.array().exp().matrix().cwiseProduct(random_noise(rng, 2));
      const double v = nn::gaussian_log_density(x, mq, lq) - nn::gaussian_log_density(x, mp, lp);
      sum += v;
      sq += v * v;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::abs(mean - nn::gaussian_kl(mq, lq, mp, lp)) < 4.0 * se + 1e-9);
  }
}

TEST_CASE("ELBO gradients match finite differences") {
  Rng rng(23);
  int failures = 0;
  for (int trial = 0; trial < 20; ++trial) {
    VaeConfig cfg;
    cfg.c = 1 + trial % 3;
    cfg.m = 1 + trial % 2;
    cfg.state_dim = trial % 3;
    cfg.L = 1 + trial % 3;
    cfg.H = 4;
    cfg.kl_weight = 0.25 * (trial % 5);
    cfg.linear = trial % 4 == 3;
    const VaeModel model = random_model(cfg, rng, 0.3);
    std::vector<ContinuousSegment> batch;
    std::vector<Vec> eps;
    for (int i = 0; i < 3; ++i) {
      batch.push_back(random_segment(rng, cfg.c, cfg.state_dim, cfg.m));
      eps.push_back(random_noise(rng, cfg.L));
    }
    Vec grad;
    elbo(model, batch, eps, &grad);
    auto f = [&](const Vec& p) {
      VaeModel copy = model;
      copy.params = p;
      return elbo(copy, batch, eps).loss;
    };
    const auto check = testing::check_gradient(f, model.params, grad, 1e-5, 1e-4, 1e-6);
    failures += check.failures;
    if (check.failures) MESSAGE("trial ", trial, " worst relative error ", check.worst);
  }
  CHECK(failures == 0);
}

TEST_CASE("prior receives no gradient without the KL term") {
  Rng rng(5);
  VaeConfig cfg;
  cfg.c = 2;
  cfg.m = 2;
  cfg.kl_weight = 0.0;
  const VaeModel model = random_model(cfg, rng, 0.2);
  std::vector<ContinuousSegment> batch{random_segment(rng, 2, 2, 2), random_segment(rng, 2, 2, 2)};
  std::vector<Vec> eps{random_noise(rng, cfg.L), random_noise(rng, cfg.L)};
  Vec grad;
  elbo(model, batch, eps, &grad);
  CHECK(grad.segment(model.prior_offset(), model.prior().num_params()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(grad.head(model.prior_offset()).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("expected negative ELBO bounds the negative marginal log-likelihood") {
  Rng rng(31);
  VaeConfig cfg;
  cfg.c = 1;
  cfg.m = 1;
  cfg.state_dim = 1;
  cfg.L = 1;
  cfg.H = 6;
  cfg.kl_weight = 1.0;
  auto normal_pdf = [](double x) { return std::exp(-0.5 * x * x - 0.5 * nn::kLog2Pi); };
  for (int trial = 0; trial < 10; ++trial) {
    const VaeModel model = random_model(cfg, rng, 0.5);
    const ContinuousSegment seg = random_segment(rng, 1, 1, 1);
    const Vec s0 = seg.initial_state();
    const Vec a = seg.actions.row(0).transpose();
    Vec mp, lp;
    model.prior_distribution(s0, mp, lp);

    // p(a | s) = integral of N(a; decoder(s, z)) rho(z | s) dz
    const double sp = std::exp(lp[0]);
    const int grid = 20001;
    const double half = 12.0;
    const double h = 2.0 * half / (grid - 1);
    double marginal = 0.0, neg_elbo = 0.0;
    for (int i = 0; i < grid; ++i) {
      const double u = -half + i * h;
      const double w = (i == 0 || i == grid - 1) ? 0.5 : 1.0;
      Vec md, ld;
      model.decode_distribution(s0, Vec::Constant(1, mp[0] + sp * u), md, ld);
      marginal += w * h * normal_pdf(u) * std::exp(nn::gaussian_log_density(a, md, ld));
      neg_elbo += w * h * normal_pdf(u) * elbo(model, {seg}, {Vec::Constant(1, u)}).loss;
    }
    CHECK(neg_elbo >= -std::log(marginal) - 1e-6);
  }
}

TEST_CASE("reconstruction on a single segment falls during training") {
  Rng rng(3);
  ContinuousSkillDataset data;
  data.c = 2;
  data.state_dim = 2;
  data.action_dim = 2;
  data.segments.push_back(random_segment(rng, 2, 2, 2));
  VaeConfig cfg;
  cfg.c = 2;
  cfg.m = 2;
  cfg.H = 16;
  TrainOptions opt;
  opt.steps = 1500;
  opt.batch_size = 8;
  opt.lr = 3e-3;
  opt.seed = 9;
  const auto res = train_vae(data, cfg, opt);
  auto window = [&](std::size_t from) {
    return std::accumulate(res.reconstruction_trace.begin() + from, res.reconstruction_trace.begin() + from + 50,
                           0.0) / 50.0;
  };
  const double first = window(0);
  const double last = window(res.reconstruction_trace.size() - 50);
  CHECK(first - last >= 0.5 * std::abs(first));

  const auto again = train_vae(data, cfg, opt);
  CHECK(again.model.params == res.model.params);
}

TEST_CASE("linear identity model starts as an autoencoder") {
  Rng rng(8);
  VaeConfig cfg;
  cfg.c = 1;
  cfg.m = 2;
  cfg.L = 2;
  cfg.state_dim = 2;
  cfg.linear = true;
  VaeModel model(cfg);
  model.init(rng);
  for (int i = 0; i < 20; ++i) {
    const ContinuousSegment seg = random_segment(rng, 1, 2, 2);
    const Vec z = vae_encode(model, seg);
    CHECK((z - seg.actions.row(0).transpose()).norm() < 1e-12);
    CHECK((vae_decode(model, z, seg.states) - seg.actions).norm() < 1e-12);
  }

  ContinuousSkillDataset data;
  data.c = 1;
  data.state_dim = 2;
  data.action_dim = 2;
  for (int i = 0; i < 64; ++i) data.segments.push_back(random_segment(rng, 1, 2, 2));
  TrainOptions opt;
  opt.steps = 1200;
  opt.batch_size = 16;
  opt.lr = 3e-3;
  opt.seed = 4;
  const auto res = train_vae(data, cfg, opt);
  // Moving averages over consecutive blocks mostly decrease.
  std::vector<double> blocks;
  for (std::size_t b = 0; b + 100 <= res.reconstruction_trace.size(); b += 100)
    blocks.push_back(std::accumulate(res.reconstruction_trace.begin() + b, res.reconstruction_trace.begin() + b + 100,
                                     0.0) / 100.0);
  int drops = 0;
  for (std::size_t b = 1; b < blocks.size(); ++b) drops += blocks[b] < blocks[b - 1];
  CHECK(blocks.back() < blocks.front());
  CHECK(drops >= static_cast<int>(blocks.size() - 1) / 2);
}

TEST_CASE("VAE error paths") {
  Rng rng(1);
  VaeConfig cfg;
  VaeModel untrained(cfg);
  const ContinuousSegment seg = random_segment(rng, 1, 2, 1);
  CHECK_THROWS_AS(vae_encode(untrained, seg), std::logic_error);
  CHECK_THROWS_AS(vae_decode(untrained, Vec::Zero(2), seg.states), std::logic_error);
  VaeModel model(cfg);
  model.init(rng);
  CHECK_THROWS_AS(vae_encode(model, random_segment(rng, 2, 2, 1)), std::invalid_argument);
  CHECK_THROWS_AS(vae_decode(model, Vec::Zero(3), seg.states), std::invalid_argument);
  VaeConfig bad = cfg;
  bad.L = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  ContinuousSkillDataset empty;
  empty.c = 1;
  empty.state_dim = 2;
  empty.action_dim = 1;
  CHECK_THROWS_AS(train_vae(empty, cfg, TrainOptions{}), std::invalid_argument);
  empty.segments.push_back(seg);
  empty.c = 3;
  CHECK_THROWS_AS(train_vae(empty, cfg, TrainOptions{}), std::invalid_argument);
}
