#pragma once

#include <string>
#include <vector>

#include "hrl/data.hpp"
#include "hrl/mdp.hpp"
#include "hrl/nn.hpp"

namespace hrl {

/// Effective uses gamma^c per high-level transition, Literal uses gamma.
enum class DiscountMode { Effective, Literal };

DiscountMode parse_discount_mode(const std::string& name);
double iql_discount(double gamma, int c, DiscountMode mode);

/// |lambda - 1[u < 0]| u^2
double expectile_loss(double u, double lambda);

struct IqlConfig {
  double expectile = 0.7;
  double temperature = 3.0;
  double alpha = 0.005;  // target mix rate
  double lr = 3e-3;
  int steps = 5000;
  int batch_size = 64;
  int hidden = 32;
  double advantage_clip = 100.0;
  DiscountMode discount = DiscountMode::Effective;
  std::uint64_t seed = 0;

  void validate() const;
};

/// All three losses are minimized; J_pi is the negative advantage-weighted
/// log-likelihood.
struct IqlLosses {
  double jv = 0.0;
  double jq = 0.0;
  double jpi = 0.0;
  int clipped = 0;  // advantage weights that hit the clip
};

struct IqlGrads {
  Vec q;
  Vec v;
  Vec pi;
};

struct IqlOptimizer {
  nn::Adam q;
  nn::Adam v;
  nn::Adam pi;
};

/// Free tables: Q and logits indexed s*K + z, V indexed by s.
struct TabularIql {
  int num_states = 0;
  int num_skills = 0;
  Vec q, q_target;
  Vec v, v_target;
  Vec logits;

  TabularIql() = default;
  TabularIql(int S, int K);

  /// Softmax of the logits, S x K.
  PolicyTable policy() const;
  PolicyTable greedy_policy() const;
};

/// One-hidden-layer networks; the policy is a diagonal Gaussian over z.
struct LatentIql {
  int state_dim = 0;
  int latent_dim = 0;
  nn::Mlp q_net, v_net, pi_net;
  nn::SoftClamp clamp{-5.0, 2.0};
  Vec q, q_target;
  Vec v, v_target;
  Vec pi;

  LatentIql() = default;
  LatentIql(int state_dim, int latent_dim, int hidden);
  void init(Rng& rng);

  double q_value(const Vec& s0, const Vec& z, bool target = false) const;
  double v_value(const Vec& s0, bool target = false) const;
  void policy_distribution(const Vec& s0, Vec& mean, Vec& logstd) const;
  double log_prob(const Vec& s0, const Vec& z) const;
  Vec policy_mean(const Vec& s0) const;
  Vec sample(const Vec& s0, Rng& rng) const;
};

/// Losses on frozen parameters. J_V uses the target Q, J_Q the live V
/// (held constant), J_pi the live Q and V (weights held constant).
IqlLosses iql_losses(const TabularIql& model, const std::vector<HighLevelTuple>& batch, const IqlConfig& config,
                     double gamma_eff, IqlGrads* grads = nullptr);
IqlLosses iql_losses(const LatentIql& model, const std::vector<LatentHighTuple>& batch, const IqlConfig& config,
                     double gamma_eff, IqlGrads* grads = nullptr);

/// One gradient step on each loss from the same frozen parameters, then
/// target mixing with alpha.
IqlLosses iql_step(TabularIql& model, const std::vector<HighLevelTuple>& batch, const IqlConfig& config,
                   double gamma_eff, IqlOptimizer& opt);
IqlLosses iql_step(LatentIql& model, const std::vector<LatentHighTuple>& batch, const IqlConfig& config,
                   double gamma_eff, IqlOptimizer& opt);

struct IqlTraces {
  std::vector<double> jv, jq, jpi;
  long clipped = 0;
  long weights = 0;

  double clip_rate() const { return weights ? static_cast<double>(clipped) / static_cast<double>(weights) : 0.0; }
};

struct TabularIqlResult {
  TabularIql model;
  IqlTraces traces;
};

struct LatentIqlResult {
  LatentIql model;
  IqlTraces traces;
};

TabularIqlResult train_iql(const HighLevelDataset& data, int num_states, int num_skills, const IqlConfig& config);
LatentIqlResult train_iql(const LatentHighDataset& data, const IqlConfig& config);

}  // namespace hrl
