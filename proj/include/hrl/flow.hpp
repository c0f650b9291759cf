#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "hrl/data.hpp"
#include "hrl/nn.hpp"

namespace hrl {

struct FlowConfig {
  int c = 1;
  int m = 1;
  int state_dim = 2;
  int k = 1;     // coupling blocks
  int H = 50;    // hidden width of the scale and translate networks
  double kl_weight = 0.1;
  double clamp = 5.0;

  int action_dim() const { return c * m; }
  /// Coupling needs two halves, so c*m = 1 is padded with a dummy coordinate.
  int dim() const { return c * m < 2 ? 2 : c * m; }
  bool padded() const { return c * m < 2; }
  void validate() const;
};

/// Conditional affine coupling flow f(z; s0). Block b copies one half of its
/// input and maps the other half x_T to x_T * exp(v) + t, where v, t are
/// networks of [copied half, s0]. Even blocks transform [d1, D), odd blocks
/// [0, d1), with d1 = D / 2. v is bounded by clamp * tanh(raw / clamp).
class CouplingFlow {
 public:
  CouplingFlow() = default;
  explicit CouplingFlow(const FlowConfig& config);

  FlowConfig config;
  Vec params;

  bool trained() const { return params.size() > 0; }
  int num_params() const { return num_params_; }
  int split() const { return config.dim() / 2; }

  /// Small random hidden layers and zero output layers: starts as the identity.
  void init(Rng& rng);

  Vec forward(const Vec& z, const Vec& s0) const;
  /// Returns z and log|det dz/da|.
  std::pair<Vec, double> inverse(const Vec& a, const Vec& s0) const;

  /// Inverse pass that also backpropagates dL/dz and dL/dlog_det into the
  /// flow parameters. Returns dL/da.
  Vec inverse_backward(const Vec& a, const Vec& s0, const Vec& grad_z, double grad_log_det, Vec& grad_params) const;

  const nn::Mlp& scale_net(int block) const { return nets_[2 * block]; }
  const nn::Mlp& shift_net(int block) const { return nets_[2 * block + 1]; }
  std::ptrdiff_t net_offset(int block, bool shift) const { return offsets_[2 * block + (shift ? 1 : 0)]; }

 private:
  struct BlockCache {
    Vec input;  // y on the inverse pass
    Vec raw;
    Vec v;
    Vec output;
    nn::Mlp::Cache scale_cache;
    nn::Mlp::Cache shift_cache;
  };

  void block_ranges(int block, int& cond_begin, int& cond_len, int& trans_begin, int& trans_len) const;
  Vec net_input(const Vec& x, int cond_begin, int cond_len, const Vec& s0) const;
  void check_ready(const Vec& x, const Vec& s0) const;

  std::vector<nn::Mlp> nets_;
  std::vector<std::ptrdiff_t> offsets_;
  int num_params_ = 0;
};

/// State-conditioned diagonal Gaussian rho(z | s0) with soft-clamped log-std.
class SkillPrior {
 public:
  SkillPrior() = default;
  SkillPrior(int dim, int state_dim, int hidden);

  Vec params;
  nn::SoftClamp clamp{-5.0, 2.0};

  bool trained() const { return params.size() > 0; }
  int dim() const { return mean_net_.output_size(); }
  int num_params() const { return mean_net_.num_params() + logstd_net_.num_params(); }
  void init(Rng& rng);

  void distribution(const Vec& s0, Vec& mean, Vec& logstd) const;
  double log_density(const Vec& z, const Vec& s0) const;
  /// Adds d(-log rho(z|s0))/d(params) * weight and returns d(-log rho)/dz * weight.
  Vec neg_log_density_backward(const Vec& z, const Vec& s0, double weight, Vec& grad_params) const;
  Vec sample(const Vec& s0, Rng& rng) const;

  const nn::Mlp& mean_net() const { return mean_net_; }
  const nn::Mlp& logstd_net() const { return logstd_net_; }

 private:
  nn::Mlp mean_net_;
  nn::Mlp logstd_net_;
};

Vec flow_forward(const CouplingFlow& flow, const Vec& z, const Vec& s0);
std::pair<Vec, double> flow_inverse(const CouplingFlow& flow, const Vec& a, const Vec& s0);

/// One training example in flow coordinates (already padded when D = 1).
struct FlowSample {
  Vec a;
  Vec s0;
};

struct FlowLoss {
  double loss = 0.0;
  double nll = 0.0;         // mean[-log N(z) - log_det]
  double prior_term = 0.0;  // mean[-log rho(z|s0) + log N(z)]
  double mean_log_det = 0.0;
};

/// loss = nll + kl_weight * prior_term. Gradients are written when the
/// pointers are non-null.
FlowLoss flow_objective(const CouplingFlow& flow, const SkillPrior& prior, const std::vector<FlowSample>& batch,
                        Vec* grad_flow = nullptr, Vec* grad_prior = nullptr);

struct TrainOptions {
  int steps = 2000;
  int batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct FlowTrainResult {
  CouplingFlow flow;
  SkillPrior prior;
  std::vector<double> loss_trace;
};

/// Adam on minibatches drawn with a seeded stream. With D = 1 the dummy
/// coordinate is redrawn from N(0, 1) for every minibatch.
FlowTrainResult train_flow(const ContinuousSkillDataset& data, const FlowConfig& config, const TrainOptions& options);

/// Flattened segment in flow coordinates (dummy coordinate 0 when padded).
Vec flow_coordinates(const FlowConfig& config, const ContinuousSegment& segment);

/// Decoder built from a trained flow and prior.
class FlowSkillDecoder {
 public:
  using HighPolicy = std::function<Vec(const Vec& s0, Rng& rng)>;

  FlowSkillDecoder(CouplingFlow flow, SkillPrior prior, HighPolicy high_policy, Vec action_low, Vec action_high);

  /// c x m actions for a latent, clipped to the action bounds.
  Mat decode(const Vec& z, const Vec& s0) const;
  /// Latent preimage of a segment's actions.
  Vec encode(const ContinuousSegment& segment) const;
  /// Draws z from the high-level policy (or the prior) and decodes it.
  Mat sample(const Vec& s0, Rng& rng) const;

  const CouplingFlow& flow() const { return flow_; }
  const SkillPrior& prior() const { return prior_; }

 private:
  CouplingFlow flow_;
  SkillPrior prior_;
  HighPolicy high_policy_;
  Vec low_;
  Vec high_;
};

/// Throws if either component is untrained. Empty bounds disable clipping.
FlowSkillDecoder flow_decode_policy(const CouplingFlow& flow, const SkillPrior& prior,
                                    FlowSkillDecoder::HighPolicy high_policy = {}, Vec action_low = {},
                                    Vec action_high = {});

}  // namespace hrl
