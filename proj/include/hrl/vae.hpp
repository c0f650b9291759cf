#pragma once

#include <vector>

#include "hrl/data.hpp"
#include "hrl/flow.hpp"
#include "hrl/nn.hpp"

namespace hrl {

struct VaeConfig {
  int c = 1;
  int m = 1;
  int state_dim = 2;
  int L = 2;   // latent dimension
  int H = 32;  // hidden width
  double kl_weight = 1.0;
  /// Hidden-free networks; encoder and decoder means start as coordinate
  /// copies between actions and latents.
  bool linear = false;

  void validate() const;
};

/// Encoder q(z | tau) over the flattened (s_t, a_t) segment, per-step decoder
/// pi(a_t | s_t, z) and prior rho(z | s0), all diagonal Gaussians with
/// soft-clamped log-std.
class VaeModel {
 public:
  VaeModel() = default;
  explicit VaeModel(const VaeConfig& config);

  VaeConfig config;
  Vec params;
  nn::SoftClamp clamp{-5.0, 2.0};

  bool trained() const { return params.size() > 0; }
  int num_params() const { return num_params_; }
  void init(Rng& rng);

  void encode_distribution(const ContinuousSegment& seg, Vec& mean, Vec& logstd) const;
  void decode_distribution(const Vec& state, const Vec& z, Vec& mean, Vec& logstd) const;
  void prior_distribution(const Vec& s0, Vec& mean, Vec& logstd) const;

  const nn::Mlp& encoder() const { return encoder_; }
  const nn::Mlp& decoder() const { return decoder_; }
  const nn::Mlp& prior() const { return prior_; }
  std::ptrdiff_t encoder_offset() const { return 0; }
  std::ptrdiff_t decoder_offset() const { return encoder_.num_params(); }
  std::ptrdiff_t prior_offset() const { return encoder_.num_params() + decoder_.num_params(); }

  Vec encoder_input(const ContinuousSegment& seg) const;
  void check_segment(const ContinuousSegment& seg) const;

 private:
  nn::Mlp encoder_;
  nn::Mlp decoder_;
  nn::Mlp prior_;
  int num_params_ = 0;
};

struct VaeLoss {
  double loss = 0.0;            // mean[reconstruction + kl_weight * kl]
  double reconstruction = 0.0;  // mean[-sum_t log pi(a_t | s_t, z)]
  double kl = 0.0;              // mean KL(q || rho)
};

/// Negative ELBO with one reparameterized sample z = mean + exp(logstd) * eps
/// per segment; `eps[i]` is the noise for segment i.
VaeLoss elbo(const VaeModel& model, const std::vector<ContinuousSegment>& batch, const std::vector<Vec>& eps,
             Vec* grad = nullptr);

struct VaeTrainResult {
  VaeModel model;
  std::vector<double> loss_trace;
  std::vector<double> reconstruction_trace;
};

VaeTrainResult train_vae(const ContinuousSkillDataset& data, const VaeConfig& config, const TrainOptions& options);

/// Posterior mean.
Vec vae_encode(const VaeModel& model, const ContinuousSegment& seg);
/// Decoder means for each state row (c x state_dim) -> c x m.
Mat vae_decode(const VaeModel& model, const Vec& z, const Mat& states);

}  // namespace hrl
