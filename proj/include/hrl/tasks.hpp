#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hrl/analysis.hpp"
#include "hrl/data.hpp"
#include "hrl/flow.hpp"
#include "hrl/iql.hpp"
#include "hrl/pevi.hpp"
#include "hrl/vae.hpp"

namespace hrl {

struct TabularTask {
  LinearTabularMDP mdp;
  BehaviorPolicy behavior;
};

// ---- sparse chain -----------------------------------------------------------

/// States 0..length-1, actions {left, right}; a move fails (stays) with
/// probability `slip`. Reward 1 only at the right end, which is absorbing
/// under right. Start at state 0. Two noisy skills per state: one takes left,
/// the other right, each with probability 1 - skill_noise. Which skill index
/// means "right" is drawn from the seed.
struct ChainConfig {
  int length = 6;
  double slip = 0.1;
  double skill_noise = 0.1;
  double gamma = 0.9;

  void validate() const;
};

TabularTask make_sparse_chain(const ChainConfig& config, std::uint64_t seed);

// ---- bandit rate testbed ----------------------------------------------------

/// `states` states with uniform transitions whatever the action; arm a pays a
/// Bernoulli reward with a seeded mean in [low, high]. Skills are the arms.
/// Arm 0 is swapped away from the best mean so that pessimistic ties do not
/// land on the optimum.
struct BanditConfig {
  int states = 2;
  int arms = 80;
  double low = 0.2;
  double high = 0.8;
  double gamma = 0.9;

  void validate() const;
};

TabularTask make_bandit_task(const BanditConfig& config, std::uint64_t seed);

// ---- random instances -------------------------------------------------------

struct RandomTaskConfig {
  int states = 6;
  int actions = 3;
  int skills = 2;
  int dim = 4;
  double gamma = 0.9;
  BehaviorStyle behavior = BehaviorStyle::SoftmaxDiverse;
  /// Dirichlet kernel with rewards r(s) shared by all actions, embedded with
  /// one-hot features (dim is then S*A + 1).
  bool state_rewards = false;

  void validate() const;
};

TabularTask make_random_task(const RandomTaskConfig& config, std::uint64_t seed);

// ---- offline data -----------------------------------------------------------

struct OfflineData {
  HighLevelDataset high;
  SkillDataset low;  // the c-step segments behind each tuple
};

/// N independent c-step rollouts of the behavior. Each starts at s ~ start
/// (uniform when empty), draws z from the skill prior and keeps it for c steps.
OfflineData sample_offline_data(const LinearTabularMDP& mdp, const BehaviorPolicy& behavior, int c, int N,
                                std::uint64_t seed, const Vec& start = {});

// ---- tabular pipeline -------------------------------------------------------

enum class HighLearner { Pevi, Iql };

HighLearner parse_high_learner(const std::string& name);

struct PipelineOptions {
  int c = 1;
  int N = 500;
  double C = 1.0;
  double delta = 0.1;
  double lambda_reg = 1.0;
  double smoothing = 0.0;
  Vec start;  // data start distribution, uniform when empty
  std::uint64_t seed = 0;
  bool audit = true;  // also compute eps_omega, c_dagger and the bound
  HighLearner learner = HighLearner::Pevi;
  IqlConfig iql;  // used when learner is Iql; its seed is derived from `seed`

  void validate() const;
};

struct PipelineResult {
  DecompositionReport report;
  double beta_scale = 0.0;
  double eps_theta = 0.0;  // measured TV of the learned primitive
  double eps_omega = 0.0;
  double c_dagger = 0.0;
  BoundTerms bound;  // zeros when c_dagger is infinite
  bool bound_finite = false;
  int learner_iterations = 0;  // PEVI sweeps or IQL steps
};

/// Offline data -> MLE primitive -> high-level policy (PEVI with the
/// theoretical bonus scale, or greedy tabular IQL) -> exact decomposition of
/// the learned hierarchical policy.
PipelineResult run_tabular_pipeline(const TabularTask& task, const PipelineOptions& options);

/// TV error of the tabular MLE primitive fitted from N behavior samples,
/// weighted by the sample frequencies.
double primitive_tv_at(const TabularTask& task, int N, std::uint64_t seed);

/// Least-squares slope of log(y) against log(x).
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

// ---- continuous testbed -----------------------------------------------------

struct ContrastConfig {
  int c = 4;
  int trajectories = 60;
  int horizon = 24;
  int flow_blocks = 4;
  int hidden = 32;
  int latent_dim = 2;
  double flow_kl_weight = 0.1;
  TrainOptions train{1500, 64, 3e-3, 0};
  int latent_samples = 200;
  double latent_scale = 1.0;  // random latents ~ N(0, scale^2 I)
  double similarity_radius = 0.1;
  double gamma = 0.99;

  void validate() const;
};

struct ContrastResult {
  double flow_reconstruction = 0.0;      // max-norm round-trip error over segments
  double vae_reconstruction = 0.0;       // mean L1 per segment
  double flow_similarity_median = 0.0;   // finite-median eps of random-latent decisions
  double vae_similarity_median = 0.0;
  double flow_uncovered = 0.0;           // fraction of decisions with no neighbor
  double vae_uncovered = 0.0;
  int segments = 0;
  std::vector<double> flow_loss_trace;
  std::vector<double> vae_loss_trace;
  std::vector<Decision> flow_decisions;
  std::vector<Decision> vae_decisions;
};

/// Trains a flow and a VAE on the same segments with the same optimizer
/// budget and compares reconstruction and random-latent similarity.
ContrastResult run_representation_contrast(const ContrastConfig& config, std::uint64_t seed);

// ---- Monte Carlo evaluation -------------------------------------------------

struct MonteCarloEstimate {
  double mean = 0.0;
  double half_width = 0.0;  // 95% normal interval
  int episodes = 0;
  int horizon = 0;
};

/// Horizon T is the smallest with gamma^T r_max / (1 - gamma) <= 1e-3.
int monte_carlo_horizon(double gamma, double r_max);

/// Discounted return of `act` on the point mass from env.reset().
using ContinuousPolicy = std::function<Vec(const Vec& state, int t, Rng& rng)>;
MonteCarloEstimate monte_carlo_return(const PointMassEnv& env, const ContinuousPolicy& act, double gamma,
                                      int episodes, std::uint64_t seed);

}  // namespace hrl
