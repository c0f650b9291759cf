#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hrl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Which conditioning tuple a PolicyTable row is indexed by.
enum class PolicyKind {
  LowLevel,   // rows: s * num_skills + z, columns: actions
  HighLevel,  // rows: s, columns: skills
  Flat,       // rows: s, columns: actions
};

/// Tabular stochastic policy. Each row of `probs` is a distribution over the
/// acted-upon set (actions or skills).
struct PolicyTable {
  PolicyKind kind = PolicyKind::Flat;
  Mat probs;

  int num_rows() const { return static_cast<int>(probs.rows()); }
  int num_choices() const { return static_cast<int>(probs.cols()); }
  double prob(int row, int choice) const { return probs(row, choice); }

  /// Deterministic policy putting all mass on `choice[row]`.
  static PolicyTable deterministic(PolicyKind kind, const std::vector<int>& choice, int num_choices);
  static PolicyTable uniform(PolicyKind kind, int rows, int num_choices);

  /// Throws std::invalid_argument unless every row is a probability vector (1e-12).
  void validate() const;
};

/// Known feature map of a linear MDP.
///   P(s'|s,a) = Psi(s,a,s')^T omega,  E[r(s,a)] = Phi(s,a)^T omega
struct FeatureMap {
  int dim = 0;
  int num_states = 0;
  int num_actions = 0;
  Mat phi;  // (S*A) x d, row s*A + a
  Mat psi;  // (S*A*S) x d, row (s*A + a)*S + s'

  Eigen::Index phi_row(int s, int a) const { return static_cast<Eigen::Index>(s) * num_actions + a; }
  Eigen::Index psi_row(int s, int a, int next) const {
    return (static_cast<Eigen::Index>(s) * num_actions + a) * num_states + next;
  }
};

/// Reward emission mode for sampled transitions. Expected rewards are exact
/// either way; Bernoulli mode emits r_max with probability E[r]/r_max.
enum class RewardNoise { None, Bernoulli };

struct LinearTabularMDP {
  int num_states = 0;
  int num_actions = 0;
  Vec omega;
  FeatureMap features;
  double gamma = 0.9;
  double r_max = 1.0;
  Vec mu0;
  RewardNoise reward_noise = RewardNoise::None;

  int dim() const { return features.dim; }
};

/// Dense view of any finite discounted MDP: the base MDP and the hyper-MDP
/// both reduce to this for evaluation and planning.
struct TabularModel {
  int num_states = 0;
  int num_actions = 0;
  Mat P;  // (S*A) x S
  Vec r;  // S*A expected rewards
  double gamma = 0.9;
  double r_max = 1.0;
  Vec mu0;

  Eigen::Index row(int s, int a) const { return static_cast<Eigen::Index>(s) * num_actions + a; }
};

struct ValueIterationResult {
  Vec values;
  PolicyTable policy;
  int iterations = 0;
};

// ---- construction -----------------------------------------------------------

/// Random linear MDP, deterministic in `seed`. Transition features follow a
/// low-rank mixture: Psi(s,a,s')_j = m_j(s,a) mu_j(s') / omega_j with m(s,a) a
/// Dirichlet weight vector and mu_j Dirichlet next-state laws.
LinearTabularMDP build_tabular_linear_mdp(std::uint64_t seed, int d, int num_states, int num_actions,
                                          double gamma, double r_max);

/// Embeds an explicit tabular MDP (kernel rows s*A+a, rewards in [0, 1]) as a
/// linear MDP with one-hot reward features: d = S*A + 1, Phi(s,a) = e_{sA+a},
/// Psi(s,a,s') = P(s'|s,a) e_d and omega = (r, 1).
LinearTabularMDP embed_tabular_mdp(const Mat& kernel, const Vec& rewards, double gamma, const Vec& mu0);

/// Throws std::invalid_argument naming the first violated invariant.
void validate_mdp(const LinearTabularMDP& mdp);

// ---- queries ----------------------------------------------------------------

double transition_prob(const LinearTabularMDP& mdp, int s, int a, int next);
double expected_reward(const LinearTabularMDP& mdp, int s, int a);

TabularModel to_tabular(const LinearTabularMDP& mdp);

/// Optimal values and greedy policy (ties to the lowest action). Stops once
/// ||V_{k+1} - V_k||_inf <= tol (1-gamma) / (2 gamma).
ValueIterationResult exact_value_iteration(const TabularModel& model, double tol = 1e-10);
ValueIterationResult exact_value_iteration(const LinearTabularMDP& mdp, double tol = 1e-10);

/// Per-state values of a stationary policy, solving (I - gamma P_pi) V = r_pi.
Vec policy_state_values(const TabularModel& model, const PolicyTable& policy);
/// J(pi) = mu0^T V_pi.
double policy_value(const TabularModel& model, const PolicyTable& policy);
double policy_value(const LinearTabularMDP& mdp, const PolicyTable& policy);

/// Bellman optimality residual ||V - T V||_inf.
double bellman_residual(const TabularModel& model, const Vec& values);

/// One-step state kernel induced by a policy over the model's actions.
Mat policy_kernel(const TabularModel& model, const PolicyTable& policy);
Vec policy_rewards(const TabularModel& model, const PolicyTable& policy);

/// k-th power of the policy-induced kernel (k >= 1).
Mat k_step_transition(const LinearTabularMDP& mdp, const PolicyTable& policy, int k);

/// Normalized discounted state visitation (1-gamma) mu^T (I - gamma P)^-1.
Vec discounted_visitation(const Mat& kernel, double gamma, const Vec& mu);

}  // namespace hrl
