#pragma once

#include "hrl/behavior.hpp"
#include "hrl/mdp.hpp"

namespace hrl {

/// Every-c-step decision process over (state, skill), itself a linear MDP in
/// the same omega:
///   P_c(s'|s,z) = Psi_c(s,z,s')^T omega,  r_c(s,z) = Phi_c(s,z)^T omega
/// with r_c the discounted c-step expected reward under the skill's behavior.
struct HyperMDP {
  int c = 1;
  int num_states = 0;
  int num_skills = 0;
  int dim = 0;
  Vec omega;
  Mat psi_c;  // (S*K*S) x d, row (s*K + z)*S + s'
  Mat phi_c;  // (S*K) x d, row s*K + z
  double gamma_base = 0.9;
  double gamma_eff = 0.9;  // gamma^c
  double r_max_base = 1.0;
  double r_max_c = 1.0;    // sum_{k<c} gamma^k r_max
  Vec mu0;
  BehaviorPolicy behavior;

  /// Dense kernel/reward view with the skills as actions and discount gamma^c.
  TabularModel model;

  Eigen::Index pair_row(int s, int z) const { return static_cast<Eigen::Index>(s) * num_skills + z; }
  Eigen::Index psi_row(int s, int z, int next) const { return pair_row(s, z) * num_states + next; }
  /// Largest value any policy can reach: r_max_c / (1 - gamma^c).
  double value_bound() const { return r_max_c / (1.0 - gamma_eff); }
};

/// Composes the base kernel and reward features through the behavior for c
/// steps. Throws if the behavior has no skills or mismatches the MDP.
HyperMDP build_hyper_mdp(const LinearTabularMDP& mdp, const BehaviorPolicy& behavior, int c);

/// sum_{k<c} gamma^k r_max (handles gamma = 0).
double composed_reward_bound(double gamma, int c, double r_max);

/// Skill-conditioned one-step kernel P_{beta,z}(s'|s) = sum_a beta(a|s,z) P(s'|s,a).
Mat skill_kernel(const TabularModel& base, const BehaviorPolicy& behavior, int z);

ValueIterationResult exact_value_iteration(const HyperMDP& hyper, double tol = 1e-10);
double policy_value(const HyperMDP& hyper, const PolicyTable& high_policy);

}  // namespace hrl
