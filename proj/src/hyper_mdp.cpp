#include "hrl/hyper_mdp.hpp"

#include <stdexcept>

#include <fmt/core.h>

namespace hrl {

double composed_reward_bound(double gamma, int c, double r_max) {
  double total = 0.0;
  double discount = 1.0;
  for (int k = 0; k < c; ++k) {
    total += discount * r_max;
    discount *= gamma;
  }
  return total;
}

Mat skill_kernel(const TabularModel& base, const BehaviorPolicy& behavior, int z) {
  Mat k = Mat::Zero(base.num_states, base.num_states);
  for (int s = 0; s < base.num_states; ++s)
    for (int a = 0; a < base.num_actions; ++a) {
      double p = behavior.action_prob(s, z, a);
      if (p != 0.0) k.row(s) += p * base.P.row(base.row(s, a));
    }
  return k;
}

HyperMDP build_hyper_mdp(const LinearTabularMDP& mdp, const BehaviorPolicy& behavior, int c) {
  if (c < 1) throw std::invalid_argument("skill length c must be >= 1");
  if (behavior.num_skills < 1) throw std::invalid_argument("behavior policy has an empty skill set");
  if (behavior.num_states != mdp.num_states || behavior.num_actions != mdp.num_actions)
    throw std::invalid_argument("behavior policy does not match the MDP's state/action sets");
  behavior.validate();

  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  const int K = behavior.num_skills;
  const int d = mdp.dim();
  const FeatureMap& f = mdp.features;
  const TabularModel base = to_tabular(mdp);

  HyperMDP h;
  h.c = c;
  h.num_states = S;
  h.num_skills = K;
  h.dim = d;
  h.omega = mdp.omega;
  h.gamma_base = mdp.gamma;
  h.r_max_base = mdp.r_max;
  h.r_max_c = composed_reward_bound(mdp.gamma, c, mdp.r_max);
  h.mu0 = mdp.mu0;
  h.behavior = behavior;
  h.gamma_eff = 1.0;
  for (int k = 0; k < c; ++k) h.gamma_eff *= mdp.gamma;

  // One-step skill-averaged features.
  Mat phi1 = Mat::Zero(static_cast<Eigen::Index>(S) * K, d);
  Mat psi1 = Mat::Zero(static_cast<Eigen::Index>(S) * K * S, d);
  for (int s = 0; s < S; ++s)
    for (int z = 0; z < K; ++z)
      for (int a = 0; a < A; ++a) {
        double p = behavior.action_prob(s, z, a);
        if (p == 0.0) continue;
        phi1.row(h.pair_row(s, z)) += p * f.phi.row(f.phi_row(s, a));
        for (int next = 0; next < S; ++next) psi1.row(h.psi_row(s, z, next)) += p * f.psi.row(f.psi_row(s, a, next));
      }

  h.phi_c = Mat::Zero(static_cast<Eigen::Index>(S) * K, d);
  h.psi_c = Mat::Zero(static_cast<Eigen::Index>(S) * K * S, d);
  for (int z = 0; z < K; ++z) {
    const Mat step = skill_kernel(base, behavior, z);
    Mat reach = Mat::Identity(S, S);  // (k)-step kernel under skill z
    double discount = 1.0;
    for (int k = 0; k < c; ++k) {
      for (int s = 0; s < S; ++s)
        for (int mid = 0; mid < S; ++mid) {
          double w = reach(s, mid);
          if (w == 0.0) continue;
          h.phi_c.row(h.pair_row(s, z)) += discount * w * phi1.row(h.pair_row(mid, z));
          if (k == c - 1)
            for (int next = 0; next < S; ++next)
              h.psi_c.row(h.psi_row(s, z, next)) += w * psi1.row(h.psi_row(mid, z, next));
        }
      if (k + 1 < c) reach = reach * step;
      discount *= mdp.gamma;
    }
  }

  TabularModel& m = h.model;
  m.num_states = S;
  m.num_actions = K;
  m.gamma = h.gamma_eff;
  m.r_max = h.r_max_c;
  m.mu0 = h.mu0;
  Vec flat = h.psi_c * h.omega;
  m.P = Mat(static_cast<Eigen::Index>(S) * K, S);
  for (Eigen::Index row = 0; row < m.P.rows(); ++row)
    for (int next = 0; next < S; ++next) m.P(row, next) = flat[row * S + next];
  m.r = h.phi_c * h.omega;
  return h;
}

ValueIterationResult exact_value_iteration(const HyperMDP& hyper, double tol) {
  ValueIterationResult r = exact_value_iteration(hyper.model, tol);
  r.policy.kind = PolicyKind::HighLevel;
  return r;
}

double policy_value(const HyperMDP& hyper, const PolicyTable& high_policy) {
  return policy_value(hyper.model, high_policy);
}

}  // namespace hrl
