#include "hrl/behavior.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

#include "hrl/random.hpp"

namespace hrl {

void BehaviorPolicy::validate() const {
  if (num_skills < 1) throw std::invalid_argument("behavior needs at least one skill");
  if (skill_prior.rows() != num_states || skill_prior.cols() != num_skills)
    throw std::invalid_argument("skill prior must be S x K");
  if (actions.num_rows() != num_states * num_skills || actions.num_choices() != num_actions)
    throw std::invalid_argument("behavior action table must be (S*K) x A");
  for (int s = 0; s < num_states; ++s) {
    if ((skill_prior.row(s).array() < 0.0).any() || std::abs(skill_prior.row(s).sum() - 1.0) > 1e-12)
      throw std::invalid_argument(fmt::format("skill prior at state {} is not a distribution", s));
  }
  actions.validate();
}

BehaviorStyle parse_behavior_style(const std::string& name) {
  if (name == "actions-as-skills") return BehaviorStyle::ActionsAsSkills;
  if (name == "random-deterministic") return BehaviorStyle::RandomDeterministic;
  if (name == "softmax-diverse") return BehaviorStyle::SoftmaxDiverse;
  throw std::invalid_argument(fmt::format("unknown behavior style '{}'", name));
}

BehaviorPolicy behavior_from_tables(const Mat& skill_prior, const Mat& action_table) {
  BehaviorPolicy b;
  b.num_states = static_cast<int>(skill_prior.rows());
  b.num_skills = static_cast<int>(skill_prior.cols());
  b.num_actions = static_cast<int>(action_table.cols());
  b.skill_prior = skill_prior;
  b.actions.kind = PolicyKind::LowLevel;
  b.actions.probs = action_table;
  b.validate();
  return b;
}

BehaviorPolicy make_behavior_policy(const LinearTabularMDP& mdp, int num_skills, BehaviorStyle style,
                                    std::uint64_t seed) {
  if (num_skills < 1) throw std::invalid_argument("number of skills K must be >= 1");
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  const int K = num_skills;
  Mat prior = Mat::Constant(S, K, 1.0 / K);
  Mat table = Mat::Zero(static_cast<Eigen::Index>(S) * K, A);
  Rng rng(derive_seed(seed, 0xbe4a));

  switch (style) {
    case BehaviorStyle::ActionsAsSkills:
      if (K != A)
        throw std::invalid_argument(
            fmt::format("actions-as-skills needs K == num_actions ({}), got K = {}", A, K));
      for (int s = 0; s < S; ++s)
        for (int z = 0; z < K; ++z) table(s * K + z, z) = 1.0;
      break;
    case BehaviorStyle::RandomDeterministic:
      for (int s = 0; s < S; ++s)
        for (int z = 0; z < K; ++z)
          table(s * K + z, std::uniform_int_distribution<int>(0, A - 1)(rng)) = 1.0;
      break;
    case BehaviorStyle::SoftmaxDiverse: {
      // Redraw until every pair of skills disagrees on at least one state.
      for (int attempt = 0; attempt < 100; ++attempt) {
        for (int row = 0; row < S * K; ++row) {
          Vec logits(A);
          for (int a = 0; a < A; ++a) logits[a] = 2.0 * standard_normal(rng);
          logits.array() -= logits.maxCoeff();
          Vec e = logits.array().exp();
          table.row(row) = (e / e.sum()).transpose();
        }
        bool diverse = true;
        for (int z1 = 0; z1 < K && diverse; ++z1)
          for (int z2 = z1 + 1; z2 < K && diverse; ++z2) {
            bool differs = false;
            for (int s = 0; s < S && !differs; ++s)
              differs = (table.row(s * K + z1) - table.row(s * K + z2)).cwiseAbs().maxCoeff() > 1e-9;
            diverse = differs;
          }
        if (diverse) break;
      }
      break;
    }
  }
  return behavior_from_tables(prior, table);
}

}  // namespace hrl
