#pragma once

#include <cstdint>

#include "hrl/mdp.hpp"

namespace hrl {

/// Latent-skill behavior policy beta(a | s, z) with a (possibly
/// state-conditioned) skill prior.
struct BehaviorPolicy {
  int num_states = 0;
  int num_actions = 0;
  int num_skills = 0;
  Mat skill_prior;      // S x K, row s is the prior over skills at state s
  PolicyTable actions;  // LowLevel, rows s*K + z

  double action_prob(int s, int z, int a) const { return actions.prob(s * num_skills + z, a); }

  /// Throws std::invalid_argument on malformed tables.
  void validate() const;
};

enum class BehaviorStyle { ActionsAsSkills, RandomDeterministic, SoftmaxDiverse };

BehaviorStyle parse_behavior_style(const std::string& name);

/// Builds a behavior policy over the MDP's states and actions with a uniform
/// state-independent skill prior.
BehaviorPolicy make_behavior_policy(const LinearTabularMDP& mdp, int num_skills, BehaviorStyle style,
                                    std::uint64_t seed);

/// Behavior from explicit tables: `action_table` rows s*K + z.
BehaviorPolicy behavior_from_tables(const Mat& skill_prior, const Mat& action_table);

}  // namespace hrl
