#pragma once

#include <vector>

#include "hrl/mdp.hpp"
#include "hrl/random.hpp"

namespace hrl {

struct Disc {
  Eigen::Vector2d center;
  double radius = 0.1;
};

struct Rect {
  Eigen::Vector2d lower;
  Eigen::Vector2d upper;

  bool contains(const Eigen::Vector2d& p) const {
    return (p.array() > lower.array()).all() && (p.array() < upper.array()).all();
  }
};

/// 2-d point mass in an axis-aligned box. Each step moves by the clipped
/// action; moves ending inside an obstacle are rejected. Reward is 1 when the
/// post-step position lies in a goal disc.
struct PointMassEnv {
  Rect bounds{{0.0, 0.0}, {1.0, 1.0}};
  double max_step = 0.1;
  std::vector<Disc> goals;
  std::vector<Rect> obstacles;
  Eigen::Vector2d start{0.1, 0.1};
  double start_jitter = 0.03;

  struct Step {
    Vec next;
    double reward = 0.0;
  };

  Vec clip_action(const Vec& action) const;
  Step step(const Vec& state, const Vec& action) const;
  bool in_goal(const Vec& state) const;
  Vec reset(Rng& rng) const;
  Vec action_low() const { return Vec::Constant(2, -max_step); }
  Vec action_high() const { return Vec::Constant(2, max_step); }
};

/// Unit square with a central obstacle, leaving two disjoint corridors (via
/// the top-left or the bottom-right corner) from the start to the goal.
PointMassEnv make_bimodal_testbed();

/// Two-skill scripted behavior for the bimodal testbed. Skill 0 heads up the
/// left corridor first, skill 1 heads along the bottom corridor first; they
/// only disagree in the start region.
struct CorridorBehavior {
  int num_skills = 2;
  double speed = 0.08;
  double noise = 0.01;

  Vec act(const PointMassEnv& env, const Vec& state, int skill, Rng& rng) const;
};

}  // namespace hrl
