#include "hrl/point_mass.hpp"

#include <algorithm>
#include <stdexcept>

namespace hrl {

Vec PointMassEnv::clip_action(const Vec& action) const {
  if (action.size() != 2) throw std::invalid_argument("point-mass actions are 2-d");
  return action.cwiseMax(-max_step).cwiseMin(max_step);
}

PointMassEnv::Step PointMassEnv::step(const Vec& state, const Vec& action) const {
  if (state.size() != 2) throw std::invalid_argument("point-mass states are 2-d");
  Eigen::Vector2d proposed = state + clip_action(action);
  proposed = proposed.cwiseMax(bounds.lower).cwiseMin(bounds.upper);
  bool blocked = std::any_of(obstacles.begin(), obstacles.end(), [&](const Rect& r) { return r.contains(proposed); });
  Step out;
  out.next = blocked ? Vec(state) : Vec(proposed);
  out.reward = in_goal(out.next) ? 1.0 : 0.0;
  return out;
}

bool PointMassEnv::in_goal(const Vec& state) const {
  return std::any_of(goals.begin(), goals.end(), [&](const Disc& g) {
    return (Eigen::Vector2d(state) - g.center).norm() <= g.radius;
  });
}

Vec PointMassEnv::reset(Rng& rng) const {
  Vec s(2);
  for (int i = 0; i < 2; ++i) s[i] = start[i] + start_jitter * (2.0 * uniform01(rng) - 1.0);
  return s;
}

PointMassEnv make_bimodal_testbed() {
  PointMassEnv env;
  env.max_step = 0.1;
  env.start = {0.1, 0.1};
  env.goals = {Disc{{0.9, 0.9}, 0.1}};
  env.obstacles = {Rect{{0.25, 0.25}, {0.75, 0.75}}};
  return env;
}

Vec CorridorBehavior::act(const PointMassEnv& env, const Vec& state, int skill, Rng& rng) const {
  const double x = state[0];
  const double y = state[1];
  const bool left = x < 0.25;
  const bool bottom = y < 0.25;
  Eigen::Vector2d dir;
  if (env.in_goal(state)) {
    dir = Eigen::Vector2d::Zero();
  } else if (left && bottom) {
    dir = skill == 0 ? Eigen::Vector2d(0.0, 1.0) : Eigen::Vector2d(1.0, 0.0);
  } else if (left) {
    dir = y < 0.85 ? Eigen::Vector2d(0.0, 1.0) : Eigen::Vector2d(1.0, 0.0);
  } else if (bottom) {
    dir = x < 0.85 ? Eigen::Vector2d(1.0, 0.0) : Eigen::Vector2d(0.0, 1.0);
  } else if (y >= 0.75) {
    dir = Eigen::Vector2d(1.0, 0.0);
  } else {
    dir = Eigen::Vector2d(0.0, 1.0);
  }
  Vec a(2);
  for (int i = 0; i < 2; ++i) a[i] = speed * dir[i] + noise * standard_normal(rng);
  return env.clip_action(a);
}

}  // namespace hrl
