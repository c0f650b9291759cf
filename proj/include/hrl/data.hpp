#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hrl/behavior.hpp"
#include "hrl/mdp.hpp"
#include "hrl/point_mass.hpp"

namespace hrl {

struct SkillConfig {
  int c = 1;

  void validate() const;
};

/// Rollout in a tabular MDP. `states` has one more entry than `actions`.
struct Trajectory {
  std::vector<int> states;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<int> skills;  // hidden skill active at each step

  int length() const { return static_cast<int>(actions.size()); }
};

struct ContinuousTrajectory {
  std::vector<Vec> states;
  std::vector<Vec> actions;
  std::vector<double> rewards;
  std::vector<int> skills;

  int length() const { return static_cast<int>(actions.size()); }
};

struct SamplingOptions {
  int num_trajectories = 1;
  int horizon = 1;
  int resample_skill_every = 1;
  std::uint64_t seed = 0;
};

std::vector<Trajectory> sample_trajectories(const LinearTabularMDP& mdp, const BehaviorPolicy& behavior,
                                            const SamplingOptions& options);

std::vector<ContinuousTrajectory> sample_trajectories(const PointMassEnv& env, const CorridorBehavior& behavior,
                                                      const SamplingOptions& options);

/// Sub-trajectory of exactly c steps.
struct Segment {
  int trajectory = 0;
  int offset = 0;
  std::vector<int> states;
  std::vector<int> actions;
  int skill = 0;  // hidden label at the window start, kept for oracle checks
};

struct SkillDataset {
  int c = 1;
  std::vector<Segment> segments;
  int dropped_steps = 0;
};

struct ContinuousSegment {
  int trajectory = 0;
  int offset = 0;
  Mat states;   // c x state_dim
  Mat actions;  // c x action_dim
  int skill = 0;

  Vec initial_state() const { return states.row(0).transpose(); }
  /// Time-major flattening: a_0 coordinates first.
  Vec flat_actions() const;
};

struct ContinuousSkillDataset {
  int c = 1;
  int state_dim = 0;
  int action_dim = 0;
  std::vector<ContinuousSegment> segments;
  int dropped_steps = 0;
};

/// Non-overlapping c-step windows starting at `offset`, offset + c, ...;
/// trailing partial windows are dropped. A nonzero `offset` misaligns the
/// windows from the behavior's skill boundaries.
SkillDataset segment_low_dataset(const std::vector<Trajectory>& trajectories, int c, int offset = 0);
ContinuousSkillDataset segment_low_dataset(const std::vector<ContinuousTrajectory>& trajectories, int c,
                                           int offset = 0);

enum class Labeler { GroundTruth, FlowEncoder, VaeEncoder };

Labeler parse_labeler(const std::string& name);

struct HighLevelTuple {
  int s0 = 0;
  int z = 0;
  double reward = 0.0;  // sum_{t<c} gamma^t r_t
  int sc = 0;
  double weight = 1.0;
};

struct HighLevelDataset {
  int c = 1;
  double gamma = 0.9;
  std::vector<HighLevelTuple> tuples;

  int size() const { return static_cast<int>(tuples.size()); }
};

struct LatentHighTuple {
  Vec s0;
  Vec z;
  double reward = 0.0;
  Vec sc;
};

struct LatentHighDataset {
  int c = 1;
  double gamma = 0.9;
  std::vector<LatentHighTuple> tuples;

  int size() const { return static_cast<int>(tuples.size()); }
};

/// Maps a segment to its latent label.
using LatentEncoder = std::function<Vec(const ContinuousSegment&)>;

HighLevelDataset relabel_high_dataset(const std::vector<Trajectory>& trajectories, Labeler labeler, int c,
                                      double gamma, int offset = 0);

/// Continuous relabeling. GroundTruth yields z = (hidden skill); the encoder
/// labelers need a non-empty `encoder`.
LatentHighDataset relabel_high_dataset(const std::vector<ContinuousTrajectory>& trajectories, Labeler labeler,
                                       int c, double gamma, const LatentEncoder& encoder = {}, int offset = 0);

double discounted_window_return(const std::vector<double>& rewards, int begin, int c, double gamma);

/// Tabular maximum-likelihood primitive pi_theta(a|s,z).
struct TabularPrimitive {
  PolicyTable table;  // LowLevel, rows s*K + z
  Mat counts;         // (S*K) x A visit counts
};

/// Smoothed empirical action frequencies per (s, z) using the segments'
/// hidden labels; unseen rows fall back to uniform.
TabularPrimitive fit_tabular_primitive(const SkillDataset& dataset, int num_states, int num_skills,
                                       int num_actions, double smoothing = 0.0);

/// Average TV between the fitted rows and the true behavior, weighted by the
/// (s, z) frequencies in `dataset`.
double empirical_primitive_tv(const TabularPrimitive& primitive, const BehaviorPolicy& behavior,
                              const SkillDataset& dataset);

/// Draws exactly `num_samples` (s, z, a) steps in trajectories of length
/// `horizon` (last one truncated) and returns the c = 1 segmentation.
SkillDataset sample_primitive_dataset(const LinearTabularMDP& mdp, const BehaviorPolicy& behavior, int num_samples,
                                      int horizon, std::uint64_t seed);

}  // namespace hrl
