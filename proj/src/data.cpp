#include "hrl/data.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

#include "hrl/random.hpp"

namespace hrl {

void SkillConfig::validate() const {
  if (c < 1) throw std::invalid_argument(fmt::format("SkillConfig invariant violated: skill length c must be >= 1 (got {})", c));
}

namespace {

void check_sampling(const SamplingOptions& o) {
  if (o.num_trajectories < 1) throw std::invalid_argument("need at least one trajectory");
  if (o.resample_skill_every < 1) throw std::invalid_argument("resample_skill_every must be >= 1");
  if (o.horizon < o.resample_skill_every) throw std::invalid_argument("horizon must be >= resample_skill_every");
}

}  // namespace

std::vector<Trajectory> sample_trajectories(const LinearTabularMDP& mdp, const BehaviorPolicy& behavior,
                                            const SamplingOptions& options) {
  check_sampling(options);
  if (behavior.num_states != mdp.num_states || behavior.num_actions != mdp.num_actions)
    throw std::invalid_argument("behavior policy does not match the MDP");
  const TabularModel model = to_tabular(mdp);
  const int K = behavior.num_skills;
  Rng rng(options.seed);
  std::vector<Trajectory> out(options.num_trajectories);
  for (auto& traj : out) {
    traj.states.reserve(options.horizon + 1);
    int s = sample_categorical(rng, model.mu0);
    traj.states.push_back(s);
    int z = 0;
    for (int t = 0; t < options.horizon; ++t) {
      if (t % options.resample_skill_every == 0) z = sample_categorical(rng, behavior.skill_prior.row(s));
      const int a = sample_categorical(rng, behavior.actions.probs.row(s * K + z));
      double r = model.r[model.row(s, a)];
      if (mdp.reward_noise == RewardNoise::Bernoulli) r = uniform01(rng) < r / mdp.r_max ? mdp.r_max : 0.0;
      const int next = sample_categorical(rng, model.P.row(model.row(s, a)));
      traj.actions.push_back(a);
      traj.rewards.push_back(r);
      traj.skills.push_back(z);
      traj.states.push_back(next);
      s = next;
    }
  }
  return out;
}

std::vector<ContinuousTrajectory> sample_trajectories(const PointMassEnv& env, const CorridorBehavior& behavior,
                                                      const SamplingOptions& options) {
  check_sampling(options);
  Rng rng(options.seed);
  std::vector<ContinuousTrajectory> out(options.num_trajectories);
  for (auto& traj : out) {
    Vec s = env.reset(rng);
    traj.states.push_back(s);
    int z = 0;
    for (int t = 0; t < options.horizon; ++t) {
      if (t % options.resample_skill_every == 0)
        z = std::uniform_int_distribution<int>(0, behavior.num_skills - 1)(rng);
      Vec a = behavior.act(env, s, z, rng);
      auto step = env.step(s, a);
      traj.actions.push_back(a);
      traj.rewards.push_back(step.reward);
      traj.skills.push_back(z);
      traj.states.push_back(step.next);
      s = step.next;
    }
  }
  return out;
}

Vec ContinuousSegment::flat_actions() const {
  Vec flat(actions.size());
  for (Eigen::Index t = 0; t < actions.rows(); ++t)
    for (Eigen::Index j = 0; j < actions.cols(); ++j) flat[t * actions.cols() + j] = actions(t, j);
  return flat;
}

namespace {

void check_segmentation(int c, int offset) {
  SkillConfig{c}.validate();
  if (offset < 0) throw std::invalid_argument("segment offset must be >= 0");
}

}  // namespace

SkillDataset segment_low_dataset(const std::vector<Trajectory>& trajectories, int c, int offset) {
  check_segmentation(c, offset);
  SkillDataset ds;
  ds.c = c;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Trajectory& tr = trajectories[i];
    const int usable = std::max(0, tr.length() - offset);
    const int windows = usable / c;
    ds.dropped_steps += tr.length() - windows * c;
    for (int w = 0; w < windows; ++w) {
      Segment seg;
      seg.trajectory = static_cast<int>(i);
      seg.offset = offset + w * c;
      seg.states.assign(tr.states.begin() + seg.offset, tr.states.begin() + seg.offset + c);
      seg.actions.assign(tr.actions.begin() + seg.offset, tr.actions.begin() + seg.offset + c);
      seg.skill = tr.skills[seg.offset];
      ds.segments.push_back(std::move(seg));
    }
  }
  if (ds.segments.empty())
    throw std::invalid_argument(fmt::format("skill length c = {} exceeds every trajectory; D_low would be empty", c));
  return ds;
}

ContinuousSkillDataset segment_low_dataset(const std::vector<ContinuousTrajectory>& trajectories, int c,
                                           int offset) {
  check_segmentation(c, offset);
  ContinuousSkillDataset ds;
  ds.c = c;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const ContinuousTrajectory& tr = trajectories[i];
    if (tr.length() == 0) continue;
    ds.state_dim = static_cast<int>(tr.states.front().size());
    ds.action_dim = static_cast<int>(tr.actions.front().size());
    const int usable = std::max(0, tr.length() - offset);
    const int windows = usable / c;
    ds.dropped_steps += tr.length() - windows * c;
    for (int w = 0; w < windows; ++w) {
      ContinuousSegment seg;
      seg.trajectory = static_cast<int>(i);
      seg.offset = offset + w * c;
      seg.states = Mat(c, ds.state_dim);
      seg.actions = Mat(c, ds.action_dim);
      for (int t = 0; t < c; ++t) {
        seg.states.row(t) = tr.states[seg.offset + t].transpose();
        seg.actions.row(t) = tr.actions[seg.offset + t].transpose();
      }
      seg.skill = tr.skills[seg.offset];
      ds.segments.push_back(std::move(seg));
    }
  }
  if (ds.segments.empty())
    throw std::invalid_argument(fmt::format("skill length c = {} exceeds every trajectory; D_low would be empty", c));
  return ds;
}

Labeler parse_labeler(const std::string& name) {
  if (name == "ground-truth") return Labeler::GroundTruth;
  if (name == "flow-encoder") return Labeler::FlowEncoder;
  if (name == "vae-encoder") return Labeler::VaeEncoder;
  throw std::invalid_argument(fmt::format("unknown labeler '{}'", name));
}

double discounted_window_return(const std::vector<double>& rewards, int begin, int c, double gamma) {
  double total = 0.0;
  double discount = 1.0;
  for (int t = 0; t < c; ++t) {
    total += discount * rewards[begin + t];
    discount *= gamma;
  }
  return total;
}

HighLevelDataset relabel_high_dataset(const std::vector<Trajectory>& trajectories, Labeler labeler, int c,
                                      double gamma, int offset) {
  check_segmentation(c, offset);
  if (labeler != Labeler::GroundTruth)
    throw std::invalid_argument("tabular trajectories can only be relabeled with ground-truth skills");
  HighLevelDataset ds;
  ds.c = c;
  ds.gamma = gamma;
  for (const Trajectory& tr : trajectories) {
    for (int start = offset; start + c <= tr.length(); start += c) {
      HighLevelTuple t;
      t.s0 = tr.states[start];
      t.z = tr.skills[start];
      t.reward = discounted_window_return(tr.rewards, start, c, gamma);
      t.sc = tr.states[start + c];
      ds.tuples.push_back(t);
    }
  }
  if (ds.tuples.empty()) throw std::invalid_argument("relabeling produced no tuples");
  return ds;
}

LatentHighDataset relabel_high_dataset(const std::vector<ContinuousTrajectory>& trajectories, Labeler labeler, int c,
                                       double gamma, const LatentEncoder& encoder, int offset) {
  if (labeler != Labeler::GroundTruth && !encoder)
    throw std::invalid_argument("relabeling with an encoder labeler requires a trained encoder");
  ContinuousSkillDataset low = segment_low_dataset(trajectories, c, offset);
  LatentHighDataset ds;
  ds.c = c;
  ds.gamma = gamma;
  for (const ContinuousSegment& seg : low.segments) {
    const ContinuousTrajectory& tr = trajectories[seg.trajectory];
    LatentHighTuple t;
    t.s0 = seg.initial_state();
    t.z = labeler == Labeler::GroundTruth ? Vec::Constant(1, seg.skill) : encoder(seg);
    t.reward = discounted_window_return(tr.rewards, seg.offset, c, gamma);
    t.sc = tr.states[seg.offset + c];
    ds.tuples.push_back(std::move(t));
  }
  return ds;
}

TabularPrimitive fit_tabular_primitive(const SkillDataset& dataset, int num_states, int num_skills, int num_actions,
                                       double smoothing) {
  if (dataset.segments.empty()) throw std::invalid_argument("cannot fit a primitive on an empty dataset");
  if (smoothing < 0.0) throw std::invalid_argument("smoothing must be non-negative");
  TabularPrimitive prim;
  prim.counts = Mat::Zero(static_cast<Eigen::Index>(num_states) * num_skills, num_actions);
  for (const Segment& seg : dataset.segments)
    for (std::size_t t = 0; t < seg.actions.size(); ++t) prim.counts(seg.states[t] * num_skills + seg.skill, seg.actions[t]) += 1.0;
  prim.table.kind = PolicyKind::LowLevel;
  prim.table.probs = Mat(prim.counts.rows(), num_actions);
  for (Eigen::Index row = 0; row < prim.counts.rows(); ++row) {
    const double total = prim.counts.row(row).sum();
    if (total == 0.0) {
      prim.table.probs.row(row).setConstant(1.0 / num_actions);
    } else {
      prim.table.probs.row(row) =
          (prim.counts.row(row).array() + smoothing) / (total + smoothing * num_actions);
    }
  }
  return prim;
}

double empirical_primitive_tv(const TabularPrimitive& primitive, const BehaviorPolicy& behavior,
                              const SkillDataset& dataset) {
  const int K = behavior.num_skills;
  double total = 0.0;
  long n = 0;
  for (const Segment& seg : dataset.segments) {
    for (int s : seg.states) {
      const Eigen::Index row = static_cast<Eigen::Index>(s) * K + seg.skill;
      total += 0.5 * (primitive.table.probs.row(row) - behavior.actions.probs.row(row)).cwiseAbs().sum();
      ++n;
    }
  }
  return n > 0 ? total / static_cast<double>(n) : 0.0;
}

SkillDataset sample_primitive_dataset(const LinearTabularMDP& mdp, const BehaviorPolicy& behavior, int num_samples,
                                      int horizon, std::uint64_t seed) {
  if (num_samples < 1) throw std::invalid_argument("need at least one sample");
  SamplingOptions o;
  o.horizon = horizon;
  o.resample_skill_every = 1;
  o.num_trajectories = (num_samples + horizon - 1) / horizon;
  o.seed = seed;
  auto trajectories = sample_trajectories(mdp, behavior, o);
  int excess = o.num_trajectories * horizon - num_samples;
  Trajectory& last = trajectories.back();
  last.actions.resize(last.actions.size() - excess);
  last.rewards.resize(last.rewards.size() - excess);
  last.skills.resize(last.skills.size() - excess);
  last.states.resize(last.states.size() - excess);
  return segment_low_dataset(trajectories, 1);
}

}  // namespace hrl
