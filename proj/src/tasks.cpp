#include "hrl/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hrl {

void ChainConfig::validate() const {
  if (length < 2) throw std::invalid_argument("chain length must be >= 2");
  if (!(slip >= 0.0 && slip < 1.0)) throw std::invalid_argument("slip must be in [0, 1)");
  if (!(skill_noise >= 0.0 && skill_noise <= 0.5)) throw std::invalid_argument("skill_noise must be in [0, 0.5]");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
}

TabularTask make_sparse_chain(const ChainConfig& config, std::uint64_t seed) {
  config.validate();
  const int S = config.length;
  Mat P = Mat::Zero(2 * S, S);
  Vec r = Vec::Zero(2 * S);
  for (int s = 0; s < S; ++s) {
    const int left = std::max(s - 1, 0), right = std::min(s + 1, S - 1);
    P(2 * s, left) += 1.0 - config.slip;
    P(2 * s, s) += config.slip;
    P(2 * s + 1, right) += 1.0 - config.slip;
    P(2 * s + 1, s) += config.slip;
    if (s == S - 1) r[2 * s] = r[2 * s + 1] = 1.0;
  }
  TabularTask task;
  task.mdp = embed_tabular_mdp(P, r, config.gamma, Vec::Unit(S, 0));

  Rng rng(derive_seed(seed, 0xc4a1));
  Mat table(2 * S, 2);
  const double q = config.skill_noise;
  const int right_skill = uniform01(rng) < 0.5 ? 0 : 1;
  for (int s = 0; s < S; ++s) {
    table.row(2 * s + right_skill) << q, 1.0 - q;
    table.row(2 * s + 1 - right_skill) << 1.0 - q, q;
  }
  task.behavior = behavior_from_tables(Mat::Constant(S, 2, 0.5), table);
  return task;
}

void BanditConfig::validate() const {
  if (states < 1) throw std::invalid_argument("bandit states must be >= 1");
  if (arms < 2) throw std::invalid_argument("bandit arms must be >= 2");
  if (!(low >= 0.0 && low < high && high <= 1.0)) throw std::invalid_argument("need 0 <= low < high <= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
}

TabularTask make_bandit_task(const BanditConfig& config, std::uint64_t seed) {
  config.validate();
  const int S = config.states, A = config.arms;
  Rng rng(derive_seed(seed, 0xba4d));
  Vec means(A);
  for (int a = 0; a < A; ++a) means[a] = config.low + (config.high - config.low) * uniform01(rng);
  Eigen::Index best = 0;
  means.maxCoeff(&best);
  if (best == 0) std::swap(means[0], means[A - 1]);
  Vec r(S * A);
  for (int s = 0; s < S; ++s) r.segment(s * A, A) = means;
  TabularTask task;
  task.mdp = embed_tabular_mdp(Mat::Constant(S * A, S, 1.0 / S), r, config.gamma, Vec::Constant(S, 1.0 / S));
  task.mdp.reward_noise = RewardNoise::Bernoulli;
  task.behavior = make_behavior_policy(task.mdp, A, BehaviorStyle::ActionsAsSkills, seed);
  return task;
}

void RandomTaskConfig::validate() const {
  if (states < 2) throw std::invalid_argument("states must be >= 2");
  if (actions < 1) throw std::invalid_argument("actions must be >= 1");
  if (skills < 1) throw std::invalid_argument("skills must be >= 1");
  if (dim < 1) throw std::invalid_argument("dim must be >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
}

TabularTask make_random_task(const RandomTaskConfig& config, std::uint64_t seed) {
  config.validate();
  TabularTask task;
  const int S = config.states, A = config.actions;
  if (config.state_rewards) {
    Rng rng(derive_seed(seed, 0x5eed));
    Mat P(S * A, S);
    for (int i = 0; i < S * A; ++i) P.row(i) = dirichlet(rng, S, 0.5).transpose();
    Vec r(S * A);
    for (int s = 0; s < S; ++s) r.segment(s * A, A).setConstant(uniform01(rng));
    task.mdp = embed_tabular_mdp(P, r, config.gamma, dirichlet(rng, S, 1.0));
  } else {
    task.mdp = build_tabular_linear_mdp(seed, config.dim, S, A, config.gamma, 1.0);
  }
  task.behavior = make_behavior_policy(task.mdp, config.skills, config.behavior, derive_seed(seed, 0xbe));
  return task;
}

OfflineData sample_offline_data(const LinearTabularMDP& mdp, const BehaviorPolicy& behavior, int c, int N,
                                std::uint64_t seed, const Vec& start) {
  if (c < 1) throw std::invalid_argument("c must be >= 1");
  if (N < 1) throw std::invalid_argument("N must be >= 1");
  LinearTabularMDP from = mdp;
  if (start.size() == 0) {
    from.mu0 = Vec::Constant(mdp.num_states, 1.0 / mdp.num_states);
  } else {
    if (start.size() != mdp.num_states) throw std::invalid_argument("start distribution has the wrong length");
    from.mu0 = start;
  }
  SamplingOptions o;
  o.num_trajectories = N;
  o.horizon = c;
  o.resample_skill_every = c;
  o.seed = seed;
  const auto trajectories = sample_trajectories(from, behavior, o);
  OfflineData out;
  out.high = relabel_high_dataset(trajectories, Labeler::GroundTruth, c, mdp.gamma);
  out.low = segment_low_dataset(trajectories, c);
  return out;
}

HighLearner parse_high_learner(const std::string& name) {
  if (name == "pevi") return HighLearner::Pevi;
  if (name == "iql") return HighLearner::Iql;
  throw std::invalid_argument("unknown high-level learner '" + name + "' (expected pevi or iql)");
}

void PipelineOptions::validate() const {
  if (c < 1) throw std::invalid_argument("c must be >= 1");
  if (N < 1) throw std::invalid_argument("N must be >= 1");
  if (C < 0.0) throw std::invalid_argument("C must be >= 0");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0, 1)");
  if (lambda_reg <= 0.0) throw std::invalid_argument("lambda_reg must be > 0");
  if (smoothing < 0.0) throw std::invalid_argument("smoothing must be >= 0");
  if (learner == HighLearner::Iql) iql.validate();
}

PipelineResult run_tabular_pipeline(const TabularTask& task, const PipelineOptions& options) {
  options.validate();
  const LinearTabularMDP& mdp = task.mdp;
  const BehaviorPolicy& beta = task.behavior;
  const OfflineData data = sample_offline_data(mdp, beta, options.c, options.N, options.seed, options.start);
  const HyperMDP hyper = build_hyper_mdp(mdp, beta, options.c);
  const BoundSchedule sched =
      compute_beta_schedule(hyper.dim, options.N, mdp.gamma, options.c, options.delta, options.C, mdp.r_max);
  PolicyTable high;
  int iterations = 0;
  if (options.learner == HighLearner::Pevi) {
    const PessimisticEstimate est = fit_pessimistic_value(data.high, hyper, options.lambda_reg, sched.beta_scale);
    high = pevi_policy(est);
    iterations = est.iterations;
  } else {
    IqlConfig cfg = options.iql;
    cfg.seed = derive_seed(options.seed, 0x1a);
    high = train_iql(data.high, mdp.num_states, beta.num_skills, cfg).model.greedy_policy();
    iterations = cfg.steps;
  }
  const TabularPrimitive prim =
      fit_tabular_primitive(data.low, mdp.num_states, beta.num_skills, mdp.num_actions, options.smoothing);

  PipelineResult out;
  out.report = suboptimality_decomposition(mdp, hyper, prim.table, high);
  out.beta_scale = sched.beta_scale;
  out.learner_iterations = iterations;
  out.eps_theta = measured_primitive_tv(mdp, hyper, prim.table, high);
  if (!options.audit) return out;
  out.eps_omega = representation_error(mdp, beta, {out.report.optimal_flat}, options.c).eps_omega;
  out.c_dagger = concentration_coefficient(data.high, hyper, out.report.optimal_high);
  out.bound_finite = std::isfinite(out.c_dagger);
  if (out.bound_finite)
    out.bound = theorem1_terms(make_bound_inputs(out.eps_theta, out.eps_omega, out.c_dagger, hyper.dim, options.N,
                                                 options.c, mdp.gamma, mdp.r_max, options.delta, options.C));
  return out;
}

double primitive_tv_at(const TabularTask& task, int N, std::uint64_t seed) {
  const SkillDataset data = sample_primitive_dataset(task.mdp, task.behavior, N, 20, seed);
  const TabularPrimitive prim =
      fit_tabular_primitive(data, task.mdp.num_states, task.behavior.num_skills, task.mdp.num_actions);
  return empirical_primitive_tv(prim, task.behavior, data);
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("need at least two matching points");
  const int n = static_cast<int>(x.size());
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) throw std::invalid_argument("log-log slope needs positive values");
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (int i = 0; i < n; ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  if (sxx == 0.0) throw std::invalid_argument("x values must not all coincide");
  return sxy / sxx;
}

void ContrastConfig::validate() const {
  if (c < 1) throw std::invalid_argument("c must be >= 1");
  if (trajectories < 1 || horizon < c) throw std::invalid_argument("need trajectories >= 1 and horizon >= c");
  if (flow_blocks < 1 || hidden < 1 || latent_dim < 1) throw std::invalid_argument("network sizes must be >= 1");
  if (latent_samples < 1) throw std::invalid_argument("latent_samples must be >= 1");
  if (!(latent_scale > 0.0)) throw std::invalid_argument("latent_scale must be > 0");
  if (similarity_radius < 0.0) throw std::invalid_argument("similarity_radius must be >= 0");
}

namespace {

std::vector<Decision> rollout_decisions(const PointMassEnv& env, const Vec& s0, int c,
                                        const std::function<Vec(const Vec& state, int t)>& action) {
  std::vector<Decision> out;
  Vec s = s0;
  for (int t = 0; t < c; ++t) {
    const Vec a = env.clip_action(action(s, t));
    out.emplace_back(s, a);
    s = env.step(s, a).next;
  }
  return out;
}

Vec normal_vector(Rng& rng, int n) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = standard_normal(rng);
  return v;
}

}  // namespace

ContrastResult run_representation_contrast(const ContrastConfig& config, std::uint64_t seed) {
  config.validate();
  const PointMassEnv env = make_bimodal_testbed();
  const CorridorBehavior behavior;
  SamplingOptions o;
  o.num_trajectories = config.trajectories;
  o.horizon = config.horizon;
  o.resample_skill_every = config.c;
  o.seed = derive_seed(seed, 1);
  const auto trajectories = sample_trajectories(env, behavior, o);
  const ContinuousSkillDataset data = segment_low_dataset(trajectories, config.c);

  TrainOptions train = config.train;
  train.seed = derive_seed(seed, 2);
  FlowConfig fc;
  fc.c = config.c;
  fc.m = data.action_dim;
  fc.state_dim = data.state_dim;
  fc.k = config.flow_blocks;
  fc.H = config.hidden;
  fc.kl_weight = config.flow_kl_weight;
  const FlowTrainResult flow = train_flow(data, fc, train);
  VaeConfig vc;
  vc.c = config.c;
  vc.m = data.action_dim;
  vc.state_dim = data.state_dim;
  vc.L = config.latent_dim;
  vc.H = config.hidden;
  const VaeTrainResult vae = train_vae(data, vc, train);

  ContrastResult out;
  out.segments = static_cast<int>(data.segments.size());
  out.flow_loss_trace = flow.loss_trace;
  out.vae_loss_trace = vae.loss_trace;
  for (const auto& seg : data.segments) {
    const Vec a = flow_coordinates(fc, seg);
    const Vec z = flow.flow.inverse(a, seg.initial_state()).first;
    out.flow_reconstruction =
        std::max(out.flow_reconstruction, (flow.flow.forward(z, seg.initial_state()) - a).lpNorm<Eigen::Infinity>());
    const Mat rec = vae_decode(vae.model, vae_encode(vae.model, seg), seg.states);
    out.vae_reconstruction += (rec - seg.actions).cwiseAbs().sum() / static_cast<double>(data.segments.size());
  }

  std::vector<Decision> dataset;
  for (const auto& tr : trajectories)
    for (int t = 0; t < tr.length(); ++t) dataset.emplace_back(tr.states[t], tr.actions[t]);

  Rng rng(derive_seed(seed, 3));
  const int m = data.action_dim;
  for (int i = 0; i < config.latent_samples; ++i) {
    const Vec s0 = env.reset(rng);
    const Vec zf = config.latent_scale * normal_vector(rng, fc.dim());
    const Vec flat = flow.flow.forward(zf, s0);
    for (auto& d : rollout_decisions(env, s0, config.c, [&](const Vec&, int t) { return Vec(flat.segment(t * m, m)); }))
      out.flow_decisions.push_back(std::move(d));
    const Vec zv = config.latent_scale * normal_vector(rng, vc.L);
    for (auto& d : rollout_decisions(env, s0, config.c, [&](const Vec& s, int) {
           Vec mean, logstd;
           vae.model.decode_distribution(s, zv, mean, logstd);
           return mean;
         }))
      out.vae_decisions.push_back(std::move(d));
  }
  const auto fe = similarity_map(out.flow_decisions, dataset, config.similarity_radius);
  const auto ve = similarity_map(out.vae_decisions, dataset, config.similarity_radius);
  auto uncovered = [](const std::vector<double>& e) {
    return static_cast<double>(std::count_if(e.begin(), e.end(), [](double x) { return std::isinf(x); })) /
           static_cast<double>(e.size());
  };
  out.flow_similarity_median = finite_median(fe);
  out.vae_similarity_median = finite_median(ve);
  out.flow_uncovered = uncovered(fe);
  out.vae_uncovered = uncovered(ve);
  return out;
}

int monte_carlo_horizon(double gamma, double r_max) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
  if (gamma == 0.0 || r_max <= 0.0) return 1;
  const double target = 1e-3 * (1.0 - gamma) / r_max;
  if (target >= 1.0) return 1;
  return std::max(1, static_cast<int>(std::ceil(std::log(target) / std::log(gamma))));
}

MonteCarloEstimate monte_carlo_return(const PointMassEnv& env, const ContinuousPolicy& act, double gamma,
                                      int episodes, std::uint64_t seed) {
  if (episodes < 2) throw std::invalid_argument("need at least two episodes");
  MonteCarloEstimate est;
  est.episodes = episodes;
  est.horizon = monte_carlo_horizon(gamma, 1.0);
  Rng rng(seed);
  double sum = 0.0, sq = 0.0;
  for (int e = 0; e < episodes; ++e) {
    Vec s = env.reset(rng);
    double ret = 0.0, disc = 1.0;
    for (int t = 0; t < est.horizon; ++t) {
      const auto step = env.step(s, act(s, t, rng));
      ret += disc * step.reward;
      disc *= gamma;
      s = step.next;
    }
    sum += ret;
    sq += ret * ret;
  }
  est.mean = sum / episodes;
  const double var = std::max(0.0, (sq - episodes * est.mean * est.mean) / (episodes - 1));
  est.half_width = 1.96 * std::sqrt(var / episodes);
  return est;
}

}  // namespace hrl
