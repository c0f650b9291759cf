// End-to-end acceptance suite: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "helpers.hpp"
#include "hrl/analysis.hpp"
#include "hrl/experiment.hpp"
#include "hrl/flow.hpp"
#include "hrl/iql.hpp"
#include "hrl/pevi.hpp"
#include "hrl/vae.hpp"

using namespace hrl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Vec noise(Rng& rng, int n, double scale = 1.0) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * standard_normal(rng);
  return v;
}

ExperimentReport run_config(const std::string& name) {
  const ExperimentConfig cfg = parse_experiment_config(read_json(std::string(HRL_CONFIG_DIR) + "/" + name));
  RunOptions o;
  o.write = false;
  return run_experiment(cfg, o);
}

double row_value(const Json& row, const char* key) {
  return row[key].is_number() ? row[key].get<double>() : std::nan("");
}

Outcome flow_losslessness() {
  ContrastConfig cc;
  SamplingOptions so;
  so.num_trajectories = cc.trajectories;
  so.horizon = cc.horizon;
  so.resample_skill_every = cc.c;
  so.seed = 101;
  const PointMassEnv env = make_bimodal_testbed();
  const ContinuousSkillDataset data = segment_low_dataset(sample_trajectories(env, CorridorBehavior{}, so), cc.c);
  FlowConfig fc;
  fc.c = cc.c;
  fc.m = data.action_dim;
  fc.state_dim = data.state_dim;
  fc.k = cc.flow_blocks;
  fc.H = cc.hidden;
  fc.kl_weight = cc.flow_kl_weight;
  TrainOptions train = cc.train;
  train.seed = 102;
  const FlowTrainResult trained = train_flow(data, fc, train);
  const CouplingFlow& flow = trained.flow;

  double seg_err = 0.0;
  for (const auto& seg : data.segments) {
    const Vec a = flow_coordinates(fc, seg);
    seg_err = std::max(seg_err, (flow.forward(flow.inverse(a, seg.initial_state()).first, seg.initial_state()) - a)
                                    .lpNorm<Eigen::Infinity>());
  }
  Rng rng(103);
  double pair_err = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vec s = noise(rng, fc.state_dim);
    const Vec a = noise(rng, fc.dim(), 0.1);
    pair_err = std::max(pair_err, (flow.forward(flow.inverse(a, s).first, s) - a).lpNorm<Eigen::Infinity>());
    const Vec z = noise(rng, fc.dim(), 2.0);
    pair_err = std::max(pair_err, (flow.inverse(flow.forward(z, s), s).first - z).lpNorm<Eigen::Infinity>());
  }
  return {seg_err <= 1e-6 && pair_err <= 1e-6,
          fmt::format("{} segments max err {:.2e}; 10^4 (a,s) and (z,s) pairs max err {:.2e}", data.segments.size(),
                      seg_err, pair_err)};
}

// Five-point central differences; the two-point stencil's truncation error
// swamps 1e-4 on components near 1e-6 when the loss is in the hundreds.
template <typename F>
testing::GradientCheck fd_check(F&& f, const Vec& params, const Vec& analytic) {
  return testing::check_gradient(std::forward<F>(f), params, analytic, 1e-3, 1e-4, 1e-6, true);
}

Outcome gradient_audits() {
  Rng rng(211);
  int flow_fail = 0, vae_fail = 0, iql_fail = 0;
  double worst = 0.0;
  auto tally = [&](const testing::GradientCheck& c, int& fails) {
    fails += c.failures;
    worst = std::max(worst, c.worst);
  };
  const int configs = 24;
  for (int t = 0; t < configs; ++t) {
    FlowConfig cfg;
    cfg.c = 1 + t % 3;
    cfg.m = 1 + (t / 3) % 2;
    cfg.k = 1 + t % 4;
    cfg.H = 3 + t % 4;
    cfg.state_dim = 1 + t % 3;
    cfg.kl_weight = 0.5 * uniform01(rng);
    CouplingFlow flow(cfg);
    flow.init(rng);
    flow.params += noise(rng, flow.num_params(), 0.5);
    SkillPrior prior(cfg.dim(), cfg.state_dim, cfg.H);
    prior.init(rng);
    prior.params += noise(rng, prior.num_params(), 0.5);
    std::vector<FlowSample> batch;
    for (int i = 0; i < 3; ++i) batch.push_back({noise(rng, cfg.dim()), noise(rng, cfg.state_dim)});
    Vec gf, gp;
    flow_objective(flow, prior, batch, &gf, &gp);
    tally(fd_check(
              [&](const Vec& p) {
                CouplingFlow g = flow;
                g.params = p;
                return flow_objective(g, prior, batch).loss;
              },
              flow.params, gf),
          flow_fail);
    tally(fd_check(
              [&](const Vec& p) {
                SkillPrior q = prior;
                q.params = p;
                return flow_objective(flow, q, batch).loss;
              },
              prior.params, gp),
          flow_fail);
  }
  for (int t = 0; t < configs; ++t) {
    VaeConfig cfg;
    cfg.c = 1 + t % 3;
    cfg.m = 1 + t % 2;
    cfg.state_dim = t % 3;
    cfg.L = 1 + t % 3;
    cfg.H = 4;
    cfg.kl_weight = 0.25 * (t % 5);
    cfg.linear = t % 4 == 3;
    VaeModel model(cfg);
    model.init(rng);
    model.params += noise(rng, static_cast<int>(model.params.size()), 0.3);
    std::vector<ContinuousSegment> batch;
    std::vector<Vec> eps;
    for (int i = 0; i < 3; ++i) {
      ContinuousSegment seg;
      seg.states = Mat(cfg.c, cfg.state_dim);
      seg.actions = Mat(cfg.c, cfg.m);
      for (int r = 0; r < cfg.c; ++r) {
        if (cfg.state_dim > 0) seg.states.row(r) = noise(rng, cfg.state_dim).transpose();
        seg.actions.row(r) = noise(rng, cfg.m).transpose();
      }
      batch.push_back(seg);
      eps.push_back(noise(rng, cfg.L));
    }
    Vec grad;
    elbo(model, batch, eps, &grad);
    tally(fd_check(
              [&](const Vec& p) {
                VaeModel copy = model;
                copy.params = p;
                return elbo(copy, batch, eps).loss;
              },
              model.params, grad),
          vae_fail);
  }
  for (int t = 0; t < configs; ++t) {
    IqlConfig cfg;
    cfg.expectile = 0.1 + 0.8 * uniform01(rng);
    cfg.temperature = 0.5 + 2.0 * uniform01(rng);
    const double g_eff = 0.3 + 0.6 * uniform01(rng);
    IqlGrads g;
    if (t % 2 == 0) {
      const int S = 2 + t % 3, K = 2 + t % 4;
      TabularIql model(S, K);
      model.q = noise(rng, S * K, 0.5);
      model.q_target = noise(rng, S * K, 0.5);
      model.v = noise(rng, S, 0.5);
      model.logits = noise(rng, S * K);
      std::uniform_int_distribution<int> ds(0, S - 1), dz(0, K - 1);
      std::vector<HighLevelTuple> batch;
      for (int i = 0; i < 6; ++i) batch.push_back({ds(rng), dz(rng), uniform01(rng), ds(rng), 1.0});
      iql_losses(model, batch, cfg, g_eff, &g);
      auto with = [&](Vec TabularIql::*field, double IqlLosses::*loss) {
        return [&, field, loss](const Vec& p) {
          TabularIql copy = model;
          copy.*field = p;
          return iql_losses(copy, batch, cfg, g_eff).*loss;
        };
      };
      tally(fd_check(with(&TabularIql::v, &IqlLosses::jv), model.v, g.v), iql_fail);
      tally(fd_check(with(&TabularIql::q, &IqlLosses::jq), model.q, g.q), iql_fail);
      tally(fd_check(with(&TabularIql::logits, &IqlLosses::jpi), model.logits, g.pi), iql_fail);
    } else {
      const int sd = 1 + t % 3, L = 1 + t % 2;
      LatentIql model(sd, L, 5);
      model.init(rng);
      model.pi += noise(rng, static_cast<int>(model.pi.size()), 0.3);
      model.q_target += noise(rng, static_cast<int>(model.q.size()), 0.2);
      std::vector<LatentHighTuple> batch;
      for (int i = 0; i < 4; ++i) batch.push_back({noise(rng, sd), noise(rng, L), uniform01(rng), noise(rng, sd)});
      iql_losses(model, batch, cfg, g_eff, &g);
      auto with = [&](Vec LatentIql::*field, double IqlLosses::*loss) {
        return [&, field, loss](const Vec& p) {
          LatentIql copy = model;
          copy.*field = p;
          return iql_losses(copy, batch, cfg, g_eff).*loss;
        };
      };
      tally(fd_check(with(&LatentIql::v, &IqlLosses::jv), model.v, g.v), iql_fail);
      tally(fd_check(with(&LatentIql::q, &IqlLosses::jq), model.q, g.q), iql_fail);
      tally(fd_check(with(&LatentIql::pi, &IqlLosses::jpi), model.pi, g.pi), iql_fail);
    }
  }
  return {flow_fail + vae_fail + iql_fail == 0,
          fmt::format("{} configs each; coordinate failures flow {} vae {} iql {}; worst relative error {:.2e}",
                      configs, flow_fail, vae_fail, iql_fail, worst)};
}

Outcome composed_kernel() {
  double kernel_err = 0.0, reward_err = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t seed = derive_seed(307, i);
    const int d = 2 + i % 7, S = 2 + (i * 7) % 19, A = 2 + i % 3, K = 1 + i % 4, c = 1 + (i / 4) % 4;
    const LinearTabularMDP mdp = build_tabular_linear_mdp(seed, d, S, A, 0.5 + 0.45 * ((i % 10) / 9.0), 1.0);
    const BehaviorPolicy beta = make_behavior_policy(mdp, K, BehaviorStyle::SoftmaxDiverse, seed);
    const HyperMDP h = build_hyper_mdp(mdp, beta, c);
    const Mat kernel = testing::composed_kernel_oracle(mdp, beta, c);
    const Mat reward = testing::composed_reward_oracle(mdp, beta, c);
    for (int s = 0; s < S; ++s)
      for (int z = 0; z < K; ++z) {
        for (int n = 0; n < S; ++n)
          kernel_err =
              std::max(kernel_err, std::abs(h.psi_c.row(h.psi_row(s, z, n)).dot(h.omega) - kernel(s * K + z, n)));
        reward_err = std::max(reward_err, std::abs(h.phi_c.row(h.pair_row(s, z)).dot(h.omega) - reward(s, z)));
      }
  }
  return {kernel_err <= 1e-10 && reward_err <= 1e-10,
          fmt::format("100 instances; max kernel error {:.2e}, max reward error {:.2e}", kernel_err, reward_err)};
}

Outcome tv_audit() {
  int violations = 0;
  double ratio = 0.0;
  for (int i = 0; i < 500; ++i) {
    const TvCheck chk = tv_subopt_check(random_tv_instance(derive_seed(401, i)));
    violations += chk.lhs > chk.rhs + 1e-10;
    if (chk.rhs > 0.0) ratio = std::max(ratio, chk.lhs / chk.rhs);
  }
  return {violations == 0, fmt::format("500 instances, {} violations, largest lhs/rhs {:.3f}", violations, ratio)};
}

// J of a high-level policy over skills `beta`, from c-th powers of the skill
// kernels rather than the hyper-MDP.
double oracle_value(const LinearTabularMDP& mdp, const BehaviorPolicy& beta, const PolicyTable& high, int c) {
  const int S = mdp.num_states, K = beta.num_skills;
  const Mat Pc = testing::composed_kernel_oracle(mdp, beta, c);
  const Mat Rc = testing::composed_reward_oracle(mdp, beta, c);
  Mat P = Mat::Zero(S, S);
  Vec r = Vec::Zero(S);
  for (int s = 0; s < S; ++s)
    for (int z = 0; z < K; ++z) {
      P.row(s) += high.prob(s, z) * Pc.row(s * K + z);
      r[s] += high.prob(s, z) * Rc(s, z);
    }
  return mdp.mu0.dot((Mat::Identity(S, S) - std::pow(mdp.gamma, c) * P).partialPivLu().solve(r));
}

Outcome decomposition_identity() {
  double worst = 0.0, oracle_gap = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t seed = derive_seed(503, i);
    RandomTaskConfig rc;
    rc.states = 3 + i % 5;
    rc.actions = 2 + i % 3;
    rc.skills = 2 + i % 2;
    rc.dim = 2 + i % 4;
    rc.state_rewards = i % 2 == 1;
    const TabularTask task = make_random_task(rc, seed);
    const int c = 1 + i % 4;
    const OfflineData data = sample_offline_data(task.mdp, task.behavior, c, 100, derive_seed(seed, 1));
    const HyperMDP hyper = build_hyper_mdp(task.mdp, task.behavior, c);
    const BoundSchedule sched = compute_beta_schedule(hyper.dim, 100, task.mdp.gamma, c, 0.1, 0.5, task.mdp.r_max);
    const PolicyTable high = pevi_policy(fit_pessimistic_value(data.high, hyper, 1.0, sched.beta_scale));
    const TabularPrimitive prim = fit_tabular_primitive(data.low, rc.states, rc.skills, rc.actions, 0.5);
    const DecompositionReport d = suboptimality_decomposition(task.mdp, hyper, prim.table, high);
    worst = std::max(worst, std::abs(d.primitive_error + d.offline_error + d.representation_error - d.total_subopt));
    oracle_gap = std::max(oracle_gap, std::abs(d.j_pevi - oracle_value(task.mdp, task.behavior, high, c)));
    const BehaviorPolicy learned = with_primitive(task.behavior, prim.table);
    oracle_gap = std::max(oracle_gap, std::abs(d.j_learned - oracle_value(task.mdp, learned, high, c)));
  }
  return {worst <= 1e-12 && oracle_gap <= 1e-10,
          fmt::format("100 instances; max |sum of terms - total| = {:.2e}; J values vs power-kernel oracle {:.2e}", worst,
                      oracle_gap)};
}

Outcome pevi_pessimism() {
  const std::vector<double> grid{0.0, 0.5, 1.0, 2.0};
  std::vector<double> rate;
  for (double C : grid) {
    int ok = 0;
    for (int i = 0; i < 200; ++i) {
      const std::uint64_t seed = derive_seed(17, i);
      const int S = 3 + i % 6, A = 2 + i % 3, K = 2 + i % 2, c = 1 + i % 3, d = 2 + i % 5, N = 200;
      LinearTabularMDP mdp = build_tabular_linear_mdp(seed, d, S, A, 0.9, 1.0);
      mdp.reward_noise = RewardNoise::Bernoulli;
      const BehaviorPolicy beta = make_behavior_policy(mdp, K, BehaviorStyle::SoftmaxDiverse, seed);
      const OfflineData data = sample_offline_data(mdp, beta, c, N, derive_seed(seed, 1));
      const HyperMDP hyper = build_hyper_mdp(mdp, beta, c);
      const BoundSchedule sched = compute_beta_schedule(hyper.dim, N, mdp.gamma, c, 0.1, C, mdp.r_max);
      const PessimisticEstimate est = fit_pessimistic_value(data.high, hyper, 1.0, sched.beta_scale);
      const Vec v = policy_state_values(hyper.model, pevi_policy(est));
      ok += (est.V_hat - v).maxCoeff() <= 1e-8;
    }
    rate.push_back(ok / 200.0);
  }
  const bool monotone = std::is_sorted(rate.begin(), rate.end());
  return {rate[2] >= 0.95 && monotone,
          fmt::format("satisfaction rate at C = 0, 0.5, 1, 2: {:.3f}, {:.3f}, {:.3f}, {:.3f}", rate[0], rate[1], rate[2],
                      rate[3])};
}

Outcome offline_rate() {
  const ExperimentReport r = run_config("rate_sweep.json");
  const double slope = r.summary["log_log_slope_by_c"]["1"].get<double>();
  std::string medians;
  for (const auto& row : r.summary["rows"])
    medians += fmt::format(" N={}:{:.4f}", row["N"].get<int>(), row_value(row, "median_offline_error"));
  return {r.all_ok() && slope >= -0.7 && slope <= -0.3,
          fmt::format("slope {:.3f} over 50 seeds;{}", slope, medians)};
}

Outcome primitive_rate() {
  RandomTaskConfig rc;
  rc.states = 3;
  rc.actions = 3;
  rc.skills = 2;
  rc.dim = 4;
  const TabularTask task = make_random_task(rc, 811);
  const std::vector<double> ns{1e2, 1e3, 1e4, 1e5};
  std::vector<double> tv;
  const int repeats = 20;
  for (double n : ns) {
    double mean = 0.0;
    for (int k = 0; k < repeats; ++k)
      mean += primitive_tv_at(task, static_cast<int>(n), derive_seed(812, static_cast<std::uint64_t>(n) + k)) / repeats;
    tv.push_back(mean);
  }
  const double slope = log_log_slope(ns, tv);
  return {slope >= -0.7 && slope <= -0.3,
          fmt::format("slope {:.3f}; mean TV {:.4f}, {:.4f}, {:.4f}, {:.5f} over {} repeats", slope, tv[0], tv[1], tv[2],
                      tv[3], repeats)};
}

Outcome skill_length_tradeoff() {
  const ExperimentReport r = run_config("skill_length_sweep.json");
  std::vector<double> sub, bound;
  std::vector<int> cs;
  for (const auto& row : r.summary["rows"]) {
    cs.push_back(row["c"].get<int>());
    sub.push_back(row_value(row, "median_total_subopt"));
    bound.push_back(row_value(row, "median_bound_total"));
  }
  const std::size_t best =
      static_cast<std::size_t>(std::min_element(sub.begin() + 1, sub.end()) - sub.begin());
  const bool improves = sub[best] <= 0.9 * sub[0];
  const std::size_t argmin = static_cast<std::size_t>(std::min_element(bound.begin(), bound.end()) - bound.begin());
  bool u_shape = argmin > 0 && argmin + 1 < bound.size();
  for (std::size_t i = 1; i < bound.size(); ++i)
    u_shape = u_shape && (i <= argmin ? bound[i] < bound[i - 1] : bound[i] > bound[i - 1]);
  std::string bounds;
  for (double b : bound) bounds += fmt::format(" {:.1f}", b);
  return {r.all_ok() && improves && u_shape,
          fmt::format("median subopt c=1 {:.3f}, best c={} {:.3f} ({:.0f}% lower); bound by c:{} (min at c={})", sub[0],
                      cs[best], sub[best], 100.0 * (1.0 - sub[best] / sub[0]), bounds, cs[argmin])};
}

Outcome representation_contrast() {
  const ExperimentReport r = run_config("representation_contrast.json");
  double flow_rec = 0.0, vae_rec = kInfinity;
  for (const auto& o : r.outcomes) {
    if (!o.ok) continue;
    flow_rec = std::max(flow_rec, o.record["flow_reconstruction"].get<double>());
    vae_rec = std::min(vae_rec, o.record["vae_reconstruction"].get<double>());
  }
  const double fs = row_value(r.summary, "median_flow_similarity_median");
  const double vs = row_value(r.summary, "median_vae_similarity_median");
  const bool recon = flow_rec <= 1e-6 && vae_rec > 1e-2;
  return {r.all_ok() && recon && fs > vs,
          fmt::format("{} seeds; flow round-trip max {:.2e}, VAE mean L1 min {:.4f}; median eps flow {:.4f} vs VAE {:.4f}",
                      r.cells, flow_rec, vae_rec, fs, vs)};
}

Outcome bound_audits() {
  int v1 = 0, v3 = 0;
  double slack1 = kInfinity, slack3 = kInfinity;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t seed = derive_seed(1103, i);
    RandomTaskConfig rc;
    rc.states = 3 + i % 4;
    rc.actions = 2 + i % 3;
    rc.skills = 2 + i % 2;
    rc.state_rewards = true;
    rc.gamma = 0.5 + 0.45 * ((i % 10) / 9.0);
    const TabularTask task = make_random_task(rc, seed);
    PipelineOptions o;
    o.c = 1 + i % 4;
    o.N = 150;
    o.C = 0.5;
    o.smoothing = 0.5;
    o.seed = derive_seed(seed, 1);
    const PipelineResult r = run_tabular_pipeline(task, o);
    const double b1 = lemma1_bound(rc.gamma, o.c, task.mdp.r_max, r.eps_theta);
    const double b3 = lemma3_bound(rc.gamma, o.c, task.mdp.r_max, r.eps_omega);
    v1 += r.report.primitive_error > b1 + 1e-10;
    v3 += r.report.representation_error > b3 + 1e-10;
    slack1 = std::min(slack1, b1 - r.report.primitive_error);
    slack3 = std::min(slack3, b3 - r.report.representation_error);
  }
  return {v1 == 0 && v3 == 0,
          fmt::format("100 instances; primitive bound violations {} (min slack {:.3g}), representation bound "
                      "violations {} (min slack {:.3g})",
                      v1, slack1, v3, slack3)};
}

struct Criterion {
  const char* name;
  double time_limit;  // seconds, 0 when none
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"flow losslessness", 10.0, flow_losslessness},
      {"gradient audits", 0.0, gradient_audits},
      {"composed kernel and reward", 30.0, composed_kernel},
      {"TV coupling bound", 30.0, tv_audit},
      {"decomposition identity", 0.0, decomposition_identity},
      {"PEVI pessimism", 0.0, pevi_pessimism},
      {"offline-error rate", 300.0, offline_rate},
      {"primitive TV rate", 0.0, primitive_rate},
      {"skill-length trade-off", 0.0, skill_length_tradeoff},
      {"representation contrast", 0.0, representation_contrast},
      {"primitive and representation bound audits", 0.0, bound_audits},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const Criterion& c = criteria[i];
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, fmt::format("threw: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fmt::format("{:.1f} s", secs);
    if (c.time_limit > 0.0) {
      timing += fmt::format(", limit {:.0f} s", c.time_limit);
      if (secs >= c.time_limit) out.pass = false;
    }
    failed += !out.pass;
    fmt::print("{} {:2d} {}: {} [{}]\n", out.pass ? "PASS" : "FAIL", i + 1, c.name, out.detail, timing);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
