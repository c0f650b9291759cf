#include <cstdio>
#include <iostream>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"

#include "hrl/experiment.hpp"
#include "hrl/io.hpp"
#include "hrl/tasks.hpp"

using namespace hrl;

namespace {

struct TaskFlags {
  std::string type = "random";
  int states = 6, actions = 3, skills = 2, dim = 4, length = 6, arms = 80;
  double gamma = 0.9, noise = 0.1, slip = 0.1;
  std::string behavior = "softmax-diverse";
  bool state_rewards = false;
};

TabularTask build_task(const TaskFlags& f, std::uint64_t seed) {
  if (!(f.gamma >= 0.0 && f.gamma < 1.0))
    throw std::invalid_argument(fmt::format("--gamma {} is outside [0, 1)", f.gamma));
  if (f.type == "chain") {
    ChainConfig c;
    c.length = f.length;
    c.skill_noise = f.noise;
    c.slip = f.slip;
    c.gamma = f.gamma;
    return make_sparse_chain(c, seed);
  }
  if (f.type == "bandit") {
    BanditConfig b;
    b.states = f.states;
    b.arms = f.arms;
    b.gamma = f.gamma;
    return make_bandit_task(b, seed);
  }
  if (f.type == "random") {
    RandomTaskConfig r;
    r.states = f.states;
    r.actions = f.actions;
    r.skills = f.skills;
    r.dim = f.dim;
    r.gamma = f.gamma;
    r.behavior = parse_behavior_style(f.behavior);
    r.state_rewards = f.state_rewards;
    return make_random_task(r, seed);
  }
  throw std::invalid_argument("--type must be chain, bandit or random");
}

Json flow_json(const FlowTrainResult& r) {
  const FlowConfig& c = r.flow.config;
  return {{"model", "flow"},
          {"config", {{"c", c.c}, {"m", c.m}, {"state_dim", c.state_dim}, {"k", c.k}, {"H", c.H},
                      {"kl_weight", c.kl_weight}, {"clamp", c.clamp}}},
          {"flow_params", to_json(r.flow.params)},
          {"prior_params", to_json(r.prior.params)},
          {"loss_trace", r.loss_trace}};
}

Json vae_json(const VaeTrainResult& r) {
  const VaeConfig& c = r.model.config;
  return {{"model", "vae"},
          {"config", {{"c", c.c}, {"m", c.m}, {"state_dim", c.state_dim}, {"L", c.L}, {"H", c.H},
                      {"kl_weight", c.kl_weight}}},
          {"params", to_json(r.model.params)},
          {"loss_trace", r.loss_trace},
          {"reconstruction_trace", r.reconstruction_trace}};
}

void report_issues(const std::vector<ConfigIssue>& issues) {
  for (const auto& i : issues) fmt::print(stderr, "  {}: {}\n", i.field, i.message);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical offline RL lab: skills, pessimistic planning and the audits around them"};
  app.require_subcommand(1);

  // gen-mdp
  auto* gen_mdp = app.add_subcommand("gen-mdp", "Generate a tabular task (linear MDP plus behavior) as JSON");
  TaskFlags tf;
  std::uint64_t mdp_seed = 0;
  std::string mdp_out = "task.json";
  gen_mdp->add_option("--type", tf.type, "chain, bandit or random")->capture_default_str();
  gen_mdp->add_option("--states", tf.states, "states (random, bandit)")->capture_default_str();
  gen_mdp->add_option("--actions", tf.actions, "actions (random)")->capture_default_str();
  gen_mdp->add_option("--skills", tf.skills, "skills (random)")->capture_default_str();
  gen_mdp->add_option("--dim", tf.dim, "feature dimension (random)")->capture_default_str();
  gen_mdp->add_option("--length", tf.length, "chain length")->capture_default_str();
  gen_mdp->add_option("--arms", tf.arms, "bandit arms")->capture_default_str();
  gen_mdp->add_option("--gamma", tf.gamma, "discount in [0, 1)")->capture_default_str();
  gen_mdp->add_option("--noise", tf.noise, "chain skill noise")->capture_default_str();
  gen_mdp->add_option("--slip", tf.slip, "chain slip probability")->capture_default_str();
  gen_mdp->add_option("--behavior", tf.behavior, "actions-as-skills, random-deterministic, softmax-diverse")
      ->capture_default_str();
  gen_mdp->add_flag("--state-rewards", tf.state_rewards, "random task with rewards depending on the state only");
  gen_mdp->add_option("--seed", mdp_seed, "generator seed")->capture_default_str();
  gen_mdp->add_option("-o,--out", mdp_out, "output file")->capture_default_str();

  // gen-data
  auto* gen_data = app.add_subcommand("gen-data", "Sample an offline dataset from the behavior policy");
  std::string data_task, data_out = "data.json";
  int data_c = 1, data_n = 500, data_traj = 60, data_horizon = 24;
  std::uint64_t data_seed = 0;
  bool bimodal = false;
  gen_data->add_option("--task", data_task, "task JSON from gen-mdp");
  gen_data->add_flag("--bimodal", bimodal, "continuous trajectories on the two-corridor point mass instead");
  gen_data->add_option("--c", data_c, "skill length")->capture_default_str();
  gen_data->add_option("--N", data_n, "number of c-step tuples (tabular)")->capture_default_str();
  gen_data->add_option("--trajectories", data_traj, "trajectories (bimodal)")->capture_default_str();
  gen_data->add_option("--horizon", data_horizon, "steps per trajectory (bimodal)")->capture_default_str();
  gen_data->add_option("--seed", data_seed, "sampling seed")->capture_default_str();
  gen_data->add_option("-o,--out", data_out, "output file")->capture_default_str();

  // train-skills
  auto* train_skills = app.add_subcommand("train-skills", "Fit the low-level primitive");
  std::string ts_data, ts_task, ts_model = "mle", ts_out = "skills.json";
  double ts_smoothing = 0.0;
  TrainOptions ts_train;
  int ts_blocks = 4, ts_hidden = 32, ts_latent = 2;
  train_skills->add_option("--data", ts_data, "dataset JSON from gen-data")->required();
  train_skills->add_option("--task", ts_task, "task JSON (tabular data)");
  train_skills->add_option("--model", ts_model, "mle (tabular), flow or vae (bimodal data)")->capture_default_str();
  train_skills->add_option("--smoothing", ts_smoothing, "additive smoothing for mle")->capture_default_str();
  train_skills->add_option("--steps", ts_train.steps, "optimizer steps")->capture_default_str();
  train_skills->add_option("--batch", ts_train.batch_size, "minibatch size")->capture_default_str();
  train_skills->add_option("--lr", ts_train.lr, "Adam learning rate")->capture_default_str();
  train_skills->add_option("--blocks", ts_blocks, "coupling blocks (flow)")->capture_default_str();
  train_skills->add_option("--hidden", ts_hidden, "hidden width")->capture_default_str();
  train_skills->add_option("--latent", ts_latent, "latent size (vae)")->capture_default_str();
  train_skills->add_option("--seed", ts_train.seed, "training seed")->capture_default_str();
  train_skills->add_option("-o,--out", ts_out, "output file")->capture_default_str();

  // train-high
  auto* train_high = app.add_subcommand("train-high", "Learn the high-level policy over skills");
  std::string th_task, th_data, th_learner = "pevi", th_out = "high.json";
  double th_C = 1.0, th_delta = 0.1, th_lambda = 1.0;
  IqlConfig th_iql;
  train_high->add_option("--task", th_task, "task JSON")->required();
  train_high->add_option("--data", th_data, "dataset JSON")->required();
  train_high->add_option("--learner", th_learner, "pevi or iql")->capture_default_str();
  train_high->add_option("--C", th_C, "bonus constant")->capture_default_str();
  train_high->add_option("--delta", th_delta, "confidence level")->capture_default_str();
  train_high->add_option("--lambda", th_lambda, "ridge regularizer")->capture_default_str();
  train_high->add_option("--steps", th_iql.steps, "IQL steps")->capture_default_str();
  train_high->add_option("--temperature", th_iql.temperature, "IQL inverse temperature")->capture_default_str();
  train_high->add_option("--expectile", th_iql.expectile, "IQL expectile")->capture_default_str();
  train_high->add_option("--seed", th_iql.seed, "IQL seed")->capture_default_str();
  train_high->add_option("-o,--out", th_out, "output file")->capture_default_str();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Exact suboptimality decomposition of a learned hierarchy");
  std::string ev_task, ev_skills, ev_high, ev_out;
  int ev_c = 1;
  evaluate->add_option("--task", ev_task, "task JSON")->required();
  evaluate->add_option("--skills", ev_skills, "primitive JSON from train-skills (mle)")->required();
  evaluate->add_option("--high", ev_high, "high-level policy JSON from train-high")->required();
  evaluate->add_option("--c", ev_c, "skill length")->capture_default_str();
  evaluate->add_option("-o,--out", ev_out, "write the report here as well as to stdout");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run a config-driven experiment");
  std::string sw_config, sw_out;
  int sw_workers = -1;
  std::uint64_t sw_seed = 0;
  sweep->add_option("-c,--config", sw_config, "experiment config JSON")->required();
  auto* out_opt = sweep->add_option("-o,--out", sw_out, "output directory (overrides the config)");
  auto* workers_opt = sweep->add_option("-j,--workers", sw_workers, "worker threads (0: all cores)");
  auto* seed_opt = sweep->add_option("--seed", sw_seed, "master seed override");

  // validate
  auto* validate = app.add_subcommand("validate", "Check an experiment config without running it");
  std::string va_config;
  validate->add_option("-c,--config", va_config, "experiment config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen_mdp->parsed()) {
      const TabularTask task = build_task(tf, mdp_seed);
      Json j = to_json(task);
      j["generator"] = {{"type", tf.type}, {"seed", mdp_seed}};
      write_json(mdp_out, j);
      fmt::print("wrote {} ({} states, {} actions, {} skills, d = {})\n", mdp_out, task.mdp.num_states,
                 task.mdp.num_actions, task.behavior.num_skills, task.mdp.dim());
      return 0;
    }
    if (gen_data->parsed()) {
      if (bimodal) {
        SamplingOptions o;
        o.num_trajectories = data_traj;
        o.horizon = data_horizon;
        o.resample_skill_every = data_c;
        o.seed = data_seed;
        const auto tr = sample_trajectories(make_bimodal_testbed(), CorridorBehavior{}, o);
        write_json(data_out, {{"kind", "continuous"}, {"c", data_c}, {"trajectories", to_json(tr)}});
        fmt::print("wrote {} ({} trajectories of {} steps)\n", data_out, data_traj, data_horizon);
        return 0;
      }
      if (data_task.empty()) throw std::invalid_argument("--task is required for tabular data");
      const TabularTask task = task_from_json(read_json(data_task));
      const OfflineData d = sample_offline_data(task.mdp, task.behavior, data_c, data_n, data_seed);
      write_json(data_out, {{"kind", "tabular"}, {"c", data_c}, {"high", to_json(d.high)}, {"low", to_json(d.low)}});
      fmt::print("wrote {} ({} tuples, c = {})\n", data_out, d.high.size(), data_c);
      return 0;
    }
    if (train_skills->parsed()) {
      const Json data = read_json(ts_data);
      if (ts_model == "mle") {
        if (ts_task.empty()) throw std::invalid_argument("--task is required for mle");
        const TabularTask task = task_from_json(read_json(ts_task));
        const SkillDataset low = skill_dataset_from_json(data.at("low"));
        const TabularPrimitive p = fit_tabular_primitive(low, task.mdp.num_states, task.behavior.num_skills,
                                                         task.mdp.num_actions, ts_smoothing);
        const double tv = empirical_primitive_tv(p, task.behavior, low);
        write_json(ts_out, {{"model", "mle"}, {"table", to_json(p.table)}, {"counts", to_json(p.counts)},
                            {"empirical_tv", tv}});
        fmt::print("wrote {} (empirical TV to the behavior {:.6f})\n", ts_out, tv);
        return 0;
      }
      const int c = data.at("c").get<int>();
      const ContinuousSkillDataset segs =
          segment_low_dataset(continuous_trajectories_from_json(data.at("trajectories")), c);
      if (ts_model == "flow") {
        FlowConfig fc;
        fc.c = c;
        fc.m = segs.action_dim;
        fc.state_dim = segs.state_dim;
        fc.k = ts_blocks;
        fc.H = ts_hidden;
        const FlowTrainResult r = train_flow(segs, fc, ts_train);
        write_json(ts_out, flow_json(r));
        fmt::print("wrote {} (final loss {:.6f})\n", ts_out, r.loss_trace.back());
        return 0;
      }
      if (ts_model == "vae") {
        VaeConfig vc;
        vc.c = c;
        vc.m = segs.action_dim;
        vc.state_dim = segs.state_dim;
        vc.L = ts_latent;
        vc.H = ts_hidden;
        const VaeTrainResult r = train_vae(segs, vc, ts_train);
        write_json(ts_out, vae_json(r));
        fmt::print("wrote {} (final loss {:.6f})\n", ts_out, r.loss_trace.back());
        return 0;
      }
      throw std::invalid_argument("--model must be mle, flow or vae");
    }
    if (train_high->parsed()) {
      const TabularTask task = task_from_json(read_json(th_task));
      const HighLevelDataset high = high_dataset_from_json(read_json(th_data).at("high"));
      const HyperMDP hyper = build_hyper_mdp(task.mdp, task.behavior, high.c);
      Json out = {{"c", high.c}, {"learner", th_learner}};
      if (th_learner == "pevi") {
        const BoundSchedule s =
            compute_beta_schedule(hyper.dim, high.size(), task.mdp.gamma, high.c, th_delta, th_C, task.mdp.r_max);
        const PessimisticEstimate est = fit_pessimistic_value(high, hyper, th_lambda, s.beta_scale);
        out["policy"] = to_json(pevi_policy(est));
        out["v_hat"] = to_json(est.V_hat);
        out["beta_scale"] = s.beta_scale;
        out["zeta"] = s.zeta;
        out["iterations"] = est.iterations;
      } else if (th_learner == "iql") {
        const TabularIqlResult r = train_iql(high, task.mdp.num_states, task.behavior.num_skills, th_iql);
        out["policy"] = to_json(r.model.greedy_policy());
        out["softmax_policy"] = to_json(r.model.policy());
        out["clip_rate"] = r.traces.clip_rate();
      } else {
        throw std::invalid_argument("--learner must be pevi or iql");
      }
      write_json(th_out, out);
      fmt::print("wrote {}\n", th_out);
      return 0;
    }
    if (evaluate->parsed()) {
      const TabularTask task = task_from_json(read_json(ev_task));
      const Json skills = read_json(ev_skills);
      if (skills.value("model", "") != "mle") throw std::invalid_argument("evaluate needs a tabular (mle) primitive");
      const PolicyTable low = policy_from_json(skills.at("table"));
      const Json high = read_json(ev_high);
      const PolicyTable hp = policy_from_json(high.at("policy"));
      const int c = high.value("c", ev_c);
      const HyperMDP hyper = build_hyper_mdp(task.mdp, task.behavior, c);
      const DecompositionReport rep = suboptimality_decomposition(task.mdp, hyper, low, hp);
      Json out = to_json(rep);
      out["c"] = c;
      out["eps_theta_measured"] = measured_primitive_tv(task.mdp, hyper, low, hp);
      out["eps_omega"] = representation_error(task.mdp, task.behavior, {rep.optimal_flat}, c).eps_omega;
      if (!ev_out.empty()) write_json(ev_out, out);
      std::cout << out.dump(2) << "\n";
      return 0;
    }
    if (sweep->parsed()) {
      ExperimentConfig cfg;
      try {
        cfg = parse_experiment_config(read_json(sw_config));
      } catch (const ConfigError& e) {
        fmt::print(stderr, "{}: invalid config\n", sw_config);
        report_issues(e.issues());
        return 2;
      }
      RunOptions opts;
      if (*out_opt) opts.output_dir = sw_out;
      if (*workers_opt) opts.workers = sw_workers;
      if (*seed_opt) opts.master_seed = sw_seed;
      const ExperimentReport rep = run_experiment(cfg, opts);
      fmt::print("{}: {} cells, {} failed, output in {}\n", experiment_kind_name(cfg.kind), rep.cells, rep.failed,
                 opts.output_dir.value_or(cfg.output_dir));
      std::cout << rep.summary_table.str();
      return rep.all_ok() ? 0 : 1;
    }
    if (validate->parsed()) {
      const auto issues = validate_config_file(va_config);
      if (issues.empty()) {
        fmt::print("{}: ok\n", va_config);
        return 0;
      }
      fmt::print(stderr, "{}: {} problem(s)\n", va_config, issues.size());
      report_issues(issues);
      return 2;
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
