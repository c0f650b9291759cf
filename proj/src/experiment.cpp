#include "hrl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "hrl/svg.hpp"

namespace hrl {

namespace {

const std::vector<std::pair<ExperimentKind, std::string>> kKindNames = {
    {ExperimentKind::SkillLengthSweep, "skill-length-sweep"},
    {ExperimentKind::RateSweep, "rate-sweep"},
    {ExperimentKind::PessimismAudit, "pessimism-audit"},
    {ExperimentKind::RepresentationContrast, "representation-contrast"},
    {ExperimentKind::DecompositionAudit, "decomposition-audit"},
    {ExperimentKind::TvAudit, "tv-audit"},
};

std::string behavior_style_name(BehaviorStyle s) {
  switch (s) {
    case BehaviorStyle::ActionsAsSkills: return "actions-as-skills";
    case BehaviorStyle::RandomDeterministic: return "random-deterministic";
    case BehaviorStyle::SoftmaxDiverse: return "softmax-diverse";
  }
  return "softmax-diverse";
}

// Collects every problem instead of stopping at the first one.
class Reader {
 public:
  std::vector<ConfigIssue> issues;

  void issue(const std::string& field, const std::string& message) { issues.push_back({field, message}); }

  const Json* find(const Json& obj, const std::string& key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
  }

  void check_keys(const Json& obj, const std::string& path, const std::set<std::string>& known) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (!known.count(it.key())) issue(join(path, it.key()), "unknown field");
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  void read(const Json& obj, const std::string& path, const std::string& key, double& out) {
    const Json* v = find(obj, key);
    if (!v) return;
    if (!v->is_number()) return issue(join(path, key), "must be a number");
    out = v->get<double>();
    if (!std::isfinite(out)) issue(join(path, key), "must be finite");
  }

  void read(const Json& obj, const std::string& path, const std::string& key, int& out) {
    const Json* v = find(obj, key);
    if (!v) return;
    if (!v->is_number_integer()) return issue(join(path, key), "must be an integer");
    out = v->get<int>();
  }

  void read(const Json& obj, const std::string& path, const std::string& key, std::uint64_t& out) {
    const Json* v = find(obj, key);
    if (!v) return;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0))
      return issue(join(path, key), "must be a non-negative integer");
    out = v->get<std::uint64_t>();
  }

  void read(const Json& obj, const std::string& path, const std::string& key, std::string& out) {
    const Json* v = find(obj, key);
    if (!v) return;
    if (!v->is_string()) return issue(join(path, key), "must be a string");
    out = v->get<std::string>();
  }

  const Json* object(const Json& obj, const std::string& path, const std::string& key) {
    const Json* v = find(obj, key);
    if (!v) return nullptr;
    if (!v->is_object()) {
      issue(join(path, key), "must be an object");
      return nullptr;
    }
    return v;
  }

  template <typename T>
  bool list(const Json& obj, const std::string& key, std::vector<T>& out, bool required) {
    const Json* v = find(obj, key);
    if (!v) {
      if (required) issue(key, "required field is missing");
      return false;
    }
    if (!v->is_array() || v->empty()) {
      issue(key, "must be a non-empty array");
      return false;
    }
    std::vector<T> values;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const Json& e = (*v)[i];
      const std::string field = fmt::format("{}[{}]", key, i);
      if constexpr (std::is_same_v<T, double>) {
        if (!e.is_number()) {
          issue(field, "must be a number");
          continue;
        }
      } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<std::int64_t>() >= 0)) {
          issue(field, "must be a non-negative integer");
          continue;
        }
      } else {
        if (!e.is_number_integer()) {
          issue(field, "must be an integer");
          continue;
        }
      }
      values.push_back(e.get<T>());
    }
    out = values;
    return true;
  }

  template <typename F>
  void check(const std::string& field, F&& f) {
    try {
      f();
    } catch (const std::exception& e) {
      issue(field, e.what());
    }
  }
};

void check_gamma(Reader& r, const std::string& field, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0))
    r.issue(field, fmt::format("discount {} is outside [0, 1), the range a linear MDP requires", gamma));
}

TaskSpec read_task(Reader& r, const Json* j) {
  TaskSpec t;
  if (!j) return t;
  const std::string p = "task";
  std::string type = "chain";
  r.read(*j, p, "type", type);
  if (type == "chain") {
    t.type = TaskType::Chain;
    r.check_keys(*j, p, {"type", "length", "slip", "skill_noise", "gamma"});
    r.read(*j, p, "length", t.chain.length);
    r.read(*j, p, "slip", t.chain.slip);
    r.read(*j, p, "skill_noise", t.chain.skill_noise);
    r.read(*j, p, "gamma", t.chain.gamma);
    check_gamma(r, "task.gamma", t.chain.gamma);
    if (t.chain.gamma >= 0.0 && t.chain.gamma < 1.0) r.check(p, [&] { t.chain.validate(); });
  } else if (type == "bandit") {
    t.type = TaskType::Bandit;
    r.check_keys(*j, p, {"type", "states", "arms", "low", "high", "gamma"});
    r.read(*j, p, "states", t.bandit.states);
    r.read(*j, p, "arms", t.bandit.arms);
    r.read(*j, p, "low", t.bandit.low);
    r.read(*j, p, "high", t.bandit.high);
    r.read(*j, p, "gamma", t.bandit.gamma);
    check_gamma(r, "task.gamma", t.bandit.gamma);
    if (t.bandit.gamma >= 0.0 && t.bandit.gamma < 1.0) r.check(p, [&] { t.bandit.validate(); });
  } else if (type == "random") {
    t.type = TaskType::Random;
    r.check_keys(*j, p, {"type", "states", "actions", "skills", "dim", "gamma", "behavior", "state_rewards"});
    r.read(*j, p, "states", t.random.states);
    r.read(*j, p, "actions", t.random.actions);
    r.read(*j, p, "skills", t.random.skills);
    r.read(*j, p, "dim", t.random.dim);
    r.read(*j, p, "gamma", t.random.gamma);
    std::string style = behavior_style_name(t.random.behavior);
    r.read(*j, p, "behavior", style);
    r.check("task.behavior", [&] { t.random.behavior = parse_behavior_style(style); });
    if (const Json* v = r.find(*j, "state_rewards")) {
      if (v->is_boolean())
        t.random.state_rewards = v->get<bool>();
      else
        r.issue("task.state_rewards", "must be a boolean");
    }
    check_gamma(r, "task.gamma", t.random.gamma);
    if (t.random.gamma >= 0.0 && t.random.gamma < 1.0) r.check(p, [&] { t.random.validate(); });
    if (t.random.behavior == BehaviorStyle::ActionsAsSkills && t.random.skills != t.random.actions)
      r.issue("task.skills", "actions-as-skills needs one skill per action");
  } else {
    r.issue("task.type", "must be one of chain, bandit, random");
  }
  return t;
}

Json task_json(const TaskSpec& t) {
  switch (t.type) {
    case TaskType::Chain:
      return {{"type", "chain"},
              {"length", t.chain.length},
              {"slip", t.chain.slip},
              {"skill_noise", t.chain.skill_noise},
              {"gamma", t.chain.gamma}};
    case TaskType::Bandit:
      return {{"type", "bandit"},
              {"states", t.bandit.states},
              {"arms", t.bandit.arms},
              {"low", t.bandit.low},
              {"high", t.bandit.high},
              {"gamma", t.bandit.gamma}};
    case TaskType::Random:
      return {{"type", "random"},
              {"states", t.random.states},
              {"actions", t.random.actions},
              {"skills", t.random.skills},
              {"dim", t.random.dim},
              {"gamma", t.random.gamma},
              {"behavior", behavior_style_name(t.random.behavior)},
              {"state_rewards", t.random.state_rewards}};
  }
  return {};
}

Json canonical_json(const ExperimentConfig& c) {
  const PipelineOptions& p = c.pipeline;
  const IqlConfig& q = p.iql;
  const ContrastConfig& k = c.contrast;
  return {{"schema_version", kConfigSchemaVersion},
          {"kind", experiment_kind_name(c.kind)},
          {"master_seed", c.master_seed},
          {"seeds", c.seeds},
          {"c", c.c_list},
          {"N", c.n_list},
          {"C_grid", c.c_grid},
          {"task", task_json(c.task)},
          {"pevi", {{"C", p.C}, {"delta", p.delta}, {"lambda", p.lambda_reg}}},
          {"primitive", {{"smoothing", p.smoothing}}},
          {"high_level",
           {{"learner", p.learner == HighLearner::Pevi ? "pevi" : "iql"},
            {"iql",
             {{"expectile", q.expectile},
              {"temperature", q.temperature},
              {"alpha", q.alpha},
              {"lr", q.lr},
              {"steps", q.steps},
              {"batch_size", q.batch_size},
              {"advantage_clip", q.advantage_clip},
              {"discount", q.discount == DiscountMode::Effective ? "effective" : "literal"}}}}},
          {"contrast",
           {{"c", k.c},
            {"trajectories", k.trajectories},
            {"horizon", k.horizon},
            {"flow_blocks", k.flow_blocks},
            {"hidden", k.hidden},
            {"latent_dim", k.latent_dim},
            {"flow_kl_weight", k.flow_kl_weight},
            {"steps", k.train.steps},
            {"batch_size", k.train.batch_size},
            {"lr", k.train.lr},
            {"latent_samples", k.latent_samples},
            {"latent_scale", k.latent_scale},
            {"similarity_radius", k.similarity_radius}}},
          {"tv", {{"max_states", c.tv_max_states}, {"max_c", c.tv_max_c}}},
          {"output_dir", c.output_dir},
          {"workers", c.workers}};
}

}  // namespace

std::string experiment_kind_name(ExperimentKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  std::string all;
  for (const auto& [k, n] : kKindNames) all += (all.empty() ? "" : ", ") + n;
  throw std::invalid_argument(fmt::format("unknown experiment kind '{}' (expected one of {})", name, all));
}

TabularTask TaskSpec::build(std::uint64_t seed) const {
  switch (type) {
    case TaskType::Chain: return make_sparse_chain(chain, seed);
    case TaskType::Bandit: return make_bandit_task(bandit, seed);
    case TaskType::Random: return make_random_task(random, seed);
  }
  throw std::logic_error("unhandled task type");
}

double TaskSpec::gamma() const {
  switch (type) {
    case TaskType::Chain: return chain.gamma;
    case TaskType::Bandit: return bandit.gamma;
    case TaskType::Random: return random.gamma;
  }
  return 0.0;
}

std::string format_issues(const std::vector<ConfigIssue>& issues) {
  std::string out;
  for (const auto& i : issues) out += fmt::format("{}: {}\n", i.field, i.message);
  return out;
}

ConfigError::ConfigError(std::vector<ConfigIssue> issues)
    : std::invalid_argument("invalid experiment config:\n" + format_issues(issues)), issues_(std::move(issues)) {}

ExperimentConfig parse_experiment_config(const Json& j) {
  Reader r;
  ExperimentConfig cfg;
  if (!j.is_object()) throw ConfigError(std::vector<ConfigIssue>{{"(root)", "config must be a JSON object"}});
  r.check_keys(j, "",
               {"schema_version", "kind", "master_seed", "seeds", "c", "N", "C_grid", "task", "pevi", "primitive",
                "high_level", "contrast", "tv", "output_dir", "workers"});

  int version = 0;
  if (!r.find(j, "schema_version"))
    r.issue("schema_version", "required field is missing");
  else
    r.read(j, "", "schema_version", version);
  if (r.find(j, "schema_version") && version != kConfigSchemaVersion)
    r.issue("schema_version", fmt::format("unsupported version {} (this build reads {})", version, kConfigSchemaVersion));

  std::string kind;
  if (!r.find(j, "kind")) {
    r.issue("kind", "required field is missing");
  } else {
    r.read(j, "", "kind", kind);
    if (!kind.empty()) r.check("kind", [&] { cfg.kind = parse_experiment_kind(kind); });
  }

  r.read(j, "", "master_seed", cfg.master_seed);
  if (r.list(j, "seeds", cfg.seeds, true)) {
    std::set<std::uint64_t> unique(cfg.seeds.begin(), cfg.seeds.end());
    if (unique.size() != cfg.seeds.size()) r.issue("seeds", "seed list has duplicates");
  }
  if (r.list(j, "c", cfg.c_list, false))
    for (std::size_t i = 0; i < cfg.c_list.size(); ++i)
      r.check(fmt::format("c[{}]", i), [&] { SkillConfig{cfg.c_list[i]}.validate(); });
  if (r.list(j, "N", cfg.n_list, false))
    for (std::size_t i = 0; i < cfg.n_list.size(); ++i)
      if (cfg.n_list[i] < 1) r.issue(fmt::format("N[{}]", i), "dataset size must be >= 1");
  if (r.list(j, "C_grid", cfg.c_grid, false))
    for (std::size_t i = 0; i < cfg.c_grid.size(); ++i)
      if (!(cfg.c_grid[i] >= 0.0)) r.issue(fmt::format("C_grid[{}]", i), "bonus constant must be >= 0");

  cfg.task = read_task(r, r.object(j, "", "task"));
  if (cfg.kind == ExperimentKind::RateSweep && r.find(j, "task") == nullptr) cfg.task.type = TaskType::Bandit;

  PipelineOptions& p = cfg.pipeline;
  if (const Json* v = r.object(j, "", "pevi")) {
    r.check_keys(*v, "pevi", {"C", "delta", "lambda"});
    r.read(*v, "pevi", "C", p.C);
    r.read(*v, "pevi", "delta", p.delta);
    r.read(*v, "pevi", "lambda", p.lambda_reg);
  }
  if (const Json* v = r.object(j, "", "primitive")) {
    r.check_keys(*v, "primitive", {"smoothing"});
    r.read(*v, "primitive", "smoothing", p.smoothing);
  }
  if (const Json* v = r.object(j, "", "high_level")) {
    r.check_keys(*v, "high_level", {"learner", "iql"});
    std::string learner = "pevi";
    r.read(*v, "high_level", "learner", learner);
    r.check("high_level.learner", [&] { p.learner = parse_high_learner(learner); });
    if (const Json* q = r.object(*v, "high_level", "iql")) {
      const std::string qp = "high_level.iql";
      r.check_keys(*q, qp,
                   {"expectile", "temperature", "alpha", "lr", "steps", "batch_size", "advantage_clip", "discount"});
      r.read(*q, qp, "expectile", p.iql.expectile);
      r.read(*q, qp, "temperature", p.iql.temperature);
      r.read(*q, qp, "alpha", p.iql.alpha);
      r.read(*q, qp, "lr", p.iql.lr);
      r.read(*q, qp, "steps", p.iql.steps);
      r.read(*q, qp, "batch_size", p.iql.batch_size);
      r.read(*q, qp, "advantage_clip", p.iql.advantage_clip);
      std::string discount = "effective";
      r.read(*q, qp, "discount", discount);
      r.check(qp + ".discount", [&] { p.iql.discount = parse_discount_mode(discount); });
      r.check(qp, [&] { p.iql.validate(); });
    }
  }
  r.check("pevi", [&] {
    PipelineOptions probe = p;
    probe.learner = HighLearner::Pevi;
    probe.validate();
  });

  if (const Json* v = r.object(j, "", "contrast")) {
    ContrastConfig& k = cfg.contrast;
    r.check_keys(*v, "contrast",
                 {"c", "trajectories", "horizon", "flow_blocks", "hidden", "latent_dim", "flow_kl_weight", "steps",
                  "batch_size", "lr", "latent_samples", "latent_scale", "similarity_radius"});
    r.read(*v, "contrast", "c", k.c);
    r.read(*v, "contrast", "trajectories", k.trajectories);
    r.read(*v, "contrast", "horizon", k.horizon);
    r.read(*v, "contrast", "flow_blocks", k.flow_blocks);
    r.read(*v, "contrast", "hidden", k.hidden);
    r.read(*v, "contrast", "latent_dim", k.latent_dim);
    r.read(*v, "contrast", "flow_kl_weight", k.flow_kl_weight);
    r.read(*v, "contrast", "steps", k.train.steps);
    r.read(*v, "contrast", "batch_size", k.train.batch_size);
    r.read(*v, "contrast", "lr", k.train.lr);
    r.read(*v, "contrast", "latent_samples", k.latent_samples);
    r.read(*v, "contrast", "latent_scale", k.latent_scale);
    r.read(*v, "contrast", "similarity_radius", k.similarity_radius);
    r.check("contrast.c", [&] { SkillConfig{k.c}.validate(); });
    r.check("contrast", [&] { k.validate(); });
    if (k.train.steps < 1 || k.train.batch_size < 1 || !(k.train.lr > 0.0))
      r.issue("contrast", "steps and batch_size must be >= 1 and lr > 0");
  }
  if (const Json* v = r.object(j, "", "tv")) {
    r.check_keys(*v, "tv", {"max_states", "max_c"});
    r.read(*v, "tv", "max_states", cfg.tv_max_states);
    r.read(*v, "tv", "max_c", cfg.tv_max_c);
    if (cfg.tv_max_states < 1) r.issue("tv.max_states", "must be >= 1");
    if (cfg.tv_max_c < 1) r.issue("tv.max_c", "must be >= 1");
  }
  r.read(j, "", "output_dir", cfg.output_dir);
  if (cfg.output_dir.empty()) r.issue("output_dir", "must not be empty");
  r.read(j, "", "workers", cfg.workers);
  if (cfg.workers < 0) r.issue("workers", "must be >= 0");

  if (!r.issues.empty()) throw ConfigError(r.issues);
  cfg.canonical = canonical_json(cfg);
  return cfg;
}

std::vector<ConfigIssue> validate_config_file(const std::string& path) {
  Json j;
  try {
    j = read_json(path);
  } catch (const std::exception& e) {
    return {{path, e.what()}};
  }
  try {
    parse_experiment_config(j);
  } catch (const ConfigError& e) {
    return e.issues();
  }
  return {};
}

void parallel_for(int count, int workers, const std::function<void(int)>& job) {
  if (count <= 0) return;
  int n = workers > 0 ? workers : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  n = std::min(n, count);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) job(i);
  };
  if (n == 1) {
    worker();
    return;
  }
  std::vector<std::thread> threads;
  for (int t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
}

namespace {

struct Cell {
  int c = 1;
  int N = 1;
  double C = 0.0;
  std::uint64_t seed = 0;
};

std::string num(double x) { return format_number(x); }

std::vector<Cell> make_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  switch (cfg.kind) {
    case ExperimentKind::SkillLengthSweep:
    case ExperimentKind::RateSweep:
    case ExperimentKind::DecompositionAudit:
      for (int c : cfg.c_list)
        for (int N : cfg.n_list)
          for (auto s : cfg.seeds) cells.push_back({c, N, cfg.pipeline.C, s});
      break;
    case ExperimentKind::PessimismAudit:
      for (double C : cfg.c_grid)
        for (int c : cfg.c_list)
          for (int N : cfg.n_list)
            for (auto s : cfg.seeds) cells.push_back({c, N, C, s});
      break;
    case ExperimentKind::RepresentationContrast:
    case ExperimentKind::TvAudit:
      for (auto s : cfg.seeds) cells.push_back({1, 1, 0.0, s});
      break;
  }
  return cells;
}

std::vector<std::string> cell_header(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::SkillLengthSweep:
    case ExperimentKind::RateSweep:
      return {"index", "c", "N", "seed", "status", "j_optimal", "j_best_skill", "j_pevi", "j_learned", "total_subopt",
              "primitive_error", "offline_error", "representation_error", "eps_theta", "eps_omega", "c_dagger",
              "bound_offline", "bound_transfer", "bound_total"};
    case ExperimentKind::PessimismAudit:
      return {"index", "C", "c", "N", "seed", "status", "beta_scale", "max_gap", "mean_v_hat", "satisfied"};
    case ExperimentKind::DecompositionAudit:
      return {"index", "c", "N", "seed", "status", "total_subopt", "identity_residual", "primitive_error",
              "lemma1_bound", "lemma1_holds", "representation_error", "lemma3_bound", "lemma3_holds", "eps_theta",
              "eps_omega"};
    case ExperimentKind::TvAudit:
      return {"index", "seed", "status", "states", "c", "gamma", "lhs", "rhs", "eps", "holds"};
    case ExperimentKind::RepresentationContrast:
      return {"index", "seed", "status", "segments", "flow_reconstruction", "vae_reconstruction",
              "flow_similarity_median", "vae_similarity_median", "flow_uncovered", "vae_uncovered"};
  }
  return {};
}

CellOutcome run_cell(const ExperimentConfig& cfg, const Cell& cell, int index, std::uint64_t master) {
  CellOutcome out;
  out.index = index;
  const std::uint64_t stream = derive_seed(derive_seed(master, 0xda7a), static_cast<std::uint64_t>(index));
  const std::uint64_t task_seed = derive_seed(master, cell.seed);
  Json& rec = out.record;
  rec["index"] = index;
  rec["seed"] = cell.seed;
  switch (cfg.kind) {
    case ExperimentKind::SkillLengthSweep:
    case ExperimentKind::RateSweep:
    case ExperimentKind::DecompositionAudit: {
      const TabularTask task = cfg.task.build(task_seed);
      PipelineOptions o = cfg.pipeline;
      o.c = cell.c;
      o.N = cell.N;
      o.seed = stream;
      o.audit = cfg.kind != ExperimentKind::RateSweep;
      const PipelineResult r = run_tabular_pipeline(task, o);
      rec["c"] = cell.c;
      rec["N"] = cell.N;
      rec["result"] = to_json(r);
      const DecompositionReport& d = r.report;
      if (cfg.kind == ExperimentKind::DecompositionAudit) {
        const double g = task.mdp.gamma, rmax = task.mdp.r_max;
        const double residual =
            std::abs(d.primitive_error + d.offline_error + d.representation_error - d.total_subopt);
        const double l1 = lemma1_bound(g, cell.c, rmax, r.eps_theta);
        const double l3 = lemma3_bound(g, cell.c, rmax, r.eps_omega);
        const bool h1 = d.primitive_error <= l1 + 1e-10, h3 = d.representation_error <= l3 + 1e-10;
        rec["identity_residual"] = residual;
        rec["lemma1"] = {{"bound", l1}, {"holds", h1}};
        rec["lemma3"] = {{"bound", l3}, {"holds", h3}};
        out.csv = {num(index), num(cell.c), num(cell.N), num(static_cast<double>(cell.seed)), "ok",
                   num(d.total_subopt), num(residual), num(d.primitive_error), num(l1), h1 ? "1" : "0",
                   num(d.representation_error), num(l3), h3 ? "1" : "0", num(r.eps_theta), num(r.eps_omega)};
      } else {
        const double nan = std::nan("");
        const bool a = o.audit;
        out.csv = {num(index), num(cell.c), num(cell.N), num(static_cast<double>(cell.seed)), "ok",
                   num(d.j_optimal), num(d.j_best_skill), num(d.j_pevi), num(d.j_learned), num(d.total_subopt),
                   num(d.primitive_error), num(d.offline_error), num(d.representation_error), num(r.eps_theta),
                   num(a ? r.eps_omega : nan), num(a ? r.c_dagger : nan),
                   num(a && r.bound_finite ? r.bound.offline : nan), num(a && r.bound_finite ? r.bound.transfer : nan),
                   num(a && r.bound_finite ? r.bound.total : nan)};
      }
      break;
    }
    case ExperimentKind::PessimismAudit: {
      const TabularTask task = cfg.task.build(task_seed);
      const OfflineData data = sample_offline_data(task.mdp, task.behavior, cell.c, cell.N, stream);
      const HyperMDP hyper = build_hyper_mdp(task.mdp, task.behavior, cell.c);
      const BoundSchedule sched = compute_beta_schedule(hyper.dim, cell.N, task.mdp.gamma, cell.c, cfg.pipeline.delta,
                                                        cell.C, task.mdp.r_max);
      const PessimisticEstimate est = fit_pessimistic_value(data.high, hyper, cfg.pipeline.lambda_reg, sched.beta_scale);
      const Vec v = policy_state_values(hyper.model, pevi_policy(est));
      const double gap = (est.V_hat - v).maxCoeff();
      const bool ok = gap <= 1e-8;
      rec["C"] = cell.C;
      rec["c"] = cell.c;
      rec["N"] = cell.N;
      rec["beta_scale"] = sched.beta_scale;
      rec["v_hat"] = to_json(est.V_hat);
      rec["v_policy"] = to_json(v);
      rec["max_gap"] = gap;
      rec["satisfied"] = ok;
      out.csv = {num(index), num(cell.C), num(cell.c), num(cell.N), num(static_cast<double>(cell.seed)), "ok",
                 num(sched.beta_scale), num(gap), num(est.V_hat.mean()), ok ? "1" : "0"};
      break;
    }
    case ExperimentKind::TvAudit: {
      const TvInstance inst = random_tv_instance(task_seed, cfg.tv_max_states, cfg.tv_max_c);
      const TvCheck chk = tv_subopt_check(inst);
      rec["states"] = inst.P1.rows();
      rec["c"] = inst.c;
      rec["gamma"] = inst.gamma;
      rec["lhs"] = chk.lhs;
      rec["rhs"] = chk.rhs;
      rec["eps"] = chk.eps;
      rec["holds"] = chk.holds;
      out.csv = {num(index), num(static_cast<double>(cell.seed)), "ok", num(static_cast<double>(inst.P1.rows())),
                 num(inst.c), num(inst.gamma), num(chk.lhs), num(chk.rhs), num(chk.eps), chk.holds ? "1" : "0"};
      break;
    }
    case ExperimentKind::RepresentationContrast: {
      const ContrastResult r = run_representation_contrast(cfg.contrast, task_seed);
      rec["segments"] = r.segments;
      rec["flow_reconstruction"] = r.flow_reconstruction;
      rec["vae_reconstruction"] = r.vae_reconstruction;
      rec["flow_similarity_median"] = r.flow_similarity_median;
      rec["vae_similarity_median"] = r.vae_similarity_median;
      rec["flow_uncovered"] = r.flow_uncovered;
      rec["vae_uncovered"] = r.vae_uncovered;
      rec["flow_loss_trace"] = r.flow_loss_trace;
      rec["vae_loss_trace"] = r.vae_loss_trace;
      out.csv = {num(index), num(static_cast<double>(cell.seed)), "ok", num(r.segments),
                 num(r.flow_reconstruction), num(r.vae_reconstruction), num(r.flow_similarity_median),
                 num(r.vae_similarity_median), num(r.flow_uncovered), num(r.vae_uncovered)};
      break;
    }
  }
  out.ok = true;
  rec["status"] = "ok";
  return out;
}

double column(const CellOutcome& o, const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  const std::string& s = o.csv[static_cast<std::size_t>(it - header.begin())];
  if (s == "inf") return kInfinity;
  if (s == "-inf") return -kInfinity;
  if (s == "nan" || s.empty()) return std::nan("");
  return std::stod(s);
}

struct Summary {
  Json json;
  CsvTable table;
  std::vector<std::pair<std::string, PlotSpec>> plots;
};

Summary summarize(const ExperimentConfig& cfg, const std::vector<Cell>& cells,
                  const std::vector<CellOutcome>& outcomes) {
  Summary s;
  const auto header = cell_header(cfg.kind);
  const std::string provenance =
      fmt::format("config fnv1a64={} kind={}", hex64(fnv1a64(cfg.canonical.dump())), experiment_kind_name(cfg.kind));
  auto ok_indices = [&](auto pred) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (outcomes[i].ok && pred(cells[i])) idx.push_back(static_cast<int>(i));
    return idx;
  };
  auto med = [&](const std::vector<int>& idx, const std::string& name) {
    std::vector<double> v;
    for (int i : idx) v.push_back(column(outcomes[static_cast<std::size_t>(i)], header, name));
    return finite_median(v);
  };
  auto total = [&](const std::vector<int>& idx, const std::string& name) {
    double t = 0.0;
    for (int i : idx) t += column(outcomes[static_cast<std::size_t>(i)], header, name);
    return t;
  };

  switch (cfg.kind) {
    case ExperimentKind::SkillLengthSweep:
    case ExperimentKind::RateSweep: {
      const std::vector<std::string> cols = {"total_subopt", "primitive_error", "offline_error", "representation_error",
                                             "eps_theta", "eps_omega", "c_dagger", "bound_total"};
      s.table.header = {"c", "N", "cells_ok"};
      for (const auto& c : cols) s.table.header.push_back("median_" + c);
      Json rows = Json::array();
      std::map<int, Series> subopt_by_n, offline_by_c, bound_by_n;
      for (int c : cfg.c_list)
        for (int N : cfg.n_list) {
          const auto idx = ok_indices([&](const Cell& k) { return k.c == c && k.N == N; });
          std::vector<std::string> row = {num(c), num(N), num(static_cast<double>(idx.size()))};
          Json jr = {{"c", c}, {"N", N}, {"cells_ok", idx.size()}};
          for (const auto& col : cols) {
            const double m = med(idx, col);
            row.push_back(num(m));
            jr["median_" + col] = std::isfinite(m) ? Json(m) : Json(nullptr);
          }
          s.table.add_row(row);
          rows.push_back(jr);
          const double sub = med(idx, "total_subopt"), off = med(idx, "offline_error"), bnd = med(idx, "bound_total");
          auto& a = subopt_by_n[N];
          a.label = fmt::format("N = {}", N);
          a.x.push_back(c);
          a.y.push_back(sub);
          auto& b = offline_by_c[c];
          b.label = fmt::format("c = {}", c);
          b.x.push_back(N);
          b.y.push_back(off);
          auto& e = bound_by_n[N];
          e.label = fmt::format("N = {}", N);
          e.x.push_back(c);
          e.y.push_back(bnd);
        }
      s.json["rows"] = rows;
      if (cfg.kind == ExperimentKind::SkillLengthSweep) {
        PlotSpec p{"Median suboptimality versus skill length", "skill length c", "median J(pi*) - J(pi_hat)",
                   false, false, {}, provenance};
        for (auto& [n, series] : subopt_by_n) p.series.push_back(series);
        s.plots.emplace_back("suboptimality.svg", p);
        PlotSpec q{"Evaluated bound versus skill length", "skill length c", "median bound", false, false, {}, provenance};
        for (auto& [n, series] : bound_by_n) q.series.push_back(series);
        s.plots.emplace_back("bound.svg", q);
        Json best = Json::array();
        for (int N : cfg.n_list) {
          double base = kInfinity, best_val = kInfinity;
          int best_c = 0;
          for (const auto& r : rows) {
            if (r["N"] != N || r["median_total_subopt"].is_null()) continue;
            const double v = r["median_total_subopt"].get<double>();
            if (r["c"] == 1) base = v;
            if (r["c"] != 1 && v < best_val) best_val = v, best_c = r["c"].get<int>();
          }
          Json b = {{"N", N}, {"best_c", best_c}};
          b["c1_median"] = std::isfinite(base) ? Json(base) : Json(nullptr);
          b["best_median"] = std::isfinite(best_val) ? Json(best_val) : Json(nullptr);
          best.push_back(b);
        }
        s.json["best_skill_length"] = best;
      } else {
        PlotSpec p{"Offline error versus dataset size", "N", "median J(pi*_beta) - J(pi_hat_beta)", true, true, {},
                   provenance};
        Json slopes = Json::object();
        for (auto& [c, series] : offline_by_c) {
          p.series.push_back(series);
          double slope = std::nan("");
          try {
            slope = log_log_slope(series.x, series.y);
          } catch (const std::invalid_argument&) {
          }
          slopes[std::to_string(c)] = std::isfinite(slope) ? Json(slope) : Json(nullptr);
        }
        s.json["log_log_slope_by_c"] = slopes;
        s.plots.emplace_back("rate.svg", p);
      }
      break;
    }
    case ExperimentKind::PessimismAudit: {
      s.table.header = {"C", "c", "N", "cells_ok", "satisfied", "rate"};
      Json rows = Json::array();
      std::map<std::pair<int, int>, Series> by_cn;
      for (double C : cfg.c_grid)
        for (int c : cfg.c_list)
          for (int N : cfg.n_list) {
            const auto idx = ok_indices([&](const Cell& k) { return k.C == C && k.c == c && k.N == N; });
            const double sat = total(idx, "satisfied");
            const double rate = idx.empty() ? std::nan("") : sat / static_cast<double>(idx.size());
            s.table.add_row({num(C), num(c), num(N), num(static_cast<double>(idx.size())), num(sat), num(rate)});
            rows.push_back({{"C", C}, {"c", c}, {"N", N}, {"cells_ok", idx.size()}, {"rate", rate}});
            auto& ser = by_cn[{c, N}];
            ser.label = fmt::format("c = {}, N = {}", c, N);
            ser.x.push_back(C);
            ser.y.push_back(rate);
          }
      s.json["rows"] = rows;
      PlotSpec p{"Pessimism satisfaction rate", "bonus constant C", "fraction with V_hat <= V", false, false, {},
                 provenance};
      for (auto& [k, ser] : by_cn) p.series.push_back(ser);
      s.plots.emplace_back("pessimism.svg", p);
      break;
    }
    case ExperimentKind::DecompositionAudit: {
      s.table.header = {"c", "N", "cells_ok", "max_identity_residual", "lemma1_violations", "lemma3_violations"};
      Json rows = Json::array();
      for (int c : cfg.c_list)
        for (int N : cfg.n_list) {
          const auto idx = ok_indices([&](const Cell& k) { return k.c == c && k.N == N; });
          double worst = 0.0;
          for (int i : idx) worst = std::max(worst, column(outcomes[static_cast<std::size_t>(i)], header, "identity_residual"));
          const double v1 = static_cast<double>(idx.size()) - total(idx, "lemma1_holds");
          const double v3 = static_cast<double>(idx.size()) - total(idx, "lemma3_holds");
          s.table.add_row({num(c), num(N), num(static_cast<double>(idx.size())), num(worst), num(v1), num(v3)});
          rows.push_back({{"c", c}, {"N", N}, {"cells_ok", idx.size()}, {"max_identity_residual", worst},
                          {"lemma1_violations", v1}, {"lemma3_violations", v3}});
        }
      s.json["rows"] = rows;
      break;
    }
    case ExperimentKind::TvAudit: {
      const auto idx = ok_indices([](const Cell&) { return true; });
      const double violations = static_cast<double>(idx.size()) - total(idx, "holds");
      std::vector<double> ratios;
      for (int i : idx) {
        const double rhs = column(outcomes[static_cast<std::size_t>(i)], header, "rhs");
        if (rhs > 0.0) ratios.push_back(column(outcomes[static_cast<std::size_t>(i)], header, "lhs") / rhs);
      }
      std::sort(ratios.begin(), ratios.end());
      s.table.header = {"instances", "violations", "median_ratio", "max_ratio"};
      const double mx = ratios.empty() ? 0.0 : ratios.back();
      s.table.add_row({num(static_cast<double>(idx.size())), num(violations), num(finite_median(ratios)), num(mx)});
      s.json["instances"] = idx.size();
      s.json["violations"] = violations;
      s.json["max_ratio"] = mx;
      break;
    }
    case ExperimentKind::RepresentationContrast: {
      const auto idx = ok_indices([](const Cell&) { return true; });
      const std::vector<std::string> cols = {"flow_reconstruction", "vae_reconstruction", "flow_similarity_median",
                                             "vae_similarity_median", "flow_uncovered", "vae_uncovered"};
      s.table.header = {"cells_ok"};
      std::vector<std::string> row = {num(static_cast<double>(idx.size()))};
      for (const auto& c : cols) {
        s.table.header.push_back("median_" + c);
        const double m = med(idx, c);
        row.push_back(num(m));
        s.json["median_" + c] = std::isfinite(m) ? Json(m) : Json(nullptr);
      }
      s.table.add_row(row);
      break;
    }
  }
  return s;
}

CsvTable trace_table(const std::vector<Cell>& cells, const std::vector<CellOutcome>& outcomes) {
  CsvTable t;
  t.header = {"index", "seed", "step", "flow_loss", "vae_loss"};
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].ok) continue;
    const auto& f = outcomes[i].record["flow_loss_trace"];
    const auto& v = outcomes[i].record["vae_loss_trace"];
    for (std::size_t k = 0; k < std::min(f.size(), v.size()); ++k)
      t.add_row({num(static_cast<double>(i)), num(static_cast<double>(cells[i].seed)), num(static_cast<double>(k)),
                 num(f[k].get<double>()), num(v[k].get<double>())});
  }
  return t;
}

}  // namespace

ExperimentReport run_experiment(ExperimentConfig config, const RunOptions& options) {
  if (options.output_dir) config.output_dir = *options.output_dir;
  if (options.workers) config.workers = *options.workers;
  if (options.master_seed) config.master_seed = *options.master_seed;
  config.canonical = canonical_json(config);
  config.canonical.erase("workers");
  config.canonical.erase("output_dir");

  const std::vector<Cell> cells = make_cells(config);
  ExperimentReport report;
  report.cells = static_cast<int>(cells.size());
  report.outcomes.resize(cells.size());
  const std::string dir = config.output_dir;
  const auto header = cell_header(config.kind);

  parallel_for(report.cells, config.workers, [&](int i) {
    CellOutcome out;
    try {
      out = run_cell(config, cells[static_cast<std::size_t>(i)], i, config.master_seed);
    } catch (const std::exception& e) {
      out = CellOutcome{};
      out.index = i;
      out.ok = false;
      out.error = e.what();
      out.record = {{"index", i}, {"seed", cells[static_cast<std::size_t>(i)].seed}, {"status", "failed"},
                    {"error", e.what()}};
    }
    if (!out.ok) {
      out.csv.assign(header.size(), "");
      out.csv[0] = num(i);
      const auto st = std::find(header.begin(), header.end(), "status") - header.begin();
      out.csv[static_cast<std::size_t>(st)] = "failed";
    }
    if (options.write) write_json(fmt::format("{}/cells/cell_{:05d}.json", dir, i), out.record);
    report.outcomes[static_cast<std::size_t>(i)] = std::move(out);
  });

  report.cell_table.header = header;
  for (const auto& o : report.outcomes) {
    report.failed += o.ok ? 0 : 1;
    report.cell_table.add_row(o.csv);
  }
  Summary summary = summarize(config, cells, report.outcomes);
  report.summary_table = summary.table;
  report.summary = summary.json;
  report.summary["kind"] = experiment_kind_name(config.kind);
  report.summary["cells"] = report.cells;
  report.summary["failed"] = report.failed;
  report.summary["config_hash"] = hex64(fnv1a64(config.canonical.dump()));
  Json failures = Json::array();
  for (const auto& o : report.outcomes)
    if (!o.ok) failures.push_back({{"index", o.index}, {"error", o.error}});
  report.summary["failures"] = failures;

  for (int i = 0; i < report.cells; ++i) report.files.push_back(fmt::format("cells/cell_{:05d}.json", i));
  if (options.write) {
    write_json(dir + "/config.json", config.canonical);
    write_file_atomic(dir + "/cells.csv", report.cell_table.str());
    write_file_atomic(dir + "/summary.csv", report.summary_table.str());
    write_json(dir + "/summary.json", report.summary);
    if (config.kind == ExperimentKind::RepresentationContrast) {
      const CsvTable traces = trace_table(cells, report.outcomes);
      write_file_atomic(dir + "/traces.csv", traces.str());
      report.files.push_back("traces.csv");
      Series f{"flow", {}, {}}, v{"vae", {}, {}};
      for (const auto& row : traces.rows) {
        if (row[0] != traces.rows.front()[0]) break;
        f.x.push_back(std::stod(row[2]));
        f.y.push_back(std::stod(row[3]));
        v.x.push_back(std::stod(row[2]));
        v.y.push_back(std::stod(row[4]));
      }
      summary.plots.emplace_back(
          "training_loss.svg",
          PlotSpec{"Training loss (first cell)", "step", "minibatch loss", false, false, {f, v},
                   fmt::format("config fnv1a64={} kind={}", hex64(fnv1a64(config.canonical.dump())),
                               experiment_kind_name(config.kind))});
    }
    for (const auto& [name, spec] : summary.plots) {
      write_file_atomic(dir + "/" + name, render_svg(spec));
      report.files.push_back(name);
    }
    report.files.insert(report.files.end(), {"config.json", "cells.csv", "summary.csv", "summary.json"});
  }
  return report;
}

}  // namespace hrl
