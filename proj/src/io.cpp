#include "hrl/io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include <fmt/format.h>

namespace hrl {

namespace {

Json number(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

std::string kind_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::LowLevel: return "low-level";
    case PolicyKind::HighLevel: return "high-level";
    case PolicyKind::Flat: return "flat";
  }
  return "flat";
}

PolicyKind parse_kind(const std::string& s) {
  if (s == "low-level") return PolicyKind::LowLevel;
  if (s == "high-level") return PolicyKind::HighLevel;
  if (s == "flat") return PolicyKind::Flat;
  throw std::invalid_argument("unknown policy kind '" + s + "'");
}

std::string line_context(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return fmt::format("line {}, column {}", line, col);
}

}  // namespace

Json to_json(const Vec& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(number(v[i]));
  return j;
}

Json to_json(const Mat& m) {
  Json j = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) j.push_back(to_json(Vec(m.row(r).transpose())));
  return j;
}

Vec vec_from_json(const Json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected a numeric array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw std::invalid_argument(fmt::format("entry {} is not a number", i));
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Mat mat_from_json(const Json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected an array of rows");
  if (j.empty()) return Mat();
  const std::size_t cols = j[0].size();
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != cols) throw std::invalid_argument(fmt::format("row {} has {} entries, expected {}", r, j[r].size(), cols));
    m.row(static_cast<Eigen::Index>(r)) = vec_from_json(j[r]).transpose();
  }
  return m;
}

Json to_json(const PolicyTable& p) { return {{"kind", kind_name(p.kind)}, {"probs", to_json(p.probs)}}; }

PolicyTable policy_from_json(const Json& j) {
  PolicyTable p;
  p.kind = parse_kind(j.at("kind").get<std::string>());
  p.probs = mat_from_json(j.at("probs"));
  p.validate();
  return p;
}

Json to_json(const LinearTabularMDP& mdp) {
  return {{"num_states", mdp.num_states},
          {"num_actions", mdp.num_actions},
          {"dim", mdp.dim()},
          {"gamma", mdp.gamma},
          {"r_max", mdp.r_max},
          {"reward_noise", mdp.reward_noise == RewardNoise::Bernoulli ? "bernoulli" : "none"},
          {"omega", to_json(mdp.omega)},
          {"mu0", to_json(mdp.mu0)},
          {"phi", to_json(mdp.features.phi)},
          {"psi", to_json(mdp.features.psi)}};
}

LinearTabularMDP mdp_from_json(const Json& j) {
  LinearTabularMDP mdp;
  mdp.num_states = j.at("num_states").get<int>();
  mdp.num_actions = j.at("num_actions").get<int>();
  mdp.gamma = j.at("gamma").get<double>();
  mdp.r_max = j.at("r_max").get<double>();
  const std::string noise = j.value("reward_noise", "none");
  if (noise != "none" && noise != "bernoulli") throw std::invalid_argument("reward_noise must be none or bernoulli");
  mdp.reward_noise = noise == "bernoulli" ? RewardNoise::Bernoulli : RewardNoise::None;
  mdp.omega = vec_from_json(j.at("omega"));
  mdp.mu0 = vec_from_json(j.at("mu0"));
  mdp.features.dim = j.at("dim").get<int>();
  mdp.features.num_states = mdp.num_states;
  mdp.features.num_actions = mdp.num_actions;
  mdp.features.phi = mat_from_json(j.at("phi"));
  mdp.features.psi = mat_from_json(j.at("psi"));
  validate_mdp(mdp);
  return mdp;
}

Json to_json(const BehaviorPolicy& b) {
  return {{"num_skills", b.num_skills}, {"skill_prior", to_json(b.skill_prior)}, {"actions", to_json(b.actions.probs)}};
}

BehaviorPolicy behavior_from_json(const Json& j) {
  BehaviorPolicy b = behavior_from_tables(mat_from_json(j.at("skill_prior")), mat_from_json(j.at("actions")));
  if (j.contains("num_skills") && j.at("num_skills").get<int>() != b.num_skills)
    throw std::invalid_argument("num_skills disagrees with the skill prior");
  return b;
}

Json to_json(const TabularTask& t) { return {{"mdp", to_json(t.mdp)}, {"behavior", to_json(t.behavior)}}; }

TabularTask task_from_json(const Json& j) {
  TabularTask t;
  t.mdp = mdp_from_json(j.at("mdp"));
  t.behavior = behavior_from_json(j.at("behavior"));
  if (t.behavior.num_states != t.mdp.num_states || t.behavior.num_actions != t.mdp.num_actions)
    throw std::invalid_argument("behavior does not match the MDP");
  return t;
}

Json to_json(const HighLevelDataset& d) {
  Json tuples = Json::array();
  for (const auto& t : d.tuples) tuples.push_back({t.s0, t.z, t.reward, t.sc, t.weight});
  return {{"c", d.c}, {"gamma", d.gamma}, {"columns", {"s0", "z", "reward", "sc", "weight"}}, {"tuples", tuples}};
}

HighLevelDataset high_dataset_from_json(const Json& j) {
  HighLevelDataset d;
  d.c = j.at("c").get<int>();
  d.gamma = j.at("gamma").get<double>();
  for (const auto& t : j.at("tuples"))
    d.tuples.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<double>(), t.at(3).get<int>(),
                        t.size() > 4 ? t.at(4).get<double>() : 1.0});
  return d;
}

Json to_json(const SkillDataset& d) {
  Json segs = Json::array();
  for (const auto& s : d.segments)
    segs.push_back({{"trajectory", s.trajectory},
                    {"offset", s.offset},
                    {"states", s.states},
                    {"actions", s.actions},
                    {"skill", s.skill}});
  return {{"c", d.c}, {"dropped_steps", d.dropped_steps}, {"segments", segs}};
}

SkillDataset skill_dataset_from_json(const Json& j) {
  SkillDataset d;
  d.c = j.at("c").get<int>();
  d.dropped_steps = j.value("dropped_steps", 0);
  for (const auto& s : j.at("segments")) {
    Segment seg;
    seg.trajectory = s.value("trajectory", 0);
    seg.offset = s.value("offset", 0);
    seg.states = s.at("states").get<std::vector<int>>();
    seg.actions = s.at("actions").get<std::vector<int>>();
    seg.skill = s.at("skill").get<int>();
    if (static_cast<int>(seg.actions.size()) != d.c || seg.states.size() < seg.actions.size())
      throw std::invalid_argument("segment length disagrees with c");
    d.segments.push_back(std::move(seg));
  }
  return d;
}

Json to_json(const std::vector<ContinuousTrajectory>& trajectories) {
  Json out = Json::array();
  for (const auto& tr : trajectories) {
    Json states = Json::array(), actions = Json::array();
    for (const auto& s : tr.states) states.push_back(to_json(s));
    for (const auto& a : tr.actions) actions.push_back(to_json(a));
    out.push_back({{"states", states}, {"actions", actions}, {"rewards", tr.rewards}, {"skills", tr.skills}});
  }
  return out;
}

std::vector<ContinuousTrajectory> continuous_trajectories_from_json(const Json& j) {
  std::vector<ContinuousTrajectory> out;
  for (const auto& t : j) {
    ContinuousTrajectory tr;
    for (const auto& s : t.at("states")) tr.states.push_back(vec_from_json(s));
    for (const auto& a : t.at("actions")) tr.actions.push_back(vec_from_json(a));
    tr.rewards = t.at("rewards").get<std::vector<double>>();
    tr.skills = t.at("skills").get<std::vector<int>>();
    if (tr.states.size() != tr.actions.size() + 1 || tr.rewards.size() != tr.actions.size() ||
        tr.skills.size() != tr.actions.size())
      throw std::invalid_argument("trajectory arrays have inconsistent lengths");
    out.push_back(std::move(tr));
  }
  return out;
}

Json to_json(const DecompositionReport& r) {
  return {{"primitive_error", r.primitive_error},
          {"offline_error", r.offline_error},
          {"representation_error", r.representation_error},
          {"total_subopt", r.total_subopt},
          {"j_learned", r.j_learned},
          {"j_pevi", r.j_pevi},
          {"j_best_skill", r.j_best_skill},
          {"j_optimal", r.j_optimal}};
}

Json to_json(const BoundTerms& b) { return {{"offline", b.offline}, {"transfer", b.transfer}, {"total", b.total}}; }

Json to_json(const PipelineResult& r) {
  return {{"decomposition", to_json(r.report)},
          {"beta_scale", r.beta_scale},
          {"eps_theta", r.eps_theta},
          {"eps_omega", r.eps_omega},
          {"c_dagger", number(r.c_dagger)},
          {"bound", r.bound_finite ? to_json(r.bound) : Json(nullptr)},
          {"learner_iterations", r.learner_iterations}};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + fmt::format(".tmp{}", static_cast<long>(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

void write_json(const std::string& path, const Json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

Json parse_json_text(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument(fmt::format("JSON parse error at {}: {}", line_context(text, e.byte > 0 ? e.byte - 1 : 0),
                                            e.what()));
  }
}

Json read_json(const std::string& path) { return parse_json_text(read_file(path)); }

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t x) { return fmt::format("{:016x}", x); }

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return fmt::format("{}", x);
}

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header.size())
    throw std::invalid_argument(fmt::format("CSV row has {} fields, header has {}", row.size(), header.size()));
  rows.push_back(std::move(row));
}

std::string CsvTable::str() const {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
      if (ch == '"') q += '"';
      q += ch;
    }
    return q + "\"";
  };
  std::string out;
  auto emit = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += quote(fields[i]);
    }
    out += '\n';
  };
  emit(header);
  for (const auto& r : rows) emit(r);
  return out;
}

}  // namespace hrl
