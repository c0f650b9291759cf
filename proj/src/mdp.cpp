#include "hrl/mdp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <fmt/core.h>

#include "hrl/random.hpp"

namespace hrl {

namespace {

constexpr double kSumTol = 1e-12;

void check_index(int value, int bound, const char* what) {
  if (value < 0 || value >= bound)
    throw std::out_of_range(fmt::format("{} index {} out of range [0, {})", what, value, bound));
}

void check_policy_shape(const TabularModel& model, const PolicyTable& policy) {
  if (policy.kind == PolicyKind::LowLevel)
    throw std::invalid_argument("policy evaluation needs a state-conditioned policy, got a low-level table");
  if (policy.num_rows() != model.num_states || policy.num_choices() != model.num_actions)
    throw std::invalid_argument(fmt::format("policy shape {}x{} does not match model {}x{}", policy.num_rows(),
                                            policy.num_choices(), model.num_states, model.num_actions));
}

}  // namespace

PolicyTable PolicyTable::deterministic(PolicyKind kind, const std::vector<int>& choice, int num_choices) {
  PolicyTable t;
  t.kind = kind;
  t.probs = Mat::Zero(static_cast<Eigen::Index>(choice.size()), num_choices);
  for (std::size_t i = 0; i < choice.size(); ++i) {
    check_index(choice[i], num_choices, "choice");
    t.probs(static_cast<Eigen::Index>(i), choice[i]) = 1.0;
  }
  return t;
}

PolicyTable PolicyTable::uniform(PolicyKind kind, int rows, int num_choices) {
  PolicyTable t;
  t.kind = kind;
  t.probs = Mat::Constant(rows, num_choices, 1.0 / num_choices);
  return t;
}

void PolicyTable::validate() const {
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    if ((probs.row(i).array() < 0.0).any())
      throw std::invalid_argument(fmt::format("policy row {} has a negative entry", i));
    double s = probs.row(i).sum();
    if (std::abs(s - 1.0) > kSumTol)
      throw std::invalid_argument(fmt::format("policy row {} sums to {:.17g}, expected 1", i, s));
  }
}

LinearTabularMDP build_tabular_linear_mdp(std::uint64_t seed, int d, int num_states, int num_actions, double gamma,
                                          double r_max) {
  if (d < 1) throw std::invalid_argument("feature dimension d must be >= 1");
  if (num_states < 2) throw std::invalid_argument("num_states must be >= 2");
  if (num_actions < 2) throw std::invalid_argument("num_actions must be >= 2");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (!(r_max > 0.0)) throw std::invalid_argument("r_max must be positive");

  Rng rng(derive_seed(seed, 0x11ea4));
  LinearTabularMDP mdp;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  mdp.gamma = gamma;
  mdp.r_max = r_max;

  mdp.omega = Vec::Ones(d);
  if (d > 1)
    for (int j = 0; j < d; ++j) mdp.omega[j] = 0.5 + 0.5 * uniform01(rng);
  if (r_max > mdp.omega.sum())
    throw std::invalid_argument(fmt::format(
        "reward bound r_max={} exceeds the largest reachable Phi^T omega={} under ||Phi||_inf <= 1", r_max,
        mdp.omega.sum()));

  FeatureMap& f = mdp.features;
  f.dim = d;
  f.num_states = num_states;
  f.num_actions = num_actions;
  f.phi = Mat::Zero(static_cast<Eigen::Index>(num_states) * num_actions, d);
  f.psi = Mat::Zero(static_cast<Eigen::Index>(num_states) * num_actions * num_states, d);

  std::vector<Vec> next_laws;
  for (int j = 0; j < d; ++j) next_laws.push_back(dirichlet(rng, num_states, 0.5));

  constexpr int kRetries = 64;
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      // Mixture weights with m_j <= omega_j keep every Psi entry in [0, 1].
      Vec m;
      bool ok = false;
      for (int attempt = 0; attempt < kRetries && !ok; ++attempt) {
        m = dirichlet(rng, d, 1.0);
        ok = (m.array() <= mdp.omega.array()).all();
      }
      for (double t = 0.25; !ok && t <= 1.0; t += 0.25) {
        Vec mixed = (1.0 - t) * m + Vec::Constant(d, t / d);
        if ((mixed.array() <= mdp.omega.array()).all()) {
          m = mixed;
          ok = true;
        }
      }
      if (!ok) throw std::invalid_argument("could not normalize transition mixture weights under ||Psi||_inf <= 1");
      for (int next = 0; next < num_states; ++next)
        for (int j = 0; j < d; ++j) f.psi(f.psi_row(s, a, next), j) = m[j] * next_laws[j][next] / mdp.omega[j];

      double level = r_max * uniform01(rng);
      Vec q;
      ok = false;
      for (int attempt = 0; attempt < kRetries && !ok; ++attempt) {
        q = dirichlet(rng, d, 1.0);
        ok = (level * q.array() <= mdp.omega.array()).all();
      }
      if (!ok) q = mdp.omega / mdp.omega.sum();
      for (int j = 0; j < d; ++j) f.phi(f.phi_row(s, a), j) = level * q[j] / mdp.omega[j];
    }
  }

  mdp.mu0 = dirichlet(rng, num_states, 1.0);
  validate_mdp(mdp);
  return mdp;
}

LinearTabularMDP embed_tabular_mdp(const Mat& kernel, const Vec& rewards, double gamma, const Vec& mu0) {
  const int sa = static_cast<int>(kernel.rows());
  const int num_states = static_cast<int>(kernel.cols());
  if (num_states < 1 || sa % num_states != 0) throw std::invalid_argument("kernel must have S*A rows and S columns");
  if (rewards.size() != sa) throw std::invalid_argument("rewards must have one entry per (s,a)");
  if ((rewards.array() < 0.0).any() || (rewards.array() > 1.0).any())
    throw std::invalid_argument("embedded rewards must lie in [0, 1]");
  const int num_actions = sa / num_states;
  const int d = sa + 1;

  LinearTabularMDP mdp;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  mdp.gamma = gamma;
  mdp.r_max = 1.0;
  mdp.mu0 = mu0;
  mdp.omega = Vec::Ones(d);
  mdp.omega.head(sa) = rewards;

  FeatureMap& f = mdp.features;
  f.dim = d;
  f.num_states = num_states;
  f.num_actions = num_actions;
  f.phi = Mat::Zero(sa, d);
  f.psi = Mat::Zero(static_cast<Eigen::Index>(sa) * num_states, d);
  for (int row = 0; row < sa; ++row) {
    f.phi(row, row) = 1.0;
    for (int next = 0; next < num_states; ++next)
      f.psi(static_cast<Eigen::Index>(row) * num_states + next, d - 1) = kernel(row, next);
  }
  validate_mdp(mdp);
  return mdp;
}

void validate_mdp(const LinearTabularMDP& mdp) {
  const FeatureMap& f = mdp.features;
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  const int d = f.dim;
  if (S < 1 || A < 1 || d < 1) throw std::invalid_argument("MDP dimensions must be positive");
  if (f.num_states != S || f.num_actions != A) throw std::invalid_argument("feature map dimensions disagree with MDP");
  if (mdp.omega.size() != d) throw std::invalid_argument("omega has wrong dimension");
  if (f.phi.rows() != static_cast<Eigen::Index>(S) * A || f.phi.cols() != d)
    throw std::invalid_argument("Phi table is not total over (state, action)");
  if (f.psi.rows() != static_cast<Eigen::Index>(S) * A * S || f.psi.cols() != d)
    throw std::invalid_argument("Psi table is not total over (state, action, next_state)");
  if (!(mdp.gamma >= 0.0 && mdp.gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (!(mdp.r_max > 0.0)) throw std::invalid_argument("r_max must be positive");
  if (f.phi.size() > 0 && f.phi.cwiseAbs().maxCoeff() > 1.0 + kSumTol)
    throw std::invalid_argument("||Phi(s,a)||_inf <= 1 violated");
  if (f.psi.size() > 0 && f.psi.cwiseAbs().maxCoeff() > 1.0 + kSumTol)
    throw std::invalid_argument("||Psi(s,a,s')||_inf <= 1 violated");
  if (mdp.omega.norm() > std::sqrt(static_cast<double>(d)) + kSumTol)
    throw std::invalid_argument("||omega||_2 <= sqrt(d) violated");

  Vec probs = f.psi * mdp.omega;
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      double total = 0.0;
      for (int next = 0; next < S; ++next) {
        double p = probs[f.psi_row(s, a, next)];
        if (p < -1e-14)
          throw std::invalid_argument(fmt::format("transition probability P({}|{},{}) = {} is negative", next, s, a, p));
        total += p;
      }
      if (std::abs(total - 1.0) > kSumTol)
        throw std::invalid_argument(fmt::format("kernel row ({},{}) sums to {:.17g}", s, a, total));
      double r = f.phi.row(f.phi_row(s, a)).dot(mdp.omega);
      if (r < -kSumTol || r > mdp.r_max + kSumTol)
        throw std::invalid_argument(fmt::format("expected reward {} at ({},{}) outside [0, r_max]", r, s, a));
    }
  }
  if (mdp.mu0.size() != S) throw std::invalid_argument("mu0 has wrong length");
  if ((mdp.mu0.array() < 0.0).any() || std::abs(mdp.mu0.sum() - 1.0) > kSumTol)
    throw std::invalid_argument("mu0 must be a probability vector");
}

double transition_prob(const LinearTabularMDP& mdp, int s, int a, int next) {
  check_index(s, mdp.num_states, "state");
  check_index(a, mdp.num_actions, "action");
  check_index(next, mdp.num_states, "next state");
  return mdp.features.psi.row(mdp.features.psi_row(s, a, next)).dot(mdp.omega);
}

double expected_reward(const LinearTabularMDP& mdp, int s, int a) {
  check_index(s, mdp.num_states, "state");
  check_index(a, mdp.num_actions, "action");
  return mdp.features.phi.row(mdp.features.phi_row(s, a)).dot(mdp.omega);
}

TabularModel to_tabular(const LinearTabularMDP& mdp) {
  TabularModel m;
  m.num_states = mdp.num_states;
  m.num_actions = mdp.num_actions;
  m.gamma = mdp.gamma;
  m.r_max = mdp.r_max;
  m.mu0 = mdp.mu0;
  const Eigen::Index sa = static_cast<Eigen::Index>(mdp.num_states) * mdp.num_actions;
  Vec flat = mdp.features.psi * mdp.omega;
  m.P = Mat(sa, mdp.num_states);
  for (Eigen::Index row = 0; row < sa; ++row)
    for (int next = 0; next < mdp.num_states; ++next) m.P(row, next) = flat[row * mdp.num_states + next];
  m.r = mdp.features.phi * mdp.omega;
  return m;
}

namespace {

Mat action_values(const TabularModel& model, const Vec& values) {
  Vec q = model.r + model.gamma * (model.P * values);
  Mat out(model.num_states, model.num_actions);
  for (int s = 0; s < model.num_states; ++s)
    for (int a = 0; a < model.num_actions; ++a) out(s, a) = q[model.row(s, a)];
  return out;
}

}  // namespace

ValueIterationResult exact_value_iteration(const TabularModel& model, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("value iteration tolerance must be positive");
  const double threshold = model.gamma > 0.0 ? tol * (1.0 - model.gamma) / (2.0 * model.gamma) : 0.0;
  Vec v = Vec::Zero(model.num_states);
  ValueIterationResult result;
  for (;;) {
    Vec next = action_values(model, v).rowwise().maxCoeff();
    ++result.iterations;
    double delta = (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    if (delta <= threshold) break;
  }
  Mat q = action_values(model, v);
  std::vector<int> greedy(model.num_states, 0);
  for (int s = 0; s < model.num_states; ++s) {
    for (int a = 1; a < model.num_actions; ++a)
      if (q(s, a) > q(s, greedy[s])) greedy[s] = a;
  }
  result.values = v;
  result.policy = PolicyTable::deterministic(PolicyKind::Flat, greedy, model.num_actions);
  return result;
}

ValueIterationResult exact_value_iteration(const LinearTabularMDP& mdp, double tol) {
  return exact_value_iteration(to_tabular(mdp), tol);
}

Mat policy_kernel(const TabularModel& model, const PolicyTable& policy) {
  check_policy_shape(model, policy);
  Mat k = Mat::Zero(model.num_states, model.num_states);
  for (int s = 0; s < model.num_states; ++s)
    for (int a = 0; a < model.num_actions; ++a) {
      double p = policy.prob(s, a);
      if (p != 0.0) k.row(s) += p * model.P.row(model.row(s, a));
    }
  return k;
}

Vec policy_rewards(const TabularModel& model, const PolicyTable& policy) {
  check_policy_shape(model, policy);
  Vec r = Vec::Zero(model.num_states);
  for (int s = 0; s < model.num_states; ++s)
    for (int a = 0; a < model.num_actions; ++a) r[s] += policy.prob(s, a) * model.r[model.row(s, a)];
  return r;
}

Vec policy_state_values(const TabularModel& model, const PolicyTable& policy) {
  if (!(model.gamma < 1.0)) throw std::invalid_argument("policy evaluation requires gamma < 1");
  Mat system = Mat::Identity(model.num_states, model.num_states) - model.gamma * policy_kernel(model, policy);
  Eigen::PartialPivLU<Mat> lu(system);
  if (!std::isfinite(lu.determinant()) || std::abs(lu.determinant()) < 1e-300)
    throw std::runtime_error("singular policy-evaluation system");
  return lu.solve(policy_rewards(model, policy));
}

double policy_value(const TabularModel& model, const PolicyTable& policy) {
  return model.mu0.dot(policy_state_values(model, policy));
}

double policy_value(const LinearTabularMDP& mdp, const PolicyTable& policy) {
  return policy_value(to_tabular(mdp), policy);
}

double bellman_residual(const TabularModel& model, const Vec& values) {
  Vec backed = action_values(model, values).rowwise().maxCoeff();
  return (backed - values).cwiseAbs().maxCoeff();
}

Mat k_step_transition(const LinearTabularMDP& mdp, const PolicyTable& policy, int k) {
  if (k < 1) throw std::invalid_argument("k_step_transition requires k >= 1");
  Mat one = policy_kernel(to_tabular(mdp), policy);
  Mat out = one;
  for (int i = 1; i < k; ++i) out = out * one;
  return out;
}

Vec discounted_visitation(const Mat& kernel, double gamma, const Vec& mu) {
  const Eigen::Index n = kernel.rows();
  Mat system = Mat::Identity(n, n) - gamma * kernel.transpose();
  return (1.0 - gamma) * system.partialPivLu().solve(mu);
}

}  // namespace hrl
