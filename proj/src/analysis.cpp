#include "hrl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

#include "hrl/pevi.hpp"
#include "hrl/random.hpp"

namespace hrl {

double tv_distance(const Vec& p, const Vec& q) {
  if (p.size() != q.size())
    throw std::invalid_argument(fmt::format("TV distance between vectors of length {} and {}", p.size(), q.size()));
  return 0.5 * (p - q).cwiseAbs().sum();
}

double primitive_error_bound(double class_size, double delta, long N) {
  if (!(class_size >= 1.0)) throw std::invalid_argument("policy class size must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (N < 1) throw std::invalid_argument("N must be >= 1");
  return std::sqrt(std::log(class_size / delta) / static_cast<double>(N));
}

double transfer_factor(double gamma, int c, double r_max) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (c < 1) throw std::invalid_argument("skill length must be >= 1");
  const double gc = std::pow(gamma, c);
  return gamma * c * (c + 1) * r_max / ((1.0 - gamma) * (1.0 - gc));
}

double lemma1_bound(double gamma, int c, double r_max, double eps_theta) {
  return transfer_factor(gamma, c, r_max) * eps_theta;
}

double lemma3_bound(double gamma, int c, double r_max, double eps_omega) {
  return transfer_factor(gamma, c, r_max) * eps_omega;
}

RepresentationResult representation_error(const LinearTabularMDP& mdp, const BehaviorPolicy& behavior,
                                          const std::vector<PolicyTable>& policy_class, int c) {
  if (policy_class.empty()) throw std::invalid_argument("representation error needs a non-empty policy class");
  if (c < 1) throw std::invalid_argument("skill length must be >= 1");
  const TabularModel base = to_tabular(mdp);
  const int S = mdp.num_states;
  const int K = behavior.num_skills;
  std::vector<Mat> skill(K);
  for (int z = 0; z < K; ++z) skill[z] = skill_kernel(base, behavior, z);

  RepresentationResult out;
  out.eps_k = Mat::Zero(static_cast<Eigen::Index>(policy_class.size()), c);
  for (std::size_t i = 0; i < policy_class.size(); ++i) {
    const Mat P = policy_kernel(base, policy_class[i]);
    Mat tv(S, K);
    for (int x = 0; x < S; ++x)
      for (int z = 0; z < K; ++z) tv(x, z) = tv_distance(P.row(x).transpose(), skill[z].row(x).transpose());
    std::vector<int> omega(S);
    for (int s = 0; s < S; ++s) {
      int best = 0;
      for (int z = 1; z < K; ++z)
        if (tv(s, z) < tv(s, best)) best = z;
      omega[s] = best;
    }
    const Vec d = discounted_visitation(P, mdp.gamma, mdp.mu0);
    Mat reach = Mat::Identity(S, S);  // P^{k-1}
    for (int k = 1; k <= c; ++k) {
      double mean = 0.0;
      for (int s = 0; s < S; ++s) {
        double eps = 0.0;
        for (int x = 0; x < S; ++x) eps += reach(s, x) * tv(x, omega[s]);
        mean += d[s] * eps;
      }
      out.eps_k(static_cast<Eigen::Index>(i), k - 1) = mean;
      reach = reach * P;
    }
    out.omega.push_back(std::move(omega));
  }
  out.eps_omega = out.eps_k.maxCoeff();
  return out;
}

double generalized_max_eigenvalue(const Mat& A, const Mat& B, double rel_tol) {
  if (A.rows() != A.cols() || B.rows() != B.cols() || A.rows() != B.rows())
    throw std::invalid_argument("generalized eigenvalue needs square matrices of equal size");
  const double a_scale = A.cwiseAbs().maxCoeff();
  if (a_scale == 0.0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (B + B.transpose()));
  const Vec& e = eig.eigenvalues();
  const double tol = rel_tol * std::max(e.cwiseAbs().maxCoeff(), 1e-300);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < e.size(); ++i)
    if (e[i] > tol) keep.push_back(i);
  if (keep.empty()) return kInfinity;
  Mat U(A.rows(), static_cast<Eigen::Index>(keep.size()));
  Vec inv_sqrt(U.cols());
  for (std::size_t j = 0; j < keep.size(); ++j) {
    U.col(static_cast<Eigen::Index>(j)) = eig.eigenvectors().col(keep[j]);
    inv_sqrt[static_cast<Eigen::Index>(j)] = 1.0 / std::sqrt(e[keep[j]]);
  }
  const Mat null_proj = Mat::Identity(A.rows(), A.rows()) - U * U.transpose();
  if ((null_proj * A * null_proj).cwiseAbs().maxCoeff() > 1e-9 * a_scale) return kInfinity;
  const Mat M = inv_sqrt.asDiagonal() * (U.transpose() * A * U) * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Mat> inner(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
  return std::max(0.0, inner.eigenvalues().maxCoeff());
}

Mat dataset_covariance(const HighLevelDataset& data, const HyperMDP& hyper) {
  if (data.tuples.empty()) throw std::invalid_argument("concentration coefficient needs a non-empty D_hi");
  Mat sigma = Mat::Zero(hyper.dim, hyper.dim);
  double total = 0.0;
  for (const auto& t : data.tuples) {
    if (t.s0 < 0 || t.s0 >= hyper.num_states || t.z < 0 || t.z >= hyper.num_skills)
      throw std::out_of_range("D_hi tuple outside the hyper-MDP");
    const Vec phi = hyper.phi_c.row(hyper.pair_row(t.s0, t.z)).transpose();
    sigma.noalias() += t.weight * phi * phi.transpose();
    total += t.weight;
  }
  if (!(total > 0.0)) throw std::invalid_argument("D_hi weights sum to zero");
  return sigma / total;
}

Mat policy_covariance(const HyperMDP& hyper, const PolicyTable& high_policy, int anchor) {
  const int S = hyper.num_states;
  if (anchor < 0 || anchor >= S) throw std::out_of_range("anchor state out of range");
  const Mat P = policy_kernel(hyper.model, high_policy);
  Vec start = Vec::Zero(S);
  start[anchor] = 1.0;
  const Vec d = discounted_visitation(P, hyper.gamma_eff, start);
  Mat sigma = Mat::Zero(hyper.dim, hyper.dim);
  for (int s = 0; s < S; ++s)
    for (int z = 0; z < hyper.num_skills; ++z) {
      const double w = d[s] * high_policy.prob(s, z);
      if (w == 0.0) continue;
      const Vec phi = hyper.phi_c.row(hyper.pair_row(s, z)).transpose();
      sigma.noalias() += w * phi * phi.transpose();
    }
  return sigma;
}

double concentration_coefficient(const HighLevelDataset& data, const HyperMDP& hyper, const PolicyTable& high_policy) {
  const Mat sigma_d = dataset_covariance(data, hyper);
  double worst = 0.0;
  for (int s = 0; s < hyper.num_states; ++s) {
    if (!(hyper.mu0[s] > 0.0)) continue;
    worst = std::max(worst, generalized_max_eigenvalue(policy_covariance(hyper, high_policy, s), sigma_d));
    if (std::isinf(worst)) break;
  }
  return worst;
}

BoundInputs make_bound_inputs(double eps_theta, double eps_omega, double c_dagger, int d, long N, int c, double gamma,
                              double r_max, double delta, double C) {
  BoundInputs in;
  in.eps_theta = eps_theta;
  in.eps_omega = eps_omega;
  in.c_dagger = c_dagger;
  in.d = d;
  in.N = N;
  in.c = c;
  in.gamma = gamma;
  in.r_max = r_max;
  in.delta = delta;
  in.C = C;
  in.zeta = compute_beta_schedule(d, N, gamma, c, delta, C, r_max).zeta;
  return in;
}

BoundTerms theorem1_terms(const BoundInputs& in) {
  if (!std::isfinite(in.c_dagger))
    throw std::invalid_argument("the bound needs a finite concentration coefficient (c_dagger is infinite)");
  if (in.d < 1 || in.N < 1 || in.c < 1) throw std::invalid_argument("bound needs d, N, c >= 1");
  if (in.eps_theta < 0.0 || in.eps_omega < 0.0 || in.c_dagger < 0.0 || in.C < 0.0 || in.zeta < 0.0)
    throw std::invalid_argument("bound inputs must be non-negative");
  const double gc = std::pow(in.gamma, in.c);
  const double denom = (1.0 - in.gamma) * (1.0 - gc);
  const double d = in.d;
  BoundTerms t;
  t.offline = 2.0 * in.C * in.r_max / denom * std::sqrt(in.c_dagger * d * d * d * in.zeta / static_cast<double>(in.N));
  t.transfer = transfer_factor(in.gamma, in.c, in.r_max) * (in.eps_omega + in.eps_theta);
  t.total = t.offline + t.transfer;
  return t;
}

double theorem1_bound(const BoundInputs& in) { return theorem1_terms(in).total; }

BehaviorPolicy with_primitive(const BehaviorPolicy& behavior, const PolicyTable& learned_low) {
  if (learned_low.num_rows() != behavior.num_states * behavior.num_skills ||
      learned_low.num_choices() != behavior.num_actions)
    throw std::invalid_argument(fmt::format("learned primitive is {}x{}, expected {}x{}", learned_low.num_rows(),
                                            learned_low.num_choices(), behavior.num_states * behavior.num_skills,
                                            behavior.num_actions));
  BehaviorPolicy out = behavior;
  out.actions = learned_low;
  out.actions.kind = PolicyKind::LowLevel;
  out.validate();
  return out;
}

DecompositionReport suboptimality_decomposition(const LinearTabularMDP& mdp, const HyperMDP& hyper,
                                                const PolicyTable& learned_low, const PolicyTable& high_policy) {
  DecompositionReport rep;
  const TabularModel base = to_tabular(mdp);
  rep.optimal_flat = exact_value_iteration(base).policy;
  rep.j_optimal = policy_value(base, rep.optimal_flat);
  rep.optimal_high = exact_value_iteration(hyper).policy;
  rep.j_best_skill = policy_value(hyper, rep.optimal_high);
  rep.j_pevi = policy_value(hyper, high_policy);
  const HyperMDP learned = build_hyper_mdp(mdp, with_primitive(hyper.behavior, learned_low), hyper.c);
  rep.j_learned = policy_value(learned, high_policy);

  rep.primitive_error = rep.j_pevi - rep.j_learned;
  rep.offline_error = rep.j_best_skill - rep.j_pevi;
  rep.representation_error = rep.j_optimal - rep.j_best_skill;
  rep.total_subopt = rep.j_optimal - rep.j_learned;
  const double gap = std::abs(rep.primitive_error + rep.offline_error + rep.representation_error - rep.total_subopt);
  if (gap > 1e-12 * std::max(1.0, std::abs(rep.j_optimal)))
    throw std::logic_error(fmt::format("decomposition does not telescope (gap {})", gap));
  return rep;
}

Mat hierarchical_visitation(const LinearTabularMDP& mdp, const HyperMDP& hyper, const PolicyTable& high_policy) {
  const int S = hyper.num_states;
  const int K = hyper.num_skills;
  const TabularModel base = to_tabular(mdp);
  const double g = mdp.gamma;
  // Unnormalized discounted window-start distribution.
  const Vec starts = discounted_visitation(policy_kernel(hyper.model, high_policy), hyper.gamma_eff, hyper.mu0) /
                     (1.0 - hyper.gamma_eff);
  Mat out = Mat::Zero(S, K);
  for (int z = 0; z < K; ++z) {
    const Mat Pz = skill_kernel(base, hyper.behavior, z);
    Eigen::RowVectorXd v(S);
    for (int s = 0; s < S; ++s) v[s] = starts[s] * high_policy.prob(s, z);
    double disc = 1.0;
    for (int j = 0; j < hyper.c; ++j) {
      out.col(z) += (1.0 - g) * disc * v.transpose();
      v = v * Pz;
      disc *= g;
    }
  }
  return out;
}

double measured_primitive_tv(const LinearTabularMDP& mdp, const HyperMDP& hyper, const PolicyTable& learned_low,
                             const PolicyTable& high_policy) {
  const BehaviorPolicy& beta = hyper.behavior;
  with_primitive(beta, learned_low);
  const Mat d = hierarchical_visitation(mdp, hyper, high_policy);
  const int K = hyper.num_skills;
  double total = 0.0;
  for (int s = 0; s < hyper.num_states; ++s)
    for (int z = 0; z < K; ++z) {
      if (d(s, z) == 0.0) continue;
      const Eigen::Index row = static_cast<Eigen::Index>(s) * K + z;
      total += d(s, z) * tv_distance(learned_low.probs.row(row).transpose(), beta.actions.probs.row(row).transpose());
    }
  return total;
}

namespace {

void check_kernel(const Mat& P, const char* name) {
  if (P.rows() != P.cols() || P.rows() == 0) throw std::invalid_argument(fmt::format("{} must be square", name));
  for (Eigen::Index s = 0; s < P.rows(); ++s) {
    if (P.row(s).minCoeff() < 0.0 || std::abs(P.row(s).sum() - 1.0) > 1e-9)
      throw std::invalid_argument(fmt::format("{} row {} is not a probability vector", name, s));
  }
}

}  // namespace

TvCheck tv_subopt_check(const TvInstance& in) {
  check_kernel(in.P1, "P1");
  check_kernel(in.P2, "P2");
  const Eigen::Index S = in.P1.rows();
  if (in.P2.rows() != S) throw std::invalid_argument("P1 and P2 have different state counts");
  if (in.reward.size() != S || (S > 0 && in.reward.minCoeff() < 0.0))
    throw std::invalid_argument("reward must be a non-negative vector over states");
  if (!(in.gamma >= 0.0 && in.gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (in.c < 1) throw std::invalid_argument("c must be >= 1");
  if (in.initial_state < 0 || in.initial_state >= S) throw std::out_of_range("initial state out of range");

  Vec mu = Vec::Zero(S);
  mu[in.initial_state] = 1.0;
  const Mat I = Mat::Identity(S, S);
  const double j1 = (I - in.gamma * in.P1).partialPivLu().solve(in.reward)[in.initial_state];
  const double j2 = (I - in.gamma * in.P2).partialPivLu().solve(in.reward)[in.initial_state];
  const Vec d1 = discounted_visitation(in.P1, in.gamma, mu);
  Vec tv(S);
  for (Eigen::Index x = 0; x < S; ++x) tv[x] = tv_distance(in.P1.row(x).transpose(), in.P2.row(x).transpose());

  TvCheck out;
  Vec ahead = tv;  // P1^{k-1} tv
  for (int k = 1; k <= in.c; ++k) {
    out.eps = std::max(out.eps, d1.dot(ahead));
    ahead = in.P1 * ahead;
  }
  const double r_max = in.reward.maxCoeff();
  const double gc = std::pow(in.gamma, in.c);
  out.lhs = std::abs(j1 - j2);
  out.rhs = in.gamma * in.c * (in.c + 1) * r_max / ((1.0 - gc) * (1.0 - in.gamma)) * out.eps;
  out.holds = out.lhs <= out.rhs + 1e-10;
  return out;
}

TvInstance random_tv_instance(std::uint64_t seed, int max_states, int max_c) {
  Rng rng(seed);
  TvInstance in;
  const int S = std::uniform_int_distribution<int>(1, max_states)(rng);
  in.c = std::uniform_int_distribution<int>(1, max_c)(rng);
  in.gamma = 0.99 * uniform01(rng);
  in.initial_state = std::uniform_int_distribution<int>(0, S - 1)(rng);
  in.P1 = Mat(S, S);
  in.P2 = Mat(S, S);
  // Mixture weight spans near-identical to unrelated kernels; some rows are
  // point masses.
  const double mix = std::pow(uniform01(rng), 2.0);
  const double conc = uniform01(rng) < 0.5 ? 0.3 : 1.0;
  for (int s = 0; s < S; ++s) {
    in.P1.row(s) = dirichlet(rng, S, conc).transpose();
    Vec other = dirichlet(rng, S, conc);
    if (uniform01(rng) < 0.2) {
      other.setZero();
      other[std::uniform_int_distribution<int>(0, S - 1)(rng)] = 1.0;
    }
    in.P2.row(s) = ((1.0 - mix) * in.P1.row(s).transpose() + mix * other).transpose();
  }
  in.reward = Vec(S);
  for (int s = 0; s < S; ++s) in.reward[s] = uniform01(rng);
  return in;
}

std::vector<double> similarity_map(const std::vector<Decision>& decisions, const std::vector<Decision>& dataset,
                                   double state_radius) {
  std::vector<double> out;
  out.reserve(decisions.size());
  for (const auto& [s, a] : decisions) {
    double best = kInfinity;
    for (const auto& [ds, da] : dataset) {
      if (ds.size() != s.size() || da.size() != a.size())
        throw std::invalid_argument("decision and dataset pair dimensions differ");
      if ((s - ds).cwiseAbs().sum() > state_radius) continue;
      best = std::min(best, (a - da).cwiseAbs().sum());
    }
    out.push_back(best);
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double finite_median(std::vector<double> values) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double x) { return !std::isfinite(x); }),
               values.end());
  return median(std::move(values));
}

}  // namespace hrl
