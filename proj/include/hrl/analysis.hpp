#pragma once

#include <limits>
#include <utility>
#include <vector>

#include "hrl/data.hpp"
#include "hrl/hyper_mdp.hpp"
#include "hrl/mdp.hpp"

namespace hrl {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Half L1 distance between two probability vectors.
double tv_distance(const Vec& p, const Vec& q);

/// sqrt(ln(class_size / delta) / N)
double primitive_error_bound(double class_size, double delta, long N);

/// gamma c (c+1) r_max / ((1-gamma)(1-gamma^c)), the factor shared by the
/// primitive and representation bounds.
double transfer_factor(double gamma, int c, double r_max);
double lemma1_bound(double gamma, int c, double r_max, double eps_theta);
double lemma3_bound(double gamma, int c, double r_max, double eps_omega);

// ---- representation error ---------------------------------------------------

struct RepresentationResult {
  double eps_omega = 0.0;
  /// omega[i][s]: skill chosen for policy i at state s.
  std::vector<std::vector<int>> omega;
  /// eps_k(i, k-1): visitation-weighted mean of eps_k for policy i.
  Mat eps_k;
};

/// Omega(s, pi) = argmin_z TV(P_pi(.|s) || P_{beta,z}(.|s)), ties to the lowest z.
/// eps_k(s, pi) = E_{x ~ P_pi^{k-1}(.|s)} TV(P_pi(.|x) || P_{beta,Omega(s,pi)}(.|x)),
/// averaged over s under the normalized discounted visitation of pi from mu0;
/// eps_omega is the max over the class and k in [1, c].
RepresentationResult representation_error(const LinearTabularMDP& mdp, const BehaviorPolicy& behavior,
                                          const std::vector<PolicyTable>& policy_class, int c);

// ---- concentration ----------------------------------------------------------

/// sup_x x^T A x / x^T B x for symmetric PSD A, B; +inf when A has mass
/// outside the range of B. Zero when A vanishes.
double generalized_max_eigenvalue(const Mat& A, const Mat& B, double rel_tol = 1e-10);

/// Sigma_D = weighted mean of Phi_c Phi_c^T over D_hi.
Mat dataset_covariance(const HighLevelDataset& data, const HyperMDP& hyper);

/// Feature second moment under the normalized gamma^c-discounted visitation
/// of the high-level policy in the hyper-MDP, started at `anchor`.
Mat policy_covariance(const HyperMDP& hyper, const PolicyTable& high_policy, int anchor);

/// Max over anchor states with mu0 > 0 of the generalized eigenvalue of
/// (Sigma_{pi,s}, Sigma_D).
double concentration_coefficient(const HighLevelDataset& data, const HyperMDP& hyper, const PolicyTable& high_policy);

// ---- theorem bound ----------------------------------------------------------

struct BoundInputs {
  double eps_theta = 0.0;
  double eps_omega = 0.0;
  double c_dagger = 1.0;
  int d = 1;
  long N = 1;
  int c = 1;
  double gamma = 0.9;
  double r_max = 1.0;
  double delta = 0.1;
  double C = 1.0;
  double zeta = 0.0;
};

/// Fills zeta from the PEVI schedule.
BoundInputs make_bound_inputs(double eps_theta, double eps_omega, double c_dagger, int d, long N, int c, double gamma,
                              double r_max, double delta, double C);

struct BoundTerms {
  double offline = 0.0;
  double transfer = 0.0;
  double total = 0.0;
};

BoundTerms theorem1_terms(const BoundInputs& in);
double theorem1_bound(const BoundInputs& in);

// ---- decomposition ----------------------------------------------------------

struct DecompositionReport {
  double primitive_error = 0.0;       // J(pi_hat_beta) - J(pi_hat_theta)
  double offline_error = 0.0;         // J(pi*_beta) - J(pi_hat_beta)
  double representation_error = 0.0;  // J(pi*) - J(pi*_beta)
  double total_subopt = 0.0;          // J(pi*) - J(pi_hat_theta)
  double j_learned = 0.0;             // J(pi_hat_theta)
  double j_pevi = 0.0;                // J(pi_hat_beta)
  double j_best_skill = 0.0;          // J(pi*_beta)
  double j_optimal = 0.0;             // J(pi*)
  PolicyTable optimal_flat;
  PolicyTable optimal_high;
};

/// All four values from exact policy evaluation. `learned_low` has rows
/// s*K + z; `high_policy` is shared by the learned and the true skills.
DecompositionReport suboptimality_decomposition(const LinearTabularMDP& mdp, const HyperMDP& hyper,
                                                const PolicyTable& learned_low, const PolicyTable& high_policy);

/// Behavior with the same skill prior as `behavior` and `learned_low` as its
/// action table.
BehaviorPolicy with_primitive(const BehaviorPolicy& behavior, const PolicyTable& learned_low);

/// Normalized gamma-discounted per-step (state, skill) visitation of the
/// hierarchical policy that runs `high_policy` every c steps on top of the
/// hyper-MDP's behavior. S x K.
Mat hierarchical_visitation(const LinearTabularMDP& mdp, const HyperMDP& hyper, const PolicyTable& high_policy);

/// E_{(s,z) ~ hierarchical visitation}[TV(learned(.|s,z) || beta(.|s,z))].
double measured_primitive_tv(const LinearTabularMDP& mdp, const HyperMDP& hyper, const PolicyTable& learned_low,
                             const PolicyTable& high_policy);

// ---- TV coupling bound ------------------------------------------------------

struct TvInstance {
  Mat P1;  // S x S
  Mat P2;
  Vec reward;  // per state, non-negative
  double gamma = 0.9;
  int c = 1;
  int initial_state = 0;
};

struct TvCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double eps = 0.0;
  bool holds = false;
};

/// lhs = |J(M1) - J(M2)|; eps = max_k E_{s ~ d1}[E_{x ~ P1^{k-1}(.|s)} TV(P1(.|x) || P2(.|x))]
/// with d1 the normalized discounted visitation of P1 from the initial state.
TvCheck tv_subopt_check(const TvInstance& instance);

TvInstance random_tv_instance(std::uint64_t seed, int max_states = 6, int max_c = 4);

// ---- similarity -------------------------------------------------------------

using Decision = std::pair<Vec, Vec>;  // (state, action)

/// Per decision, min ||a - a'||_1 over dataset pairs with ||s - s'||_1 <= radius;
/// +inf when no dataset state lies within the radius.
std::vector<double> similarity_map(const std::vector<Decision>& decisions, const std::vector<Decision>& dataset,
                                   double state_radius);

/// Median of the finite entries; NaN when there are none.
double finite_median(std::vector<double> values);
double median(std::vector<double> values);

}  // namespace hrl
