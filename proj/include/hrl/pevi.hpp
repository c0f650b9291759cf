#pragma once

#include "hrl/data.hpp"
#include "hrl/hyper_mdp.hpp"

namespace hrl {

/// Theoretical bonus scale: zeta = log(4 d N / ((1 - gamma^c) delta)) and
/// beta = C d r_max sqrt(zeta) / (1 - gamma^c).
struct BoundSchedule {
  double C = 1.0;
  double delta = 0.1;
  double zeta = 0.0;
  double beta_scale = 0.0;
};

BoundSchedule compute_beta_schedule(int d, long N, double gamma, int c, double delta, double C, double r_max);

struct PessimisticEstimate {
  Vec w_hat;   // weights of the last backup
  Mat Lambda;  // lambda I + sum_tau w_tau Phi Phi^T
  double beta_scale = 0.0;
  double lambda_reg = 1.0;
  Vec bonus;   // Gamma(s, z), row s*K + z
  Mat Q_hat;   // S x K
  Vec V_hat;   // S
  PolicyTable policy;
  int iterations = 0;
  bool converged = false;
};

/// Pessimistic value iteration on the hyper-MDP's composed reward features.
/// Q is truncated to [0, r_max_c / (1 - gamma^c)]. Runs until the sup-norm
/// change in V is at most `tol` or `max_iters` sweeps have been made.
PessimisticEstimate fit_pessimistic_value(const HighLevelDataset& data, const HyperMDP& hyper, double lambda_reg,
                                          double beta_scale, double tol = 1e-8, int max_iters = 100000);

/// Ridge solution of the empirical squared Bellman error for a fixed V.
Vec ridge_weights(const HighLevelDataset& data, const HyperMDP& hyper, const Vec& values, double lambda_reg);

/// Gradient of M(w) = sum_tau w_tau (R_tau + gamma^c V(s'_tau) - Phi^T w)^2 + lambda ||w||^2.
Vec msbe_gradient(const HighLevelDataset& data, const HyperMDP& hyper, const Vec& values, const Vec& w,
                  double lambda_reg);

/// Fraction of (s, z) pairs where |Phi^T w(V_hat) - (B V_hat)(s, z)| > Gamma(s, z),
/// with B the exact hyper-MDP Bellman operator.
double uncertainty_quantifier_violation_rate(const HyperMDP& hyper, const PessimisticEstimate& estimate,
                                             const HighLevelDataset& data);

/// Greedy policy over skills; ties to the lowest skill index.
PolicyTable pevi_policy(const PessimisticEstimate& estimate);

}  // namespace hrl
