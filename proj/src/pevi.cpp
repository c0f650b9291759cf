#include "hrl/pevi.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

namespace hrl {

BoundSchedule compute_beta_schedule(int d, long N, double gamma, int c, double delta, double C, double r_max) {
  if (d < 1) throw std::invalid_argument("d must be >= 1");
  if (N < 1) throw std::invalid_argument("N must be >= 1");
  if (c < 1) throw std::invalid_argument("c must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0, 1)");
  if (!(C >= 0.0)) throw std::invalid_argument("C must be non-negative");
  const double gc = std::pow(gamma, c);
  if (!(gc < 1.0)) throw std::invalid_argument("gamma^c must be < 1");
  BoundSchedule b;
  b.C = C;
  b.delta = delta;
  b.zeta = std::log(4.0 * d * static_cast<double>(N) / ((1.0 - gc) * delta));
  b.beta_scale = C * d * r_max * std::sqrt(b.zeta) / (1.0 - gc);
  return b;
}

namespace {

struct Regression {
  Eigen::LLT<Mat> llt;
  Mat Lambda;
  Vec b0;  // sum w Phi R
  Mat G;   // d x S, sum w Phi e_{s'}^T
};

Regression build_regression(const HighLevelDataset& data, const HyperMDP& hyper, double lambda_reg) {
  if (data.tuples.empty()) throw std::invalid_argument("D_hi is empty");
  if (!(lambda_reg > 0.0)) throw std::invalid_argument("lambda_reg must be positive");
  const int d = hyper.dim;
  Regression reg;
  reg.Lambda = lambda_reg * Mat::Identity(d, d);
  reg.b0 = Vec::Zero(d);
  reg.G = Mat::Zero(d, hyper.num_states);
  for (const HighLevelTuple& t : data.tuples) {
    if (t.s0 < 0 || t.s0 >= hyper.num_states || t.sc < 0 || t.sc >= hyper.num_states || t.z < 0 ||
        t.z >= hyper.num_skills)
      throw std::out_of_range("D_hi tuple indexes outside the hyper-MDP");
    const auto phi = hyper.phi_c.row(hyper.pair_row(t.s0, t.z));
    reg.Lambda.noalias() += t.weight * phi.transpose() * phi;
    reg.b0 += t.weight * t.reward * phi.transpose();
    reg.G.col(t.sc) += t.weight * phi.transpose();
  }
  reg.llt.compute(reg.Lambda);
  if (reg.llt.info() != Eigen::Success) throw std::runtime_error("Lambda is numerically singular");
  return reg;
}

Vec bonus_of(const HyperMDP& hyper, const Regression& reg, double beta_scale) {
  // Gamma = beta sqrt(phi^T Lambda^-1 phi) via one triangular solve per row.
  Mat L_inv_phi = reg.llt.matrixL().solve(hyper.phi_c.transpose());
  return beta_scale * L_inv_phi.colwise().norm().transpose();
}

}  // namespace

Vec ridge_weights(const HighLevelDataset& data, const HyperMDP& hyper, const Vec& values, double lambda_reg) {
  Regression reg = build_regression(data, hyper, lambda_reg);
  return reg.llt.solve(reg.b0 + hyper.gamma_eff * reg.G * values);
}

Vec msbe_gradient(const HighLevelDataset& data, const HyperMDP& hyper, const Vec& values, const Vec& w,
                  double lambda_reg) {
  Vec grad = 2.0 * lambda_reg * w;
  for (const HighLevelTuple& t : data.tuples) {
    const auto phi = hyper.phi_c.row(hyper.pair_row(t.s0, t.z));
    const double residual = t.reward + hyper.gamma_eff * values[t.sc] - phi.dot(w);
    grad -= 2.0 * t.weight * residual * phi.transpose();
  }
  return grad;
}

PessimisticEstimate fit_pessimistic_value(const HighLevelDataset& data, const HyperMDP& hyper, double lambda_reg,
                                          double beta_scale, double tol, int max_iters) {
  if (!(beta_scale >= 0.0)) throw std::invalid_argument("beta_scale must be non-negative");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  Regression reg = build_regression(data, hyper, lambda_reg);
  const int S = hyper.num_states;
  const int K = hyper.num_skills;

  PessimisticEstimate est;
  est.Lambda = reg.Lambda;
  est.beta_scale = beta_scale;
  est.lambda_reg = lambda_reg;
  est.bonus = bonus_of(hyper, reg, beta_scale);

  const Vec base0 = reg.llt.solve(reg.b0);
  const Mat baseG = reg.llt.solve(reg.G);
  const Vec q0 = hyper.phi_c * base0;
  const Mat M = hyper.phi_c * baseG;
  const double upper = hyper.value_bound();

  Vec v = Vec::Zero(S);
  Vec q(static_cast<Eigen::Index>(S) * K);
  std::vector<int> greedy(S, 0);
  for (est.iterations = 0; est.iterations < max_iters;) {
    q = (q0 + hyper.gamma_eff * (M * v) - est.bonus).cwiseMax(0.0).cwiseMin(upper);
    Vec next(S);
    for (int s = 0; s < S; ++s) {
      int best = 0;
      for (int z = 1; z < K; ++z)
        if (q[s * K + z] > q[s * K + best]) best = z;
      greedy[s] = best;
      next[s] = q[s * K + best];
    }
    ++est.iterations;
    const double delta = (next - v).cwiseAbs().maxCoeff();
    est.w_hat = base0 + hyper.gamma_eff * baseG * v;
    v = std::move(next);
    if (delta <= tol) {
      est.converged = true;
      break;
    }
  }
  est.V_hat = v;
  est.Q_hat = Mat(S, K);
  for (int s = 0; s < S; ++s)
    for (int z = 0; z < K; ++z) est.Q_hat(s, z) = q[s * K + z];
  est.policy = PolicyTable::deterministic(PolicyKind::HighLevel, greedy, K);
  return est;
}

double uncertainty_quantifier_violation_rate(const HyperMDP& hyper, const PessimisticEstimate& estimate,
                                             const HighLevelDataset& data) {
  const Vec w = ridge_weights(data, hyper, estimate.V_hat, estimate.lambda_reg);
  const Vec estimated = hyper.phi_c * w;
  const Vec exact = hyper.model.r + hyper.gamma_eff * hyper.model.P * estimate.V_hat;
  const Eigen::Index n = estimated.size();
  int violations = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::abs(estimated[i] - exact[i]) > estimate.bonus[i]) ++violations;
  return static_cast<double>(violations) / static_cast<double>(n);
}

PolicyTable pevi_policy(const PessimisticEstimate& estimate) {
  const int S = static_cast<int>(estimate.Q_hat.rows());
  const int K = static_cast<int>(estimate.Q_hat.cols());
  std::vector<int> greedy(S, 0);
  for (int s = 0; s < S; ++s)
    for (int z = 1; z < K; ++z)
      if (estimate.Q_hat(s, z) > estimate.Q_hat(s, greedy[s])) greedy[s] = z;
  return PolicyTable::deterministic(PolicyKind::HighLevel, greedy, K);
}

}  // namespace hrl
