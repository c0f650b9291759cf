#pragma once

#include <cmath>
#include <vector>

#include "hrl/behavior.hpp"
#include "hrl/hyper_mdp.hpp"
#include "hrl/mdp.hpp"
#include "hrl/random.hpp"

namespace testing {

using hrl::Mat;
using hrl::Vec;

// Kernel rows s*A + a from a next-state table, deterministic transitions.
inline Mat deterministic_kernel(const std::vector<std::vector<int>>& next) {
  const int S = static_cast<int>(next.size());
  const int A = static_cast<int>(next.front().size());
  Mat P = Mat::Zero(S * A, S);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) P(s * A + a, next[s][a]) = 1.0;
  return P;
}

inline Vec point_mass(int n, int at) {
  Vec v = Vec::Zero(n);
  v[at] = 1.0;
  return v;
}

inline hrl::PolicyTable random_flat_policy(hrl::Rng& rng, int S, int A) {
  hrl::PolicyTable p;
  p.kind = hrl::PolicyKind::Flat;
  p.probs = Mat(S, A);
  for (int s = 0; s < S; ++s) p.probs.row(s) = hrl::dirichlet(rng, A, 1.0).transpose();
  return p;
}

inline hrl::PolicyTable random_high_policy(hrl::Rng& rng, int S, int K) {
  hrl::PolicyTable p = random_flat_policy(rng, S, K);
  p.kind = hrl::PolicyKind::HighLevel;
  return p;
}

// Dense (S*K) x S kernel of c behavior steps, by repeated multiplication.
inline Mat composed_kernel_oracle(const hrl::LinearTabularMDP& mdp, const hrl::BehaviorPolicy& beta, int c) {
  const hrl::TabularModel base = hrl::to_tabular(mdp);
  const int S = mdp.num_states;
  const int K = beta.num_skills;
  Mat out(S * K, S);
  for (int z = 0; z < K; ++z) {
    Mat Pz = hrl::skill_kernel(base, beta, z);
    Mat acc = Mat::Identity(S, S);
    for (int k = 0; k < c; ++k) acc = acc * Pz;
    for (int s = 0; s < S; ++s) out.row(s * K + z) = acc.row(s);
  }
  return out;
}

// sum_{k<c} gamma^k (P_z^k r_z)(s), the discounted c-step reward.
inline Mat composed_reward_oracle(const hrl::LinearTabularMDP& mdp, const hrl::BehaviorPolicy& beta, int c) {
  const hrl::TabularModel base = hrl::to_tabular(mdp);
  const int S = mdp.num_states;
  const int K = beta.num_skills;
  Mat out(S, K);
  for (int z = 0; z < K; ++z) {
    Mat Pz = hrl::skill_kernel(base, beta, z);
    Vec rz(S);
    for (int s = 0; s < S; ++s) {
      double acc = 0.0;
      for (int a = 0; a < mdp.num_actions; ++a) acc += beta.action_prob(s, z, a) * base.r[base.row(s, a)];
      rz[s] = acc;
    }
    Vec total = Vec::Zero(S);
    Mat power = Mat::Identity(S, S);
    double disc = 1.0;
    for (int k = 0; k < c; ++k) {
      total += disc * power * rz;
      power = power * Pz;
      disc *= mdp.gamma;
    }
    out.col(z) = total;
  }
  return out;
}

}  // namespace testing

namespace testing {

struct GradientCheck {
  int checked = 0;
  int failures = 0;
  double worst = 0.0;
};

// Central differences of f around params, compared coordinate-wise with
// `analytic`; coordinates whose magnitudes are both below `floor` only need
// to agree absolutely to `floor`. `five_point` uses the O(h^4) stencil.
template <typename F>
GradientCheck check_gradient(F&& f, hrl::Vec params, const hrl::Vec& analytic, double step = 1e-5,
                             double rel_tol = 1e-4, double floor = 1e-6, bool five_point = false) {
  GradientCheck out;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    auto at = [&](double offset) {
      params[i] = keep + offset;
      return f(params);
    };
    const double fd = five_point ? (-at(2 * step) + 8 * at(step) - 8 * at(-step) + at(-2 * step)) / (12.0 * step)
                                 : (at(step) - at(-step)) / (2.0 * step);
    params[i] = keep;
    const double mag = std::max(std::abs(fd), std::abs(analytic[i]));
    ++out.checked;
    if (mag <= floor) {
      if (std::abs(fd - analytic[i]) > floor) ++out.failures;
      continue;
    }
    const double rel = std::abs(fd - analytic[i]) / mag;
    out.worst = std::max(out.worst, rel);
    if (rel > rel_tol) ++out.failures;
  }
  return out;
}

}  // namespace testing
