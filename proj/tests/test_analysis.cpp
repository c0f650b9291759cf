#include <cmath>
#include <functional>

#include "doctest.h"
#include "helpers.hpp"
#include "hrl/analysis.hpp"
#include "hrl/data.hpp"

using namespace hrl;

namespace {

Mat random_kernel(Rng& rng, int rows, int S, double conc = 1.0) {
  Mat P(rows, S);
  for (int i = 0; i < rows; ++i) P.row(i) = dirichlet(rng, S, conc).transpose();
  return P;
}

LinearTabularMDP state_reward_mdp(Rng& rng, int S, int A, double gamma) {
  const Mat P = random_kernel(rng, S * A, S, 0.5);
  Vec r(S * A);
  for (int s = 0; s < S; ++s) {
    const double v = uniform01(rng);
    for (int a = 0; a < A; ++a) r[s * A + a] = v;
  }
  return embed_tabular_mdp(P, r, gamma, dirichlet(rng, S, 1.0));
}

Vec series_visitation(const Mat& P, double gamma, const Vec& mu) {
  Eigen::RowVectorXd row = mu.transpose();
  Vec out = Vec::Zero(mu.size());
  double disc = 1.0;
  for (int t = 0; t < 4000 && disc > 1e-18; ++t) {
    out += (1.0 - gamma) * disc * row.transpose();
    row = row * P;
    disc *= gamma;
  }
  return out;
}

// Enumerates every path s -> x_1 -> ... -> x_{k-1} and sums its probability.
double path_probability(const Mat& P, int s, int x, int steps) {
  if (steps == 0) return s == x ? 1.0 : 0.0;
  double total = 0.0;
  for (int y = 0; y < P.cols(); ++y)
    if (P(s, y) > 0.0) total += P(s, y) * path_probability(P, y, x, steps - 1);
  return total;
}

}  // namespace

TEST_CASE("tv distance hand values") {
  Vec p(2), q(2);
  p << 0.5, 0.5;
  q << 0.9, 0.1;
  CHECK(tv_distance(p, q) == doctest::Approx(0.4));
  CHECK(tv_distance(p, p) == 0.0);
  CHECK(tv_distance(testing::point_mass(3, 0), testing::point_mass(3, 2)) == doctest::Approx(1.0));
  CHECK_THROWS_AS(tv_distance(p, Vec::Zero(3)), std::invalid_argument);
}

TEST_CASE("primitive error bound") {
  CHECK(primitive_error_bound(std::exp(1.0) * 0.5, 0.5, 1) == doctest::Approx(1.0));
  const long double oracle = std::sqrt(std::log(160.0L) / 1000.0L);
  CHECK(std::abs(primitive_error_bound(16, 0.1, 1000) - static_cast<double>(oracle)) < 1e-15);
  CHECK(primitive_error_bound(16, 0.1, 1000) == doctest::Approx(0.0712).epsilon(1e-3));
  CHECK(primitive_error_bound(16, 0.1, 4000) == doctest::Approx(0.5 * primitive_error_bound(16, 0.1, 1000)));
  CHECK_THROWS_AS(primitive_error_bound(0.5, 0.1, 10), std::invalid_argument);
  CHECK_THROWS_AS(primitive_error_bound(4, 1.0, 10), std::invalid_argument);
  CHECK_THROWS_AS(primitive_error_bound(4, 0.1, 0), std::invalid_argument);
}

TEST_CASE("representation error is zero when the class is the skills") {
  const LinearTabularMDP mdp = build_tabular_linear_mdp(3, 4, 5, 3, 0.9, 1.0);
  const BehaviorPolicy beta = make_behavior_policy(mdp, 3, BehaviorStyle::SoftmaxDiverse, 7);
  std::vector<PolicyTable> cls;
  for (int z = 0; z < 3; ++z) {
    PolicyTable p;
    p.kind = PolicyKind::Flat;
    p.probs = Mat(5, 3);
    for (int s = 0; s < 5; ++s) p.probs.row(s) = beta.actions.probs.row(s * 3 + z);
    cls.push_back(p);
  }
  const auto res = representation_error(mdp, beta, cls, 3);
  CHECK(res.eps_omega < 1e-15);
}

TEST_CASE("representation error on a single state") {
  Rng rng(1);
  Vec r(3);
  r << 0.1, 0.7, 0.3;
  const LinearTabularMDP mdp = embed_tabular_mdp(Mat::Ones(3, 1), r, 0.9, Vec::Ones(1));
  const BehaviorPolicy beta = make_behavior_policy(mdp, 2, BehaviorStyle::RandomDeterministic, 1);
  const auto res = representation_error(mdp, beta, {testing::random_flat_policy(rng, 1, 3)}, 2);
  CHECK(res.eps_omega == 0.0);
}

TEST_CASE("representation error matches a brute-force evaluator") {
  Rng rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    const int S = 4, A = 3, K = 2, c = 3;
    const LinearTabularMDP mdp = build_tabular_linear_mdp(100 + trial, 5, S, A, 0.85, 1.0);
    const BehaviorPolicy beta = make_behavior_policy(mdp, K, BehaviorStyle::SoftmaxDiverse, trial);
    std::vector<PolicyTable> cls;
    for (int i = 0; i < 3; ++i) cls.push_back(testing::random_flat_policy(rng, S, A));
    const auto res = representation_error(mdp, beta, cls, c);

    double worst = 0.0;
    for (const auto& pi : cls) {
      // P_pi(x'|x) and P_{beta,z}(x'|x) from the raw query functions.
      Mat P = Mat::Zero(S, S);
      std::vector<Mat> Pz(K, Mat::Zero(S, S));
      for (int x = 0; x < S; ++x)
        for (int a = 0; a < A; ++a)
          for (int y = 0; y < S; ++y) {
            const double p = transition_prob(mdp, x, a, y);
            P(x, y) += pi.prob(x, a) * p;
            for (int z = 0; z < K; ++z) Pz[z](x, y) += beta.action_prob(x, z, a) * p;
          }
      auto tv = [&](int x, int z) {
        double acc = 0.0;
        for (int y = 0; y < S; ++y) acc += std::abs(P(x, y) - Pz[z](x, y));
        return 0.5 * acc;
      };
      const Vec d = series_visitation(P, mdp.gamma, mdp.mu0);
      for (int k = 1; k <= c; ++k) {
        double mean = 0.0;
        for (int s = 0; s < S; ++s) {
          int om = 0;
          for (int z = 1; z < K; ++z)
            if (tv(s, z) < tv(s, om)) om = z;
          double eps = 0.0;
          for (int x = 0; x < S; ++x) eps += path_probability(P, s, x, k - 1) * tv(x, om);
          mean += d[s] * eps;
        }
        worst = std::max(worst, mean);
      }
    }
    CHECK(res.eps_omega == doctest::Approx(worst).epsilon(1e-10));
  }
  CHECK_THROWS_AS(representation_error(build_tabular_linear_mdp(1, 2, 2, 2, 0.9, 1.0),
                                       make_behavior_policy(build_tabular_linear_mdp(1, 2, 2, 2, 0.9, 1.0), 2,
                                                            BehaviorStyle::ActionsAsSkills, 0),
                                       {}, 1),
                  std::invalid_argument);
}

TEST_CASE("generalized eigenvalue hand cases") {
  Mat I = Mat::Identity(2, 2);
  Mat A = Mat::Zero(2, 2);
  A.diagonal() << 2.0, 1.0;
  CHECK(generalized_max_eigenvalue(A, I) == doctest::Approx(2.0));
  CHECK(generalized_max_eigenvalue(A, A) == doctest::Approx(1.0));
  Mat B = Mat::Zero(2, 2);
  B(0, 0) = 1.0;
  CHECK(std::isinf(generalized_max_eigenvalue(A, B)));
  Mat A0 = Mat::Zero(2, 2);
  A0(0, 0) = 3.0;
  CHECK(generalized_max_eigenvalue(A0, B) == doctest::Approx(3.0));
  CHECK(generalized_max_eigenvalue(Mat::Zero(2, 2), B) == 0.0);
}

TEST_CASE("concentration coefficient equals one for matched covariances") {
  Rng rng(5);
  const LinearTabularMDP mdp = build_tabular_linear_mdp(8, 4, 4, 2, 0.9, 1.0);
  const BehaviorPolicy beta = make_behavior_policy(mdp, 2, BehaviorStyle::SoftmaxDiverse, 3);
  HyperMDP hyper = build_hyper_mdp(mdp, beta, 2);
  hyper.mu0 = testing::point_mass(4, 1);
  const PolicyTable pi = testing::random_high_policy(rng, 4, 2);
  const Vec d = discounted_visitation(policy_kernel(hyper.model, pi), hyper.gamma_eff, hyper.mu0);
  HighLevelDataset data;
  data.c = 2;
  for (int s = 0; s < 4; ++s)
    for (int z = 0; z < 2; ++z)
      if (d[s] * pi.prob(s, z) > 0.0) data.tuples.push_back({s, z, 0.0, 0, d[s] * pi.prob(s, z)});
  CHECK(concentration_coefficient(data, hyper, pi) == doctest::Approx(1.0).epsilon(1e-9));

  // Data that only ever shows skill 0 cannot cover a policy that needs skill 1.
  PolicyTable only_one = pi;
  only_one.probs.setZero();
  only_one.probs.col(1).setOnes();
  HighLevelDataset narrow;
  narrow.c = 2;
  narrow.tuples.push_back({1, 0, 0.0, 0, 1.0});
  CHECK(std::isinf(concentration_coefficient(narrow, hyper, only_one)));
  CHECK_THROWS_AS(concentration_coefficient(HighLevelDataset{}, hyper, pi), std::invalid_argument);
}

TEST_CASE("theorem bound values") {
  BoundInputs zero = make_bound_inputs(0.0, 0.0, 2.0, 4, 1000, 2, 0.9, 1.0, 0.1, 0.0);
  CHECK(theorem1_bound(zero) == 0.0);

  BoundInputs a = make_bound_inputs(0.0, 0.0, 1.0, 4, 1000, 1, 0.99, 1.0, 0.1, 1.0);
  BoundInputs b = a;
  b.c = 10;
  CHECK(theorem1_terms(b).offline / theorem1_terms(a).offline == doctest::Approx(0.1046).epsilon(1e-3));

  const BoundInputs full = make_bound_inputs(0.05, 0.05, 2.0, 4, 1000, 2, 0.9, 1.0, 0.1, 1.0);
  const long double g = 0.9L, gc = g * g;
  const long double zeta = std::log(4.0L * 4 * 1000 / ((1 - gc) * 0.1L));
  const long double oracle = 2.0L / ((1 - g) * (1 - gc)) * std::sqrt(2.0L * 64 * zeta / 1000) +
                             g * 2 * 3 / ((1 - g) * (1 - gc)) * 0.1L;
  CHECK(std::abs(theorem1_bound(full) - static_cast<double>(oracle)) < 1e-10);

  BoundInputs inf = full;
  inf.c_dagger = kInfinity;
  CHECK_THROWS_AS(theorem1_bound(inf), std::invalid_argument);
}

TEST_CASE("theorem bound monotonicity") {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    const int d = 1 + i % 6, c = 1 + i % 5;
    const long N = 10 + static_cast<long>(uniform01(rng) * 10000);
    const double gamma = 0.5 + 0.49 * uniform01(rng);
    const BoundInputs in =
        make_bound_inputs(uniform01(rng), uniform01(rng), 1.0 + 5 * uniform01(rng), d, N, c, gamma, 1.0, 0.1, 1.0);
    const double base = theorem1_bound(in);
    BoundInputs up = in;
    up.eps_theta += 0.1;
    CHECK(theorem1_bound(up) > base);
    up = in;
    up.eps_omega += 0.1;
    CHECK(theorem1_bound(up) > base);
    up = in;
    up.c_dagger *= 1.5;
    CHECK(theorem1_bound(up) > base);
    const BoundInputs more = make_bound_inputs(in.eps_theta, in.eps_omega, in.c_dagger, d, 2 * N, c, gamma, 1.0, 0.1, 1.0);
    CHECK(theorem1_bound(more) < base);
  }
}

TEST_CASE("decomposition with the true primitive and the best high-level policy") {
  const LinearTabularMDP mdp = build_tabular_linear_mdp(12, 5, 5, 3, 0.9, 1.0);
  const BehaviorPolicy beta = make_behavior_policy(mdp, 2, BehaviorStyle::SoftmaxDiverse, 4);
  const HyperMDP hyper = build_hyper_mdp(mdp, beta, 3);
  const PolicyTable best = exact_value_iteration(hyper).policy;
  const auto rep = suboptimality_decomposition(mdp, hyper, beta.actions, best);
  CHECK(rep.primitive_error == 0.0);
  CHECK(rep.offline_error == 0.0);
  CHECK(rep.representation_error == doctest::Approx(rep.j_optimal - rep.j_best_skill));
  CHECK(rep.representation_error >= -1e-9);
}

TEST_CASE("decomposition is zero when the hierarchy is the flat problem") {
  const LinearTabularMDP mdp = build_tabular_linear_mdp(13, 4, 4, 3, 0.8, 1.0);
  const BehaviorPolicy beta = make_behavior_policy(mdp, 3, BehaviorStyle::ActionsAsSkills, 0);
  const HyperMDP hyper = build_hyper_mdp(mdp, beta, 1);
  PolicyTable high = exact_value_iteration(to_tabular(mdp)).policy;
  high.kind = PolicyKind::HighLevel;
  const auto rep = suboptimality_decomposition(mdp, hyper, beta.actions, high);
  CHECK(std::abs(rep.primitive_error) < 1e-12);
  CHECK(std::abs(rep.offline_error) < 1e-9);
  CHECK(std::abs(rep.representation_error) < 1e-9);
}

TEST_CASE("decomposition telescopes and its values match composed-kernel evaluation") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int S = 3 + trial % 4, A = 2 + trial % 2, K = 2, c = 1 + trial % 3;
    const LinearTabularMDP mdp = build_tabular_linear_mdp(200 + trial, 4, S, A, 0.9, 1.0);
    const BehaviorPolicy beta = make_behavior_policy(mdp, K, BehaviorStyle::SoftmaxDiverse, trial);
    const HyperMDP hyper = build_hyper_mdp(mdp, beta, c);
    const SkillDataset low = sample_primitive_dataset(mdp, beta, 200, 20, trial);
    const TabularPrimitive prim = fit_tabular_primitive(low, S, K, A, 0.5);
    const PolicyTable high = testing::random_high_policy(rng, S, K);
    const auto rep = suboptimality_decomposition(mdp, hyper, prim.table, high);
    CHECK(std::abs(rep.primitive_error + rep.offline_error + rep.representation_error - rep.total_subopt) <= 1e-12);

    // J(pi_hat_theta) from the c-th power of the learned skill kernels.
    const BehaviorPolicy learned = with_primitive(beta, prim.table);
    const Mat Pc = testing::composed_kernel_oracle(mdp, learned, c);
    const Mat Rc = testing::composed_reward_oracle(mdp, learned, c);
    Mat Ppi = Mat::Zero(S, S);
    Vec rpi = Vec::Zero(S);
    for (int s = 0; s < S; ++s)
      for (int z = 0; z < K; ++z) {
        Ppi.row(s) += high.prob(s, z) * Pc.row(s * K + z);
        rpi[s] += high.prob(s, z) * Rc(s, z);
      }
    const Vec V = (Mat::Identity(S, S) - std::pow(mdp.gamma, c) * Ppi).partialPivLu().solve(rpi);
    CHECK(rep.j_learned == doctest::Approx(mdp.mu0.dot(V)).epsilon(1e-10));
  }
}

TEST_CASE("hierarchical visitation matches an augmented-chain oracle") {
  Rng rng(41);
  for (int trial = 0; trial < 6; ++trial) {
    const int S = 3, A = 2, K = 2, c = 1 + trial % 3;
    const LinearTabularMDP mdp = build_tabular_linear_mdp(300 + trial, 3, S, A, 0.8, 1.0);
    const BehaviorPolicy beta = make_behavior_policy(mdp, K, BehaviorStyle::SoftmaxDiverse, trial);
    const HyperMDP hyper = build_hyper_mdp(mdp, beta, c);
    const PolicyTable high = testing::random_high_policy(rng, S, K);
    const Mat d = hierarchical_visitation(mdp, hyper, high);
    CHECK(d.sum() == doctest::Approx(1.0).epsilon(1e-12));

    // Augmented state (s, z, j): j steps into a window with skill z.
    const int n = S * K * c;
    auto idx = [&](int s, int z, int j) { return (j * K + z) * S + s; };
    Mat T = Mat::Zero(n, n);
    for (int s = 0; s < S; ++s)
      for (int z = 0; z < K; ++z)
        for (int j = 0; j < c; ++j)
          for (int a = 0; a < A; ++a)
            for (int y = 0; y < S; ++y) {
              const double p = beta.action_prob(s, z, a) * transition_prob(mdp, s, a, y);
              if (j + 1 < c) {
                T(idx(s, z, j), idx(y, z, j + 1)) += p;
              } else {
                for (int z2 = 0; z2 < K; ++z2) T(idx(s, z, j), idx(y, z2, 0)) += p * high.prob(y, z2);
              }
            }
    Vec mu = Vec::Zero(n);
    for (int s = 0; s < S; ++s)
      for (int z = 0; z < K; ++z) mu[idx(s, z, 0)] = mdp.mu0[s] * high.prob(s, z);
    const Vec aug = series_visitation(T, mdp.gamma, mu);
    for (int s = 0; s < S; ++s)
      for (int z = 0; z < K; ++z) {
        double total = 0.0;
        for (int j = 0; j < c; ++j) total += aug[idx(s, z, j)];
        CHECK(d(s, z) == doctest::Approx(total).epsilon(1e-10));
      }
    CHECK(measured_primitive_tv(mdp, hyper, beta.actions, high) == 0.0);
  }
}

TEST_CASE("primitive error stays below the bound with measured TV") {
  Rng rng(51);
  for (int trial = 0; trial < 30; ++trial) {
    const int S = 3 + trial % 3, A = 3, K = 2, c = 1 + trial % 4;
    const double gamma = 0.5 + 0.45 * uniform01(rng);
    const LinearTabularMDP mdp = build_tabular_linear_mdp(400 + trial, 4, S, A, gamma, 1.0);
    const BehaviorPolicy beta = make_behavior_policy(mdp, K, BehaviorStyle::SoftmaxDiverse, trial);
    const HyperMDP hyper = build_hyper_mdp(mdp, beta, c);
    const TabularPrimitive prim = fit_tabular_primitive(sample_primitive_dataset(mdp, beta, 60, 10, trial), S, K, A);
    const PolicyTable high = testing::random_high_policy(rng, S, K);
    const auto rep = suboptimality_decomposition(mdp, hyper, prim.table, high);
    const double eps = measured_primitive_tv(mdp, hyper, prim.table, high);
    CHECK(rep.primitive_error <= lemma1_bound(gamma, c, mdp.r_max, eps) + 1e-12);
  }
}

TEST_CASE("representation error stays below the bound for state-only rewards") {
  Rng rng(61);
  for (int trial = 0; trial < 30; ++trial) {
    const int S = 3 + trial % 4, A = 3, K = 2, c = 1 + trial % 4;
    const LinearTabularMDP mdp = state_reward_mdp(rng, S, A, 0.6 + 0.35 * uniform01(rng));
    const BehaviorPolicy beta = make_behavior_policy(mdp, K, BehaviorStyle::SoftmaxDiverse, trial);
    const HyperMDP hyper = build_hyper_mdp(mdp, beta, c);
    const auto rep = suboptimality_decomposition(mdp, hyper, beta.actions, exact_value_iteration(hyper).policy);
    const auto omega = representation_error(mdp, beta, {rep.optimal_flat}, c);
    CHECK(rep.representation_error <= lemma3_bound(mdp.gamma, c, mdp.r_max, omega.eps_omega) + 1e-10);
  }
}

TEST_CASE("the representation bound ignores action-dependent rewards") {
  // One state, two actions with identical next-state laws but different
  // rewards: eps_omega is zero while the skill that never takes the rewarding
  // action loses value.
  Mat P = Mat::Ones(2, 1);
  Vec r(2);
  r << 0.0, 1.0;
  const LinearTabularMDP mdp = embed_tabular_mdp(P, r, 0.9, Vec::Ones(1));
  const BehaviorPolicy beta = behavior_from_tables(Mat::Ones(1, 1), (Mat(1, 2) << 1.0, 0.0).finished());
  const HyperMDP hyper = build_hyper_mdp(mdp, beta, 1);
  const auto rep = suboptimality_decomposition(mdp, hyper, beta.actions, exact_value_iteration(hyper).policy);
  const auto omega = representation_error(mdp, beta, {rep.optimal_flat}, 1);
  CHECK(omega.eps_omega == 0.0);
  CHECK(rep.representation_error > lemma3_bound(0.9, 1, mdp.r_max, omega.eps_omega));
}

TEST_CASE("TV coupling bound: identical kernels") {
  Rng rng(3);
  TvInstance in;
  in.P1 = random_kernel(rng, 4, 4);
  in.P2 = in.P1;
  in.reward = Vec::Constant(4, 0.5);
  in.c = 3;
  const TvCheck chk = tv_subopt_check(in);
  CHECK(chk.lhs < 1e-14);
  CHECK(chk.rhs == 0.0);
  CHECK(chk.holds);
}

TEST_CASE("TV coupling bound: point-mass kernels") {
  TvInstance in;
  in.P1 = Mat::Zero(3, 3);
  in.P2 = Mat::Zero(3, 3);
  in.P1.col(0).setOnes();
  in.P2.col(1).setOnes();
  in.reward = Vec::Zero(3);
  in.reward[0] = 1.0;
  in.gamma = 0.9;
  in.c = 2;
  const TvCheck chk = tv_subopt_check(in);
  CHECK(chk.eps == doctest::Approx(1.0));
  // M2 still collects the reward at t = 0.
  CHECK(chk.lhs == doctest::Approx(9.0));
  CHECK(chk.holds);
}

TEST_CASE("TV coupling bound holds on random instances") {
  int violations = 0;
  double tightest = 0.0;
  for (int i = 0; i < 500; ++i) {
    const TvCheck chk = tv_subopt_check(random_tv_instance(derive_seed(2024, i)));
    violations += !chk.holds;
    if (chk.rhs > 0) tightest = std::max(tightest, chk.lhs / chk.rhs);
  }
  MESSAGE("largest lhs/rhs ratio ", tightest);
  CHECK(violations == 0);

  TvInstance bad = random_tv_instance(1);
  bad.P2(0, 0) += 0.5;
  CHECK_THROWS_AS(tv_subopt_check(bad), std::invalid_argument);
}

TEST_CASE("similarity map") {
  std::vector<Decision> data{{Vec::Zero(2), Vec::Ones(2)}, {Vec::Ones(2), Vec::Zero(2)}};
  const auto eps = similarity_map({{Vec::Zero(2), Vec::Ones(2)}, {Vec::Constant(2, 0.5), Vec::Zero(2)}}, data, 0.0);
  CHECK(eps[0] == 0.0);
  CHECK(std::isinf(eps[1]));
  const auto wide = similarity_map({{Vec::Constant(2, 0.5), Vec::Constant(2, 0.25)}}, data, 1.0);
  CHECK(wide[0] == doctest::Approx(0.5));
  CHECK(finite_median({1.0, kInfinity, 3.0}) == doctest::Approx(2.0));
  CHECK(std::isnan(finite_median({kInfinity})));
}
