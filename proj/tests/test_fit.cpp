#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "slam/datagen.hpp"
#include "slam/evaluate.hpp"
#include "slam/fit.hpp"
#include "slam/parallel.hpp"
#include "slam/rng.hpp"

using namespace slam;

namespace {

// Exact full conditional of one attribute entry by evaluating the joint
// likelihood at both values of the bit.
double exact_conditional_attr(const ResponseMatrix& r, const BitMatrix& q,
                              BitMatrix a, const ItemParamsTwo& theta, int i,
                              int k) {
  a(i, k) = 1;
  double ll1 = joint_loglik(r, q, a, theta, ModelKind::Dina);
  a(i, k) = 0;
  double ll0 = joint_loglik(r, q, a, theta, ModelKind::Dina);
  return 1.0 / (1.0 + std::exp(ll0 - ll1));
}

double exact_conditional_load(const ResponseMatrix& r, BitMatrix q,
                              const BitMatrix& a, const ItemParamsTwo& theta,
                              int j, int k) {
  q(j, k) = 1;
  double ll1 = joint_loglik(r, q, a, theta, ModelKind::Dina);
  q(j, k) = 0;
  double ll0 = joint_loglik(r, q, a, theta, ModelKind::Dina);
  return 1.0 / (1.0 + std::exp(ll0 - ll1));
}

struct SmallInstance {
  ResponseMatrix r;
  BitMatrix q, a;
  ItemParamsTwo theta;
};

SmallInstance random_instance(std::uint64_t seed, bool with_missing) {
  CounterRng rng = substream(seed, 1234, 0, 0);
  int n = 1 + static_cast<int>(rng.next_below(4));
  int j_count = 1 + static_cast<int>(rng.next_below(4));
  int k = 1 + static_cast<int>(rng.next_below(3));
  SmallInstance inst;
  inst.r = ResponseMatrix(n, j_count);
  inst.q = BitMatrix(j_count, k);
  inst.a = BitMatrix(n, k);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < j_count; ++j) {
      if (with_missing && rng.bernoulli(0.25))
        inst.r(i, j) = kMissingCell;
      else
        inst.r(i, j) = rng.fair_bit();
    }
  for (int j = 0; j < j_count; ++j)
    for (int c = 0; c < k; ++c) inst.q(j, c) = rng.fair_bit();
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < k; ++c) inst.a(i, c) = rng.fair_bit();
  inst.theta.theta_plus.resize(j_count);
  inst.theta.theta_minus.resize(j_count);
  for (int j = 0; j < j_count; ++j) {
    inst.theta.theta_minus[j] = 0.05 + 0.4 * rng.next_unit();
    inst.theta.theta_plus[j] = 0.55 + 0.4 * rng.next_unit();
  }
  return inst;
}

}  // namespace

TEST_CASE("per-cell log ratios") {
  ResponseMatrix r(1, 3);
  r(0, 0) = 1;
  r(0, 1) = 0;
  r(0, 2) = kMissingCell;
  ItemParamsTwo theta{{0.8, 0.8, 0.8}, {0.2, 0.2, 0.2}};
  RealMatrix lr = response_log_ratios(r, theta);
  CHECK(lr(0, 0) == doctest::Approx(std::log(4.0)));
  CHECK(lr(0, 1) == doctest::Approx(-std::log(4.0)));
  CHECK(lr(0, 2) == 0.0);
}

TEST_CASE("attribute conditional, single cell posterior") {
  ResponseMatrix r(1, 1);
  r(0, 0) = 1;
  BitMatrix q(1, 1), a(1, 1);
  q(0, 0) = 1;
  ItemParamsTwo theta{{0.8}, {0.2}};
  RealMatrix lr = response_log_ratios(r, theta);
  double p = sigmoid(gibbs_logodds_attr(q, a, lr, 0, 0));
  CHECK(p == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("attribute conditional with no loading items is one half") {
  ResponseMatrix r(2, 2);
  BitMatrix q(2, 2), a(2, 2);
  q(0, 0) = q(1, 0) = 1;  // nothing loads on attribute 1
  ItemParamsTwo theta{{0.8, 0.7}, {0.2, 0.3}};
  RealMatrix lr = response_log_ratios(r, theta);
  CHECK(sigmoid(gibbs_logodds_attr(q, a, lr, 0, 1)) == doctest::Approx(0.5));
}

TEST_CASE("attribute conditional: missing co-attribute zeroes the item term") {
  ResponseMatrix r(1, 1);
  r(0, 0) = 1;
  BitMatrix q(1, 2), a(1, 2);
  q(0, 0) = q(0, 1) = 1;
  a(0, 1) = 0;  // second attribute absent, eta factor vanishes
  ItemParamsTwo theta{{0.8}, {0.2}};
  RealMatrix lr = response_log_ratios(r, theta);
  CHECK(gibbs_logodds_attr(q, a, lr, 0, 0) == 0.0);
}

TEST_CASE("loading conditional, two-subject posterior") {
  ResponseMatrix r(2, 1);
  r(0, 0) = 1;
  r(1, 0) = 0;
  BitMatrix q(1, 1), a(2, 1);
  a(0, 0) = 1;
  a(1, 0) = 0;
  ItemParamsTwo theta{{0.8}, {0.2}};
  RealMatrix lr = response_log_ratios(r, theta);
  double p = sigmoid(gibbs_logodds_load(q, a, lr, 0, 0));
  CHECK(p == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("loading conditional with universal mastery is one half") {
  ResponseMatrix r(3, 1);
  r(0, 0) = r(1, 0) = 1;
  r(2, 0) = 0;
  BitMatrix q(1, 1), a(3, 1);
  for (int i = 0; i < 3; ++i) a(i, 0) = 1;
  ItemParamsTwo theta{{0.8}, {0.2}};
  RealMatrix lr = response_log_ratios(r, theta);
  CHECK(sigmoid(gibbs_logodds_load(q, a, lr, 0, 0)) == doctest::Approx(0.5));
}

TEST_CASE("conditionals match exhaustive bit-flip enumeration") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    SmallInstance inst = random_instance(seed, seed % 3 == 0);
    RealMatrix lr = response_log_ratios(inst.r, inst.theta);
    for (int i = 0; i < inst.a.rows(); ++i)
      for (int k = 0; k < inst.a.cols(); ++k) {
        double impl = sigmoid(gibbs_logodds_attr(inst.q, inst.a, lr, i, k));
        double oracle =
            exact_conditional_attr(inst.r, inst.q, inst.a, inst.theta, i, k);
        REQUIRE(std::abs(impl - oracle) < 1e-10);
        ++checked;
      }
    for (int j = 0; j < inst.q.rows(); ++j)
      for (int k = 0; k < inst.q.cols(); ++k) {
        double impl = sigmoid(gibbs_logodds_load(inst.q, inst.a, lr, j, k));
        double oracle =
            exact_conditional_load(inst.r, inst.q, inst.a, inst.theta, j, k);
        REQUIRE(std::abs(impl - oracle) < 1e-10);
        ++checked;
      }
  }
  CHECK(checked > 1000);
}

TEST_CASE("theta update equals brute-force group means under a hard weight matrix") {
  for (std::uint64_t seed = 500; seed < 540; ++seed) {
    SmallInstance inst = random_instance(seed, seed % 2 == 0);
    const int n = inst.r.rows(), j_count = inst.r.cols();
    BitMatrix xi = ideal_response_matrix(inst.q, inst.a);
    RealMatrix weights(n, j_count);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < j_count; ++j) weights(i, j) = xi(i, j);

    ItemParamsTwo raw = m_step_theta(inst.r, weights, /*smooth=*/false);
    ItemParamsTwo smoothed = m_step_theta(inst.r, weights, /*smooth=*/true);
    for (int j = 0; j < j_count; ++j) {
      long long n1 = 0, ones1 = 0, n0 = 0, ones0 = 0;
      for (int i = 0; i < n; ++i) {
        if (!inst.r.observed(i, j)) continue;
        if (xi(i, j)) {
          ++n1;
          ones1 += inst.r(i, j);
        } else {
          ++n0;
          ones0 += inst.r(i, j);
        }
      }
      if (n1 > 0)
        CHECK(std::abs(raw.theta_plus[j] - static_cast<double>(ones1) / n1) <
              1e-12);
      else
        CHECK(std::isnan(raw.theta_plus[j]));
      if (n0 > 0)
        CHECK(std::abs(raw.theta_minus[j] - static_cast<double>(ones0) / n0) <
              1e-12);
      else
        CHECK(std::isnan(raw.theta_minus[j]));

      double tp = clamp_prob((ones1 + 0.5) / (n1 + 1.0));
      double tm = clamp_prob((ones0 + 0.5) / (n0 + 1.0));
      if (tp <= tm) {
        tm = std::min(tm, 1.0 - 2.0 * kProbClamp);
        tp = tm + kProbClamp;
      }
      CHECK(std::abs(smoothed.theta_plus[j] - tp) < 1e-12);
      CHECK(std::abs(smoothed.theta_minus[j] - tm) < 1e-12);
    }
  }
}

TEST_CASE("warm start at the truth on noiseless data is a fixed point") {
  const int n = 120, j_count = 48, k = 3;
  BitMatrix q_true = q_blocks(j_count, k);
  BitMatrix a_true = sample_attributes(n, k, 21);
  ItemParamsTwo gen;
  gen.theta_plus.assign(j_count, 1.0);
  gen.theta_minus.assign(j_count, 0.0);
  ResponseMatrix r =
      simulate_responses(q_true, a_true, gen, ModelKind::Dina, 0.0, 21);

  FitConfig cfg;
  cfg.init = InitKind::Warm;
  cfg.init_q = &q_true;
  cfg.init_a = &a_true;
  cfg.init_theta_plus = 0.9;
  cfg.init_theta_minus = 0.1;
  cfg.seed = 4;
  FitResult res = adg_em_fit(r, k, cfg);
  CHECK(res.converged);
  CHECK(res.q == q_true);
  CHECK(res.a == a_true);
  CHECK(res.theta.theta_plus[0] > 0.99);
  CHECK(res.theta.theta_minus[0] < 0.01);
  // flips against the warm start stay at zero from the first iteration
  for (const auto& row : res.trace) CHECK(row.q_flips == 0);
}

TEST_CASE("first iteration average equals the plain Gibbs average") {
  SimConfig sc;
  sc.n = 60;
  sc.j = 24;
  sc.k = 3;
  sc.seed = 17;
  SimData data = simulate(sc);
  FitConfig cfg;
  cfg.max_iter = 1;
  cfg.gibbs_samples = 5;
  cfg.seed = 17;
  FitResult res = adg_em_fit(data.r, sc.k, cfg);
  for (int i = 0; i < res.a_ave.rows(); ++i)
    for (int c = 0; c < res.a_ave.cols(); ++c) {
      double v = res.a_ave(i, c) * cfg.gibbs_samples;
      CHECK(std::abs(v - std::round(v)) < 1e-12);
    }
  CHECK_FALSE(res.converged);
}

TEST_CASE("stochastic-approximation variant: first iterate equals fresh values") {
  SimConfig sc;
  sc.n = 50;
  sc.j = 24;
  sc.k = 3;
  sc.seed = 3;
  SimData data = simulate(sc);
  FitConfig cfg;
  cfg.algorithm = Algorithm::AdgSaem;
  cfg.max_iter = 1;
  cfg.seed = 3;
  FitResult res = adg_saem_fit(data.r, sc.k, cfg);
  BitMatrix xi = ideal_response_matrix(res.q, res.a);
  RealMatrix weights(xi.rows(), xi.cols());
  for (int i = 0; i < xi.rows(); ++i)
    for (int j = 0; j < xi.cols(); ++j) weights(i, j) = xi(i, j);
  ItemParamsTwo fresh = m_step_theta(data.r, weights, /*smooth=*/true);
  for (int j = 0; j < sc.j; ++j) {
    CHECK(res.theta.theta_plus[j] == doctest::Approx(fresh.theta_plus[j]));
    CHECK(res.theta.theta_minus[j] == doctest::Approx(fresh.theta_minus[j]));
  }
}

TEST_CASE("seeded determinism, independent of threading") {
  SimConfig sc;
  sc.n = 150;
  sc.j = 60;
  sc.k = 3;
  sc.noise = 0.2;
  sc.seed = 31;
  SimData data = simulate(sc);
  for (Algorithm algo : {Algorithm::AdgEm, Algorithm::AdgSaem}) {
    FitConfig cfg;
    cfg.algorithm = algo;
    cfg.max_iter = 8;
    cfg.seed = 11;
    cfg.threads = 1;
    FitResult a = fit(data.r, sc.k, cfg);
    FitResult b = fit(data.r, sc.k, cfg);
    cfg.threads = 4;
    FitResult c = fit(data.r, sc.k, cfg);
    CHECK(a.q == b.q);
    CHECK(a.a == b.a);
    CHECK(a.q == c.q);
    CHECK(a.a == c.a);
    for (int j = 0; j < sc.j; ++j) {
      CHECK(a.theta.theta_plus[j] == c.theta.theta_plus[j]);
      CHECK(a.theta.theta_minus[j] == c.theta.theta_minus[j]);
    }
    REQUIRE(a.trace.size() == c.trace.size());
    for (std::size_t t = 0; t < a.trace.size(); ++t)
      CHECK(a.trace[t].q_flips == c.trace[t].q_flips);
  }
}

TEST_CASE("anchored rows never move") {
  SimConfig sc;
  sc.n = 200;
  sc.j = 48;
  sc.k = 3;
  sc.seed = 13;
  SimData data = simulate(sc);
  FitConfig cfg;
  cfg.seed = 5;
  cfg.max_iter = 15;
  for (int k = 0; k < sc.k; ++k) {
    std::vector<std::uint8_t> row(sc.k, 0);
    row[k] = 1;
    cfg.anchors.emplace_back(k, row);
  }
  FitResult res = adg_em_fit(data.r, sc.k, cfg);
  for (int k = 0; k < sc.k; ++k)
    for (int c = 0; c < sc.k; ++c) CHECK(res.q(k, c) == (c == k ? 1 : 0));
}

TEST_CASE("desk-scale recovery from a random start") {
  SimConfig sc;
  sc.n = 300;
  sc.j = 300;
  sc.k = 3;
  sc.noise = 0.2;
  sc.seed = 2024;
  SimData data = simulate(sc);
  FitConfig cfg;
  cfg.seed = 2024;
  cfg.threads = hardware_threads();
  cfg.max_iter = 250;  // theta keeps settling long after Q stabilizes
  FitResult res = adg_em_fit(data.r, sc.k, cfg);
  CHECK(res.converged);
  EvalReport rep = accuracy_report(res.q, res.a, data.q, data.a);
  CHECK(rep.q_exact);
  CHECK(rep.a_entry_acc > 0.995);

  // hard-iterate objective does not decrease over the stable tail
  int tail = cfg.stable_iters;
  REQUIRE(static_cast<int>(res.trace.size()) > tail);
  for (std::size_t t = res.trace.size() - tail; t < res.trace.size(); ++t)
    CHECK(res.trace[t].objective >= res.trace[t - 1].objective - 1e-9);
}

TEST_CASE("stochastic-approximation variant recovers at desk scale") {
  SimConfig sc;
  sc.n = 400;
  sc.j = 240;
  sc.k = 3;
  sc.noise = 0.2;
  sc.seed = 77;
  SimData data = simulate(sc);
  FitConfig cfg;
  cfg.algorithm = Algorithm::AdgSaem;
  cfg.seed = 77;
  cfg.threads = hardware_threads();
  FitResult res = adg_saem_fit(data.r, sc.k, cfg);
  EvalReport rep = accuracy_report(res.q, res.a, data.q, data.a);
  CHECK(rep.q_entry_acc >= 0.9985);
  CHECK(rep.a_entry_acc > 0.995);
}

TEST_CASE("missing cells are ignored everywhere") {
  SimConfig sc;
  sc.n = 400;
  sc.j = 240;
  sc.k = 3;
  sc.noise = 0.2;
  sc.missing_rate = 0.4;
  sc.seed = 55;
  SimData data = simulate(sc);
  REQUIRE(data.r.has_missing());
  FitConfig cfg;
  cfg.seed = 56;
  cfg.threads = hardware_threads();
  FitResult res = adg_em_fit(data.r, sc.k, cfg);
  EvalReport rep = accuracy_report(res.q, res.a, data.q, data.a);
  CHECK(rep.q_entry_acc > 0.99);
  CHECK(rep.a_entry_acc > 0.97);
}

TEST_CASE("non-convergence at max_iter returns the best iterate with a flag") {
  SimConfig sc;
  sc.n = 80;
  sc.j = 24;
  sc.k = 3;
  sc.seed = 8;
  SimData data = simulate(sc);
  FitConfig cfg;
  cfg.max_iter = 2;
  cfg.seed = 8;
  FitResult res = adg_em_fit(data.r, sc.k, cfg);
  CHECK_FALSE(res.converged);
  CHECK(res.iterations == 2);
  CHECK(res.q.rows() == sc.j);
}

TEST_CASE("cluster warm start lands inside the basin at small J") {
  SimConfig sc;
  sc.n = 1000;
  sc.j = 100;
  sc.k = 7;
  sc.noise = 0.2;
  sc.seed = 6;
  SimData data = simulate(sc);
  auto [q0, a0] = cluster_warm_start(data.r, sc.k);
  // start already agrees with the truth far better than chance
  EvalReport start = accuracy_report(q0, a0, data.q, data.a);
  CHECK(start.a_entry_acc > 0.85);
  FitConfig cfg;
  cfg.seed = 6;
  cfg.threads = hardware_threads();
  cfg.max_iter = 60;
  cfg.init = InitKind::Warm;
  cfg.init_q = &q0;
  cfg.init_a = &a0;
  cfg.multi_start = 4;
  FitResult res = adg_em_fit(data.r, sc.k, cfg);
  EvalReport rep = accuracy_report(res.q, res.a, data.q, data.a);
  CHECK(rep.q_exact);
  CHECK(rep.a_entry_acc > 0.97);
}

TEST_CASE("fit configuration validation") {
  ResponseMatrix r(10, 10);
  FitConfig cfg;
  cfg.gibbs_samples = 0;
  CHECK_THROWS_AS(adg_em_fit(r, 2, cfg), ConfigError);
  FitConfig warm;
  warm.init = InitKind::Warm;
  CHECK_THROWS_AS(adg_em_fit(r, 2, warm), ConfigError);
  FitConfig anchor_bad;
  anchor_bad.anchors.emplace_back(99, std::vector<std::uint8_t>(2, 0));
  CHECK_THROWS_AS(adg_em_fit(r, 2, anchor_bad), ConfigError);
}
