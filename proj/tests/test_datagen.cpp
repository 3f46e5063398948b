#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>

#include "slam/datagen.hpp"
#include "slam/model.hpp"

using namespace slam;

namespace {

int row_sum(const BitMatrix& m, int r) {
  int s = 0;
  for (int c = 0; c < m.cols(); ++c) s += m(r, c);
  return s;
}

int count_identity_rows(const BitMatrix& q, int attr) {
  int count = 0;
  for (int r = 0; r < q.rows(); ++r) {
    bool match = true;
    for (int c = 0; c < q.cols(); ++c)
      if (q(r, c) != (c == attr ? 1 : 0)) match = false;
    count += match;
  }
  return count;
}

}  // namespace

TEST_CASE("block design at K=3, J=12") {
  BitMatrix q = q_blocks(12, 3);
  // two identity stacks
  for (int copy = 0; copy < 2; ++copy)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        CHECK(q(copy * 3 + r, c) == (r == c ? 1 : 0));
  // two-attribute block rows
  const int b2[3][3] = {{1, 1, 0}, {0, 1, 1}, {1, 0, 1}};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) CHECK(q(6 + r, c) == b2[r][c]);
  // three-attribute block rows collapse to all-ones at K=3
  for (int r = 9; r < 12; ++r)
    for (int c = 0; c < 3; ++c) CHECK(q(r, c) == 1);
}

TEST_CASE("block design at K=7 starts with two identity stacks") {
  BitMatrix q = q_blocks(28, 7);
  for (int copy = 0; copy < 2; ++copy)
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 7; ++c)
        CHECK(q(copy * 7 + r, c) == (r == c ? 1 : 0));
}

TEST_CASE("block design row sums stay in 1..3") {
  for (int k : {3, 5, 7, 10}) {
    BitMatrix q = q_blocks(8 * k, k);
    for (int r = 0; r < q.rows(); ++r) {
      int s = row_sum(q, r);
      CHECK(s >= 1);
      CHECK(s <= 3);
    }
  }
}

TEST_CASE("block design contains the required identity copies") {
  const int j = 56, k = 7;
  BitMatrix q = q_blocks(j, k);
  for (int attr = 0; attr < k; ++attr)
    CHECK(count_identity_rows(q, attr) >= j / (2 * k));
}

TEST_CASE("block design divisibility error reports the smallest valid J") {
  try {
    q_blocks(100, 7);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("112") != std::string::npos);
  }
}

TEST_CASE("example3 design proportions") {
  BitMatrix q = q_example3(12, 3);
  int singles = 0, doubles = 0, triples = 0;
  for (int r = 0; r < q.rows(); ++r) {
    int s = row_sum(q, r);
    CHECK(s >= 1);
    CHECK(s <= 3);
    singles += s == 1;
    doubles += s == 2;
    triples += s == 3;
  }
  CHECK(singles == 6);
  CHECK(doubles == 3);
  CHECK(triples == 3);

  BitMatrix big = q_example3(1200, 3);
  int s1 = 0, s2 = 0, s3 = 0;
  for (int r = 0; r < big.rows(); ++r) {
    int s = row_sum(big, r);
    s1 += s == 1;
    s2 += s == 2;
    s3 += s == 3;
  }
  CHECK(s1 == 600);
  CHECK(s2 == 300);
  CHECK(s3 == 300);
}

TEST_CASE("single-attribute design covers all attributes") {
  BitMatrix q = q_single_attr(47, 9);
  for (int r = 0; r < q.rows(); ++r) CHECK(row_sum(q, r) == 1);
  for (int attr = 0; attr < 9; ++attr) CHECK(count_identity_rows(q, attr) >= 1);
}

TEST_CASE("attribute sampling is balanced and deterministic") {
  const int n = 100000;
  BitMatrix a = sample_attributes(n, 1, 42);
  double mean = 0;
  for (int i = 0; i < n; ++i) mean += a(i, 0);
  mean /= n;
  CHECK(std::abs(mean - 0.5) < 0.01);

  CHECK(sample_attributes(500, 4, 7) == sample_attributes(500, 4, 7));
  CHECK_FALSE(sample_attributes(500, 4, 7) == sample_attributes(500, 4, 8));
}

TEST_CASE("multi-parameter coefficient construction") {
  BitMatrix q(3, 3);
  q(0, 0) = 1;                          // single attribute
  q(1, 0) = q(1, 1) = 1;                // two attributes
  q(2, 0) = q(2, 1) = q(2, 2) = 1;      // three attributes

  SUBCASE("weak regime shares the gap over all nonempty subsets") {
    ItemParamsMulti p = multi_params(q, ParamRegime::Weak, 0.2, 0.8);
    for (const auto& [s, mu] : p.items[2].coeffs) {
      if (s == 0)
        CHECK(mu == doctest::Approx(0.2));
      else
        CHECK(mu == doctest::Approx(0.6 / 7.0));
    }
    CHECK(p.items[2].coeffs.size() == 8);
  }
  SUBCASE("strong regime puts half the gap on the top interaction") {
    ItemParamsMulti p = multi_params(q, ParamRegime::Strong, 0.2, 0.8);
    int small_count = 0;
    for (const auto& [s, mu] : p.items[2].coeffs) {
      if (s == 0)
        CHECK(mu == doctest::Approx(0.2));
      else if (s == 0b111u)
        CHECK(mu == doctest::Approx(0.3));
      else {
        CHECK(mu == doctest::Approx(0.05));
        ++small_count;
      }
    }
    CHECK(small_count == 6);
  }
  SUBCASE("single-attribute items take the two-parameter form in both regimes") {
    for (ParamRegime regime : {ParamRegime::Weak, ParamRegime::Strong}) {
      ItemParamsMulti p = multi_params(q, regime, 0.2, 0.8);
      REQUIRE(p.items[0].coeffs.size() == 2);
      CHECK(p.items[0].coeffs[0].second == doctest::Approx(0.2));
      CHECK(p.items[0].coeffs[1].second == doctest::Approx(0.6));
    }
  }
  SUBCASE("coefficients telescope to theta_hi at the all-one profile") {
    for (ParamRegime regime : {ParamRegime::Weak, ParamRegime::Strong}) {
      ItemParamsMulti p = multi_params(q, regime, 0.2, 0.8);
      for (int j = 0; j < 3; ++j) {
        double total = 0;
        for (const auto& [s, mu] : p.items[j].coeffs) total += mu;
        CHECK(total == doctest::Approx(0.8));
        std::vector<std::uint8_t> ones(3, 1), zeros(3, 0), qrow(q.row(j), q.row(j) + 3);
        CHECK(success_prob_multi(ones, qrow, p.items[j]) == doctest::Approx(0.8));
        CHECK(success_prob_multi(zeros, qrow, p.items[j]) == doctest::Approx(0.2));
      }
    }
  }
}

TEST_CASE("noiseless responses equal the ideal matrix") {
  BitMatrix q = q_blocks(24, 3);
  BitMatrix a = sample_attributes(60, 3, 5);
  ItemParamsTwo theta;
  theta.theta_plus.assign(24, 1.0);
  theta.theta_minus.assign(24, 0.0);
  ResponseMatrix r = simulate_responses(q, a, theta, ModelKind::Dina, 0.0, 5);
  BitMatrix ideal = ideal_response_matrix(q, a);
  for (int i = 0; i < r.rows(); ++i)
    for (int j = 0; j < r.cols(); ++j) CHECK(r(i, j) == ideal(i, j));
}

TEST_CASE("missing mask hits the requested rate") {
  BitMatrix q = q_blocks(1000, 5);
  BitMatrix a = sample_attributes(1000, 5, 11);
  ItemParamsTwo theta;
  theta.theta_plus.assign(1000, 0.8);
  theta.theta_minus.assign(1000, 0.2);
  ResponseMatrix r = simulate_responses(q, a, theta, ModelKind::Dina, 0.5, 11);
  double observed = static_cast<double>(r.n_observed()) / (1000.0 * 1000.0);
  CHECK(std::abs(observed - 0.5) < 0.01);
}

TEST_CASE("empirical positive rate among masters matches theta_plus") {
  const int n = 2000, j_count = 40, k = 5;
  BitMatrix q = q_blocks(j_count, k);
  BitMatrix a = sample_attributes(n, k, 3);
  ItemParamsTwo theta;
  theta.theta_plus.assign(j_count, 0.8);
  theta.theta_minus.assign(j_count, 0.2);
  ResponseMatrix r = simulate_responses(q, a, theta, ModelKind::Dina, 0.0, 3);
  BitMatrix ideal = ideal_response_matrix(q, a);
  long long ones = 0, cells = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < j_count; ++j)
      if (ideal(i, j)) {
        ones += r(i, j);
        ++cells;
      }
  double mean = static_cast<double>(ones) / cells;
  double sigma = std::sqrt(0.8 * 0.2 / cells);
  CHECK(std::abs(mean - 0.8) < 3.0 * sigma);
}

TEST_CASE("generators are pure functions of config and seed") {
  SimConfig cfg;
  cfg.n = 200;
  cfg.j = 120;
  cfg.k = 3;
  cfg.model = SimModel::MultiWeak;
  cfg.missing_rate = 0.3;
  cfg.seed = 99;
  SimData d1 = simulate(cfg);
  SimData d2 = simulate(cfg);
  CHECK(d1.q == d2.q);
  CHECK(d1.a == d2.a);
  CHECK(d1.r == d2.r);
}

TEST_CASE("padded block design fills odd item counts") {
  // equals the exact design whenever 4k divides j
  CHECK(q_blocks_padded(56, 7) == q_blocks(56, 7));
  // paper-table size that does not divide evenly
  BitMatrix q = q_blocks_padded(1000, 7);
  CHECK(q.rows() == 1000);
  int singles = 0, doubles = 0, triples = 0;
  for (int r = 0; r < q.rows(); ++r) {
    int s = row_sum(q, r);
    REQUIRE(s >= 1);
    REQUIRE(s <= 3);
    singles += s == 1;
    doubles += s == 2;
    triples += s == 3;
  }
  CHECK(doubles == 35 * 7);
  CHECK(triples == 35 * 7);
  CHECK(singles == 1000 - 70 * 7);
  for (int attr = 0; attr < 7; ++attr)
    CHECK(count_identity_rows(q, attr) >= 1000 / 14);
  CHECK_THROWS_AS(q_blocks_padded(20, 7), ConfigError);
}

TEST_CASE("config validation") {
  SimConfig cfg;
  cfg.j = 20;
  cfg.k = 7;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // fewer rows than one stack
  cfg.j = 100;
  CHECK_NOTHROW(cfg.validate());  // padded block arrangement
  cfg.design = QDesign::Example3;
  CHECK_NOTHROW(cfg.validate());
  cfg.noise = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
