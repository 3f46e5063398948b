#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "slam/model.hpp"
#include "slam/rng.hpp"

using namespace slam;

namespace {

std::vector<std::uint8_t> bits(std::initializer_list<int> vals) {
  std::vector<std::uint8_t> out;
  for (int v : vals) out.push_back(static_cast<std::uint8_t>(v));
  return out;
}

std::vector<std::uint8_t> bits_from_mask(std::uint32_t mask, int k) {
  std::vector<std::uint8_t> out(k);
  for (int i = 0; i < k; ++i) out[i] = (mask >> i) & 1u;
  return out;
}

}  // namespace

TEST_CASE("conjunctive ideal response") {
  CHECK(ideal_response_dina(bits({1, 1, 0}), bits({1, 1, 0})) == 1);
  CHECK(ideal_response_dina(bits({1, 0, 0}), bits({1, 1, 0})) == 0);
  // empty product convention
  CHECK(ideal_response_dina(bits({0, 0, 0}), bits({0, 0, 0})) == 1);
  CHECK_THROWS_AS(ideal_response_dina(bits({1}), bits({1, 0})), DimensionError);
}

TEST_CASE("disjunctive ideal response") {
  CHECK(ideal_response_dino(bits({1, 0, 0}), bits({1, 1, 0})) == 1);
  CHECK(ideal_response_dino(bits({0, 0, 1}), bits({1, 1, 0})) == 0);
  // all-zero q: nothing can trigger the "or"
  CHECK(ideal_response_dino(bits({1, 1}), bits({0, 0})) == 0);
  CHECK_THROWS_AS(ideal_response_dino(bits({1}), bits({1, 0})), DimensionError);
}

TEST_CASE("all-zero q row under the conjunctive rule is constant theta_plus") {
  auto q = bits({0, 0, 0});
  for (std::uint32_t m = 0; m < 8; ++m) {
    auto a = bits_from_mask(m, 3);
    CHECK(ideal_response_dina(a, q) == 1);
    CHECK(success_prob_two(ModelKind::Dina, a, q, 0.8, 0.2) == 0.8);
  }
}

TEST_CASE("multi-parameter success probabilities") {
  // single active attribute: intercept 0.2, main effect 0.6
  ItemMulti item;
  item.active_mask = 0b01;
  item.coeffs = {{0u, 0.2}, {0b01u, 0.6}};
  CHECK(success_prob_multi(bits({1, 0}), bits({1, 0}), item) == doctest::Approx(0.8));
  CHECK(success_prob_multi(bits({0, 1}), bits({1, 0}), item) == doctest::Approx(0.2));

  // all-zero profile leaves only the intercept
  ItemMulti pair;
  pair.active_mask = 0b11;
  pair.coeffs = {{0u, 0.2}, {0b01u, 0.2}, {0b10u, 0.2}, {0b11u, 0.2}};
  CHECK(success_prob_multi(bits({0, 0}), bits({1, 1}), pair) == doctest::Approx(0.2));
  // both attributes: 0.2 + 0.2 + 0.2 + 0.2
  CHECK(success_prob_multi(bits({1, 1}), bits({1, 1}), pair) == doctest::Approx(0.8));

  ItemMulti bad;
  bad.active_mask = 0b01;
  bad.coeffs = {{0u, 0.7}, {0b01u, 0.7}};
  CHECK_THROWS_AS(success_prob_multi(bits({1}), bits({1}), bad), ParameterError);
}

TEST_CASE("multi model with only intercept and top coefficient is two-parameter") {
  const int k = 3;
  ItemMulti item;
  item.active_mask = 0b111;
  item.coeffs = {{0u, 0.15}, {0b111u, 0.7}};
  auto q = bits({1, 1, 1});
  for (std::uint32_t m = 0; m < 8; ++m) {
    auto a = bits_from_mask(m, k);
    double expected = ideal_response_dina(a, q) ? 0.85 : 0.15;
    CHECK(success_prob_multi(a, q, item) == doctest::Approx(expected));
  }
}

TEST_CASE("joint log-likelihood") {
  SUBCASE("single observed cell") {
    ResponseMatrix r(1, 1);
    r(0, 0) = 1;
    BitMatrix q(1, 1), a(1, 1);
    q(0, 0) = 1;
    a(0, 0) = 1;
    ItemParamsTwo theta{{0.8}, {0.2}};
    CHECK(joint_loglik(r, q, a, theta, ModelKind::Dina) ==
          doctest::Approx(std::log(0.8)));
  }
  SUBCASE("single missing cell contributes nothing") {
    ResponseMatrix r(1, 1);
    r(0, 0) = kMissingCell;
    BitMatrix q(1, 1), a(1, 1);
    ItemParamsTwo theta{{0.8}, {0.2}};
    CHECK(joint_loglik(r, q, a, theta, ModelKind::Dina) == 0.0);
  }
  SUBCASE("two subjects, hand-summed") {
    ResponseMatrix r(2, 1);
    r(0, 0) = 1;
    r(1, 0) = 0;
    BitMatrix q(1, 1), a(2, 1);
    q(0, 0) = 1;
    a(0, 0) = 1;
    a(1, 0) = 0;
    ItemParamsTwo theta{{0.8}, {0.2}};
    CHECK(joint_loglik(r, q, a, theta, ModelKind::Dina) ==
          doctest::Approx(2.0 * std::log(0.8)));
  }
}

TEST_CASE("joint log-likelihood invariant under simultaneous column permutation") {
  const int n = 20, j_count = 10, k = 4;
  CounterRng rng = substream(7, 99, 0, 0);
  BitMatrix q(j_count, k), a(n, k);
  ResponseMatrix r(n, j_count);
  for (int j = 0; j < j_count; ++j)
    for (int c = 0; c < k; ++c) q(j, c) = rng.fair_bit();
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < k; ++c) a(i, c) = rng.fair_bit();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < j_count; ++j) r(i, j) = rng.fair_bit();

  ItemParamsMulti params;
  params.attr_count = k;
  params.items.resize(j_count);
  for (int j = 0; j < j_count; ++j) {
    ItemMulti& item = params.items[j];
    std::uint32_t full = 0;
    for (int c = 0; c < k; ++c)
      if (q(j, c)) full |= 1u << c;
    item.active_mask = full;
    item.coeffs.emplace_back(0u, 0.2);
    int count = 1;
    for (std::uint32_t s = full; s != 0; s = (s - 1) & full)
      item.coeffs.emplace_back(s, 0.4 / (count++ + 3.0));
  }

  std::vector<int> perm = {2, 0, 3, 1};
  BitMatrix qp(j_count, k), ap(n, k);
  for (int j = 0; j < j_count; ++j)
    for (int c = 0; c < k; ++c) qp(j, c) = q(j, perm[c]);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < k; ++c) ap(i, c) = a(i, perm[c]);
  ItemParamsMulti pp = params;
  for (auto& item : pp.items) {
    auto remap = [&](std::uint32_t mask) {
      std::uint32_t out = 0;
      for (int c = 0; c < k; ++c)
        if ((mask >> perm[c]) & 1u) out |= 1u << c;
      return out;
    };
    item.active_mask = remap(item.active_mask);
    for (auto& [s, mu] : item.coeffs) s = remap(s);
  }

  ItemParamsTwo theta;
  theta.theta_plus.assign(j_count, 0.75);
  theta.theta_minus.assign(j_count, 0.3);
  CHECK(joint_loglik(r, q, a, theta, ModelKind::Dina) ==
        doctest::Approx(joint_loglik(r, qp, ap, theta, ModelKind::Dina)));
  CHECK(joint_loglik(r, q, a, params) ==
        doctest::Approx(joint_loglik(r, qp, ap, pp)));
}

TEST_CASE("conjunctive/disjunctive duality") {
  SUBCASE("spec instantiation") {
    double p = dino_prob_via_duality(bits({0, 1}), bits({1, 1}), 0.8, 0.2);
    auto a_flip = bits({1, 0});
    double dina = success_prob_two(ModelKind::Dina, a_flip, bits({1, 1}), 0.8, 0.2);
    CHECK(p == doctest::Approx(1.0 - dina));
  }
  SUBCASE("exhaustive over K <= 4 with asymmetric parameters") {
    for (int k = 1; k <= 4; ++k) {
      for (std::uint32_t qm = 0; qm < (1u << k); ++qm) {
        auto q = bits_from_mask(qm, k);
        for (std::uint32_t am = 0; am < (1u << k); ++am) {
          auto a = bits_from_mask(am, k);
          double direct = success_prob_two(ModelKind::Dino, a, q, 0.9, 0.3);
          double via = dino_prob_via_duality(a, q, 0.9, 0.3);
          CHECK(std::abs(direct - via) < 1e-12);
          if (qm != 0) {
            std::vector<std::uint8_t> flip(a);
            for (auto& b : flip) b ^= 1;
            CHECK(ideal_response_dino(a, q) == 1 - ideal_response_dina(flip, q));
          }
        }
      }
    }
  }
  SUBCASE("all-ones profile hits the all-attributes value") {
    auto a = bits({1, 1, 1});
    CHECK(dino_prob_via_duality(a, bits({0, 1, 1}), 0.9, 0.3) ==
          doctest::Approx(0.9));
  }
}

TEST_CASE("probability clamp bounds") {
  CHECK(clamp_prob(0.0) == kProbClamp);
  CHECK(clamp_prob(1.0) == 1.0 - kProbClamp);
  CHECK(clamp_prob(0.5) == 0.5);
}

TEST_CASE("two-parameter validation") {
  ItemParamsTwo good{{0.8, 0.9}, {0.2, 0.1}};
  CHECK_NOTHROW(good.validate());
  ItemParamsTwo swapped{{0.2}, {0.8}};
  CHECK_THROWS_AS(swapped.validate(), ParameterError);
  ItemParamsTwo boundary{{1.0}, {0.2}};
  CHECK_THROWS_AS(boundary.validate(), ParameterError);
}
