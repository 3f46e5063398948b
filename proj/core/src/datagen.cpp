#include "slam/datagen.hpp"

#include <bit>
#include <string>

#include "slam/rng.hpp"

namespace slam {

void SimConfig::validate() const {
  if (n < 1 || j < 1 || k < 1) throw ConfigError("SimConfig: need n, j, k >= 1");
  if (!(noise >= 0.0 && noise < 0.5))
    throw ConfigError("SimConfig: need 0 <= noise < 0.5");
  if (!(theta_lo < theta_hi))
    throw ConfigError("SimConfig: need theta_lo < theta_hi");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0))
    throw ConfigError("SimConfig: need 0 <= missing_rate < 1");
  switch (design) {
    case QDesign::Blocks:
      if (k < 3) throw ConfigError("block design needs k >= 3");
      if (j < 4 * k)
        throw ConfigError("block design needs j >= 4k = " +
                          std::to_string(4 * k));
      break;
    case QDesign::Example3:
      if (k < 3) throw ConfigError("example3 design needs k >= 3");
      if (j % 4 != 0) throw ConfigError("example3 design needs 4 | j");
      break;
    case QDesign::SingleAttr:
      if (j < k)
        throw ConfigError("single-attribute design needs j >= k so every "
                          "attribute is measured");
      break;
  }
}

namespace {

// Two-attribute cyclic block: q_{k,k} = 1, q_{k,k+1} = 1 (k < K), q_{K,1} = 1.
BitMatrix block_two(int k) {
  BitMatrix b(k, k);
  for (int r = 0; r < k; ++r) {
    b(r, r) = 1;
    b(r, (r + 1) % k) = 1;
  }
  return b;
}

// Three-attribute cyclic block: the two-attribute block plus q_{k,k+2} = 1
// (k <= K-2), q_{K-1,1} = 1, q_{K,2} = 1.
BitMatrix block_three(int k) {
  BitMatrix b = block_two(k);
  for (int r = 0; r < k; ++r) b(r, (r + 2) % k) = 1;
  return b;
}

void stack_rows(BitMatrix& dst, int& next_row, const BitMatrix& block) {
  for (int r = 0; r < block.rows(); ++r, ++next_row)
    for (int c = 0; c < block.cols(); ++c) dst(next_row, c) = block(r, c);
}

}  // namespace

BitMatrix q_blocks(int j, int k) {
  if (k < 3) throw ConfigError("q_blocks: need k >= 3");
  if (j % (4 * k) != 0)
    throw ConfigError("q_blocks: need 4k | j; smallest valid j >= " +
                      std::to_string(j) + " is " +
                      std::to_string(((j + 4 * k - 1) / (4 * k)) * 4 * k));
  BitMatrix q(j, k);
  BitMatrix eye(k, k);
  for (int r = 0; r < k; ++r) eye(r, r) = 1;
  BitMatrix b2 = block_two(k);
  BitMatrix b3 = block_three(k);
  int row = 0;
  for (int c = 0; c < j / (2 * k); ++c) stack_rows(q, row, eye);
  for (int c = 0; c < j / (4 * k); ++c) stack_rows(q, row, b2);
  for (int c = 0; c < j / (4 * k); ++c) stack_rows(q, row, b3);
  return q;
}

BitMatrix q_blocks_padded(int j, int k) {
  if (j % (4 * k) == 0) return q_blocks(j, k);
  if (k < 3) throw ConfigError("q_blocks_padded: need k >= 3");
  if (j < 4 * k) throw ConfigError("q_blocks_padded: need j >= 4k");
  BitMatrix q(j, k);
  BitMatrix eye(k, k);
  for (int r = 0; r < k; ++r) eye(r, r) = 1;
  BitMatrix b2 = block_two(k);
  BitMatrix b3 = block_three(k);
  int copies = j / (4 * k);
  int identity_rows = j - 2 * copies * k;
  int row = 0;
  for (int c = 0; c < identity_rows / k; ++c) stack_rows(q, row, eye);
  for (int c = 0; c < identity_rows % k; ++c, ++row) q(row, c) = 1;
  for (int c = 0; c < copies; ++c) stack_rows(q, row, b2);
  for (int c = 0; c < copies; ++c) stack_rows(q, row, b3);
  return q;
}

BitMatrix q_example3(int j, int k) {
  if (k < 3) throw ConfigError("q_example3: need k >= 3");
  if (j % 4 != 0) throw ConfigError("q_example3: need 4 | j");
  BitMatrix q(j, k);
  int row = 0;
  for (int c = 0; c < j / 2; ++c, ++row) q(row, c % k) = 1;
  for (int c = 0; c < j / 4; ++c, ++row) {
    q(row, c % k) = 1;
    q(row, (c + 1) % k) = 1;
  }
  for (int c = 0; c < j / 4; ++c, ++row) {
    q(row, c % k) = 1;
    q(row, (c + 1) % k) = 1;
    q(row, (c + 2) % k) = 1;
  }
  return q;
}

BitMatrix q_single_attr(int j, int k) {
  if (k < 1) throw ConfigError("q_single_attr: need k >= 1");
  BitMatrix q(j, k);
  for (int r = 0; r < j; ++r) q(r, r % k) = 1;
  return q;
}

BitMatrix sample_attributes(int n, int k, std::uint64_t seed) {
  BitMatrix a(n, k);
  for (int i = 0; i < n; ++i) {
    CounterRng rng = substream(seed, kPhaseGenAttr, 0, static_cast<std::uint64_t>(i));
    for (int c = 0; c < k; ++c) a(i, c) = rng.fair_bit();
  }
  return a;
}

ItemParamsMulti multi_params(const BitMatrix& q, ParamRegime regime,
                             double theta_lo, double theta_hi) {
  if (!(theta_lo < theta_hi))
    throw ConfigError("multi_params: need theta_lo < theta_hi");
  if (q.cols() > 30) throw ConfigError("multi_params: k > 30 unsupported");
  ItemParamsMulti params;
  params.attr_count = q.cols();
  params.items.resize(q.rows());
  const double gap = theta_hi - theta_lo;
  for (int j = 0; j < q.rows(); ++j) {
    ItemMulti& item = params.items[j];
    item.link = Link::Identity;
    for (int c = 0; c < q.cols(); ++c)
      if (q(j, c)) item.active_mask |= 1u << c;
    item.coeffs.emplace_back(0u, theta_lo);
    std::uint32_t full = item.active_mask;
    if (full == 0) continue;  // constant-theta item
    int size = std::popcount(full);
    if (size == 1) {
      item.coeffs.emplace_back(full, gap);
      continue;
    }
    std::uint32_t n_nonempty = (1u << size) - 1;
    // enumerate nonempty subsets of the active mask
    for (std::uint32_t s = full; s != 0; s = (s - 1) & full) {
      double mu;
      if (regime == ParamRegime::Weak) {
        mu = gap / n_nonempty;
      } else {
        mu = s == full ? gap / 2.0 : gap / 2.0 / (n_nonempty - 1);
      }
      item.coeffs.emplace_back(s, mu);
    }
  }
  return params;
}

namespace {

template <typename ProbFn>
ResponseMatrix simulate_impl(int n, int j, ProbFn&& prob, double missing_rate,
                             std::uint64_t seed) {
  if (!(missing_rate >= 0.0 && missing_rate < 1.0))
    throw ConfigError("simulate_responses: need 0 <= missing_rate < 1");
  ResponseMatrix r(n, j);
  for (int i = 0; i < n; ++i) {
    CounterRng rng = substream(seed, kPhaseGenResp, 0, static_cast<std::uint64_t>(i));
    for (int c = 0; c < j; ++c)
      r(i, c) = rng.bernoulli(prob(i, c)) ? 1 : 0;
  }
  if (missing_rate > 0.0) {
    for (int i = 0; i < n; ++i) {
      CounterRng rng = substream(seed, kPhaseGenMiss, 0, static_cast<std::uint64_t>(i));
      for (int c = 0; c < j; ++c)
        if (rng.bernoulli(missing_rate)) r(i, c) = kMissingCell;
    }
  }
  return r;
}

}  // namespace

ResponseMatrix simulate_responses(const BitMatrix& q, const BitMatrix& a,
                                  const ItemParamsTwo& theta, ModelKind model,
                                  double missing_rate, std::uint64_t seed) {
  if (q.cols() != a.cols())
    throw DimensionError("simulate_responses: attribute count mismatch");
  if (theta.items() != q.rows())
    throw DimensionError("simulate_responses: theta length != item count");
  const std::size_t k = static_cast<std::size_t>(q.cols());
  return simulate_impl(
      a.rows(), q.rows(),
      [&](int i, int j) {
        return success_prob_two(model, BitSpan(a.row(i), k), BitSpan(q.row(j), k),
                                theta.theta_plus[j], theta.theta_minus[j]);
      },
      missing_rate, seed);
}

ResponseMatrix simulate_responses(const BitMatrix& q, const BitMatrix& a,
                                  const ItemParamsMulti& params,
                                  double missing_rate, std::uint64_t seed) {
  if (q.cols() != a.cols())
    throw DimensionError("simulate_responses: attribute count mismatch");
  if (static_cast<int>(params.items.size()) != q.rows())
    throw DimensionError("simulate_responses: params length != item count");
  const std::size_t k = static_cast<std::size_t>(q.cols());
  return simulate_impl(
      a.rows(), q.rows(),
      [&](int i, int j) {
        return success_prob_multi(BitSpan(a.row(i), k), BitSpan(q.row(j), k),
                                  params.items[j]);
      },
      missing_rate, seed);
}

SimData simulate(const SimConfig& cfg) {
  cfg.validate();
  SimData out;
  out.model = cfg.model;
  switch (cfg.design) {
    case QDesign::Blocks: out.q = q_blocks_padded(cfg.j, cfg.k); break;
    case QDesign::Example3: out.q = q_example3(cfg.j, cfg.k); break;
    case QDesign::SingleAttr: out.q = q_single_attr(cfg.j, cfg.k); break;
  }
  out.a = sample_attributes(cfg.n, cfg.k, cfg.seed);
  switch (cfg.model) {
    case SimModel::Dina:
    case SimModel::Dino: {
      out.theta_two.theta_plus.assign(cfg.j, 1.0 - cfg.noise);
      out.theta_two.theta_minus.assign(cfg.j, cfg.noise);
      ModelKind kind = cfg.model == SimModel::Dina ? ModelKind::Dina : ModelKind::Dino;
      out.r = simulate_responses(out.q, out.a, out.theta_two, kind,
                                 cfg.missing_rate, cfg.seed);
      break;
    }
    case SimModel::MultiWeak:
    case SimModel::MultiStrong: {
      ParamRegime regime = cfg.model == SimModel::MultiWeak ? ParamRegime::Weak
                                                            : ParamRegime::Strong;
      out.theta_multi = multi_params(out.q, regime, cfg.theta_lo, cfg.theta_hi);
      out.r = simulate_responses(out.q, out.a, out.theta_multi, cfg.missing_rate,
                                 cfg.seed);
      break;
    }
  }
  return out;
}

}  // namespace slam
