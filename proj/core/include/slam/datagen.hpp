#pragma once

#include <cstdint>

#include "slam/model.hpp"
#include "slam/types.hpp"

namespace slam {

enum class SimModel { Dina, Dino, MultiWeak, MultiStrong };
enum class QDesign { Blocks, Example3, SingleAttr };
enum class ParamRegime { Weak, Strong };

struct SimConfig {
  int n = 1000;
  int j = 1000;
  int k = 7;
  SimModel model = SimModel::Dina;
  QDesign design = QDesign::Blocks;
  double noise = 0.2;        // two-parameter: 1 - theta_plus = theta_minus
  double theta_lo = 0.2;     // multi-parameter: theta at the all-zero profile
  double theta_hi = 0.8;     // multi-parameter: theta at the all-one profile
  double missing_rate = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

// Block design: J/(2K) identity blocks, J/(4K) two-attribute cyclic blocks,
// J/(4K) three-attribute cyclic blocks.  Requires K >= 3 and 4K | J.
BitMatrix q_blocks(int j, int k);

// Block design for J not divisible by 4K: floor(J/(4K)) copies of each
// cyclic block, the rest identity rows (whole copies plus leading unit
// rows).  Equals q_blocks when 4K | J.  Requires K >= 3 and J >= 4K.
BitMatrix q_blocks_padded(int j, int k);

// Half single-attribute, quarter two-attribute, quarter three-attribute
// rows, cyclic over the K attributes.  Requires K >= 3 and 4 | J.
BitMatrix q_example3(int j, int k);

// Every item measures exactly one attribute, cycling over the K attributes.
// Shape-compatible stand-in for provisional assessment Q-matrices.
BitMatrix q_single_attr(int j, int k);

// i.i.d. fair attribute bits; deterministic per-row substreams.
BitMatrix sample_attributes(int n, int k, std::uint64_t seed);

// Identity-link coefficient maps with theta(all-zero) = theta_lo and
// theta(all-one) = theta_hi exactly.  Weak: every nonempty subset of the
// active set shares (hi-lo)/(2^s - 1).  Strong: the full active set gets
// (hi-lo)/2 and every proper nonempty subset shares the remaining half.
// Single-attribute items reduce to the two-parameter form in both regimes.
ItemParamsMulti multi_params(const BitMatrix& q, ParamRegime regime,
                             double theta_lo, double theta_hi);

// Cell-independent Bernoulli responses followed by MCAR masking.
// Generation permits theta in {0, 1} (noiseless sanity datasets).
ResponseMatrix simulate_responses(const BitMatrix& q, const BitMatrix& a,
                                  const ItemParamsTwo& theta, ModelKind model,
                                  double missing_rate, std::uint64_t seed);
ResponseMatrix simulate_responses(const BitMatrix& q, const BitMatrix& a,
                                  const ItemParamsMulti& params,
                                  double missing_rate, std::uint64_t seed);

struct SimData {
  BitMatrix q;
  BitMatrix a;
  ResponseMatrix r;
  ItemParamsTwo theta_two;      // filled for Dina/Dino
  ItemParamsMulti theta_multi;  // filled for MultiWeak/MultiStrong
  SimModel model = SimModel::Dina;
};

SimData simulate(const SimConfig& cfg);

}  // namespace slam
