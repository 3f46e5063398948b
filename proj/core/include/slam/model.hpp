#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "slam/types.hpp"

namespace slam {

enum class ModelKind { Dina, Dino, Multi };
enum class Link { Identity, Logistic };

// Per-item (theta_plus, theta_minus) pairs for the two-parameter models.
struct ItemParamsTwo {
  std::vector<double> theta_plus;
  std::vector<double> theta_minus;

  int items() const { return static_cast<int>(theta_plus.size()); }

  // Enforces kProbClamp <= theta_minus < theta_plus <= 1 - kProbClamp.
  void validate() const;
};

// One item's coefficient map for the multi-parameter model.  Subsets of
// attributes are bitmasks over the K attribute positions; mask 0 is the
// intercept.  Coefficients exist only for subsets of active_mask.
struct ItemMulti {
  Link link = Link::Identity;
  std::uint32_t active_mask = 0;
  std::vector<std::pair<std::uint32_t, double>> coeffs;
};

struct ItemParamsMulti {
  int attr_count = 0;
  std::vector<ItemMulti> items;
};

using BitSpan = std::span<const std::uint8_t>;

// Conjunctive rule: 1 iff a_k = 1 for every k with q_k = 1.  The empty
// product convention (0^0 = 1) makes all-zero q rows return 1.
int ideal_response_dina(BitSpan a, BitSpan q);

// Disjunctive rule: 1 iff a_k = q_k = 1 for some k.  All-zero q returns 0.
int ideal_response_dino(BitSpan a, BitSpan q);

double sigmoid(double x);

double success_prob_two(ModelKind model, BitSpan a, BitSpan q,
                        double theta_plus, double theta_minus);

// Eq.-(3)-style linear predictor over subsets of attributes measured and
// mastered, passed through the item's link.  An identity-link value outside
// [0, 1] raises ParameterError.
double success_prob_multi(BitSpan a, BitSpan q, const ItemMulti& item);

// DINO success probability computed through the DINA complement identity
// (profile complemented, parameter roles exchanged).  Checks the identity
// against the direct evaluation and returns the duality-route value.
double dino_prob_via_duality(BitSpan a, BitSpan q, double theta_plus,
                             double theta_minus);

// Joint log-likelihood over observed cells; probabilities clamped before log.
double joint_loglik(const ResponseMatrix& r, const BitMatrix& q,
                    const BitMatrix& a, const ItemParamsTwo& theta,
                    ModelKind model);
double joint_loglik(const ResponseMatrix& r, const BitMatrix& q,
                    const BitMatrix& a, const ItemParamsMulti& params);

// Noiseless DINA ideal-response matrix for (q, a).
BitMatrix ideal_response_matrix(const BitMatrix& q, const BitMatrix& a);

}  // namespace slam
