#pragma once

#include <limits>
#include <vector>

#include "slam/model.hpp"
#include "slam/types.hpp"

namespace slam {

struct EvalReport {
  std::vector<int> perm;  // perm[k] = estimated column matched to true column k
  bool q_exact = false;
  double q_row_acc = 0.0;
  double q_entry_acc = 0.0;
  bool a_exact = false;
  double a_row_acc = 0.0;
  double a_entry_acc = 0.0;
  double recon_err = std::numeric_limits<double>::quiet_NaN();  // optional
  double bic = std::numeric_limits<double>::quiet_NaN();        // optional
};

// Minimum-cost assignment on a square integer cost matrix; returns the total
// cost and fills row_to_col.
long long solve_assignment(const std::vector<std::vector<long long>>& cost,
                           std::vector<int>& row_to_col);

// Column permutation maximizing total entry agreement between the estimated
// and true attribute matrices; among optimal permutations, returns the
// lexicographically smallest (as the sequence perm[0..K-1]).
std::vector<int> align_columns(const BitMatrix& a_hat, const BitMatrix& a_true);

BitMatrix permute_columns(const BitMatrix& m, const std::vector<int>& perm);

// Aligns on A, applies the same permutation to Q-hat, and fills the six
// exact/row/entry agreement fields.
EvalReport accuracy_report(const BitMatrix& q_hat, const BitMatrix& a_hat,
                           const BitMatrix& q_true, const BitMatrix& a_true);

// Cell (i,j) = 1 iff theta_plus*xi + theta_minus*(1-xi) > 1/2 under the
// estimated two-parameter model.
BitMatrix reconstruct(const BitMatrix& q_hat, const BitMatrix& a_hat,
                      const ItemParamsTwo& theta_hat);

// Fraction of cells where the reconstruction disagrees with the ideal
// response matrix.
double recon_error(const BitMatrix& reconstructed, const BitMatrix& ideal);

double bernoulli_kl(double p, double q);

struct TwoParamApprox {
  RealMatrix p2;                       // per-cell two-group approximation
  std::vector<std::uint8_t> branch_ok;  // per item: both branches nonempty
};

// Group-mean two-parameter approximation of an arbitrary probability table,
// split by whether the profile masters item j's required attributes.
TwoParamApprox two_param_approx(const BitMatrix& q, const BitMatrix& a,
                                const RealMatrix& p_true);

// Per-item total KL divergence from p_true to the approximation; NaN for
// items whose split leaves a branch empty.
std::vector<double> kl_objective(const RealMatrix& p_true,
                                 const TwoParamApprox& approx);

}  // namespace slam
