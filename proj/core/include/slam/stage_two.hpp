#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "slam/model.hpp"
#include "slam/types.hpp"

namespace slam {

struct MarginalFit {
  double intercept = 0.0;
  double slope = 0.0;
  bool degenerate = false;  // constant predictor
};

// Closed-form two-group logistic MLE for a single binary predictor:
// slope = logit(p1) - logit(p0), intercept = logit(p0), with add-0.5/add-1
// smoothed group means when smooth is set.
MarginalFit marginal_fit(std::span<const std::uint8_t> r,
                         std::span<const std::uint8_t> x, bool smooth = true);

enum class ScreenMode { MainEffect, AllEffects };

// Largest-gap cut: indices of the leading magnitudes down to the largest
// consecutive gap in the descending sort.  Exact across-the-board ties have
// no strict gap and select every index.
std::vector<int> gap_cut(const std::vector<double>& magnitudes);

struct ItemScreen {
  std::vector<double> magnitudes;  // main mode: |slope| per attribute
  std::vector<std::pair<std::uint32_t, double>> effects;  // all-effects mode
  std::vector<int> selected_attrs;                        // main mode
  std::vector<std::uint32_t> candidates;  // nonempty subset masks, ascending
  bool degenerate = false;
};

struct ScreenResult {
  ScreenMode mode = ScreenMode::MainEffect;
  std::vector<ItemScreen> items;
};

// Main-effect screening: K marginal slopes per item against the estimated
// attribute columns; select by the largest-gap rule (all attributes when the
// magnitudes are exactly tied) or by threshold tau, capped at max_active by
// keeping the largest magnitudes.  The candidate family is the power set of
// the selection.
ScreenResult screen_main(const ResponseMatrix& r, const BitMatrix& a_hat,
                         bool gap_rule, double tau, int max_active = 4,
                         int threads = 1);

// All-effect screening: marginal slopes against every interaction column of
// order <= max_order; keep subsets with |slope| > tau, constant columns
// flagged and excluded, union of kept attributes capped at max_active by
// keeping the largest magnitudes.
ScreenResult screen_all_effects(const ResponseMatrix& r, const BitMatrix& a_hat,
                                double tau, int max_order = 3,
                                int max_active = 4, int threads = 1);

struct CdFit {
  double intercept = 0.0;
  std::vector<double> beta;
  bool converged = false;
};

// L1-penalized logistic regression at a single penalty level, coordinate
// descent on the (1/N)-scaled deviance with an unpenalized intercept.
CdFit logistic_lasso_cd(const std::vector<std::vector<std::uint8_t>>& cols,
                        std::span<const std::uint8_t> r, double lambda,
                        const CdFit* warm = nullptr);

// Max KKT residual of the penalized objective at the given fit.
double lasso_kkt_residual(const std::vector<std::vector<std::uint8_t>>& cols,
                          std::span<const std::uint8_t> r, double lambda,
                          const CdFit& fit);

struct LassoPath {
  std::vector<double> lambdas;              // descending
  std::vector<CdFit> fits;                  // full-data fits per level
  std::vector<std::uint8_t> skipped;        // non-converged grid points
  std::vector<double> cv_loss;              // mean held-out deviance per obs
  int chosen = -1;                          // index into lambdas
  std::vector<std::uint32_t> selected;      // nonempty masks with nonzero coef
  bool intercept_only = false;
};

// Path from lambda_max down by lambda_min_ratio over a log-spaced grid, with
// penalty level chosen by stratified k-fold cross validation (ties resolved
// toward the larger penalty).
LassoPath lasso_logistic(std::span<const std::uint8_t> r,
                         const std::vector<std::vector<std::uint8_t>>& cols,
                         const std::vector<std::uint32_t>& col_masks,
                         int folds = 5, int grid_size = 30,
                         double lambda_min_ratio = 1e-3,
                         std::uint64_t seed = 0);

// q2 row = union of the selected subsets; items with empty support keep
// their stage-1 row (flagged).
BitMatrix rebuild_q(const std::vector<std::vector<std::uint32_t>>& supports,
                    const BitMatrix& stage1_q,
                    std::vector<std::uint8_t>* kept_stage1 = nullptr);

struct ClassStat {
  long long n_obs = 0;
  long long ones = 0;
  double raw = std::numeric_limits<double>::quiet_NaN();
  double smoothed = 0.5;
  bool empty = true;
};

struct ItemThetaTable {
  std::uint32_t active_mask = 0;
  std::vector<ClassStat> classes;  // indexed by compressed local profile
};

using ThetaTable = std::vector<ItemThetaTable>;

// Saturated profile MLE: partition subjects by the local class (profile
// masked to the item's active attributes) and take smoothed observed means.
ThetaTable estimate_theta_multi(const ResponseMatrix& r, const BitMatrix& a_hat,
                                const BitMatrix& q_hat);

double multi_loglik(const ResponseMatrix& r, const BitMatrix& a_hat,
                    const BitMatrix& q_hat, const ThetaTable& table);

struct BicReport {
  double loglik_two = 0.0, loglik_multi = 0.0;
  long long k_two = 0, k_multi = 0;
  long long n_obs = 0;
  double bic_two = 0.0, bic_multi = 0.0;
  bool multi_wins = false;
};

// BIC = -2 loglik + k log(n_obs); continuous parameters only; smaller wins,
// ties go to the two-parameter model.
BicReport bic_compare(double loglik_two, long long k_two, double loglik_multi,
                      long long k_multi, long long n_obs);

struct Stage2Config {
  ScreenMode mode = ScreenMode::MainEffect;
  bool gap_rule = true;
  double tau = std::numeric_limits<double>::quiet_NaN();
  int max_active = 4;
  int max_order = 3;
  int folds = 5;
  int grid_size = 30;
  double lambda_min_ratio = 1e-3;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct Stage2Result {
  ScreenResult screen;
  std::vector<LassoPath> paths;
  BitMatrix q2;
  std::vector<std::uint8_t> kept_stage1;
  ThetaTable theta;
  BicReport bic;
};

// Screening -> per-item penalized selection -> Q rebuild -> saturated theta
// re-estimation -> BIC comparison against the stage-1 two-parameter fit.
Stage2Result run_stage_two(const ResponseMatrix& r, const BitMatrix& q1,
                           const BitMatrix& a_hat, const ItemParamsTwo& theta1,
                           const Stage2Config& cfg);

}  // namespace slam
