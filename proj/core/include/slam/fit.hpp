#pragma once

#include <cstdint>
#include <vector>

#include "slam/model.hpp"
#include "slam/types.hpp"

namespace slam {

enum class Algorithm { AdgEm, AdgSaem };
enum class InitKind { Random, Perturb, Warm };

struct FitConfig {
  Algorithm algorithm = Algorithm::AdgEm;
  int gibbs_samples = 5;  // C
  int max_iter = 100;
  int stable_iters = 3;
  double theta_tol = 1e-4;
  InitKind init = InitKind::Random;
  double perturb_rate = 1.0 / 3.0;
  // Base matrices for Perturb (entries flipped with perturb_rate) and Warm
  // (copied as-is).  Ignored for Random.
  const BitMatrix* init_q = nullptr;
  const BitMatrix* init_a = nullptr;
  // Item rows frozen for the whole run (index, K values each).
  std::vector<std::pair<int, std::vector<std::uint8_t>>> anchors;
  double init_theta_plus = 0.8;
  double init_theta_minus = 0.2;
  // Independent attempts run unconditionally with derived seeds (warm and
  // perturbed starts are jittered between attempts); the best attempt wins,
  // stability first, then final objective.
  int multi_start = 1;
  // Extra attempts with derived seeds when a run ends structurally unstable
  // (loading matrix still flipping at max_iter).  Zero disables restarts.
  int max_restarts = 4;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate(int n, int j, int k) const;
};

struct FitTraceRow {
  int iter = 0;
  long long q_flips = 0;
  double objective = 0.0;
  double theta_delta = 0.0;  // max parameter movement this iteration
};

struct FitResult {
  BitMatrix q;
  BitMatrix a;
  RealMatrix a_ave;
  ItemParamsTwo theta;
  std::vector<FitTraceRow> trace;
  bool converged = false;
  // Loading matrix unchanged over the final stable_iters iterations; weaker
  // than `converged`, which additionally requires the theta movement test.
  bool q_stable = false;
  int iterations = 0;
  int restarts_used = 0;
};

// Per-cell log-ratio weights: r*log(tp/tm) + (1-r)*log((1-tp)/(1-tm));
// missing cells get 0 so every downstream sum is restricted to observed
// cells.  Thetas are clamped before the logs.
RealMatrix response_log_ratios(const ResponseMatrix& r, const ItemParamsTwo& theta);

// Exact full conditionals of single entries under the two-parameter joint
// likelihood, as log odds.  For a_{i,k}: sum over items loading on k of the
// partial ideal-response factor times the cell log-ratio.  For q_{j,k}: the
// negated sum over subjects lacking attribute k.
double gibbs_logodds_attr(const BitMatrix& q, const BitMatrix& a,
                          const RealMatrix& log_ratio, int i, int k);
double gibbs_logodds_load(const BitMatrix& q, const BitMatrix& a,
                          const RealMatrix& log_ratio, int j, int k);

// Closed-form theta update given per-cell mastery weights in [0,1]
// (a hard 0/1 weight matrix reduces it to plain group means).  When smooth
// is set, applies add-0.5/add-1 smoothing followed by clamping and the
// theta_plus > theta_minus order fix; otherwise returns the raw ratios with
// NaN for empty groups.
ItemParamsTwo m_step_theta(const ResponseMatrix& r, const RealMatrix& mastery,
                           bool smooth = true);

// Data-driven warm start: items clustered into K groups by response-column
// correlation (subject-space centroids, a few refinement rounds), giving a
// single-attribute initial loading matrix; initial profiles are per-cluster
// majority votes against the cluster's grand mean.  Uses only the observed
// responses.
std::pair<BitMatrix, BitMatrix> cluster_warm_start(const ResponseMatrix& r, int k);

FitResult adg_em_fit(const ResponseMatrix& r, int k, const FitConfig& cfg);
FitResult adg_saem_fit(const ResponseMatrix& r, int k, const FitConfig& cfg);

// Dispatches on cfg.algorithm.
FitResult fit(const ResponseMatrix& r, int k, const FitConfig& cfg);

}  // namespace slam
