#include "slam/fit.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "slam/parallel.hpp"
#include "slam/rng.hpp"

namespace slam {

void FitConfig::validate(int n, int j, int k) const {
  if (k < 1 || k > 32) throw ConfigError("FitConfig: need 1 <= k <= 32");
  if (gibbs_samples < 1 || gibbs_samples > 64)
    throw ConfigError("FitConfig: need 1 <= gibbs_samples <= 64");
  if (max_iter < 1) throw ConfigError("FitConfig: need max_iter >= 1");
  if (stable_iters < 1) throw ConfigError("FitConfig: need stable_iters >= 1");
  if (theta_tol <= 0) throw ConfigError("FitConfig: need theta_tol > 0");
  if (max_restarts < 0) throw ConfigError("FitConfig: need max_restarts >= 0");
  if (multi_start < 1) throw ConfigError("FitConfig: need multi_start >= 1");
  if (init != InitKind::Random) {
    if (init_q == nullptr || init_a == nullptr)
      throw ConfigError("FitConfig: perturb/warm init needs base matrices");
    if (init_q->rows() != j || init_q->cols() != k)
      throw DimensionError("FitConfig: init_q shape mismatch");
    if (init_a->rows() != n || init_a->cols() != k)
      throw DimensionError("FitConfig: init_a shape mismatch");
  }
  if (init == InitKind::Perturb && !(perturb_rate >= 0.0 && perturb_rate <= 1.0))
    throw ConfigError("FitConfig: need 0 <= perturb_rate <= 1");
  for (const auto& [row, values] : anchors) {
    if (row < 0 || row >= j) throw ConfigError("FitConfig: anchor row out of range");
    if (static_cast<int>(values.size()) != k)
      throw DimensionError("FitConfig: anchor row length != k");
  }
  if (!(init_theta_minus > 0 && init_theta_plus < 1 &&
        init_theta_minus < init_theta_plus))
    throw ConfigError("FitConfig: need 0 < init_theta_minus < init_theta_plus < 1");
}

RealMatrix response_log_ratios(const ResponseMatrix& r, const ItemParamsTwo& theta) {
  if (theta.items() != r.cols())
    throw DimensionError("response_log_ratios: theta length != item count");
  const int n = r.rows(), j_count = r.cols();
  std::vector<double> pos(j_count), neg(j_count);
  for (int j = 0; j < j_count; ++j) {
    double tp = clamp_prob(theta.theta_plus[j]);
    double tm = clamp_prob(theta.theta_minus[j]);
    pos[j] = std::log(tp / tm);
    neg[j] = std::log((1.0 - tp) / (1.0 - tm));
  }
  RealMatrix out(n, j_count);
  for (int i = 0; i < n; ++i) {
    const std::uint8_t* ri = r.row(i);
    double* oi = out.row(i);
    for (int j = 0; j < j_count; ++j) {
      if (ri[j] == kMissingCell)
        oi[j] = 0.0;
      else
        oi[j] = ri[j] ? pos[j] : neg[j];
    }
  }
  return out;
}

namespace {

// Partial ideal response of subject i for item j, skipping attribute k:
// prod over active m != k of a_{i,m}.
inline bool eta_skip(const std::uint8_t* a_row, const int* active, int n_active,
                     int skip) {
  for (int t = 0; t < n_active; ++t) {
    int m = active[t];
    if (m != skip && !a_row[m]) return false;
  }
  return true;
}

// Log odds of a_{i,k} = 1 given everything else: sum over items loading on
// attribute k of eta * log_ratio.  `items` lists those item indices with
// their active-attribute lists; `lr_row` is the subject's log-ratio row.
inline double attr_logodds_core(const std::uint8_t* a_row, const double* lr_row,
                                const std::vector<int>& items,
                                const std::vector<std::vector<int>>& active_attrs,
                                int k) {
  double acc = 0.0;
  for (int j : items) {
    const auto& act = active_attrs[j];
    if (eta_skip(a_row, act.data(), static_cast<int>(act.size()), k))
      acc += lr_row[j];
  }
  return acc;
}

// Log odds of q_{j,k} = 1 given everything else: minus the sum over subjects
// without attribute k of eta * log_ratio.  `lr_col` is the item's log-ratio
// values laid out per subject.
inline double load_logodds_core(const BitMatrix& a, const double* lr_col,
                                const int* active, int n_active, int k) {
  double acc = 0.0;
  const int n = a.rows();
  for (int i = 0; i < n; ++i) {
    const std::uint8_t* a_row = a.row(i);
    if (a_row[k]) continue;
    if (eta_skip(a_row, active, n_active, k)) acc -= lr_col[i];
  }
  return acc;
}

std::vector<std::vector<int>> active_attr_lists(const BitMatrix& q) {
  std::vector<std::vector<int>> lists(q.rows());
  for (int j = 0; j < q.rows(); ++j)
    for (int k = 0; k < q.cols(); ++k)
      if (q(j, k)) lists[j].push_back(k);
  return lists;
}

std::vector<std::vector<int>> items_by_attr(const BitMatrix& q) {
  std::vector<std::vector<int>> lists(q.cols());
  for (int j = 0; j < q.rows(); ++j)
    for (int k = 0; k < q.cols(); ++k)
      if (q(j, k)) lists[k].push_back(j);
  return lists;
}

RealMatrix transpose(const RealMatrix& m) {
  RealMatrix out(m.cols(), m.rows());
  for (int i = 0; i < m.rows(); ++i) {
    const double* mi = m.row(i);
    for (int j = 0; j < m.cols(); ++j) out(j, i) = mi[j];
  }
  return out;
}

// One theta pair from per-subject mastery weights; shared by the public
// m_step_theta and the fit loop so the update has a single code path.
inline void theta_from_weights(const ResponseMatrix& r, int j, const double* w,
                               bool smooth, double& tp, double& tm) {
  double num_p = 0.0, den_p = 0.0, num_m = 0.0, den_m = 0.0;
  const int n = r.rows();
  for (int i = 0; i < n; ++i) {
    std::uint8_t rv = r(i, j);
    if (rv == kMissingCell) continue;
    double wi = w[i];
    den_p += wi;
    den_m += 1.0 - wi;
    if (rv) {
      num_p += wi;
      num_m += 1.0 - wi;
    }
  }
  if (smooth) {
    tp = (num_p + 0.5) / (den_p + 1.0);
    tm = (num_m + 0.5) / (den_m + 1.0);
    tp = clamp_prob(tp);
    tm = clamp_prob(tm);
    if (tp <= tm) {
      tm = std::min(tm, 1.0 - 2.0 * kProbClamp);
      tp = tm + kProbClamp;
    }
  } else {
    tp = den_p > 0 ? num_p / den_p : std::numeric_limits<double>::quiet_NaN();
    tm = den_m > 0 ? num_m / den_m : std::numeric_limits<double>::quiet_NaN();
  }
}

struct FitWorkspace {
  BitMatrix q, a;
  RealMatrix a_ave;
  ItemParamsTwo theta;
  std::vector<std::uint8_t> frozen;  // per item
};

FitWorkspace init_state(const ResponseMatrix& r, int k, const FitConfig& cfg) {
  const int n = r.rows(), j_count = r.cols();
  FitWorkspace ws;
  ws.q = BitMatrix(j_count, k);
  ws.a = BitMatrix(n, k);
  ws.a_ave = RealMatrix(n, k, 0.0);
  ws.frozen.assign(j_count, 0);
  switch (cfg.init) {
    case InitKind::Random:
      for (int j = 0; j < j_count; ++j) {
        CounterRng rng = substream(cfg.seed, kPhaseInitQ, 0, j);
        for (int c = 0; c < k; ++c) ws.q(j, c) = rng.fair_bit();
      }
      for (int i = 0; i < n; ++i) {
        CounterRng rng = substream(cfg.seed, kPhaseInitA, 0, i);
        for (int c = 0; c < k; ++c) ws.a(i, c) = rng.fair_bit();
      }
      break;
    case InitKind::Perturb:
      ws.q = *cfg.init_q;
      ws.a = *cfg.init_a;
      for (int j = 0; j < j_count; ++j) {
        CounterRng rng = substream(cfg.seed, kPhasePerturbQ, 0, j);
        for (int c = 0; c < k; ++c)
          if (rng.bernoulli(cfg.perturb_rate)) ws.q(j, c) ^= 1;
      }
      for (int i = 0; i < n; ++i) {
        CounterRng rng = substream(cfg.seed, kPhasePerturbA, 0, i);
        for (int c = 0; c < k; ++c)
          if (rng.bernoulli(cfg.perturb_rate)) ws.a(i, c) ^= 1;
      }
      break;
    case InitKind::Warm:
      ws.q = *cfg.init_q;
      ws.a = *cfg.init_a;
      break;
  }
  for (const auto& [row, values] : cfg.anchors) {
    ws.frozen[row] = 1;
    for (int c = 0; c < k; ++c) ws.q(row, c) = values[c];
  }
  ws.theta.theta_plus.assign(j_count, cfg.init_theta_plus);
  ws.theta.theta_minus.assign(j_count, cfg.init_theta_minus);
  return ws;
}

// C Gibbs sweeps over the attribute matrix; each full sweep is accumulated
// into a_sum.  Rows run in parallel, attributes left to right within a row.
void gibbs_sweeps_a(FitWorkspace& ws, const RealMatrix& lr, int c_samples,
                    int iter, const FitConfig& cfg, std::vector<int>& a_sum) {
  const int n = ws.a.rows(), k = ws.a.cols();
  auto active = active_attr_lists(ws.q);
  auto items = items_by_attr(ws.q);
  for (int c = 0; c < c_samples; ++c) {
    std::uint64_t ctx = static_cast<std::uint64_t>(iter) * 64 + c;
    parallel_for(n, cfg.threads, [&](int begin, int end) {
      for (int i = begin; i < end; ++i) {
        CounterRng rng = substream(cfg.seed, kPhaseSweepA, ctx, i);
        std::uint8_t* a_row = ws.a.row(i);
        const double* lr_row = lr.row(i);
        for (int kk = 0; kk < k; ++kk) {
          double logodds = attr_logodds_core(a_row, lr_row, items[kk], active, kk);
          a_row[kk] = rng.bernoulli(sigmoid(logodds)) ? 1 : 0;
        }
        int* sum_row = a_sum.data() + static_cast<std::size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) sum_row[kk] += a_row[kk];
      }
    });
  }
}

// C Gibbs sweeps over the loading matrix, accumulated into q_sum.  Anchored
// rows are never resampled; their frozen values accumulate unchanged.
void gibbs_sweeps_q(FitWorkspace& ws, const RealMatrix& lr_t, int c_samples,
                    int iter, const FitConfig& cfg, std::vector<int>& q_sum) {
  const int j_count = ws.q.rows(), k = ws.q.cols();
  for (int c = 0; c < c_samples; ++c) {
    std::uint64_t ctx = static_cast<std::uint64_t>(iter) * 64 + c;
    parallel_for(j_count, cfg.threads, [&](int begin, int end) {
      int act[32];
      for (int j = begin; j < end; ++j) {
        std::uint8_t* q_row = ws.q.row(j);
        if (!ws.frozen[j]) {
          CounterRng rng = substream(cfg.seed, kPhaseSweepQ, ctx, j);
          const double* lr_col = lr_t.row(j);
          for (int kk = 0; kk < k; ++kk) {
            int n_act = 0;
            for (int m = 0; m < k; ++m)
              if (m != kk && q_row[m]) act[n_act++] = m;
            double logodds = load_logodds_core(ws.a, lr_col, act, n_act, kk);
            q_row[kk] = rng.bernoulli(sigmoid(logodds)) ? 1 : 0;
          }
        }
        int* sum_row = q_sum.data() + static_cast<std::size_t>(j) * k;
        for (int kk = 0; kk < k; ++kk) sum_row[kk] += q_row[kk];
      }
    });
  }
}

// Strict majority vote: ties at exactly C/2 map to 0.
BitMatrix hard_from_counts(const std::vector<int>& counts, int rows, int cols,
                           int c_samples) {
  BitMatrix out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      out(i, j) = 2 * counts[static_cast<std::size_t>(i) * cols + j] > c_samples ? 1 : 0;
  return out;
}

void m_step_from_ave(const ResponseMatrix& r, const BitMatrix& q,
                     const RealMatrix& a_ave, const FitConfig& cfg,
                     ItemParamsTwo& theta) {
  const int n = r.rows(), j_count = r.cols();
  auto active = active_attr_lists(q);
  parallel_for(j_count, cfg.threads, [&](int begin, int end) {
    std::vector<double> w(n);
    for (int j = begin; j < end; ++j) {
      const auto& act = active[j];
      for (int i = 0; i < n; ++i) {
        double prod = 1.0;
        const double* ai = a_ave.row(i);
        for (int m : act) prod *= ai[m];
        w[i] = prod;
      }
      theta_from_weights(r, j, w.data(), /*smooth=*/true, theta.theta_plus[j],
                         theta.theta_minus[j]);
    }
  });
}

double max_theta_delta(const ItemParamsTwo& a, const ItemParamsTwo& b) {
  double d = 0.0;
  for (int j = 0; j < a.items(); ++j) {
    d = std::max(d, std::abs(a.theta_plus[j] - b.theta_plus[j]));
    d = std::max(d, std::abs(a.theta_minus[j] - b.theta_minus[j]));
  }
  return d;
}

}  // namespace

double gibbs_logodds_attr(const BitMatrix& q, const BitMatrix& a,
                          const RealMatrix& log_ratio, int i, int k) {
  if (q.cols() != a.cols()) throw DimensionError("gibbs_logodds_attr: k mismatch");
  auto active = active_attr_lists(q);
  auto items = items_by_attr(q);
  return attr_logodds_core(a.row(i), log_ratio.row(i), items[k], active, k);
}

double gibbs_logodds_load(const BitMatrix& q, const BitMatrix& a,
                          const RealMatrix& log_ratio, int j, int k) {
  if (q.cols() != a.cols()) throw DimensionError("gibbs_logodds_load: k mismatch");
  int act[32];
  int n_act = 0;
  for (int m = 0; m < q.cols(); ++m)
    if (m != k && q(j, m)) act[n_act++] = m;
  std::vector<double> lr_col(a.rows());
  for (int i = 0; i < a.rows(); ++i) lr_col[i] = log_ratio(i, j);
  return load_logodds_core(a, lr_col.data(), act, n_act, k);
}

ItemParamsTwo m_step_theta(const ResponseMatrix& r, const RealMatrix& mastery,
                           bool smooth) {
  if (mastery.rows() != r.rows() || mastery.cols() != r.cols())
    throw DimensionError("m_step_theta: weight shape mismatch");
  ItemParamsTwo theta;
  theta.theta_plus.resize(r.cols());
  theta.theta_minus.resize(r.cols());
  std::vector<double> w(r.rows());
  for (int j = 0; j < r.cols(); ++j) {
    for (int i = 0; i < r.rows(); ++i) w[i] = mastery(i, j);
    theta_from_weights(r, j, w.data(), smooth, theta.theta_plus[j],
                       theta.theta_minus[j]);
  }
  return theta;
}

std::pair<BitMatrix, BitMatrix> cluster_warm_start(const ResponseMatrix& r, int k) {
  const int n = r.rows(), j_count = r.cols();
  if (k < 1 || k > j_count)
    throw ConfigError("cluster_warm_start: need 1 <= k <= item count");
  // Work on a subject subsample for the clustering phase; evenly spaced rows
  // keep it deterministic.
  const int ns = std::min(n, 500);
  std::vector<int> subj(ns);
  for (int t = 0; t < ns; ++t)
    subj[t] = static_cast<int>(static_cast<long long>(t) * n / ns);

  // Centered response columns on the subsample (missing -> 0 contribution).
  std::vector<std::vector<double>> col(j_count, std::vector<double>(ns, 0.0));
  std::vector<double> norm(j_count, 0.0);
  for (int j = 0; j < j_count; ++j) {
    double mean = 0.0;
    int cnt = 0;
    for (int t = 0; t < ns; ++t) {
      std::uint8_t v = r(subj[t], j);
      if (v == kMissingCell) continue;
      mean += v;
      ++cnt;
    }
    mean = cnt > 0 ? mean / cnt : 0.0;
    double ss = 0.0;
    for (int t = 0; t < ns; ++t) {
      std::uint8_t v = r(subj[t], j);
      col[j][t] = v == kMissingCell ? 0.0 : v - mean;
      ss += col[j][t] * col[j][t];
    }
    norm[j] = std::sqrt(ss);
    if (norm[j] > 0)
      for (double& x : col[j]) x /= norm[j];
  }
  auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (int t = 0; t < ns; ++t) s += a[t] * b[t];
    return s;
  };

  // Farthest-first seeds over an evenly spaced candidate set.
  const int n_cand = std::min(j_count, std::max(4 * k, 32));
  std::vector<int> cand(n_cand);
  for (int t = 0; t < n_cand; ++t)
    cand[t] = static_cast<int>(static_cast<long long>(t) * j_count / n_cand);
  std::vector<int> seeds;
  seeds.push_back(cand[0]);
  while (static_cast<int>(seeds.size()) < k) {
    int best = -1;
    double best_min = -2.0;
    for (int c : cand) {
      double worst = 2.0;
      for (int s : seeds) worst = std::min(worst, 1.0 - dot(col[c], col[s]));
      if (worst > best_min) {
        best_min = worst;
        best = c;
      }
    }
    seeds.push_back(best);
  }

  // Assign to the most correlated centroid, then refine centroids in
  // subject space.
  std::vector<int> cluster(j_count, 0);
  std::vector<std::vector<double>> centroid(k);
  for (int c = 0; c < k; ++c) centroid[c] = col[seeds[c]];
  for (int round = 0; round < 6; ++round) {
    for (int j = 0; j < j_count; ++j) {
      int best = 0;
      double best_corr = -2.0;
      for (int c = 0; c < k; ++c) {
        double corr = dot(col[j], centroid[c]);
        if (corr > best_corr) {
          best_corr = corr;
          best = c;
        }
      }
      cluster[j] = best;
    }
    for (int c = 0; c < k; ++c) {
      std::vector<double> acc(ns, 0.0);
      int members = 0;
      for (int j = 0; j < j_count; ++j)
        if (cluster[j] == c) {
          for (int t = 0; t < ns; ++t) acc[t] += col[j][t];
          ++members;
        }
      if (members == 0) continue;  // keep the previous centroid
      double ss = 0.0;
      for (double x : acc) ss += x * x;
      if (ss > 0)
        for (double& x : acc) x /= std::sqrt(ss);
      centroid[c] = std::move(acc);
    }
  }

  BitMatrix q0(j_count, k);
  for (int j = 0; j < j_count; ++j) q0(j, cluster[j]) = 1;

  // Profiles: per-cluster majority vote over the full sample against the
  // cluster's grand mean.
  std::vector<double> grand(k, 0.0);
  std::vector<long long> grand_n(k, 0);
  for (int j = 0; j < j_count; ++j)
    for (int i = 0; i < n; ++i) {
      std::uint8_t v = r(i, j);
      if (v == kMissingCell) continue;
      grand[cluster[j]] += v;
      ++grand_n[cluster[j]];
    }
  for (int c = 0; c < k; ++c) grand[c] = grand_n[c] > 0 ? grand[c] / grand_n[c] : 0.5;

  BitMatrix a0(n, k);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) {
      double mean = 0.0;
      int cnt = 0;
      for (int j = 0; j < j_count; ++j) {
        if (cluster[j] != c) continue;
        std::uint8_t v = r(i, j);
        if (v == kMissingCell) continue;
        mean += v;
        ++cnt;
      }
      a0(i, c) = cnt > 0 && mean / cnt > grand[c] ? 1 : 0;
    }
  }
  return {std::move(q0), std::move(a0)};
}

FitResult adg_em_once(const ResponseMatrix& r, int k, const FitConfig& cfg) {
  cfg.validate(r.rows(), r.cols(), k);
  const int n = r.rows(), j_count = r.cols(), c_samples = cfg.gibbs_samples;
  FitWorkspace ws = init_state(r, k, cfg);

  FitResult res;
  int stable = 0;
  for (int t = 1; t <= cfg.max_iter; ++t) {
    RealMatrix lr = response_log_ratios(r, ws.theta);

    std::vector<int> a_sum(static_cast<std::size_t>(n) * k, 0);
    gibbs_sweeps_a(ws, lr, c_samples, t, cfg, a_sum);
    double w_old = 1.0 - 1.0 / t, w_new = 1.0 / (t * static_cast<double>(c_samples));
    for (int i = 0; i < n; ++i) {
      double* ave = ws.a_ave.row(i);
      const int* sum_row = a_sum.data() + static_cast<std::size_t>(i) * k;
      for (int kk = 0; kk < k; ++kk) ave[kk] = w_old * ave[kk] + w_new * sum_row[kk];
    }

    RealMatrix lr_t = transpose(lr);
    std::vector<int> q_sum(static_cast<std::size_t>(j_count) * k, 0);
    gibbs_sweeps_q(ws, lr_t, c_samples, t, cfg, q_sum);
    BitMatrix q_new = hard_from_counts(q_sum, j_count, k, c_samples);
    for (int j = 0; j < j_count; ++j)
      if (ws.frozen[j]) std::memcpy(q_new.row(j), ws.q.row(j), k);
    long long flips = q_new.count_diff(ws.q);
    ws.q = std::move(q_new);

    ItemParamsTwo theta_prev = ws.theta;
    m_step_from_ave(r, ws.q, ws.a_ave, cfg, ws.theta);
    double theta_delta = max_theta_delta(ws.theta, theta_prev);

    double objective =
        joint_loglik(r, ws.q, threshold_half(ws.a_ave), ws.theta, ModelKind::Dina);
    res.trace.push_back({t, flips, objective, theta_delta});
    res.iterations = t;

    stable = flips == 0 ? stable + 1 : 0;
    if (stable >= cfg.stable_iters && theta_delta < cfg.theta_tol) {
      res.converged = true;
      break;
    }
  }

  res.q_stable = stable >= cfg.stable_iters;
  res.q = std::move(ws.q);
  res.a = threshold_half(ws.a_ave);
  res.a_ave = std::move(ws.a_ave);
  res.theta = std::move(ws.theta);
  return res;
}

FitResult adg_saem_once(const ResponseMatrix& r, int k, const FitConfig& cfg) {
  cfg.validate(r.rows(), r.cols(), k);
  const int n = r.rows(), j_count = r.cols(), c_samples = cfg.gibbs_samples;
  FitWorkspace ws = init_state(r, k, cfg);
  RealMatrix q_ave(j_count, k, 0.0);
  ItemParamsTwo theta_ave = ws.theta;

  FitResult res;
  int stable = 0;
  for (int t = 1; t <= cfg.max_iter; ++t) {
    RealMatrix lr = response_log_ratios(r, theta_ave);

    std::vector<int> a_sum(static_cast<std::size_t>(n) * k, 0);
    gibbs_sweeps_a(ws, lr, c_samples, t, cfg, a_sum);
    RealMatrix lr_t = transpose(lr);
    std::vector<int> q_sum(static_cast<std::size_t>(j_count) * k, 0);
    gibbs_sweeps_q(ws, lr_t, c_samples, t, cfg, q_sum);

    double w_old = 1.0 - 1.0 / t, w_new = 1.0 / (t * static_cast<double>(c_samples));
    for (int i = 0; i < n; ++i) {
      double* ave = ws.a_ave.row(i);
      const int* sum_row = a_sum.data() + static_cast<std::size_t>(i) * k;
      for (int kk = 0; kk < k; ++kk) ave[kk] = w_old * ave[kk] + w_new * sum_row[kk];
    }
    ws.a = threshold_half(ws.a_ave);
    for (int j = 0; j < j_count; ++j) {
      double* ave = q_ave.row(j);
      const int* sum_row = q_sum.data() + static_cast<std::size_t>(j) * k;
      for (int kk = 0; kk < k; ++kk) ave[kk] = w_old * ave[kk] + w_new * sum_row[kk];
    }
    BitMatrix q_new = threshold_half(q_ave);
    for (int j = 0; j < j_count; ++j)
      if (ws.frozen[j]) {
        std::memcpy(q_new.row(j), ws.q.row(j), k);
        for (int kk = 0; kk < k; ++kk) q_ave(j, kk) = ws.q(j, kk);
      }
    long long flips = q_new.count_diff(ws.q);
    ws.q = std::move(q_new);

    // Fresh theta from the hard iterates, then Robbins-Monro averaging.
    BitMatrix hard_ideal = ideal_response_matrix(ws.q, ws.a);
    RealMatrix mastery(n, j_count);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < j_count; ++j) mastery(i, j) = hard_ideal(i, j);
    ItemParamsTwo theta_new = m_step_theta(r, mastery, /*smooth=*/true);
    ItemParamsTwo theta_prev = theta_ave;
    for (int j = 0; j < j_count; ++j) {
      theta_ave.theta_plus[j] =
          theta_new.theta_plus[j] / t + w_old * theta_ave.theta_plus[j];
      theta_ave.theta_minus[j] =
          theta_new.theta_minus[j] / t + w_old * theta_ave.theta_minus[j];
    }
    double theta_delta = max_theta_delta(theta_ave, theta_prev);

    double objective = joint_loglik(r, ws.q, ws.a, theta_ave, ModelKind::Dina);
    res.trace.push_back({t, flips, objective, theta_delta});
    res.iterations = t;

    stable = flips == 0 ? stable + 1 : 0;
    if (stable >= cfg.stable_iters && theta_delta < cfg.theta_tol) {
      res.converged = true;
      break;
    }
  }

  res.q_stable = stable >= cfg.stable_iters;
  res.q = std::move(ws.q);
  res.a = threshold_half(ws.a_ave);
  res.a_ave = std::move(ws.a_ave);
  res.theta = std::move(theta_ave);
  return res;
}

namespace {

// Multiple attempts guard against bad basins: the chains occasionally freeze
// into an entangled-column configuration, either wandering forever (caught
// by the stability flag) or settling on a worse optimum (caught by comparing
// final objectives).  Warm and perturbed bases are jittered between attempts
// so the starts actually differ.
template <typename OnceFn>
FitResult multi_attempt(const ResponseMatrix& r, int k, const FitConfig& cfg,
                        OnceFn&& once) {
  auto attempt_cfg = [&](int attempt) {
    FitConfig alt = cfg;
    if (attempt == 0) return alt;
    alt.seed = mix64(cfg.seed + kGoldenGamma * static_cast<std::uint64_t>(attempt));
    if (cfg.init == InitKind::Warm) {
      // alternate between jittering the warm base and fully random starts
      if (attempt % 2 == 1) {
        alt.init = InitKind::Perturb;
        alt.perturb_rate = 0.15;
      } else {
        alt.init = InitKind::Random;
      }
    }
    return alt;
  };
  auto better = [](const FitResult& a, const FitResult& b) {
    if (a.q_stable != b.q_stable) return a.q_stable;
    return a.trace.back().objective > b.trace.back().objective;
  };
  FitResult best = once(r, k, attempt_cfg(0));
  int attempts = 0;
  while (attempts + 1 < cfg.multi_start ||
         (!best.q_stable && attempts < cfg.multi_start - 1 + cfg.max_restarts)) {
    ++attempts;
    FitResult next = once(r, k, attempt_cfg(attempts));
    if (better(next, best)) best = std::move(next);
  }
  best.restarts_used = attempts;
  return best;
}

}  // namespace

FitResult adg_em_fit(const ResponseMatrix& r, int k, const FitConfig& cfg) {
  return multi_attempt(r, k, cfg, adg_em_once);
}

FitResult adg_saem_fit(const ResponseMatrix& r, int k, const FitConfig& cfg) {
  return multi_attempt(r, k, cfg, adg_saem_once);
}

FitResult fit(const ResponseMatrix& r, int k, const FitConfig& cfg) {
  return cfg.algorithm == Algorithm::AdgSaem ? adg_saem_fit(r, k, cfg)
                                             : adg_em_fit(r, k, cfg);
}

}  // namespace slam
