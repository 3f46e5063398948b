#include "slam/stage_two.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "slam/fit.hpp"
#include "slam/parallel.hpp"
#include "slam/rng.hpp"

namespace slam {

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

// Observed cells of one response column together with the matching rows of
// the attribute estimate.
struct ItemData {
  std::vector<std::uint8_t> r;
  std::vector<int> subject;  // original row indices
};

ItemData gather_observed(const ResponseMatrix& r, int j) {
  ItemData d;
  d.r.reserve(r.rows());
  d.subject.reserve(r.rows());
  for (int i = 0; i < r.rows(); ++i) {
    std::uint8_t v = r(i, j);
    if (v == kMissingCell) continue;
    d.r.push_back(v);
    d.subject.push_back(i);
  }
  return d;
}

std::vector<std::uint8_t> interaction_column(const BitMatrix& a_hat,
                                             const std::vector<int>& subjects,
                                             std::uint32_t mask) {
  std::vector<std::uint8_t> col(subjects.size(), 1);
  for (std::size_t t = 0; t < subjects.size(); ++t) {
    const std::uint8_t* row = a_hat.row(subjects[t]);
    std::uint32_t m = mask;
    while (m) {
      int k = std::countr_zero(m);
      if (!row[k]) {
        col[t] = 0;
        break;
      }
      m &= m - 1;
    }
  }
  return col;
}

void cap_selection(std::vector<int>& attrs, const std::vector<double>& mags,
                   int max_active) {
  if (static_cast<int>(attrs.size()) <= max_active) return;
  std::stable_sort(attrs.begin(), attrs.end(),
                   [&](int a, int b) { return mags[a] > mags[b]; });
  attrs.resize(max_active);
}

std::vector<std::uint32_t> power_set_nonempty(const std::vector<int>& attrs) {
  std::uint32_t full = 0;
  for (int k : attrs) full |= 1u << k;
  std::vector<std::uint32_t> out;
  for (std::uint32_t s = full; s != 0; s = (s - 1) & full) out.push_back(s);
  std::sort(out.begin(), out.end());
  return out;
}

double held_out_deviance(const std::vector<std::vector<std::uint8_t>>& cols,
                         std::span<const std::uint8_t> r,
                         const std::vector<int>& idx, const CdFit& fit) {
  double dev = 0.0;
  for (int i : idx) {
    double eta = fit.intercept;
    for (std::size_t s = 0; s < cols.size(); ++s)
      if (cols[s][i]) eta += fit.beta[s];
    double p = clamp_prob(sigmoid(eta));
    dev += r[i] ? -2.0 * std::log(p) : -2.0 * std::log(1.0 - p);
  }
  return dev;
}

}  // namespace

std::vector<int> gap_cut(const std::vector<double>& mags) {
  const int k = static_cast<int>(mags.size());
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return mags[a] > mags[b]; });
  if (k == 1) return order;
  // The drop from the smallest magnitude to zero counts as the final gap,
  // so a uniformly strong profile selects every attribute.
  double best_gap = mags[order[k - 1]];
  int cut = k;
  for (int t = 0; t + 1 < k; ++t) {
    double gap = mags[order[t]] - mags[order[t + 1]];
    if (gap > best_gap) {
      best_gap = gap;
      cut = t + 1;
    }
  }
  return std::vector<int>(order.begin(), order.begin() + cut);
}

MarginalFit marginal_fit(std::span<const std::uint8_t> r,
                         std::span<const std::uint8_t> x, bool smooth) {
  if (r.size() != x.size())
    throw DimensionError("marginal_fit: response/predictor length mismatch");
  double ones1 = 0, n1 = 0, ones0 = 0, n0 = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (x[i]) {
      n1 += 1;
      ones1 += r[i];
    } else {
      n0 += 1;
      ones0 += r[i];
    }
  }
  MarginalFit fit;
  if (n1 == 0 || n0 == 0) {
    fit.degenerate = true;
    double total_n = n1 + n0, total_ones = ones1 + ones0;
    double p = smooth ? (total_ones + 0.5) / (total_n + 1.0)
                      : (total_n > 0 ? total_ones / total_n : 0.5);
    fit.intercept = logit(clamp_prob(p));
    fit.slope = 0.0;
    return fit;
  }
  double p1, p0;
  if (smooth) {
    p1 = (ones1 + 0.5) / (n1 + 1.0);
    p0 = (ones0 + 0.5) / (n0 + 1.0);
  } else {
    p1 = clamp_prob(ones1 / n1);
    p0 = clamp_prob(ones0 / n0);
  }
  fit.intercept = logit(p0);
  fit.slope = logit(p1) - logit(p0);
  return fit;
}

ScreenResult screen_main(const ResponseMatrix& r, const BitMatrix& a_hat,
                         bool gap_rule, double tau, int max_active,
                         int threads) {
  if (r.rows() != a_hat.rows())
    throw DimensionError("screen_main: subject count mismatch");
  const int j_count = r.cols(), k = a_hat.cols();
  ScreenResult out;
  out.mode = ScreenMode::MainEffect;
  out.items.resize(j_count);
  parallel_for(j_count, threads, [&](int begin, int end) {
    for (int j = begin; j < end; ++j) {
      ItemData d = gather_observed(r, j);
      ItemScreen& item = out.items[j];
      item.magnitudes.resize(k);
      std::vector<std::uint8_t> x(d.subject.size());
      for (int kk = 0; kk < k; ++kk) {
        for (std::size_t t = 0; t < d.subject.size(); ++t)
          x[t] = a_hat(d.subject[t], kk);
        MarginalFit mf = marginal_fit(d.r, x);
        item.magnitudes[kk] = std::abs(mf.slope);
        item.degenerate = item.degenerate || mf.degenerate;
      }
      if (gap_rule) {
        item.selected_attrs = gap_cut(item.magnitudes);
      } else {
        for (int kk = 0; kk < k; ++kk)
          if (item.magnitudes[kk] > tau) item.selected_attrs.push_back(kk);
      }
      cap_selection(item.selected_attrs, item.magnitudes, max_active);
      std::sort(item.selected_attrs.begin(), item.selected_attrs.end());
      item.candidates = power_set_nonempty(item.selected_attrs);
    }
  });
  return out;
}

ScreenResult screen_all_effects(const ResponseMatrix& r, const BitMatrix& a_hat,
                                double tau, int max_order, int max_active,
                                int threads) {
  if (r.rows() != a_hat.rows())
    throw DimensionError("screen_all_effects: subject count mismatch");
  const int j_count = r.cols(), k = a_hat.cols();
  if (k > 30) throw ConfigError("screen_all_effects: k > 30 unsupported");
  // All subset masks of order <= max_order, ascending.
  std::vector<std::uint32_t> masks;
  for (std::uint32_t s = 1; s < (1u << k); ++s)
    if (std::popcount(s) <= max_order) masks.push_back(s);
  ScreenResult out;
  out.mode = ScreenMode::AllEffects;
  out.items.resize(j_count);
  parallel_for(j_count, threads, [&](int begin, int end) {
    for (int j = begin; j < end; ++j) {
      ItemData d = gather_observed(r, j);
      ItemScreen& item = out.items[j];
      std::vector<std::pair<std::uint32_t, double>> kept;
      for (std::uint32_t s : masks) {
        auto col = interaction_column(a_hat, d.subject, s);
        MarginalFit mf = marginal_fit(d.r, col);
        if (mf.degenerate) {
          item.degenerate = true;
          continue;
        }
        item.effects.emplace_back(s, std::abs(mf.slope));
        if (std::abs(mf.slope) > tau) kept.emplace_back(s, std::abs(mf.slope));
      }
      // Cap the union of screened attributes at max_active, largest
      // magnitudes first.
      std::stable_sort(kept.begin(), kept.end(),
                       [](const auto& a, const auto& b) { return a.second > b.second; });
      std::uint32_t the_union = 0;
      for (const auto& [s, mag] : kept) {
        std::uint32_t grown = the_union | s;
        if (std::popcount(grown) <= max_active) {
          the_union = grown;
          item.candidates.push_back(s);
        }
      }
      std::sort(item.candidates.begin(), item.candidates.end());
    }
  });
  return out;
}

CdFit logistic_lasso_cd(const std::vector<std::vector<std::uint8_t>>& cols,
                        std::span<const std::uint8_t> r, double lambda,
                        const CdFit* warm) {
  const int n = static_cast<int>(r.size());
  const int p = static_cast<int>(cols.size());
  for (const auto& c : cols)
    if (static_cast<int>(c.size()) != n)
      throw DimensionError("logistic_lasso_cd: column length mismatch");
  CdFit fit;
  fit.beta.assign(p, 0.0);
  if (warm != nullptr) {
    fit.intercept = warm->intercept;
    fit.beta = warm->beta;
  } else {
    double ybar = 0.0;
    for (int i = 0; i < n; ++i) ybar += r[i];
    ybar = clamp_prob(ybar / n);
    fit.intercept = logit(ybar);
  }

  std::vector<double> eta(n, 0.0), w(n), z(n), res(n);
  auto recompute_eta = [&] {
    for (int i = 0; i < n; ++i) eta[i] = fit.intercept;
    for (int s = 0; s < p; ++s) {
      if (fit.beta[s] == 0.0) continue;
      const auto& col = cols[s];
      for (int i = 0; i < n; ++i)
        if (col[i]) eta[i] += fit.beta[s];
    }
  };
  recompute_eta();

  constexpr int kMaxOuter = 200;
  constexpr double kInnerTol = 1e-12;
  constexpr double kOuterTol = 1e-11;
  constexpr double kWeightFloor = 1e-6;
  for (int outer = 0; outer < kMaxOuter; ++outer) {
    // Quadratic approximation around the current linear predictor.
    for (int i = 0; i < n; ++i) {
      double pi = sigmoid(eta[i]);
      w[i] = std::max(pi * (1.0 - pi), kWeightFloor);
      z[i] = eta[i] + (r[i] - pi) / w[i];
      res[i] = z[i] - eta[i];
    }
    double wsum = 0.0;
    for (int i = 0; i < n; ++i) wsum += w[i];
    std::vector<double> wx(p, 0.0);  // sum of w over the active entries
    for (int s = 0; s < p; ++s) {
      const auto& col = cols[s];
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        if (col[i]) acc += w[i];
      wx[s] = acc;
    }

    for (int inner = 0; inner < 1000; ++inner) {
      double max_change = 0.0;
      for (int s = 0; s < p; ++s) {
        if (wx[s] <= 0.0) continue;  // empty column
        const auto& col = cols[s];
        double g = 0.0;
        for (int i = 0; i < n; ++i)
          if (col[i]) g += w[i] * res[i];
        double num = g / n + (wx[s] / n) * fit.beta[s];
        double denom = wx[s] / n;
        double b_new;
        if (num > lambda)
          b_new = (num - lambda) / denom;
        else if (num < -lambda)
          b_new = (num + lambda) / denom;
        else
          b_new = 0.0;
        double delta = b_new - fit.beta[s];
        if (delta != 0.0) {
          for (int i = 0; i < n; ++i)
            if (col[i]) res[i] -= delta;
          fit.beta[s] = b_new;
          max_change = std::max(max_change, std::abs(delta));
        }
      }
      double g0 = 0.0;
      for (int i = 0; i < n; ++i) g0 += w[i] * res[i];
      double delta0 = g0 / wsum;
      if (delta0 != 0.0) {
        fit.intercept += delta0;
        for (int i = 0; i < n; ++i) res[i] -= delta0;
        max_change = std::max(max_change, std::abs(delta0));
      }
      if (max_change < kInnerTol) break;
    }

    double eta_change = 0.0;
    for (int i = 0; i < n; ++i) {
      double e_new = z[i] - res[i];
      eta_change = std::max(eta_change, std::abs(e_new - eta[i]));
      eta[i] = e_new;
    }
    for (double b : fit.beta)
      if (std::abs(b) > 50.0) return fit;  // separation guard, not converged
    if (std::abs(fit.intercept) > 50.0) return fit;
    if (eta_change < kOuterTol) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

double lasso_kkt_residual(const std::vector<std::vector<std::uint8_t>>& cols,
                          std::span<const std::uint8_t> r, double lambda,
                          const CdFit& fit) {
  const int n = static_cast<int>(r.size());
  const int p = static_cast<int>(cols.size());
  std::vector<double> prob(n);
  for (int i = 0; i < n; ++i) {
    double eta = fit.intercept;
    for (int s = 0; s < p; ++s)
      if (cols[s][i]) eta += fit.beta[s];
    prob[i] = sigmoid(eta);
  }
  double g0 = 0.0;
  for (int i = 0; i < n; ++i) g0 += r[i] - prob[i];
  double resid = std::abs(g0 / n);
  for (int s = 0; s < p; ++s) {
    double g = 0.0;
    bool empty = true, full = true;
    for (int i = 0; i < n; ++i) {
      if (cols[s][i]) {
        g += r[i] - prob[i];
        empty = false;
      } else {
        full = false;
      }
    }
    if (empty || full) continue;  // degenerate column, gradient tied to intercept
    g = -g / n;
    double rs = fit.beta[s] == 0.0
                    ? std::max(0.0, std::abs(g) - lambda)
                    : std::abs(g + lambda * (fit.beta[s] > 0 ? 1.0 : -1.0));
    resid = std::max(resid, rs);
  }
  return resid;
}

LassoPath lasso_logistic(std::span<const std::uint8_t> r,
                         const std::vector<std::vector<std::uint8_t>>& cols,
                         const std::vector<std::uint32_t>& col_masks,
                         int folds, int grid_size, double lambda_min_ratio,
                         std::uint64_t seed) {
  if (cols.size() != col_masks.size())
    throw DimensionError("lasso_logistic: column/mask count mismatch");
  if (folds < 2) throw ConfigError("lasso_logistic: need folds >= 2");
  if (grid_size < 2) throw ConfigError("lasso_logistic: need grid_size >= 2");
  const int n = static_cast<int>(r.size());
  const int p = static_cast<int>(cols.size());
  LassoPath path;
  if (p == 0 || n == 0) {
    path.intercept_only = true;
    return path;
  }

  double ybar = 0.0;
  for (int i = 0; i < n; ++i) ybar += r[i];
  ybar /= n;
  double lambda_max = 0.0;
  for (int s = 0; s < p; ++s) {
    double g = 0.0;
    for (int i = 0; i < n; ++i)
      if (cols[s][i]) g += r[i] - ybar;
    lambda_max = std::max(lambda_max, std::abs(g / n));
  }
  if (lambda_max <= 0.0) {
    path.intercept_only = true;
    return path;
  }

  path.lambdas.resize(grid_size);
  for (int t = 0; t < grid_size; ++t)
    path.lambdas[t] =
        lambda_max * std::pow(lambda_min_ratio, t / (grid_size - 1.0));

  // Deterministic stratified fold assignment: shuffle each response stratum,
  // deal round-robin.
  std::vector<int> fold_of(n, 0);
  for (int label = 0; label <= 1; ++label) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
      if (r[i] == label) idx.push_back(i);
    CounterRng rng = substream(seed, kPhaseCvFolds, label, 0);
    for (std::size_t t = idx.size(); t > 1; --t)
      std::swap(idx[t - 1], idx[rng.next_below(t)]);
    for (std::size_t t = 0; t < idx.size(); ++t)
      fold_of[idx[t]] = static_cast<int>(t % folds);
  }

  std::vector<double> cv_total(grid_size, 0.0);
  std::vector<std::uint8_t> cv_bad(grid_size, 0);
  for (int f = 0; f < folds; ++f) {
    std::vector<int> test_idx;
    std::vector<std::uint8_t> train_r;
    std::vector<int> train_rows;
    for (int i = 0; i < n; ++i) {
      if (fold_of[i] == f)
        test_idx.push_back(i);
      else {
        train_r.push_back(r[i]);
        train_rows.push_back(i);
      }
    }
    std::vector<std::vector<std::uint8_t>> train_cols(p);
    for (int s = 0; s < p; ++s) {
      train_cols[s].resize(train_rows.size());
      for (std::size_t t = 0; t < train_rows.size(); ++t)
        train_cols[s][t] = cols[s][train_rows[t]];
    }
    CdFit warm;
    bool have_warm = false;
    for (int t = 0; t < grid_size; ++t) {
      CdFit fit = logistic_lasso_cd(train_cols, train_r, path.lambdas[t],
                                    have_warm ? &warm : nullptr);
      if (!fit.converged) {
        cv_bad[t] = 1;
        continue;
      }
      warm = fit;
      have_warm = true;
      cv_total[t] += held_out_deviance(cols, r, test_idx, fit);
    }
  }

  path.cv_loss.resize(grid_size);
  path.skipped.assign(grid_size, 0);
  // Full-data path (this is where supports and KKT conditions live).
  path.fits.resize(grid_size);
  CdFit warm;
  bool have_warm = false;
  for (int t = 0; t < grid_size; ++t) {
    path.fits[t] =
        logistic_lasso_cd(cols, r, path.lambdas[t], have_warm ? &warm : nullptr);
    if (!path.fits[t].converged) {
      path.skipped[t] = 1;
    } else {
      warm = path.fits[t];
      have_warm = true;
    }
    path.cv_loss[t] = cv_bad[t] ? std::numeric_limits<double>::infinity()
                                : cv_total[t] / n;
  }

  int chosen = -1;
  double best = std::numeric_limits<double>::infinity();
  for (int t = 0; t < grid_size; ++t) {
    if (path.skipped[t] || cv_bad[t]) continue;
    // Strictly smaller wins; ties keep the earlier (larger) penalty.
    if (path.cv_loss[t] < best * (1.0 - 1e-12)) {
      best = path.cv_loss[t];
      chosen = t;
    }
  }
  if (chosen < 0) {
    path.intercept_only = true;
    return path;
  }
  path.chosen = chosen;
  for (int s = 0; s < p; ++s)
    if (std::abs(path.fits[chosen].beta[s]) > 1e-8)
      path.selected.push_back(col_masks[s]);
  return path;
}

BitMatrix rebuild_q(const std::vector<std::vector<std::uint32_t>>& supports,
                    const BitMatrix& stage1_q,
                    std::vector<std::uint8_t>* kept_stage1) {
  if (static_cast<int>(supports.size()) != stage1_q.rows())
    throw DimensionError("rebuild_q: support count != item count");
  const int j_count = stage1_q.rows(), k = stage1_q.cols();
  BitMatrix q2(j_count, k);
  if (kept_stage1 != nullptr) kept_stage1->assign(j_count, 0);
  for (int j = 0; j < j_count; ++j) {
    std::uint32_t the_union = 0;
    for (std::uint32_t s : supports[j]) the_union |= s;
    if (the_union == 0) {
      for (int kk = 0; kk < k; ++kk) q2(j, kk) = stage1_q(j, kk);
      if (kept_stage1 != nullptr) (*kept_stage1)[j] = 1;
      continue;
    }
    for (int kk = 0; kk < k; ++kk)
      q2(j, kk) = (the_union >> kk) & 1u;
  }
  return q2;
}

namespace {

// Compress the subject's profile onto the item's active attributes.
inline std::uint32_t local_class(const std::uint8_t* a_row, std::uint32_t active) {
  std::uint32_t cls = 0;
  int bit = 0;
  while (active) {
    int k = std::countr_zero(active);
    if (a_row[k]) cls |= 1u << bit;
    ++bit;
    active &= active - 1;
  }
  return cls;
}

}  // namespace

ThetaTable estimate_theta_multi(const ResponseMatrix& r, const BitMatrix& a_hat,
                                const BitMatrix& q_hat) {
  if (r.rows() != a_hat.rows() || r.cols() != q_hat.rows() ||
      a_hat.cols() != q_hat.cols())
    throw DimensionError("estimate_theta_multi: inconsistent dimensions");
  const int n = r.rows(), j_count = r.cols(), k = q_hat.cols();
  ThetaTable table(j_count);
  for (int j = 0; j < j_count; ++j) {
    std::uint32_t active = 0;
    for (int kk = 0; kk < k; ++kk)
      if (q_hat(j, kk)) active |= 1u << kk;
    int size = std::popcount(active);
    if (size > 16)
      throw ParameterError("estimate_theta_multi: item with > 16 active "
                           "attributes; saturated table too large");
    table[j].active_mask = active;
    table[j].classes.assign(1u << size, ClassStat{});
    for (int i = 0; i < n; ++i) {
      std::uint8_t rv = r(i, j);
      if (rv == kMissingCell) continue;
      ClassStat& cs = table[j].classes[local_class(a_hat.row(i), active)];
      cs.n_obs += 1;
      cs.ones += rv;
    }
    for (ClassStat& cs : table[j].classes) {
      cs.empty = cs.n_obs == 0;
      if (!cs.empty) cs.raw = static_cast<double>(cs.ones) / cs.n_obs;
      cs.smoothed = (cs.ones + 0.5) / (cs.n_obs + 1.0);
    }
  }
  return table;
}

double multi_loglik(const ResponseMatrix& r, const BitMatrix& a_hat,
                    const BitMatrix& q_hat, const ThetaTable& table) {
  if (static_cast<int>(table.size()) != r.cols())
    throw DimensionError("multi_loglik: table length != item count");
  const int n = r.rows(), j_count = r.cols();
  double ll = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::uint8_t* a_row = a_hat.row(i);
    for (int j = 0; j < j_count; ++j) {
      std::uint8_t rv = r(i, j);
      if (rv == kMissingCell) continue;
      const ClassStat& cs =
          table[j].classes[local_class(a_row, table[j].active_mask)];
      double p = clamp_prob(cs.smoothed);
      ll += rv ? std::log(p) : std::log(1.0 - p);
    }
  }
  return ll;
}

BicReport bic_compare(double loglik_two, long long k_two, double loglik_multi,
                      long long k_multi, long long n_obs) {
  if (n_obs < 1) throw ConfigError("bic_compare: need n_obs >= 1");
  BicReport rep;
  rep.loglik_two = loglik_two;
  rep.loglik_multi = loglik_multi;
  rep.k_two = k_two;
  rep.k_multi = k_multi;
  rep.n_obs = n_obs;
  double logn = std::log(static_cast<double>(n_obs));
  rep.bic_two = -2.0 * loglik_two + k_two * logn;
  rep.bic_multi = -2.0 * loglik_multi + k_multi * logn;
  rep.multi_wins = rep.bic_multi < rep.bic_two;
  return rep;
}

Stage2Result run_stage_two(const ResponseMatrix& r, const BitMatrix& q1,
                           const BitMatrix& a_hat, const ItemParamsTwo& theta1,
                           const Stage2Config& cfg) {
  if (r.rows() != a_hat.rows() || r.cols() != q1.rows() ||
      q1.cols() != a_hat.cols())
    throw DimensionError("run_stage_two: inconsistent dimensions");
  Stage2Result out;
  if (cfg.mode == ScreenMode::MainEffect) {
    double tau = cfg.gap_rule ? 0.0 : cfg.tau;
    if (!cfg.gap_rule && !(tau >= 0))
      throw ConfigError("run_stage_two: threshold mode needs tau >= 0");
    out.screen = screen_main(r, a_hat, cfg.gap_rule, tau, cfg.max_active,
                             cfg.threads);
  } else {
    if (!(cfg.tau >= 0))
      throw ConfigError("run_stage_two: all-effects screening needs tau >= 0");
    out.screen = screen_all_effects(r, a_hat, cfg.tau, cfg.max_order,
                                    cfg.max_active, cfg.threads);
  }

  const int j_count = r.cols();
  out.paths.resize(j_count);
  parallel_for(j_count, cfg.threads, [&](int begin, int end) {
    for (int j = begin; j < end; ++j) {
      ItemData d = gather_observed(r, j);
      const auto& candidates = out.screen.items[j].candidates;
      std::vector<std::vector<std::uint8_t>> cols;
      cols.reserve(candidates.size());
      for (std::uint32_t s : candidates)
        cols.push_back(interaction_column(a_hat, d.subject, s));
      out.paths[j] = lasso_logistic(d.r, cols, candidates, cfg.folds,
                                    cfg.grid_size, cfg.lambda_min_ratio,
                                    mix64(cfg.seed ^ (kGoldenGamma * (j + 1))));
    }
  });

  std::vector<std::vector<std::uint32_t>> supports(j_count);
  for (int j = 0; j < j_count; ++j) supports[j] = out.paths[j].selected;
  out.q2 = rebuild_q(supports, q1, &out.kept_stage1);
  out.theta = estimate_theta_multi(r, a_hat, out.q2);

  double ll_two = joint_loglik(r, q1, a_hat, theta1, ModelKind::Dina);
  double ll_multi = multi_loglik(r, a_hat, out.q2, out.theta);
  long long k_two = 2LL * j_count;
  long long k_multi = 0;
  for (int j = 0; j < j_count; ++j) {
    int active = 0;
    for (int kk = 0; kk < out.q2.cols(); ++kk) active += out.q2(j, kk);
    k_multi += 1LL << active;
  }
  out.bic = bic_compare(ll_two, k_two, ll_multi, k_multi, r.n_observed());
  return out;
}

}  // namespace slam
