#include "slam/evaluate.hpp"

#include <cmath>
#include <numeric>

namespace slam {

long long solve_assignment(const std::vector<std::vector<long long>>& cost,
                           std::vector<int>& row_to_col) {
  const int n = static_cast<int>(cost.size());
  for (const auto& row : cost)
    if (static_cast<int>(row.size()) != n)
      throw DimensionError("solve_assignment: cost matrix not square");
  const long long inf = std::numeric_limits<long long>::max() / 4;
  // Potentials over 1-based rows/columns with a dummy column 0.
  std::vector<long long> u(n + 1, 0), v(n + 1, 0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      int i0 = p[j0], j1 = -1;
      long long delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        long long cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  row_to_col.assign(n, -1);
  long long total = 0;
  for (int j = 1; j <= n; ++j) {
    row_to_col[p[j] - 1] = j - 1;
    total += cost[p[j] - 1][j - 1];
  }
  return total;
}

namespace {

// Minimum assignment cost over the free rows/columns only.
long long assignment_over_free(const std::vector<std::vector<long long>>& cost,
                               const std::vector<char>& row_fixed,
                               const std::vector<char>& col_used) {
  std::vector<int> rows, cols;
  for (int i = 0; i < static_cast<int>(cost.size()); ++i)
    if (!row_fixed[i]) rows.push_back(i);
  for (int j = 0; j < static_cast<int>(cost.size()); ++j)
    if (!col_used[j]) cols.push_back(j);
  if (rows.empty()) return 0;
  std::vector<std::vector<long long>> sub(rows.size(),
                                          std::vector<long long>(cols.size()));
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = 0; b < cols.size(); ++b) sub[a][b] = cost[rows[a]][cols[b]];
  std::vector<int> assign;
  return solve_assignment(sub, assign);
}

}  // namespace

std::vector<int> align_columns(const BitMatrix& a_hat, const BitMatrix& a_true) {
  if (a_hat.cols() != a_true.cols())
    throw DimensionError("align_columns: attribute count mismatch");
  if (a_hat.rows() != a_true.rows())
    throw DimensionError("align_columns: subject count mismatch");
  const int n = a_hat.rows(), k = a_hat.cols();
  // cost[true k][est c] = disagreements, so minimizing maximizes agreement.
  std::vector<std::vector<long long>> cost(k, std::vector<long long>(k, 0));
  for (int i = 0; i < n; ++i) {
    const std::uint8_t* ht = a_hat.row(i);
    const std::uint8_t* tt = a_true.row(i);
    for (int kt = 0; kt < k; ++kt)
      for (int c = 0; c < k; ++c) cost[kt][c] += tt[kt] != ht[c];
  }
  std::vector<int> best_assign;
  long long best = solve_assignment(cost, best_assign);

  // Lexicographically smallest optimal permutation: fix columns greedily and
  // verify optimality of the remainder.  Costs are integers, so equality is
  // exact.
  std::vector<int> perm(k, -1);
  std::vector<char> row_fixed(k, false), col_used(k, false);
  long long fixed_cost = 0;
  for (int kt = 0; kt < k; ++kt) {
    for (int c = 0; c < k; ++c) {
      if (col_used[c]) continue;
      row_fixed[kt] = true;
      col_used[c] = true;
      long long rest = assignment_over_free(cost, row_fixed, col_used);
      if (fixed_cost + cost[kt][c] + rest == best) {
        perm[kt] = c;
        fixed_cost += cost[kt][c];
        break;
      }
      row_fixed[kt] = false;
      col_used[c] = false;
    }
  }
  return perm;
}

BitMatrix permute_columns(const BitMatrix& m, const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != m.cols())
    throw DimensionError("permute_columns: permutation length mismatch");
  BitMatrix out(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i)
    for (int k = 0; k < m.cols(); ++k) out(i, k) = m(i, perm[k]);
  return out;
}

namespace {

void row_entry_acc(const BitMatrix& est, const BitMatrix& truth, bool& exact,
                   double& row_acc, double& entry_acc) {
  long long entry_ok = 0, row_ok = 0;
  for (int i = 0; i < est.rows(); ++i) {
    bool all = true;
    for (int k = 0; k < est.cols(); ++k) {
      bool ok = est(i, k) == truth(i, k);
      entry_ok += ok;
      all = all && ok;
    }
    row_ok += all;
  }
  double cells = static_cast<double>(est.rows()) * est.cols();
  exact = row_ok == est.rows();
  row_acc = row_ok / static_cast<double>(est.rows());
  entry_acc = entry_ok / cells;
}

}  // namespace

EvalReport accuracy_report(const BitMatrix& q_hat, const BitMatrix& a_hat,
                           const BitMatrix& q_true, const BitMatrix& a_true) {
  if (q_hat.rows() != q_true.rows() || q_hat.cols() != q_true.cols())
    throw DimensionError("accuracy_report: Q shape mismatch");
  if (a_hat.rows() != a_true.rows() || a_hat.cols() != a_true.cols())
    throw DimensionError("accuracy_report: A shape mismatch");
  if (q_hat.cols() != a_hat.cols())
    throw DimensionError("accuracy_report: attribute count mismatch");
  EvalReport rep;
  rep.perm = align_columns(a_hat, a_true);
  BitMatrix a_aligned = permute_columns(a_hat, rep.perm);
  BitMatrix q_aligned = permute_columns(q_hat, rep.perm);
  row_entry_acc(a_aligned, a_true, rep.a_exact, rep.a_row_acc, rep.a_entry_acc);
  row_entry_acc(q_aligned, q_true, rep.q_exact, rep.q_row_acc, rep.q_entry_acc);
  return rep;
}

BitMatrix reconstruct(const BitMatrix& q_hat, const BitMatrix& a_hat,
                      const ItemParamsTwo& theta_hat) {
  if (theta_hat.items() != q_hat.rows())
    throw DimensionError("reconstruct: theta length != item count");
  BitMatrix xi = ideal_response_matrix(q_hat, a_hat);
  BitMatrix out(xi.rows(), xi.cols());
  for (int i = 0; i < xi.rows(); ++i)
    for (int j = 0; j < xi.cols(); ++j) {
      double mean = xi(i, j) ? theta_hat.theta_plus[j] : theta_hat.theta_minus[j];
      out(i, j) = mean > 0.5 ? 1 : 0;
    }
  return out;
}

double recon_error(const BitMatrix& reconstructed, const BitMatrix& ideal) {
  long long diff = reconstructed.count_diff(ideal);
  return diff / (static_cast<double>(reconstructed.rows()) * reconstructed.cols());
}

double bernoulli_kl(double p, double q) {
  p = clamp_prob(p);
  q = clamp_prob(q);
  return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

TwoParamApprox two_param_approx(const BitMatrix& q, const BitMatrix& a,
                                const RealMatrix& p_true) {
  if (q.cols() != a.cols())
    throw DimensionError("two_param_approx: attribute count mismatch");
  if (p_true.rows() != a.rows() || p_true.cols() != q.rows())
    throw DimensionError("two_param_approx: probability table shape mismatch");
  const int n = a.rows(), j_count = q.rows();
  BitMatrix xi = ideal_response_matrix(q, a);
  TwoParamApprox out;
  out.p2 = RealMatrix(n, j_count, 0.0);
  out.branch_ok.assign(j_count, 1);
  for (int j = 0; j < j_count; ++j) {
    double sum1 = 0.0, sum0 = 0.0;
    long long n1 = 0, n0 = 0;
    for (int i = 0; i < n; ++i) {
      if (xi(i, j)) {
        sum1 += p_true(i, j);
        ++n1;
      } else {
        sum0 += p_true(i, j);
        ++n0;
      }
    }
    if (n1 == 0 || n0 == 0) {
      out.branch_ok[j] = 0;
      double mean = (sum1 + sum0) / n;
      for (int i = 0; i < n; ++i) out.p2(i, j) = mean;
      continue;
    }
    double m1 = sum1 / n1, m0 = sum0 / n0;
    for (int i = 0; i < n; ++i) out.p2(i, j) = xi(i, j) ? m1 : m0;
  }
  return out;
}

std::vector<double> kl_objective(const RealMatrix& p_true,
                                 const TwoParamApprox& approx) {
  if (p_true.rows() != approx.p2.rows() || p_true.cols() != approx.p2.cols())
    throw DimensionError("kl_objective: shape mismatch");
  std::vector<double> f(p_true.cols(),
                        std::numeric_limits<double>::quiet_NaN());
  for (int j = 0; j < p_true.cols(); ++j) {
    if (!approx.branch_ok[j]) continue;
    double acc = 0.0;
    for (int i = 0; i < p_true.rows(); ++i)
      acc += bernoulli_kl(p_true(i, j), approx.p2(i, j));
    f[j] = acc;
  }
  return f;
}

}  // namespace slam
