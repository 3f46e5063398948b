#include "slam/model.hpp"

#include <cmath>
#include <cstdio>

namespace slam {

void ItemParamsTwo::validate() const {
  if (theta_plus.size() != theta_minus.size())
    throw DimensionError("ItemParamsTwo: theta vectors differ in length");
  for (std::size_t j = 0; j < theta_plus.size(); ++j) {
    double tp = theta_plus[j], tm = theta_minus[j];
    if (!(tm >= kProbClamp && tp <= 1.0 - kProbClamp && tm < tp)) {
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "item %zu: need %g <= theta_minus < theta_plus <= %g, got "
                    "theta_plus=%g theta_minus=%g",
                    j, kProbClamp, 1.0 - kProbClamp, tp, tm);
      throw ParameterError(buf);
    }
  }
}

int ideal_response_dina(BitSpan a, BitSpan q) {
  if (a.size() != q.size())
    throw DimensionError("ideal_response_dina: length mismatch");
  for (std::size_t k = 0; k < q.size(); ++k)
    if (q[k] && !a[k]) return 0;
  return 1;
}

int ideal_response_dino(BitSpan a, BitSpan q) {
  if (a.size() != q.size())
    throw DimensionError("ideal_response_dino: length mismatch");
  for (std::size_t k = 0; k < q.size(); ++k)
    if (q[k] && a[k]) return 1;
  return 0;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double success_prob_two(ModelKind model, BitSpan a, BitSpan q,
                        double theta_plus, double theta_minus) {
  int xi = model == ModelKind::Dino ? ideal_response_dino(a, q)
                                    : ideal_response_dina(a, q);
  return xi ? theta_plus : theta_minus;
}

double success_prob_multi(BitSpan a, BitSpan q, const ItemMulti& item) {
  if (a.size() != q.size())
    throw DimensionError("success_prob_multi: length mismatch");
  std::uint32_t m = 0;
  for (std::size_t k = 0; k < q.size(); ++k)
    if (q[k] && a[k]) m |= 1u << k;
  double eta = 0.0;
  for (const auto& [subset, mu] : item.coeffs)
    if ((subset & ~m) == 0) eta += mu;
  if (item.link == Link::Logistic) return sigmoid(eta);
  if (eta < -1e-9 || eta > 1.0 + 1e-9)
    throw ParameterError("identity-link probability outside [0, 1]");
  return std::clamp(eta, 0.0, 1.0);
}

double dino_prob_via_duality(BitSpan a, BitSpan q, double theta_plus,
                             double theta_minus) {
  std::vector<std::uint8_t> flipped(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) flipped[k] = a[k] ? 0 : 1;
  double via = 1.0 - success_prob_two(ModelKind::Dina, flipped, q,
                                      1.0 - theta_minus, 1.0 - theta_plus);
  double direct = success_prob_two(ModelKind::Dino, a, q, theta_plus, theta_minus);
  if (std::abs(via - direct) > 1e-12)
    throw std::logic_error("DINA/DINO duality identity violated");
  return via;
}

namespace {

void check_dims(const ResponseMatrix& r, const BitMatrix& q, const BitMatrix& a) {
  if (r.rows() != a.rows() || r.cols() != q.rows() || q.cols() != a.cols())
    throw DimensionError("joint_loglik: inconsistent dimensions");
}

}  // namespace

double joint_loglik(const ResponseMatrix& r, const BitMatrix& q,
                    const BitMatrix& a, const ItemParamsTwo& theta,
                    ModelKind model) {
  check_dims(r, q, a);
  if (theta.items() != q.rows())
    throw DimensionError("joint_loglik: theta length != item count");
  const int n = r.rows(), j_count = r.cols(), k = q.cols();
  double ll = 0.0;
  for (int i = 0; i < n; ++i) {
    BitSpan ai(a.row(i), static_cast<std::size_t>(k));
    for (int j = 0; j < j_count; ++j) {
      std::uint8_t rv = r(i, j);
      if (rv == kMissingCell) continue;
      BitSpan qj(q.row(j), static_cast<std::size_t>(k));
      double p = clamp_prob(success_prob_two(model, ai, qj, theta.theta_plus[j],
                                             theta.theta_minus[j]));
      ll += rv ? std::log(p) : std::log(1.0 - p);
    }
  }
  return ll;
}

double joint_loglik(const ResponseMatrix& r, const BitMatrix& q,
                    const BitMatrix& a, const ItemParamsMulti& params) {
  check_dims(r, q, a);
  if (static_cast<int>(params.items.size()) != q.rows())
    throw DimensionError("joint_loglik: params length != item count");
  const int n = r.rows(), j_count = r.cols(), k = q.cols();
  double ll = 0.0;
  for (int i = 0; i < n; ++i) {
    BitSpan ai(a.row(i), static_cast<std::size_t>(k));
    for (int j = 0; j < j_count; ++j) {
      std::uint8_t rv = r(i, j);
      if (rv == kMissingCell) continue;
      BitSpan qj(q.row(j), static_cast<std::size_t>(k));
      double p = clamp_prob(success_prob_multi(ai, qj, params.items[j]));
      ll += rv ? std::log(p) : std::log(1.0 - p);
    }
  }
  return ll;
}

BitMatrix ideal_response_matrix(const BitMatrix& q, const BitMatrix& a) {
  if (q.cols() != a.cols())
    throw DimensionError("ideal_response_matrix: attribute count mismatch");
  const int n = a.rows(), j_count = q.rows(), k = q.cols();
  BitMatrix out(n, j_count);
  for (int i = 0; i < n; ++i) {
    BitSpan ai(a.row(i), static_cast<std::size_t>(k));
    for (int j = 0; j < j_count; ++j) {
      BitSpan qj(q.row(j), static_cast<std::size_t>(k));
      out(i, j) = static_cast<std::uint8_t>(ideal_response_dina(ai, qj));
    }
  }
  return out;
}

}  // namespace slam
