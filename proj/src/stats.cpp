#include "crow/stats.hpp"

#include <cmath>

namespace crow {

std::size_t GroupStats::n_significant() const {
  std::size_t n = 0;
  for (const FeatureStat& f : features) n += f.significant ? 1 : 0;
  return n;
}

namespace {

double beta_cf(double a, double b, double x) {
  // Lentz's method for the continued fraction of the incomplete beta.
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_cf(a, b, x) / a;
  }
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double dof) {
  if (dof <= 0.0) return 1.0;
  const double x = dof / (dof + t * t);
  return incomplete_beta(0.5 * dof, 0.5, x);
}

GroupStats group_analysis(const std::vector<Tensor>& group_a, const std::vector<Tensor>& group_b,
                          double alpha) {
  if (group_a.size() < 3 || group_b.size() < 3) {
    throw std::invalid_argument("group_analysis: each group needs at least 3 samples, got " +
                                std::to_string(group_a.size()) + " and " +
                                std::to_string(group_b.size()));
  }
  const std::size_t d = group_a[0].width();
  for (const Tensor& x : group_a)
    if (x.width() != d) throw std::invalid_argument("group_analysis: ragged group A");
  for (const Tensor& x : group_b)
    if (x.width() != d) throw std::invalid_argument("group_analysis: ragged group B");

  const double na = static_cast<double>(group_a.size());
  const double nb = static_cast<double>(group_b.size());
  GroupStats stats;
  stats.alpha = alpha;
  stats.features.resize(d);
  for (std::size_t f = 0; f < d; ++f) {
    double ma = 0.0, mb = 0.0;
    for (const Tensor& x : group_a) ma += x[f];
    for (const Tensor& x : group_b) mb += x[f];
    ma /= na;
    mb /= nb;
    double va = 0.0, vb = 0.0;
    for (const Tensor& x : group_a) va += (x[f] - ma) * (x[f] - ma);
    for (const Tensor& x : group_b) vb += (x[f] - mb) * (x[f] - mb);
    va /= (na - 1.0);
    vb /= (nb - 1.0);

    FeatureStat& fs = stats.features[f];
    if (va == 0.0 && vb == 0.0) {
      // Degenerate feature: no within-group variation, nothing to test.
      fs.degenerate = true;
      fs.t_stat = 0.0;
      fs.p_raw = 1.0;
    } else {
      const double se2 = va / na + vb / nb;
      fs.t_stat = (ma - mb) / std::sqrt(se2);
      // Welch-Satterthwaite degrees of freedom.
      const double dof =
          se2 * se2 / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
      fs.p_raw = student_t_two_sided_p(fs.t_stat, dof);
    }
    fs.p_corrected = std::min(1.0, fs.p_raw * static_cast<double>(d));
    fs.significant = fs.p_corrected < alpha;
  }
  return stats;
}

}  // namespace crow
