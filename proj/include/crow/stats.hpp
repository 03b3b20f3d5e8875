#pragma once

#include "crow/tensor.hpp"

namespace crow {

struct FeatureStat {
  double t_stat = 0.0;
  double p_raw = 1.0;
  double p_corrected = 1.0;
  bool significant = false;
  bool degenerate = false;  // zero variance in both groups
};

struct GroupStats {
  std::vector<FeatureStat> features;
  double alpha = 0.01;
  std::size_t n_significant() const;
};

// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction
// (the standard route to the Student-t tail).
double incomplete_beta(double a, double b, double x);

// Two-sided p of a t statistic at `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

/// Per-feature Welch two-sample t-test with Bonferroni correction over the
/// feature count; flags features at the corrected threshold alpha.
GroupStats group_analysis(const std::vector<Tensor>& group_a, const std::vector<Tensor>& group_b,
                          double alpha = 0.01);

}  // namespace crow
