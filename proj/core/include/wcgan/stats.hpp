#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "wcgan/tensor.hpp"

namespace wcgan {

/// Mean vector and covariance (row-major d×d) of a feature distribution.
struct GaussianSummary {
  std::vector<double> mean;
  std::vector<double> cov;

  std::size_t dim() const { return mean.size(); }
  double cov_at(std::size_t i, std::size_t j) const { return cov[i * mean.size() + j]; }
  // Symmetric within 1e-10 and PSD up to round-off.
  void validate() const;
};

/// Fixed-width histogram over [lo, hi). Values outside the range fall into
/// the edge bins. `mass` is normalized to sum to one.
struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> mass;
};

Histogram make_histogram(std::span<const double> samples, double lo, double hi, std::size_t bins);

/// Samples with optional weights (uniform when empty).
struct EmpiricalDist {
  std::vector<std::vector<double>> samples;
  std::vector<double> weights;

  static EmpiricalDist from_scalars(std::span<const double> values, std::span<const double> weights = {});
  void validate() const;
};

struct MetricsRecord {
  std::size_t epoch = 0;
  int class_id = 0;
  double disc_loss = 0.0;
  double gen_loss = 0.0;
  double w_estimate = 0.0;
  std::optional<double> is_score;
  std::optional<double> fid;
  double wall_s = 0.0;
};

// Divergences between histograms on identical bins, in nats. q is floored at
// 1e-12 and renormalized wherever p has mass.
double kl_divergence(const Histogram& p, const Histogram& q);
/// 1/2 KL(p,q) + 1/2 KL(q,p). Reported as +inf when the supports are
/// disjoint, where the unfloored quantity diverges.
double js_symmetric(const Histogram& p, const Histogram& q);
/// Mixture-based Jensen-Shannon divergence, bounded by ln 2.
double js_mixture(const Histogram& p, const Histogram& q);

/// Exact 1-D Wasserstein-1 distance between empirical distributions.
double wasserstein1_1d(const EmpiricalDist& p, const EmpiricalDist& q);
double wasserstein1_1d(std::span<const double> p, std::span<const double> q);

/// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}).
double frechet_distance(const GaussianSummary& a, const GaussianSummary& b);

/// Sample mean and unbiased covariance of rows of [N×d] (N >= 2).
GaussianSummary feature_summary(const Tensor& samples);
GaussianSummary feature_summary(const std::vector<std::vector<double>>& samples);

/// exp(E_x KL(p(y|x) || p(y))) over rows of [N×K] class probabilities.
double inception_score(const Tensor& cond_probs);
double inception_score(const std::vector<std::vector<double>>& cond_probs);

struct ModeBall {
  std::vector<double> center;
  double radius = 0.0;
};

struct ModeCoverage {
  std::vector<double> fractions;
  bool collapsed = false;
  double worst() const;
};

/// Fraction of rows of `samples` inside each ball; collapse is flagged when
/// any fraction is below `floor`.
ModeCoverage mode_coverage(const Tensor& samples, std::span<const ModeBall> modes, double floor = 0.05);

/// Mean over epochs t of min_{s < t-lag} FD(summary_t, summary_s), divided
/// by the mean distance between consecutive epochs. Near 0 means the
/// generator keeps returning to earlier regions.
double cycling_index(std::span<const GaussianSummary> epochs, std::size_t lag = 5);

}  // namespace wcgan
