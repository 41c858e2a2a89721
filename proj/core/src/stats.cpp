#include "wcgan/stats.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "wcgan/error.hpp"

namespace wcgan {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kMassFloor = 1e-12;
constexpr double kNegEigTolerance = 1e-8;

Mat as_mat(const GaussianSummary& s) {
  const auto d = static_cast<Eigen::Index>(s.dim());
  return Eigen::Map<const Mat>(s.cov.data(), d, d);
}

void require_same_bins(const Histogram& p, const Histogram& q) {
  if (p.lo != q.lo || p.hi != q.hi || p.mass.size() != q.mass.size() || p.mass.empty()) {
    throw ContractError("histograms do not share bins");
  }
}

std::vector<double> normalized(const std::vector<double>& mass) {
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  if (!(total > 0.0)) throw ContractError("histogram has no mass");
  std::vector<double> out(mass);
  for (auto& v : out) {
    if (v < 0.0) throw ContractError("histogram has negative mass");
    v /= total;
  }
  return out;
}

// Eigen-decomposition square root of a PSD matrix; rejects eigenvalues below
// -kNegEigTolerance and clamps the rest to zero.
Mat psd_sqrt(const Mat& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  if (es.info() != Eigen::Success) throw NumericError(std::string(what) + ": eigendecomposition failed");
  Eigen::VectorXd vals = es.eigenvalues();
  if (vals.size() && vals.minCoeff() < -kNegEigTolerance) {
    throw NumericError(std::string(what) + ": matrix is not PSD (eigenvalue " + std::to_string(vals.minCoeff()) + ")");
  }
  vals = vals.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

double row_kl(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

void validate_prob_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ContractError("inception_score: no samples");
  const std::size_t k = rows.front().size();
  if (k == 0) throw ContractError("inception_score: empty probability vector");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != k) throw ContractError("inception_score: ragged probability vectors");
    double s = 0.0;
    for (double v : rows[i]) {
      if (!(v >= 0.0)) throw ContractError("inception_score: negative probability in row " + std::to_string(i));
      s += v;
    }
    if (std::fabs(s - 1.0) > 1e-9) throw ContractError("inception_score: row " + std::to_string(i) + " sums to " + std::to_string(s));
  }
}

std::vector<std::vector<double>> rows_of(const Tensor& t) {
  if (t.rank() != 2) throw DimensionError("expected [N×d], got " + shape_to_string(t.shape()));
  const std::size_t n = t.dim(0), d = t.dim(1);
  std::vector<std::vector<double>> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i].assign(t.data().begin() + i * d, t.data().begin() + (i + 1) * d);
  return rows;
}

std::vector<double> scalars_of(const EmpiricalDist& d) {
  d.validate();
  std::vector<double> out;
  out.reserve(d.samples.size());
  for (const auto& s : d.samples) {
    if (s.size() != 1) throw ContractError("wasserstein1_1d: samples must be scalars");
    out.push_back(s[0]);
  }
  return out;
}

}  // namespace

void GaussianSummary::validate() const {
  const std::size_t d = mean.size();
  if (d == 0 || cov.size() != d * d) throw ContractError("gaussian summary dimensions are inconsistent");
  const Mat c = as_mat(*this);
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-10) throw ContractError("summary covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(c);
  if (es.eigenvalues().minCoeff() < -1e-10) throw ContractError("summary covariance is not PSD");
}

Histogram make_histogram(std::span<const double> samples, double lo, double hi, std::size_t bins) {
  if (!(hi > lo) || bins < 1) throw ContractError("histogram needs hi > lo and at least one bin");
  if (samples.empty()) throw ContractError("histogram of no samples");
  Histogram h{lo, hi, std::vector<double>(bins, 0.0)};
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : samples) {
    auto idx = static_cast<std::ptrdiff_t>(std::floor((v - lo) / width));
    idx = std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(bins) - 1);
    h.mass[static_cast<std::size_t>(idx)] += 1.0;
  }
  for (auto& m : h.mass) m /= static_cast<double>(samples.size());
  return h;
}

EmpiricalDist EmpiricalDist::from_scalars(std::span<const double> values, std::span<const double> weights) {
  EmpiricalDist d;
  for (double v : values) d.samples.push_back({v});
  d.weights.assign(weights.begin(), weights.end());
  d.validate();
  return d;
}

void EmpiricalDist::validate() const {
  if (samples.empty()) throw ContractError("empirical distribution has no samples");
  if (weights.empty()) return;
  if (weights.size() != samples.size()) throw ContractError("weights and samples differ in length");
  double s = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ContractError("negative sample weight");
    s += w;
  }
  if (std::fabs(s - 1.0) > 1e-9) throw ContractError("sample weights do not sum to 1");
}

double kl_divergence(const Histogram& p, const Histogram& q) {
  require_same_bins(p, q);
  const auto pn = normalized(p.mass);
  auto qn = normalized(q.mass);
  for (std::size_t i = 0; i < qn.size(); ++i) {
    if (pn[i] > 0.0) qn[i] = std::max(qn[i], kMassFloor);
  }
  const double total = std::accumulate(qn.begin(), qn.end(), 0.0);
  for (auto& v : qn) v /= total;
  return row_kl(pn, qn);
}

double js_symmetric(const Histogram& p, const Histogram& q) {
  require_same_bins(p, q);
  bool overlap = false;
  for (std::size_t i = 0; i < p.mass.size(); ++i) overlap = overlap || (p.mass[i] > 0.0 && q.mass[i] > 0.0);
  if (!overlap) return std::numeric_limits<double>::infinity();
  return 0.5 * kl_divergence(p, q) + 0.5 * kl_divergence(q, p);
}

double js_mixture(const Histogram& p, const Histogram& q) {
  require_same_bins(p, q);
  const auto pn = normalized(p.mass);
  const auto qn = normalized(q.mass);
  std::vector<double> m(pn.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (pn[i] + qn[i]);
  return 0.5 * row_kl(pn, m) + 0.5 * row_kl(qn, m);
}

double wasserstein1_1d(std::span<const double> p, std::span<const double> q) {
  if (p.empty() || q.empty()) throw ContractError("wasserstein1_1d: empty input");
  std::vector<double> a(p.begin(), p.end()), b(q.begin(), q.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
  }
  return wasserstein1_1d(EmpiricalDist::from_scalars(p), EmpiricalDist::from_scalars(q));
}

double wasserstein1_1d(const EmpiricalDist& p, const EmpiricalDist& q) {
  const auto pv = scalars_of(p);
  const auto qv = scalars_of(q);
  if (p.weights.empty() && q.weights.empty() && pv.size() == qv.size()) return wasserstein1_1d(pv, qv);

  // Integrate |F_p - F_q| over the merged support.
  struct Atom {
    double x;
    double dp;
    double dq;
  };
  std::vector<Atom> atoms;
  atoms.reserve(pv.size() + qv.size());
  for (std::size_t i = 0; i < pv.size(); ++i) {
    atoms.push_back({pv[i], p.weights.empty() ? 1.0 / static_cast<double>(pv.size()) : p.weights[i], 0.0});
  }
  for (std::size_t i = 0; i < qv.size(); ++i) {
    atoms.push_back({qv[i], 0.0, q.weights.empty() ? 1.0 / static_cast<double>(qv.size()) : q.weights[i]});
  }
  std::sort(atoms.begin(), atoms.end(), [](const Atom& l, const Atom& r) { return l.x < r.x; });
  double fp = 0.0, fq = 0.0, total = 0.0;
  for (std::size_t i = 0; i + 1 < atoms.size(); ++i) {
    fp += atoms[i].dp;
    fq += atoms[i].dq;
    total += std::fabs(fp - fq) * (atoms[i + 1].x - atoms[i].x);
  }
  return total;
}

double frechet_distance(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.dim() != b.dim()) {
    throw DimensionError("frechet_distance: dimensions " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
  }
  if (a.cov.size() != a.dim() * a.dim() || b.cov.size() != b.dim() * b.dim()) {
    throw DimensionError("frechet_distance: covariance size does not match mean");
  }
  if (a.mean == b.mean && a.cov == b.cov) return 0.0;
  const Mat s1 = as_mat(a), s2 = as_mat(b);
  const Mat root1 = psd_sqrt(s1, "frechet_distance(first covariance)");
  Mat inner = root1 * s2 * root1;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(inner);
  if (es.info() != Eigen::Success) throw NumericError("frechet_distance: eigendecomposition failed");
  double tr_sqrt = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double lam = es.eigenvalues()[i];
    if (lam < -kNegEigTolerance) {
      throw NumericError("frechet_distance: covariance product is not PSD (eigenvalue " + std::to_string(lam) + ")");
    }
    tr_sqrt += std::sqrt(std::max(lam, 0.0));
  }
  double dmu = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) dmu += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
  const double fd = dmu + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
  return std::max(fd, 0.0);
}

GaussianSummary feature_summary(const std::vector<std::vector<double>>& samples) {
  if (samples.size() < 2) throw ContractError("feature_summary needs at least two samples");
  const std::size_t d = samples.front().size();
  if (d == 0) throw ContractError("feature_summary of zero-dimensional samples");
  Mat x(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() != d) throw ContractError("feature_summary: ragged samples");
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = samples[i][j];
  }
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Mat centered = x.rowwise() - mu;
  Mat cov = (centered.transpose() * centered) / static_cast<double>(samples.size() - 1);
  cov = 0.5 * (cov + cov.transpose());
  GaussianSummary s;
  s.mean.assign(mu.data(), mu.data() + d);
  s.cov.assign(cov.data(), cov.data() + d * d);
  return s;
}

GaussianSummary feature_summary(const Tensor& samples) { return feature_summary(rows_of(samples)); }

double inception_score(const std::vector<std::vector<double>>& cond_probs) {
  validate_prob_rows(cond_probs);
  const std::size_t k = cond_probs.front().size();
  std::vector<double> marginal(k, 0.0);
  for (const auto& row : cond_probs) {
    for (std::size_t j = 0; j < k; ++j) marginal[j] += row[j];
  }
  for (auto& m : marginal) m /= static_cast<double>(cond_probs.size());
  double kl = 0.0;
  for (const auto& row : cond_probs) kl += row_kl(row, marginal);
  // Mean KL to the marginal is a mutual information: nonnegative up to round-off.
  return std::exp(std::max(0.0, kl / static_cast<double>(cond_probs.size())));
}

double inception_score(const Tensor& cond_probs) { return inception_score(rows_of(cond_probs)); }

double ModeCoverage::worst() const {
  return fractions.empty() ? 0.0 : *std::min_element(fractions.begin(), fractions.end());
}

ModeCoverage mode_coverage(const Tensor& samples, std::span<const ModeBall> modes, double floor) {
  if (modes.empty()) throw ContractError("mode_coverage: no modes");
  for (const auto& m : modes) {
    if (!(m.radius > 0.0)) throw ContractError("mode_coverage: radius must be positive");
  }
  ModeCoverage cov;
  cov.fractions.assign(modes.size(), 0.0);
  if (samples.numel() > 0) {
    if (samples.rank() != 2) throw DimensionError("mode_coverage: expected [N×d]");
    const std::size_t n = samples.dim(0), d = samples.dim(1);
    for (std::size_t j = 0; j < modes.size(); ++j) {
      if (modes[j].center.size() != d) throw DimensionError("mode_coverage: mode dimension mismatch");
      const double r2 = modes[j].radius * modes[j].radius;
      std::size_t inside = 0;
      for (std::size_t i = 0; i < n; ++i) {
        double dist2 = 0.0;
        for (std::size_t t = 0; t < d; ++t) {
          const double diff = samples[i * d + t] - modes[j].center[t];
          dist2 += diff * diff;
        }
        if (dist2 <= r2) ++inside;
      }
      cov.fractions[j] = static_cast<double>(inside) / static_cast<double>(n);
    }
  }
  cov.collapsed = cov.worst() < floor;
  return cov;
}

double cycling_index(std::span<const GaussianSummary> epochs, std::size_t lag) {
  const std::size_t t_count = epochs.size();
  if (t_count < 4 || t_count < lag + 2) {
    throw ContractError("cycling_index: " + std::to_string(t_count) + " epochs is too few for lag " +
                        std::to_string(lag));
  }
  double consecutive = 0.0;
  for (std::size_t t = 1; t < t_count; ++t) consecutive += frechet_distance(epochs[t], epochs[t - 1]);
  consecutive /= static_cast<double>(t_count - 1);
  if (consecutive <= 1e-12) return 0.0;

  double revisit = 0.0;
  std::size_t terms = 0;
  for (std::size_t t = lag + 1; t < t_count; ++t) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s + lag < t; ++s) best = std::min(best, frechet_distance(epochs[t], epochs[s]));
    revisit += best;
    ++terms;
  }
  return (revisit / static_cast<double>(terms)) / consecutive;
}

}  // namespace wcgan
