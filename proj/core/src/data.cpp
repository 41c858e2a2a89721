#include "wcgan/data.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <numbers>

#include "wcgan/error.hpp"
#include "wcgan/rng.hpp"

namespace wcgan {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Mat cov_matrix(const MixtureComponent& c, std::size_t dim) {
  return Eigen::Map<const Mat>(c.cov.data(), static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
}

// Symmetric square root factor L with L L^T = cov; tolerates singular covariances.
Mat psd_factor(const Mat& cov) {
  Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  Eigen::VectorXd vals = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * vals.asDiagonal();
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint8_t to_byte(double v) {
  const double scaled = std::round((v + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

}  // namespace

Shape ClassShard::sample_shape() const {
  if (size() == 0) return {};
  return Shape(samples.shape().begin() + 1, samples.shape().end());
}

void MixtureSpec::validate() const {
  if (dim < 1) throw SpecError("mixture dimension must be >= 1");
  if (classes.empty()) throw SpecError("mixture has no classes");
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const auto& comps = classes[k];
    if (comps.empty()) throw SpecError("class " + std::to_string(k) + " has no components");
    double total = 0.0;
    for (const auto& c : comps) {
      if (c.mean.size() != dim || c.cov.size() != dim * dim) {
        throw SpecError("class " + std::to_string(k) + ": component dimensions do not match " + std::to_string(dim));
      }
      if (!(c.weight >= 0.0)) throw SpecError("class " + std::to_string(k) + ": negative component weight");
      total += c.weight;
      const Mat cov = cov_matrix(c, dim);
      if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
        throw SpecError("class " + std::to_string(k) + ": covariance is not symmetric");
      }
      Eigen::SelfAdjointEigenSolver<Mat> es(cov);
      if (es.eigenvalues().minCoeff() < -1e-10) throw SpecError("class " + std::to_string(k) + ": covariance is not PSD");
    }
    if (std::fabs(total - 1.0) > 1e-9) throw SpecError("class " + std::to_string(k) + ": weights do not sum to 1");
  }
}

MixtureSpec ring_mixture(std::size_t num_classes, std::size_t modes_per_class, double class_radius,
                         double mode_offset, double sigma, std::uint64_t seed) {
  if (num_classes < 1 || modes_per_class < 1) throw SpecError("ring mixture needs >= 1 class and mode");
  if (!(sigma >= 0.0)) throw SpecError("ring mixture sigma must be >= 0");
  MixtureSpec spec;
  spec.dim = 2;
  spec.seed = seed;
  const double pi = std::numbers::pi;
  for (std::size_t k = 0; k < num_classes; ++k) {
    const double theta = 2.0 * pi * static_cast<double>(k) / static_cast<double>(num_classes);
    const double cx = class_radius * std::cos(theta), cy = class_radius * std::sin(theta);
    std::vector<MixtureComponent> comps;
    for (std::size_t j = 0; j < modes_per_class; ++j) {
      // Modes spread evenly around the class center, first one along the
      // tangent of the class circle.
      const double phi = theta + pi / 2.0 + 2.0 * pi * static_cast<double>(j) / static_cast<double>(modes_per_class);
      MixtureComponent c;
      c.weight = 1.0 / static_cast<double>(modes_per_class);
      c.mean = {cx + mode_offset * std::cos(phi), cy + mode_offset * std::sin(phi)};
      c.cov = {sigma * sigma, 0.0, 0.0, sigma * sigma};
      comps.push_back(std::move(c));
    }
    spec.classes.push_back(std::move(comps));
  }
  spec.validate();
  return spec;
}

std::vector<ClassShard> synth_conditional_mixture(const MixtureSpec& spec, std::size_t n_per_class) {
  spec.validate();
  if (n_per_class < 1) throw SpecError("n_per_class must be >= 1");
  const std::size_t d = spec.dim;
  std::vector<ClassShard> shards;
  for (std::size_t k = 0; k < spec.classes.size(); ++k) {
    const auto& comps = spec.classes[k];
    std::vector<Mat> factors;
    std::vector<double> cumulative;
    double acc = 0.0;
    for (const auto& c : comps) {
      factors.push_back(psd_factor(cov_matrix(c, d)));
      acc += c.weight;
      cumulative.push_back(acc);
    }
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(k)));
    std::vector<double> values(n_per_class * d);
    Eigen::VectorXd eps(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const double u = rng.uniform() * acc;
      std::size_t j = 0;
      while (j + 1 < comps.size() && u >= cumulative[j]) ++j;
      for (std::size_t t = 0; t < d; ++t) eps[static_cast<Eigen::Index>(t)] = rng.normal();
      const Eigen::VectorXd x = factors[j] * eps;
      for (std::size_t t = 0; t < d; ++t) {
        values[i * d + t] = std::clamp(comps[j].mean[t] + x[static_cast<Eigen::Index>(t)], -1.0, 1.0);
      }
    }
    shards.push_back({static_cast<int>(k), Tensor({n_per_class, d}, std::move(values)), Normalization::identity()});
  }
  return shards;
}

std::vector<ModeBall> ground_truth_modes(const MixtureSpec& spec, int label, double n_sigma) {
  if (label < 0 || static_cast<std::size_t>(label) >= spec.classes.size()) {
    throw ContractError("no mixture class " + std::to_string(label));
  }
  std::vector<ModeBall> balls;
  for (const auto& c : spec.classes[static_cast<std::size_t>(label)]) {
    Eigen::SelfAdjointEigenSolver<Mat> es(cov_matrix(c, spec.dim));
    const double sd = std::sqrt(std::max(es.eigenvalues().maxCoeff(), 0.0));
    balls.push_back({c.mean, n_sigma * sd});
  }
  return balls;
}

GaussianSummary ground_truth_summary(const MixtureSpec& spec, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= spec.classes.size()) {
    throw ContractError("no mixture class " + std::to_string(label));
  }
  const std::size_t d = spec.dim;
  const auto& comps = spec.classes[static_cast<std::size_t>(label)];
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  Mat second = Mat::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (const auto& c : comps) {
    Eigen::Map<const Eigen::VectorXd> m(c.mean.data(), static_cast<Eigen::Index>(d));
    mu += c.weight * m;
    second += c.weight * (cov_matrix(c, d) + m * m.transpose());
  }
  const Mat cov = second - mu * mu.transpose();
  GaussianSummary s;
  s.mean.assign(mu.data(), mu.data() + d);
  s.cov.assign(cov.data(), cov.data() + d * d);
  return s;
}

std::size_t cifar_record_size(CifarLayout layout) {
  return (layout == CifarLayout::cifar10 ? 1 : 2) + kCifarPixels;
}

std::vector<CifarRecord> read_cifar_records(const std::filesystem::path& path, CifarLayout layout) {
  const auto bytes = read_file(path);
  const std::size_t rec = cifar_record_size(layout);
  if (bytes.size() % rec != 0) {
    throw FormatError("'" + path.string() + "' is " + std::to_string(bytes.size()) +
                      " bytes, not a whole number of " + std::to_string(rec) + "-byte records (truncated?)");
  }
  std::vector<CifarRecord> out(bytes.size() / rec);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint8_t* p = bytes.data() + i * rec;
    if (layout == CifarLayout::cifar100) {
      out[i].coarse_label = p[0];
      out[i].label = p[1];
      p += 2;
    } else {
      out[i].label = p[0];
      p += 1;
    }
    std::copy(p, p + kCifarPixels, out[i].pixels.begin());
  }
  return out;
}

void write_cifar_records(const std::filesystem::path& path, std::span<const CifarRecord> records,
                         CifarLayout layout) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (const auto& r : records) {
    if (layout == CifarLayout::cifar100) out.put(static_cast<char>(r.coarse_label));
    out.put(static_cast<char>(r.label));
    out.write(reinterpret_cast<const char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size()));
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<ClassShard> load_cifar_binary(const std::filesystem::path& path, std::size_t expected_classes,
                                          std::optional<CifarLayout> layout) {
  if (expected_classes < 1) throw ContractError("expected_classes must be >= 1");
  const auto lay = layout.value_or(expected_classes == 100 ? CifarLayout::cifar100 : CifarLayout::cifar10);
  const auto records = read_cifar_records(path, lay);
  const auto norm = Normalization::bytes();
  std::vector<double> values(records.size() * kCifarPixels);
  std::vector<int> labels;
  labels.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].label >= expected_classes) {
      throw FormatError("record " + std::to_string(i) + " has label " + std::to_string(records[i].label) +
                        ", expected fewer than " + std::to_string(expected_classes));
    }
    labels.push_back(records[i].label);
    for (std::size_t j = 0; j < kCifarPixels; ++j) values[i * kCifarPixels + j] = norm.apply(records[i].pixels[j]);
  }
  if (records.empty()) throw FormatError("'" + path.string() + "' holds no records");
  Tensor all({records.size(), 3, 32, 32}, std::move(values));
  return shard_by_label(all, labels, expected_classes, norm).shards;
}

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
  if (image.rank() != 3) throw DimensionError("encode_ppm: expected [C×H×W], got " + shape_to_string(image.shape()));
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (c != 1 && c != 3) throw ContractError("encode_ppm: unsupported channel count " + std::to_string(c));
  const std::string header = std::string(c == 3 ? "P6" : "P5") + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + c * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) out.push_back(to_byte(image[(ch * h + y) * w + x]));
    }
  }
  return out;
}

void write_ppm(const Tensor& image, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ShardResult shard_by_label(const Tensor& samples, std::span<const int> labels, std::size_t num_classes,
                           Normalization normalization) {
  if (samples.rank() < 1 || samples.dim(0) != labels.size()) {
    throw DimensionError("shard_by_label: " + std::to_string(labels.size()) + " labels for samples " +
                         shape_to_string(samples.shape()));
  }
  std::vector<std::vector<std::size_t>> rows(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ContractError("shard_by_label: label " + std::to_string(labels[i]) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
    rows[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  ShardResult result;
  for (std::size_t k = 0; k < num_classes; ++k) {
    ClassShard shard;
    shard.label = static_cast<int>(k);
    shard.normalization = normalization;
    if (rows[k].empty()) {
      result.empty_labels.push_back(static_cast<int>(k));
    } else {
      shard.samples = gather_rows(samples, rows[k]);
    }
    result.shards.push_back(std::move(shard));
  }
  return result;
}

Tensor gather_rows(const Tensor& samples, std::span<const std::size_t> indices) {
  const std::size_t row = samples.numel() / samples.dim(0);
  std::vector<double> out(indices.size() * row);
  auto src = samples.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= samples.dim(0)) throw DimensionError("gather_rows: index out of range");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(indices[i] * row), row,
                out.begin() + static_cast<std::ptrdiff_t>(i * row));
  }
  Shape shape = samples.shape();
  shape[0] = indices.size();
  return Tensor(std::move(shape), std::move(out));
}

}  // namespace wcgan
