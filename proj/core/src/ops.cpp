#include "wcgan/ops.hpp"

#include <Eigen/Core>
#include <cmath>

#include "wcgan/error.hpp"

namespace wcgan {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap as_matrix(std::span<const double> v, std::size_t rows, std::size_t cols) {
  return ConstMatMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatMap as_matrix(std::vector<double>& v, std::size_t rows, std::size_t cols) {
  return MatMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + " differ");
  }
}

bool needs_grad(std::initializer_list<const Tensor*> ts) {
  for (auto* t : ts) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Elementwise unary op with derivative expressed through input and output.
template <typename Fwd, typename Deriv>
Tensor unary(Graph& g, const char* name, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.numel());
  auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xs[i]);
  auto y = Tensor::make_intermediate(x.shape(), std::move(out), x.requires_grad());
  if (x.requires_grad()) {
    g.record(name, {x}, y, [x, y, deriv](std::span<const double> gy) mutable {
      auto xs = x.data();
      auto ys = y.data();
      std::vector<double> gx(gy.size());
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = gy[i] * deriv(xs[i], ys[i]);
      x.accumulate_grad(gx);
    });
  }
  return y;
}

struct ImageDims {
  std::size_t n, c, h, w;
};

ImageDims image_dims(const char* op, const Tensor& x) {
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2)};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  throw DimensionError(std::string(op) + ": expected [C×H×W] or [N×C×H×W], got " + shape_to_string(x.shape()));
}

Shape image_shape(bool batched, std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  if (batched) return {n, c, h, w};
  return {c, h, w};
}

// cols is [(C·k·k) × (Ho·Wo)]
void im2col(const double* img, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t ho, std::size_t wo, double* cols) {
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = cols + ((ci * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h) &&
                                ix < static_cast<std::ptrdiff_t>(w);
            row[oy * wo + ox] = inside ? img[(ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
                std::size_t pad, std::size_t ho, std::size_t wo, double* img) {
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* row = cols + ((ci * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            img[(ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_to_string(a.shape()) + " by " +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  as_matrix(out, m, n).noalias() = as_matrix(a.data(), m, k) * as_matrix(b.data(), k, n);
  auto y = Tensor::make_intermediate({m, n}, std::move(out), needs_grad({&a, &b}));
  g.record("matmul", {a, b}, y, [a, b, m, k, n](std::span<const double> gy) mutable {
    auto gym = as_matrix(gy, m, n);
    if (a.requires_grad()) {
      std::vector<double> ga(m * k);
      as_matrix(ga, m, k).noalias() = gym * as_matrix(b.data(), k, n).transpose();
      a.accumulate_grad(ga);
    }
    if (b.requires_grad()) {
      std::vector<double> gb(k * n);
      as_matrix(gb, k, n).noalias() = as_matrix(a.data(), m, k).transpose() * gym;
      b.accumulate_grad(gb);
    }
  });
  return y;
}

Tensor linear(Graph& g, const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0) || b.rank() != 1 || b.dim(0) != w.dim(1)) {
    throw DimensionError("linear: input " + shape_to_string(x.shape()) + ", weight " + shape_to_string(w.shape()) +
                         ", bias " + shape_to_string(b.shape()) + " are incompatible");
  }
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  std::vector<double> out(m * n);
  auto om = as_matrix(out, m, n);
  om.noalias() = as_matrix(x.data(), m, k) * as_matrix(w.data(), k, n);
  om.rowwise() += as_matrix(b.data(), 1, n).row(0);
  auto y = Tensor::make_intermediate({m, n}, std::move(out), needs_grad({&x, &w, &b}));
  g.record("linear", {x, w, b}, y, [x, w, b, m, k, n](std::span<const double> gy) mutable {
    auto gym = as_matrix(gy, m, n);
    if (x.requires_grad()) {
      std::vector<double> gx(m * k);
      as_matrix(gx, m, k).noalias() = gym * as_matrix(w.data(), k, n).transpose();
      x.accumulate_grad(gx);
    }
    if (w.requires_grad()) {
      std::vector<double> gw(k * n);
      as_matrix(gw, k, n).noalias() = as_matrix(x.data(), m, k).transpose() * gym;
      w.accumulate_grad(gw);
    }
    if (b.requires_grad()) {
      std::vector<double> gb(n);
      as_matrix(gb, 1, n) = gym.colwise().sum();
      b.accumulate_grad(gb);
    }
  });
  return y;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  auto y = Tensor::make_intermediate(a.shape(), std::move(out), needs_grad({&a, &b}));
  g.record("add", {a, b}, y, [a, b](std::span<const double> gy) mutable {
    if (a.requires_grad()) a.accumulate_grad(gy);
    if (b.requires_grad()) b.accumulate_grad(gy);
  });
  return y;
}

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  auto y = Tensor::make_intermediate(a.shape(), std::move(out), needs_grad({&a, &b}));
  g.record("sub", {a, b}, y, [a, b](std::span<const double> gy) mutable {
    if (a.requires_grad()) a.accumulate_grad(gy);
    if (b.requires_grad()) {
      std::vector<double> gb(gy.begin(), gy.end());
      for (auto& v : gb) v = -v;
      b.accumulate_grad(gb);
    }
  });
  return y;
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  auto y = Tensor::make_intermediate(a.shape(), std::move(out), needs_grad({&a, &b}));
  g.record("mul", {a, b}, y, [a, b](std::span<const double> gy) mutable {
    std::vector<double> tmp(gy.size());
    if (a.requires_grad()) {
      for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i] = gy[i] * b[i];
      a.accumulate_grad(tmp);
    }
    if (b.requires_grad()) {
      for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i] = gy[i] * a[i];
      b.accumulate_grad(tmp);
    }
  });
  return y;
}

Tensor scale(Graph& g, const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  auto y = Tensor::make_intermediate(x.shape(), std::move(out), x.requires_grad());
  g.record("scale", {x}, y, [x, factor](std::span<const double> gy) mutable {
    std::vector<double> gx(gy.size());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = gy[i] * factor;
    x.accumulate_grad(gx);
  });
  return y;
}

Tensor affine(Graph& g, const Tensor& x, double a, double b) {
  return unary(
      g, "affine", x, [a, b](double v) { return a * v + b; }, [a](double, double) { return a; });
}

Tensor sum(Graph& g, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  auto y = Tensor::make_intermediate({1}, {s}, x.requires_grad());
  g.record("sum", {x}, y, [x](std::span<const double> gy) mutable {
    std::vector<double> gx(x.numel(), gy[0]);
    x.accumulate_grad(gx);
  });
  return y;
}

Tensor mean(Graph& g, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double n = static_cast<double>(x.numel());
  auto y = Tensor::make_intermediate({1}, {s / n}, x.requires_grad());
  g.record("mean", {x}, y, [x, n](std::span<const double> gy) mutable {
    std::vector<double> gx(x.numel(), gy[0] / n);
    x.accumulate_grad(gx);
  });
  return y;
}

Tensor abs(Graph& g, const Tensor& x) {
  // Subgradient +1 at zero, so gradcheck can see the kink.
  return unary(
      g, "abs", x, [](double v) { return std::fabs(v); }, [](double v, double) { return v >= 0.0 ? 1.0 : -1.0; });
}

Tensor log(Graph& g, const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw ContractError("log: non-positive input " + std::to_string(v));
  }
  return unary(
      g, "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor clamp(Graph& g, const Tensor& x, double lo, double hi) {
  if (lo > hi) throw ParameterError("clamp: lo > hi");
  return unary(
      g, "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor reshape(Graph& g, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto y = Tensor::make_intermediate(std::move(shape), std::move(out), x.requires_grad());
  g.record("reshape", {x}, y, [x](std::span<const double> gy) mutable { x.accumulate_grad(gy); });
  return y;
}

Tensor flatten(Graph& g, const Tensor& x) {
  if (x.rank() < 1) throw DimensionError("flatten: scalar input");
  const std::size_t n = x.dim(0);
  return reshape(g, x, {n, x.numel() / n});
}

Tensor concat_rows(Graph& g, const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || a.rank() != b.rank() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
    throw DimensionError("concat_rows: " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  Shape shape = a.shape();
  shape[0] += b.dim(0);
  auto y = Tensor::make_intermediate(std::move(shape), std::move(out), needs_grad({&a, &b}));
  g.record("concat_rows", {a, b}, y, [a, b](std::span<const double> gy) mutable {
    if (a.requires_grad()) a.accumulate_grad(gy.first(a.numel()));
    if (b.requires_grad()) b.accumulate_grad(gy.subspan(a.numel()));
  });
  return y;
}

Tensor slice_rows(Graph& g, const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() < 1 || begin > end || end > x.dim(0)) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                         shape_to_string(x.shape()));
  }
  const std::size_t row = x.dim(0) ? x.numel() / x.dim(0) : 0;
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * row),
                          x.data().begin() + static_cast<std::ptrdiff_t>(end * row));
  Shape shape = x.shape();
  shape[0] = end - begin;
  auto y = Tensor::make_intermediate(std::move(shape), std::move(out), x.requires_grad());
  g.record("slice_rows", {x}, y, [x, begin, row](std::span<const double> gy) mutable {
    std::vector<double> gx(x.numel(), 0.0);
    std::copy(gy.begin(), gy.end(), gx.begin() + static_cast<std::ptrdiff_t>(begin * row));
    x.accumulate_grad(gx);
  });
  return y;
}

Tensor conv2d(Graph& g, const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride, std::size_t pad) {
  const auto d = image_dims("conv2d", x);
  if (w.rank() != 4 || w.dim(1) != d.c || w.dim(2) != w.dim(3)) {
    throw DimensionError("conv2d: weight " + shape_to_string(w.shape()) + " does not fit input " +
                         shape_to_string(x.shape()));
  }
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (bias.rank() != 1 || bias.dim(0) != cout) {
    throw DimensionError("conv2d: bias " + shape_to_string(bias.shape()) + " for " + std::to_string(cout) +
                         " filters");
  }
  if (stride < 1) throw ParameterError("conv2d: stride must be >= 1");
  if (d.h + 2 * pad < k || d.w + 2 * pad < k) {
    throw DimensionError("conv2d: kernel " + std::to_string(k) + " larger than padded input " +
                         shape_to_string(x.shape()));
  }
  const std::size_t ho = (d.h + 2 * pad - k) / stride + 1;
  const std::size_t wo = (d.w + 2 * pad - k) / stride + 1;
  const std::size_t ckk = d.c * k * k, hw = ho * wo;
  const bool batched = x.rank() == 4;

  std::vector<double> out(d.n * cout * hw);
  std::vector<double> cols(ckk * hw);
  auto wm = as_matrix(w.data(), cout, ckk);
  auto xs = x.data();
  for (std::size_t n = 0; n < d.n; ++n) {
    im2col(xs.data() + n * d.c * d.h * d.w, d.c, d.h, d.w, k, stride, pad, ho, wo, cols.data());
    MatMap om(out.data() + n * cout * hw, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(hw));
    om.noalias() = wm * as_matrix(cols, ckk, hw);
    om.colwise() += as_matrix(bias.data(), cout, 1).col(0);
  }
  auto y = Tensor::make_intermediate(image_shape(batched, d.n, cout, ho, wo), std::move(out),
                                     needs_grad({&x, &w, &bias}));
  g.record("conv2d", {x, w, bias}, y,
           [x, w, bias, d, cout, k, stride, pad, ho, wo, ckk, hw](std::span<const double> gy) mutable {
             std::vector<double> cols(ckk * hw), gcols(ckk * hw);
             std::vector<double> gw(w.requires_grad() ? cout * ckk : 0, 0.0);
             std::vector<double> gb(bias.requires_grad() ? cout : 0, 0.0);
             std::vector<double> gx(x.requires_grad() ? x.numel() : 0, 0.0);
             auto wm = as_matrix(w.data(), cout, ckk);
             auto xs = x.data();
             for (std::size_t n = 0; n < d.n; ++n) {
               auto gyn = as_matrix(gy.subspan(n * cout * hw, cout * hw), cout, hw);
               if (w.requires_grad()) {
                 im2col(xs.data() + n * d.c * d.h * d.w, d.c, d.h, d.w, k, stride, pad, ho, wo, cols.data());
                 as_matrix(gw, cout, ckk).noalias() += gyn * as_matrix(cols, ckk, hw).transpose();
               }
               if (bias.requires_grad()) {
                 as_matrix(gb, cout, 1).noalias() += gyn.rowwise().sum();
               }
               if (x.requires_grad()) {
                 as_matrix(gcols, ckk, hw).noalias() = wm.transpose() * gyn;
                 col2im_add(gcols.data(), d.c, d.h, d.w, k, stride, pad, ho, wo, gx.data() + n * d.c * d.h * d.w);
               }
             }
             if (w.requires_grad()) w.accumulate_grad(gw);
             if (bias.requires_grad()) bias.accumulate_grad(gb);
             if (x.requires_grad()) x.accumulate_grad(gx);
           });
  return y;
}

Tensor upsample_nearest(Graph& g, const Tensor& x, std::size_t factor) {
  if (factor < 1) throw ParameterError("upsample_nearest: factor must be >= 1");
  const auto d = image_dims("upsample_nearest", x);
  const std::size_t ho = d.h * factor, wo = d.w * factor;
  std::vector<double> out(d.n * d.c * ho * wo);
  auto xs = x.data();
  for (std::size_t p = 0; p < d.n * d.c; ++p) {
    const double* src = xs.data() + p * d.h * d.w;
    double* dst = out.data() + p * ho * wo;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) dst[oy * wo + ox] = src[(oy / factor) * d.w + ox / factor];
    }
  }
  auto y = Tensor::make_intermediate(image_shape(x.rank() == 4, d.n, d.c, ho, wo), std::move(out),
                                     x.requires_grad());
  g.record("upsample_nearest", {x}, y, [x, d, factor, ho, wo](std::span<const double> gy) mutable {
    std::vector<double> gx(x.numel(), 0.0);
    for (std::size_t p = 0; p < d.n * d.c; ++p) {
      const double* src = gy.data() + p * ho * wo;
      double* dst = gx.data() + p * d.h * d.w;
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) dst[(oy / factor) * d.w + ox / factor] += src[oy * wo + ox];
      }
    }
    x.accumulate_grad(gx);
  });
  return y;
}

Tensor batchnorm(Graph& g, const Tensor& x, const Tensor& gamma, const Tensor& beta, const BatchNormOptions& opts,
                 Mode mode, RunningStats& running) {
  if (x.rank() < 2) throw DimensionError("batchnorm: expected [N×C×...], got " + shape_to_string(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t inner = x.numel() / (n * c);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw DimensionError("batchnorm: gamma/beta must be [" + std::to_string(c) + "]");
  }
  if (!(opts.eps > 0.0)) throw ParameterError("batchnorm: eps must be positive");
  if (running.mean.size() != c || running.var.size() != c) {
    throw DimensionError("batchnorm: running stats sized for " + std::to_string(running.mean.size()) +
                         " channels, input has " + std::to_string(c));
  }
  if (mode == Mode::eval && running.batches_tracked == 0) {
    throw StateError("batchnorm: eval mode before any running statistics were accumulated");
  }

  const double count = static_cast<double>(n * inner);
  auto xs = x.data();
  std::vector<double> mu(c), invstd(c);
  if (mode == Mode::train) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = xs.data() + (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) s += p[i];
      }
      const double m = s / count;
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = xs.data() + (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) ss += (p[i] - m) * (p[i] - m);
      }
      const double var = ss / count;
      mu[ch] = m;
      invstd[ch] = 1.0 / std::sqrt(var + opts.eps);
      const double unbiased = count > 1.0 ? ss / (count - 1.0) : var;
      running.mean[ch] = (1.0 - opts.momentum) * running.mean[ch] + opts.momentum * m;
      running.var[ch] = (1.0 - opts.momentum) * running.var[ch] + opts.momentum * unbiased;
    }
    ++running.batches_tracked;
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = running.mean[ch];
      invstd[ch] = 1.0 / std::sqrt(running.var[ch] + opts.eps);
    }
  }

  std::vector<double> xhat(x.numel()), out(x.numel());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        xhat[off + i] = (xs[off + i] - mu[ch]) * invstd[ch];
        out[off + i] = gamma[ch] * xhat[off + i] + beta[ch];
      }
    }
  }
  auto y = Tensor::make_intermediate(x.shape(), std::move(out), needs_grad({&x, &gamma, &beta}));
  const bool train = mode == Mode::train;
  g.record("batchnorm", {x, gamma, beta}, y,
           [x, gamma, beta, xhat = std::move(xhat), invstd, n, c, inner, count,
            train](std::span<const double> gy) mutable {
             std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
             for (std::size_t b = 0; b < n; ++b) {
               for (std::size_t ch = 0; ch < c; ++ch) {
                 const std::size_t off = (b * c + ch) * inner;
                 for (std::size_t i = 0; i < inner; ++i) {
                   sum_dy[ch] += gy[off + i];
                   sum_dy_xhat[ch] += gy[off + i] * xhat[off + i];
                 }
               }
             }
             if (gamma.requires_grad()) gamma.accumulate_grad(sum_dy_xhat);
             if (beta.requires_grad()) beta.accumulate_grad(sum_dy);
             if (!x.requires_grad()) return;
             std::vector<double> gx(x.numel());
             for (std::size_t b = 0; b < n; ++b) {
               for (std::size_t ch = 0; ch < c; ++ch) {
                 const std::size_t off = (b * c + ch) * inner;
                 const double gm = gamma[ch] * invstd[ch];
                 for (std::size_t i = 0; i < inner; ++i) {
                   if (train) {
                     gx[off + i] =
                         gm * (gy[off + i] - sum_dy[ch] / count - xhat[off + i] * sum_dy_xhat[ch] / count);
                   } else {
                     gx[off + i] = gm * gy[off + i];
                   }
                 }
               }
             }
             x.accumulate_grad(gx);
           });
  return y;
}

Tensor leaky_relu(Graph& g, const Tensor& x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw ParameterError("leaky_relu: slope must lie in (0,1)");
  return unary(
      g, "leaky_relu", x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor tanh(Graph& g, const Tensor& x) {
  return unary(
      g, "tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(Graph& g, const Tensor& x) {
  return unary(
      g, "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor activation(Graph& g, const Tensor& x, const Activation& act) {
  switch (act.kind) {
    case ActivationKind::leaky_relu:
      return leaky_relu(g, x, act.slope);
    case ActivationKind::tanh:
      return tanh(g, x);
    case ActivationKind::sigmoid:
      return sigmoid(g, x);
    case ActivationKind::none:
      break;
  }
  return x;
}

Tensor dropout(Graph& g, const Tensor& x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout: rate must lie in [0,1)");
  if (mode == Mode::eval || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = rng.bernoulli(rate) ? 0.0 : keep_scale;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  auto y = Tensor::make_intermediate(x.shape(), std::move(out), x.requires_grad());
  g.record("dropout", {x}, y, [x, mask = std::move(mask)](std::span<const double> gy) mutable {
    std::vector<double> gx(gy.size());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = gy[i] * mask[i];
    x.accumulate_grad(gx);
  });
  return y;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("softmax: expected [N×K], got " + shape_to_string(logits.shape()));
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<double> out(logits.numel());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.data().data() + i * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      out[i * k + j] = std::exp(row[j] - mx);
      s += out[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= s;
  }
  return Tensor(logits.shape(), std::move(out));
}

Tensor softmax_cross_entropy(Graph& g, const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("softmax_cross_entropy: logits " + shape_to_string(logits.shape()) + " with " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= k) throw ContractError("softmax_cross_entropy: label out of range");
  }
  auto probs = softmax(logits);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    loss -= std::log(std::max(probs[i * k + static_cast<std::size_t>(labels[i])], 1e-300));
  }
  loss /= static_cast<double>(n);
  auto y = Tensor::make_intermediate({1}, {loss}, logits.requires_grad());
  std::vector<int> lab(labels.begin(), labels.end());
  g.record("softmax_cross_entropy", {logits}, y,
           [logits, probs, lab = std::move(lab), n, k](std::span<const double> gy) mutable {
             std::vector<double> gx(probs.data().begin(), probs.data().end());
             for (std::size_t i = 0; i < n; ++i) gx[i * k + static_cast<std::size_t>(lab[i])] -= 1.0;
             const double f = gy[0] / static_cast<double>(n);
             for (auto& v : gx) v *= f;
             logits.accumulate_grad(gx);
           });
  return y;
}

}  // namespace wcgan
