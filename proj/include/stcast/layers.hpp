#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <vector>

#include "stcast/tensor.hpp"

namespace stcast::nn {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// Unrolls one C×H×W sample into a (C·k·k) × (H·W) patch matrix with zero
// padding (k−1)/2.
inline void im2col(const double* x, std::size_t channels, std::size_t h, std::size_t w,
                   std::size_t k, double* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = cols + ((c * k + ki) * k + kj) * hw;
        const std::ptrdiff_t di = static_cast<std::ptrdiff_t>(ki) - pad;
        const std::ptrdiff_t dj = static_cast<std::ptrdiff_t>(kj) - pad;
        for (std::size_t i = 0; i < h; ++i) {
          const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i) + di;
          double* dst = row + i * w;
          if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + w, 0.0);
            continue;
          }
          const double* src = x + (c * h + static_cast<std::size_t>(si)) * w;
          for (std::size_t j = 0; j < w; ++j) {
            const std::ptrdiff_t sj = static_cast<std::ptrdiff_t>(j) + dj;
            dst[j] = (sj < 0 || sj >= static_cast<std::ptrdiff_t>(w))
                         ? 0.0
                         : src[static_cast<std::size_t>(sj)];
          }
        }
      }
}

inline void col2im(const double* cols, std::size_t channels, std::size_t h, std::size_t w,
                   std::size_t k, double* dx) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t ki = 0; ki < k; ++ki)
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = cols + ((c * k + ki) * k + kj) * hw;
        const std::ptrdiff_t di = static_cast<std::ptrdiff_t>(ki) - pad;
        const std::ptrdiff_t dj = static_cast<std::ptrdiff_t>(kj) - pad;
        for (std::size_t i = 0; i < h; ++i) {
          const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i) + di;
          if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) continue;
          double* dst = dx + (c * h + static_cast<std::size_t>(si)) * w;
          const double* src = row + i * w;
          for (std::size_t j = 0; j < w; ++j) {
            const std::ptrdiff_t sj = static_cast<std::ptrdiff_t>(j) + dj;
            if (sj >= 0 && sj < static_cast<std::ptrdiff_t>(w))
              dst[static_cast<std::size_t>(sj)] += src[j];
          }
        }
      }
}

inline void check_conv_shapes(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (x.rank() != 4) throw ShapeError("conv2d: input must be N×C×H×W");
  if (kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3) || kernel.dim(2) % 2 == 0)
    throw ShapeError("conv2d: kernel must be Cout×Cin×k×k with odd k");
  if (kernel.dim(1) != x.dim(1))
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                     " input channels, input has " + std::to_string(x.dim(1)));
  if (bias.shape != Shape{kernel.dim(0)}) throw ShapeError("conv2d: bias must have Cout entries");
}

}  // namespace detail

// Same-padded stride-1 cross-correlation. x: N×Cin×H×W, kernel: Cout×Cin×k×k.
inline Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  detail::check_conv_shapes(x, kernel, bias);
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = kernel.dim(0), k = kernel.dim(2), hw = h * w, kk = cin * k * k;
  Tensor y({n, cout, h, w});
  detail::ConstMapMat wm(kernel.ptr(), static_cast<Eigen::Index>(cout),
                         static_cast<Eigen::Index>(kk));
  Eigen::Map<const Eigen::VectorXd> bv(bias.ptr(), static_cast<Eigen::Index>(cout));
  std::vector<double> cols(k == 1 ? 0 : kk * hw);
  for (std::size_t s = 0; s < n; ++s) {
    const double* xs = x.ptr() + s * cin * hw;
    if (k != 1) detail::im2col(xs, cin, h, w, k, cols.data());
    detail::ConstMapMat cm(k == 1 ? xs : cols.data(), static_cast<Eigen::Index>(kk),
                           static_cast<Eigen::Index>(hw));
    detail::MapMat ym(y.ptr() + s * cout * hw, static_cast<Eigen::Index>(cout),
                      static_cast<Eigen::Index>(hw));
    ym.noalias() = wm * cm;
    ym.colwise() += bv;
  }
  return y;
}

// Accumulates kernel and bias gradients into dkernel/dbias; returns dx when
// `want_dx`, otherwise an empty tensor.
inline Tensor conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& dy,
                              Tensor& dkernel, Tensor& dbias, bool want_dx = true) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = kernel.dim(0), k = kernel.dim(2), hw = h * w, kk = cin * k * k;
  require_shape(dy, {n, cout, h, w}, "conv2d backward dy");
  detail::ConstMapMat wm(kernel.ptr(), static_cast<Eigen::Index>(cout),
                         static_cast<Eigen::Index>(kk));
  detail::MapMat dwm(dkernel.ptr(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(kk));
  Tensor dx;
  if (want_dx) dx = Tensor({n, cin, h, w});
  std::vector<double> cols(k == 1 ? 0 : kk * hw);
  std::vector<double> dcols(want_dx && k != 1 ? kk * hw : 0);
  for (std::size_t s = 0; s < n; ++s) {
    const double* xs = x.ptr() + s * cin * hw;
    if (k != 1) detail::im2col(xs, cin, h, w, k, cols.data());
    detail::ConstMapMat cm(k == 1 ? xs : cols.data(), static_cast<Eigen::Index>(kk),
                           static_cast<Eigen::Index>(hw));
    detail::ConstMapMat dym(dy.ptr() + s * cout * hw, static_cast<Eigen::Index>(cout),
                            static_cast<Eigen::Index>(hw));
    dwm.noalias() += dym * cm.transpose();
    // Plain loop: Eigen's vectorized reductions round differently depending
    // on pointer alignment, which would break run-to-run reproducibility.
    for (std::size_t o = 0; o < cout; ++o) {
      const double* row = dy.ptr() + (s * cout + o) * hw;
      double acc = 0;
      for (std::size_t p = 0; p < hw; ++p) acc += row[p];
      dbias[o] += acc;
    }
    if (!want_dx) continue;
    if (k == 1) {
      detail::MapMat dxm(dx.ptr() + s * cin * hw, static_cast<Eigen::Index>(kk),
                         static_cast<Eigen::Index>(hw));
      dxm.noalias() = wm.transpose() * dym;
    } else {
      detail::MapMat dcm(dcols.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(hw));
      dcm.noalias() = wm.transpose() * dym;
      detail::col2im(dcols.data(), cin, h, w, k, dx.ptr() + s * cin * hw);
    }
  }
  return dx;
}

// Fully connected: x N×In, weight Out×In, bias Out → N×Out.
inline Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || weight.dim(1) != x.dim(1) ||
      bias.shape != Shape{weight.dim(0)})
    throw ShapeError("dense: shape mismatch");
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(x.dim(1));
  const auto out = static_cast<Eigen::Index>(weight.dim(0));
  Tensor y({x.dim(0), weight.dim(0)});
  detail::ConstMapMat xm(x.ptr(), n, in);
  detail::ConstMapMat wm(weight.ptr(), out, in);
  detail::MapMat ym(y.ptr(), n, out);
  ym.noalias() = xm * wm.transpose();
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.ptr(), out);
  return y;
}

inline Tensor dense_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                             Tensor& dweight, Tensor& dbias, bool want_dx = true) {
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(x.dim(1));
  const auto out = static_cast<Eigen::Index>(weight.dim(0));
  require_shape(dy, {x.dim(0), weight.dim(0)}, "dense backward dy");
  detail::ConstMapMat xm(x.ptr(), n, in);
  detail::ConstMapMat wm(weight.ptr(), out, in);
  detail::ConstMapMat dym(dy.ptr(), n, out);
  detail::MapMat(dweight.ptr(), out, in).noalias() += dym.transpose() * xm;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index o = 0; o < out; ++o) dbias.data[static_cast<std::size_t>(o)] += dym(i, o);
  Tensor dx;
  if (want_dx) {
    dx = Tensor({x.dim(0), x.dim(1)});
    detail::MapMat(dx.ptr(), n, in).noalias() = dym * wm;
  }
  return dx;
}

inline Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

// Subgradient 0 at the kink.
inline Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(x.data[i] > 0.0)) dx.data[i] = 0.0;
  return dx;
}

inline Tensor tanh_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = std::tanh(v);
  return y;
}

inline Tensor tanh_backward(const Tensor& y, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= 1.0 - y.data[i] * y.data[i];
  return dx;
}

// Per-channel batch normalization over N, H, W.
struct BatchNormCache {
  Tensor xhat;
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<double> inv_std;
  bool training = true;
};

inline constexpr double kBatchNormEps = 1e-5;

inline Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                const Tensor& running_mean, const Tensor& running_var,
                                bool training, BatchNormCache& cache) {
  if (x.rank() != 4) throw ShapeError("batchnorm: input must be N×C×H×W");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.shape != Shape{c} || beta.shape != Shape{c}) throw ShapeError("batchnorm: parameter shape");
  cache.training = training;
  cache.mean.assign(c, 0.0);
  cache.var.assign(c, 0.0);
  cache.inv_std.assign(c, 0.0);
  const double m = static_cast<double>(n * hw);
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (training) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = x.ptr() + (i * c + ch) * hw;
        for (std::size_t j = 0; j < hw; ++j) s += p[j];
      }
      const double mu = s / m;
      double v = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = x.ptr() + (i * c + ch) * hw;
        for (std::size_t j = 0; j < hw; ++j) v += (p[j] - mu) * (p[j] - mu);
      }
      cache.mean[ch] = mu;
      cache.var[ch] = v / m;
    } else {
      cache.mean[ch] = running_mean[ch];
      cache.var[ch] = running_var[ch];
    }
    cache.inv_std[ch] = 1.0 / std::sqrt(cache.var[ch] + kBatchNormEps);
  }
  cache.xhat = Tensor(x.shape);
  Tensor y(x.shape);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (i * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) {
        const double xh = (x.data[off + j] - cache.mean[ch]) * cache.inv_std[ch];
        cache.xhat.data[off + j] = xh;
        y.data[off + j] = gamma[ch] * xh + beta[ch];
      }
    }
  return y;
}

inline Tensor batchnorm_backward(const Tensor& gamma, const BatchNormCache& cache, const Tensor& dy,
                                 Tensor& dgamma, Tensor& dbeta) {
  const std::size_t n = dy.dim(0), c = dy.dim(1), hw = dy.dim(2) * dy.dim(3);
  const double m = static_cast<double>(n * hw);
  Tensor dx(dy.shape);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0, sum_dy_xhat = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) {
        sum_dy += dy.data[off + j];
        sum_dy_xhat += dy.data[off + j] * cache.xhat.data[off + j];
      }
    }
    dgamma[ch] += sum_dy_xhat;
    dbeta[ch] += sum_dy;
    const double g = gamma[ch] * cache.inv_std[ch];
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) {
        dx.data[off + j] =
            cache.training
                ? g * (dy.data[off + j] - sum_dy / m - cache.xhat.data[off + j] * sum_dy_xhat / m)
                : g * dy.data[off + j];
      }
    }
  }
  return dx;
}

}  // namespace stcast::nn
