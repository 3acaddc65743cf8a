#include "emo/kernels.hpp"

#include <Eigen/Core>
#include <vector>

#include "emo/error.hpp"

namespace emo::kernels {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvGeometry {
  std::size_t c, h, w, k, stride, pad, oh, ow;
  std::size_t rows() const { return c * k * k; }
  std::size_t cols() const { return oh * ow; }
  // A 1x1, stride-1, unpadded convolution reads the input plane directly.
  bool direct() const { return k == 1 && stride == 1 && pad == 0; }
};

ConvGeometry geometry(const Shape4& in, std::size_t k, std::size_t stride,
                      std::size_t pad) {
  return {in.c,   in.h,  in.w, k, stride, pad,
          conv_out_extent(in.h, k, stride, pad),
          conv_out_extent(in.w, k, stride, pad)};
}

// Valid output index range [lo, hi) such that o*stride + kk - pad lies in
// [0, extent).
void valid_range(std::size_t extent, std::size_t out_extent, std::size_t kk,
                 std::size_t stride, std::size_t pad, std::size_t& lo,
                 std::size_t& hi) {
  lo = kk >= pad ? 0 : (pad - kk + stride - 1) / stride;
  // o*stride + kk - pad <= extent - 1
  if (extent + pad < kk + 1) {
    hi = 0;
  } else {
    hi = std::min(out_extent, (extent + pad - kk - 1) / stride + 1);
  }
  if (lo > hi) lo = hi;
}

void im2col(const double* in, const ConvGeometry& g, double* cols) {
  const std::size_t p = g.cols();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((c * g.k + ky) * g.k + kx) * p;
        std::fill(row, row + p, 0.0);
        std::size_t y0, y1, x0, x1;
        valid_range(g.h, g.oh, ky, g.stride, g.pad, y0, y1);
        valid_range(g.w, g.ow, kx, g.stride, g.pad, x0, x1);
        for (std::size_t y = y0; y < y1; ++y) {
          const double* src = in + (c * g.h + y * g.stride + ky - g.pad) * g.w;
          double* dst = row + y * g.ow;
          for (std::size_t x = x0; x < x1; ++x) {
            dst[x] = src[x * g.stride + kx - g.pad];
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeometry& g, double* in) {
  const std::size_t p = g.cols();
  std::fill(in, in + g.c * g.h * g.w, 0.0);
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((c * g.k + ky) * g.k + kx) * p;
        std::size_t y0, y1, x0, x1;
        valid_range(g.h, g.oh, ky, g.stride, g.pad, y0, y1);
        valid_range(g.w, g.ow, kx, g.stride, g.pad, x0, x1);
        for (std::size_t y = y0; y < y1; ++y) {
          double* dst = in + (c * g.h + y * g.stride + ky - g.pad) * g.w;
          const double* src = row + y * g.ow;
          for (std::size_t x = x0; x < x1; ++x) {
            dst[x * g.stride + kx - g.pad] += src[x];
          }
        }
      }
    }
  }
}

void check_conv(const Tensor& input, const Tensor& weights) {
  const Shape4& ws = weights.shape();
  if (ws.c != input.shape().c) {
    throw ShapeError("conv2d: weight in_c " + std::to_string(ws.c) +
                     " != input channels " + std::to_string(input.shape().c));
  }
  if (ws.h != ws.w) throw ShapeError("conv2d: kernel must be square");
}

void check_depthwise(const Tensor& input, const Tensor& weights) {
  const Shape4& ws = weights.shape();
  if (ws.n != input.shape().c || ws.c != 1 || ws.h != ws.w) {
    throw ShapeError("depthwise: weights " + ws.str() +
                     " incompatible with input " + input.shape().str());
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weights,
                      const Tensor* bias, std::size_t stride,
                      std::size_t pad) {
  check_conv(input, weights);
  const Shape4& is = input.shape();
  const std::size_t out_c = weights.shape().n;
  const ConvGeometry g = geometry(is, weights.shape().h, stride, pad);
  if (bias && bias->size() != out_c) {
    throw ShapeError("conv2d: bias length mismatch");
  }

  Tensor out({is.n, out_c, g.oh, g.ow});
  std::vector<double> cols(g.direct() ? 0 : g.rows() * g.cols());
  ConstMapMat w(weights.data().data(), static_cast<Eigen::Index>(out_c),
                static_cast<Eigen::Index>(g.rows()));
  for (std::size_t n = 0; n < is.n; ++n) {
    const double* src = input.sample(n);
    if (!g.direct()) {
      im2col(src, g, cols.data());
      src = cols.data();
    }
    ConstMapMat x(src, static_cast<Eigen::Index>(g.rows()),
                  static_cast<Eigen::Index>(g.cols()));
    MapMat y(out.sample(n), static_cast<Eigen::Index>(out_c),
             static_cast<Eigen::Index>(g.cols()));
    y.noalias() = w * x;
    if (bias) {
      for (std::size_t o = 0; o < out_c; ++o) {
        y.row(static_cast<Eigen::Index>(o)).array() += (*bias)[o];
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& d_output, std::size_t stride,
                          std::size_t pad, bool with_bias) {
  check_conv(input, weights);
  const Shape4& is = input.shape();
  const std::size_t out_c = weights.shape().n;
  const ConvGeometry g = geometry(is, weights.shape().h, stride, pad);
  if (d_output.shape() != Shape4{is.n, out_c, g.oh, g.ow}) {
    throw ShapeError("conv2d backward: d_output shape " +
                     d_output.shape().str() + " does not match forward");
  }

  ConvGrads grads{Tensor(is), Tensor(weights.shape()), Tensor()};
  if (with_bias) grads.d_bias = Tensor({1, out_c, 1, 1});

  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols_n = static_cast<Eigen::Index>(g.cols());
  const auto oc = static_cast<Eigen::Index>(out_c);
  ConstMapMat w(weights.data().data(), oc, rows);
  MapMat dw(grads.d_weights.data().data(), oc, rows);

  std::vector<double> cols(g.direct() ? 0 : g.rows() * g.cols());
  std::vector<double> d_cols(g.direct() ? 0 : g.rows() * g.cols());
  for (std::size_t n = 0; n < is.n; ++n) {
    const double* src = input.sample(n);
    if (!g.direct()) {
      im2col(src, g, cols.data());
      src = cols.data();
    }
    ConstMapMat x(src, rows, cols_n);
    ConstMapMat dy(d_output.sample(n), oc, cols_n);
    dw.noalias() += dy * x.transpose();
    if (with_bias) {
      // Plain loop: Eigen's vectorized sum() peels by address alignment,
      // which would make the summation order depend on the allocation.
      const double* row = d_output.sample(n);
      for (std::size_t o = 0; o < out_c; ++o, row += g.cols()) {
        double s = 0.0;
        for (std::size_t i = 0; i < g.cols(); ++i) s += row[i];
        grads.d_bias[o] += s;
      }
    }
    if (g.direct()) {
      MapMat dx(grads.d_input.sample(n), rows, cols_n);
      dx.noalias() = w.transpose() * dy;
    } else {
      MapMat dc(d_cols.data(), rows, cols_n);
      dc.noalias() = w.transpose() * dy;
      col2im(d_cols.data(), g, grads.d_input.sample(n));
    }
  }
  return grads;
}

Tensor depthwise_forward(const Tensor& input, const Tensor& weights,
                         std::size_t stride, std::size_t pad) {
  check_depthwise(input, weights);
  const Shape4& is = input.shape();
  const std::size_t k = weights.shape().h;
  const std::size_t oh = conv_out_extent(is.h, k, stride, pad);
  const std::size_t ow = conv_out_extent(is.w, k, stride, pad);

  Tensor out({is.n, is.c, oh, ow});
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t c = 0; c < is.c; ++c) {
      const double* in = input.sample(n) + c * is.plane();
      double* o = out.sample(n) + c * oh * ow;
      const double* f = weights.data().data() + c * k * k;
      for (std::size_t ky = 0; ky < k; ++ky) {
        std::size_t y0, y1;
        valid_range(is.h, oh, ky, stride, pad, y0, y1);
        for (std::size_t kx = 0; kx < k; ++kx) {
          std::size_t x0, x1;
          valid_range(is.w, ow, kx, stride, pad, x0, x1);
          const double wv = f[ky * k + kx];
          for (std::size_t y = y0; y < y1; ++y) {
            const double* src = in + (y * stride + ky - pad) * is.w;
            double* dst = o + y * ow;
            for (std::size_t x = x0; x < x1; ++x) {
              dst[x] += wv * src[x * stride + kx - pad];
            }
          }
        }
      }
    }
  }
  return out;
}

ConvGrads depthwise_backward(const Tensor& input, const Tensor& weights,
                             const Tensor& d_output, std::size_t stride,
                             std::size_t pad) {
  check_depthwise(input, weights);
  const Shape4& is = input.shape();
  const std::size_t k = weights.shape().h;
  const std::size_t oh = conv_out_extent(is.h, k, stride, pad);
  const std::size_t ow = conv_out_extent(is.w, k, stride, pad);
  if (d_output.shape() != Shape4{is.n, is.c, oh, ow}) {
    throw ShapeError("depthwise backward: d_output shape " +
                     d_output.shape().str() + " does not match forward");
  }

  ConvGrads grads{Tensor(is), Tensor(weights.shape()), Tensor()};
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t c = 0; c < is.c; ++c) {
      const double* in = input.sample(n) + c * is.plane();
      double* din = grads.d_input.sample(n) + c * is.plane();
      const double* dy = d_output.sample(n) + c * oh * ow;
      const double* f = weights.data().data() + c * k * k;
      double* df = grads.d_weights.data().data() + c * k * k;
      for (std::size_t ky = 0; ky < k; ++ky) {
        std::size_t y0, y1;
        valid_range(is.h, oh, ky, stride, pad, y0, y1);
        for (std::size_t kx = 0; kx < k; ++kx) {
          std::size_t x0, x1;
          valid_range(is.w, ow, kx, stride, pad, x0, x1);
          const double wv = f[ky * k + kx];
          double acc = 0.0;
          for (std::size_t y = y0; y < y1; ++y) {
            const std::size_t row = (y * stride + ky - pad) * is.w;
            const double* src = in + row;
            double* dst = din + row;
            const double* g = dy + y * ow;
            for (std::size_t x = x0; x < x1; ++x) {
              acc += g[x] * src[x * stride + kx - pad];
              dst[x * stride + kx - pad] += wv * g[x];
            }
          }
          df[ky * k + kx] += acc;
        }
      }
    }
  }
  return grads;
}

}  // namespace emo::kernels
