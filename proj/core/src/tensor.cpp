#include "emo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "emo/error.hpp"

namespace emo {

void Shape4::validate() const {
  if (n == 0 || c == 0 || h == 0 || w == 0) {
    throw ShapeError("tensor extents must be positive, got " + str());
  }
  constexpr std::size_t kMax = std::numeric_limits<std::size_t>::max();
  std::size_t acc = n;
  for (std::size_t e : {c, h, w}) {
    if (acc > kMax / e) throw ShapeError("element count overflows: " + str());
    acc *= e;
  }
  // std::vector<double> cannot hold more than this many elements.
  if (acc > std::vector<double>().max_size()) {
    throw ShapeError("element count too large: " + str());
  }
}

std::string Shape4::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

Tensor::Tensor(Shape4 shape) : shape_(shape) {
  shape_.validate();
  data_.assign(shape_.numel(), 0.0);
}

Tensor::Tensor(Shape4 shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  shape_.validate();
  if (data_.size() != shape_.numel()) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  }
}

Tensor Tensor::filled(Shape4 shape, double value) {
  Tensor t(shape);
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape4 shape) const {
  return Tensor(shape, data_);
}

Tensor zeros(Shape4 shape) { return Tensor(shape); }

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  return out;
}

Tensor add(Tensor&& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  Tensor out = std::move(a);
  auto o = out.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += y[i];
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = a;
  for (double& v : out.data()) v *= factor;
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: shape mismatch " + a.shape().str() +
                     " vs " + b.shape().str());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

std::size_t conv_out_extent(std::size_t extent, std::size_t kernel,
                            std::size_t stride, std::size_t pad) {
  if (stride == 0) throw InvalidArgument("stride must be positive");
  if (kernel == 0) throw InvalidArgument("kernel size must be positive");
  const std::size_t padded = extent + 2 * pad;
  if (kernel > padded) {
    throw ShapeError("kernel " + std::to_string(kernel) +
                     " larger than padded extent " + std::to_string(padded));
  }
  return (padded - kernel) / stride + 1;
}

Tensor conv2d_reference(const Tensor& input, const Tensor& kernels,
                        std::size_t stride, std::size_t pad) {
  const Shape4& is = input.shape();
  const Shape4& ks = kernels.shape();
  if (ks.c != is.c) {
    throw ShapeError("conv2d_reference: kernel in_c " + std::to_string(ks.c) +
                     " != input channels " + std::to_string(is.c));
  }
  if (ks.h != ks.w) throw ShapeError("conv2d_reference: kernel must be square");
  const std::size_t k = ks.h;
  const std::size_t oh = conv_out_extent(is.h, k, stride, pad);
  const std::size_t ow = conv_out_extent(is.w, k, stride, pad);

  Tensor out({is.n, ks.n, oh, ow});
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t o = 0; o < ks.n; ++o) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = 0.0;
          for (std::size_t c = 0; c < is.c; ++c) {
            for (std::size_t ky = 0; ky < k; ++ky) {
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(y * stride + ky) -
                                static_cast<long>(pad);
                const long ix = static_cast<long>(x * stride + kx) -
                                static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(is.h) ||
                    ix >= static_cast<long>(is.w)) {
                  continue;
                }
                acc += kernels.at(o, c, ky, kx) *
                       input.at(n, c, static_cast<std::size_t>(iy),
                                static_cast<std::size_t>(ix));
              }
            }
          }
          out.at(n, o, y, x) = acc;
        }
      }
    }
  }
  return out;
}

}  // namespace emo
