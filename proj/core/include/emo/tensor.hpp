#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace emo {

/// Extents of a dense (batch, channel, height, width) tensor.
struct Shape4 {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  /// Throws ShapeError on a zero extent or when n*c*h*w overflows size_t.
  void validate() const;
  std::size_t numel() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  std::string str() const;

  friend bool operator==(const Shape4&, const Shape4&) = default;
};

/// Dense double-precision tensor stored row-major in (n, c, h, w) order.
///
/// A Tensor is a plain value: copies are deep and operations return new
/// tensors. Mutable element access exists for building values and for
/// in-place parameter updates by the trainer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape4 shape);
  Tensor(Shape4 shape, std::vector<double> data);

  static Tensor zeros(Shape4 shape) { return Tensor(shape); }
  static Tensor filled(Shape4 shape, double value);

  const Shape4& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t h,
                     std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[offset(n, c, h, w)];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[offset(n, c, h, w)];
  }

  /// Pointer to the first element of sample `n`.
  const double* sample(std::size_t n) const {
    return data_.data() + n * shape_.c * shape_.plane();
  }
  double* sample(std::size_t n) {
    return data_.data() + n * shape_.c * shape_.plane();
  }

  bool all_finite() const;

  /// Same data, new extents with identical element count.
  Tensor reshaped(Shape4 shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape4 shape_{0, 0, 0, 0};
  std::vector<double> data_;
};

Tensor zeros(Shape4 shape);

/// Elementwise a + b. Shapes must match exactly (no broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
/// Same as add(), reusing the storage of `a`.
Tensor add(Tensor&& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Output extent of a zero-padded convolution or pooling window along one
/// axis: floor((extent + 2*pad - kernel) / stride) + 1.
std::size_t conv_out_extent(std::size_t extent, std::size_t kernel,
                            std::size_t stride, std::size_t pad);

/// Direct nested-loop convolution with zero padding and no bias.
///
/// `kernels` has shape (out_c, in_c, k, k). Every output element is the dot
/// product of one kernel with its receptive field, accumulated in
/// (in_c, kh, kw) row-major order. Slow on purpose: it is the correctness
/// oracle for every fast convolution path.
Tensor conv2d_reference(const Tensor& input, const Tensor& kernels,
                        std::size_t stride, std::size_t pad);

}  // namespace emo
