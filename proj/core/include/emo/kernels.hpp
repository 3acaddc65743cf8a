#pragma once

#include <cstddef>

#include "emo/tensor.hpp"

// Fast kernels behind the layer types. All loops over the batch run in
// sample order and every reduction over the batch is accumulated sample by
// sample, so results are bit-reproducible for a given build.
namespace emo::kernels {

/// im2col + GEMM convolution. `bias` may be null.
Tensor conv2d_forward(const Tensor& input, const Tensor& weights,
                      const Tensor* bias, std::size_t stride, std::size_t pad);

struct ConvGrads {
  Tensor d_input;
  Tensor d_weights;
  Tensor d_bias;  // empty unless requested
};

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& d_output, std::size_t stride,
                          std::size_t pad, bool with_bias);

/// One k x k filter per channel; `weights` has shape (c, 1, k, k).
Tensor depthwise_forward(const Tensor& input, const Tensor& weights,
                         std::size_t stride, std::size_t pad);

ConvGrads depthwise_backward(const Tensor& input, const Tensor& weights,
                             const Tensor& d_output, std::size_t stride,
                             std::size_t pad);

}  // namespace emo::kernels
