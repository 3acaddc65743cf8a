#pragma once

#include <cstdint>
#include <vector>

#include "emo/layers.hpp"
#include "emo/model.hpp"

namespace emo {

/// Scalar loss the checker differentiates through.
enum class CheckLoss {
  /// L = sum_i r_i * y_i with r_i drawn uniformly from [-1, 1] by `seed`.
  Projection,
  /// L = sum_i y_i.
  Sum,
  /// Mean cross-entropy of SoftmaxXent probabilities against `labels`.
  CrossEntropy,
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  CheckLoss loss = CheckLoss::Projection;
  std::uint64_t seed = 7;
  std::vector<int> labels;  // CrossEntropy only
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_input_error = 0.0;
  double max_param_error = 0.0;
  std::size_t checked = 0;  // number of perturbed coordinates
  /// Model checks only: the same maximum restricted to coordinates whose
  /// gradient magnitude reaches ModelCheckOptions::resolution, and how many
  /// coordinates fell below it.
  double max_resolved_error = 0.0;
  std::size_t unresolved = 0;
};

/// Relative error |a - b| / max(|a|, |b|, 1e-8).
double relative_error(double a, double b);

/// Central finite-difference check of `layer` at `input` in train mode.
///
/// Every parameter and input element is perturbed by +/- epsilon and
/// (L(x+e) - L(x-e)) / 2e is compared with the analytic gradient from
/// Layer::backward. The layer is copied for each evaluation, so BatchNorm
/// running statistics of `layer` are left untouched.
///
/// Throws InvalidArgument when epsilon is outside [1e-7, 1e-3] and Error
/// when a loss evaluation is not finite. MaxPool inputs with tied window
/// maxima are outside the contract.
GradCheckResult gradient_check(const Layer& layer, const Tensor& input,
                               const GradCheckOptions& options = {});

struct ModelCheckOptions {
  double epsilon = 1e-5;
  std::vector<int> labels;  // one per sample
  /// Coordinates sampled per parameter tensor (and from the input);
  /// 0 checks every coordinate.
  std::size_t coords_per_tensor = 16;
  std::uint64_t seed = 7;
  /// Gradients smaller than this sit near the finite-difference roundoff
  /// floor (about 1e-16 * |L| / epsilon); they are still included in
  /// max_relative_error but reported apart in max_resolved_error.
  double resolution = 1e-4;
};

/// Whole-model check in train mode: mean cross-entropy of the output
/// probabilities against `labels`, analytic gradients from
/// ModelGraph::backward_from_logits.
GradCheckResult gradient_check(const ModelGraph& graph, const Tensor& input,
                               const ModelCheckOptions& options);

}  // namespace emo
