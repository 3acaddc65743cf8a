#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emo/account.hpp"
#include "emo/model.hpp"

namespace emo {

enum class ParamMode { Standard, Separable };

/// Weights of one convolution entry.
///   Standard:  n_prev * n * s^2
///   Separable: n_prev * s^2 + n_prev * n  (depthwise then pointwise)
/// The entry's own kind tag is ignored.
std::uint64_t count_params(const LayerAccountEntry& entry, ParamMode mode);

/// Learnable values the entry really carries, by its kind tag (BatchNorm
/// counts gamma and beta, biases add n).
std::uint64_t learnable_params(const LayerAccountEntry& entry);

/// Sum of learnable_params over a list.
std::uint64_t learnable_params(std::span<const LayerAccountEntry> entries);

/// Theoretical multiply-accumulates with spatial size omitted:
/// sum of n_prev * s^2 * n, every entry treated as a standard convolution.
/// Throws InvalidArgument on an empty list.
std::uint64_t theoretical_macs(std::span<const LayerAccountEntry> entries);

/// Full per-position count: sum of n_prev * s^2 * n * m^2.
/// Throws InvalidArgument when the lists differ in length.
std::uint64_t spatial_macs(std::span<const LayerAccountEntry> entries,
                           std::span<const std::uint64_t> spatial_sizes);

/// Same, taking m from each entry.
std::uint64_t spatial_macs(std::span<const LayerAccountEntry> entries);

/// MACs per entry when depthwise / separable layers are costed as what they
/// are: n_prev * s^2 (+ n_prev * n for separable).
std::uint64_t separable_aware_macs(const LayerAccountEntry& entry);

/// Totals a model's printed complexity sum claims, kept apart from what the
/// printed terms add up to.
std::optional<std::uint64_t> stated_total(ModelId id);

/// Test time is one forward pass; training is taken as three times that.
inline constexpr std::uint64_t kTrainingCostMultiplier = 3;

struct ComplexityRow {
  LayerAccountEntry entry;
  std::uint64_t params_std = 0;
  std::uint64_t params_sep = 0;
  std::uint64_t macs_eq2 = 0;
  std::uint64_t macs_sep_aware = 0;
};

struct ComplexityTotals {
  std::uint64_t params_std = 0;
  std::uint64_t params_sep = 0;
  std::uint64_t macs_eq2 = 0;
  std::uint64_t macs_sep_aware = 0;
  std::uint64_t learnable = 0;
  friend bool operator==(const ComplexityTotals&,
                         const ComplexityTotals&) = default;
};

struct ComplexityReport {
  std::string name;
  std::vector<ComplexityRow> rows;
  ComplexityTotals totals;
  /// Published total, when one exists for this source.
  std::optional<std::uint64_t> stated_macs;
  /// True when stated_macs is present and differs from totals.macs_eq2.
  bool discrepancy = false;

  std::uint64_t training_macs() const {
    return totals.macs_eq2 * kTrainingCostMultiplier;
  }
};

/// Builds per-row and total counts for every convolutional entry (BatchNorm
/// entries only contribute to totals.learnable).
ComplexityReport analyze(std::string name,
                         std::span<const LayerAccountEntry> entries,
                         std::optional<std::uint64_t> stated = std::nullopt);

/// Report over the published term list of `id`, with its stated total.
ComplexityReport analyze_reference(ModelId id);

/// Report over an executable graph for a given input shape.
ComplexityReport analyze_graph(const ModelGraph& graph, const Shape4& input);

enum class RatioBasis {
  Theoretical,     // totals.macs_eq2
  SeparableAware,  // totals.macs_sep_aware
  Literal,         // stated_macs of each report
};

std::string_view to_string(RatioBasis basis);

struct Comparison {
  ComplexityReport a;
  ComplexityReport b;
  RatioBasis basis = RatioBasis::Theoretical;
  double macs_ratio = 0.0;    // a / b
  double params_ratio = 0.0;  // a / b over params_std
};

/// Throws InvalidArgument in Literal mode when either report lacks a stated
/// total, or when a denominator is zero.
Comparison compare(const ComplexityReport& a, const ComplexityReport& b,
                   RatioBasis basis = RatioBasis::Theoretical);

/// Classifier-stage savings of global average pooling over a dense head.
struct HeadSavings {
  std::uint64_t gap_head_params = 0;  // class-map stage + GAP
  std::uint64_t fc_head_params = 0;   // flatten -> dense(classes) + bias
  std::uint64_t fc_in_features = 0;
  double reduction = 0.0;             // 1 - gap / fc
};

/// Dense layer from `in_features` to `classes` logits with bias.
std::uint64_t dense_head_params(std::uint64_t in_features,
                                std::uint64_t classes);

/// The class-map stage starts at the first block whose output has
/// num_classes channels; the dense alternative flattens the input of that
/// block.
HeadSavings gap_head_savings(const ModelGraph& graph, const Shape4& input);

/// Learnable parameters of `graph` with its GlobalAvgPool replaced by a
/// dense layer from the flattened pre-pooling feature map to the classes.
std::uint64_t fc_variant_params(const ModelGraph& graph, const Shape4& input);

/// Human-readable table followed by totals, ratios and discrepancy lines.
void print_report(std::ostream& out, const ComplexityReport& report,
                  ParamMode mode);

/// Machine format: header `kind,n_prev,s,n,params_std,params_sep,macs_eq2`
/// then one row per entry.
void print_machine(std::ostream& out, const ComplexityReport& report);

void print_comparison(std::ostream& out, const Comparison& cmp);

}  // namespace emo
