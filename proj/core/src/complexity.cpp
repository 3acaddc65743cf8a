#include "emo/complexity.hpp"

#include <array>
#include <iomanip>
#include <ostream>

#include "emo/error.hpp"

namespace emo {
namespace {

constexpr std::array<std::pair<AccountKind, std::string_view>, 6> kAccountNames{{
    {AccountKind::Standard, "conv"},
    {AccountKind::Pointwise, "pointwise"},
    {AccountKind::Depthwise, "depthwise"},
    {AccountKind::Separable, "separable"},
    {AccountKind::BatchNorm, "batchnorm"},
    {AccountKind::Dense, "dense"},
}};

}  // namespace

std::string_view to_string(AccountKind kind) {
  for (const auto& [k, n] : kAccountNames) {
    if (k == kind) return n;
  }
  return "?";
}

AccountKind parse_account_kind(std::string_view name) {
  for (const auto& [k, n] : kAccountNames) {
    if (n == name) return k;
  }
  throw ParseError("unknown account kind '" + std::string(name) + "'");
}

bool is_convolutional(AccountKind kind) {
  return kind != AccountKind::BatchNorm;
}

std::uint64_t count_params(const LayerAccountEntry& e, ParamMode mode) {
  const std::uint64_t s2 = e.s * e.s;
  if (mode == ParamMode::Standard) return e.n_prev * e.n * s2;
  return e.n_prev * s2 + e.n_prev * e.n;
}

std::uint64_t learnable_params(const LayerAccountEntry& e) {
  const std::uint64_t bias = e.bias ? e.n : 0;
  switch (e.kind) {
    case AccountKind::Standard:
    case AccountKind::Pointwise:
      return count_params(e, ParamMode::Standard) + bias;
    case AccountKind::Depthwise:
      return e.n_prev * e.s * e.s;
    case AccountKind::Separable:
      return count_params(e, ParamMode::Separable);
    case AccountKind::BatchNorm:
      return 2 * e.n;
    case AccountKind::Dense:
      return e.n_prev * e.n + bias;
  }
  return 0;
}

std::uint64_t learnable_params(std::span<const LayerAccountEntry> entries) {
  std::uint64_t total = 0;
  for (const auto& e : entries) total += learnable_params(e);
  return total;
}

std::uint64_t theoretical_macs(std::span<const LayerAccountEntry> entries) {
  if (entries.empty()) throw InvalidArgument("empty account list");
  std::uint64_t total = 0;
  for (const auto& e : entries) total += e.n_prev * e.s * e.s * e.n;
  return total;
}

std::uint64_t spatial_macs(std::span<const LayerAccountEntry> entries,
                           std::span<const std::uint64_t> sizes) {
  if (entries.size() != sizes.size()) {
    throw InvalidArgument("spatial_macs: " + std::to_string(entries.size()) +
                          " entries but " + std::to_string(sizes.size()) +
                          " spatial sizes");
  }
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    total += e.n_prev * e.s * e.s * e.n * sizes[i] * sizes[i];
  }
  return total;
}

std::uint64_t spatial_macs(std::span<const LayerAccountEntry> entries) {
  std::vector<std::uint64_t> sizes;
  sizes.reserve(entries.size());
  for (const auto& e : entries) sizes.push_back(e.m);
  return spatial_macs(entries, sizes);
}

std::uint64_t separable_aware_macs(const LayerAccountEntry& e) {
  switch (e.kind) {
    case AccountKind::Depthwise:
      return e.n_prev * e.s * e.s;
    case AccountKind::Separable:
      return count_params(e, ParamMode::Separable);
    case AccountKind::BatchNorm:
      return 0;
    default:
      return e.n_prev * e.s * e.s * e.n;
  }
}

std::optional<std::uint64_t> stated_total(ModelId id) {
  switch (id) {
    case ModelId::Proposed:
      return 450'249;
    case ModelId::Vanilla:
      return 1'144'320;
  }
  return std::nullopt;
}

ComplexityReport analyze(std::string name,
                         std::span<const LayerAccountEntry> entries,
                         std::optional<std::uint64_t> stated) {
  ComplexityReport r;
  r.name = std::move(name);
  for (const auto& e : entries) {
    r.totals.learnable += learnable_params(e);
    if (!is_convolutional(e.kind)) continue;
    ComplexityRow row{e, count_params(e, ParamMode::Standard),
                      count_params(e, ParamMode::Separable),
                      e.n_prev * e.s * e.s * e.n, separable_aware_macs(e)};
    r.totals.params_std += row.params_std;
    r.totals.params_sep += row.params_sep;
    r.totals.macs_eq2 += row.macs_eq2;
    r.totals.macs_sep_aware += row.macs_sep_aware;
    r.rows.push_back(std::move(row));
  }
  r.stated_macs = stated;
  r.discrepancy = stated.has_value() && *stated != r.totals.macs_eq2;
  return r;
}

ComplexityReport analyze_reference(ModelId id) {
  const auto list = reference_account_list(id);
  return analyze(std::string(to_string(id)) + " (published terms)", list,
                 stated_total(id));
}

ComplexityReport analyze_graph(const ModelGraph& graph, const Shape4& input) {
  const auto list = graph.export_account(input);
  return analyze(graph.name() + " (executable, " + std::to_string(input.h) +
                     "x" + std::to_string(input.w) + ")",
                 list);
}

std::string_view to_string(RatioBasis basis) {
  switch (basis) {
    case RatioBasis::Theoretical:
      return "theoretical";
    case RatioBasis::SeparableAware:
      return "separable-aware";
    case RatioBasis::Literal:
      return "literal";
  }
  return "?";
}

Comparison compare(const ComplexityReport& a, const ComplexityReport& b,
                   RatioBasis basis) {
  auto macs = [&](const ComplexityReport& r) -> std::uint64_t {
    switch (basis) {
      case RatioBasis::Theoretical:
        return r.totals.macs_eq2;
      case RatioBasis::SeparableAware:
        return r.totals.macs_sep_aware;
      case RatioBasis::Literal:
        if (!r.stated_macs) {
          throw InvalidArgument("literal comparison: '" + r.name +
                                "' has no stated total");
        }
        return *r.stated_macs;
    }
    return 0;
  };
  const std::uint64_t ma = macs(a);
  const std::uint64_t mb = macs(b);
  if (mb == 0 || b.totals.params_std == 0) {
    throw InvalidArgument("compare: zero denominator");
  }
  Comparison c{a, b, basis, 0.0, 0.0};
  c.macs_ratio = static_cast<double>(ma) / static_cast<double>(mb);
  c.params_ratio = static_cast<double>(a.totals.params_std) /
                   static_cast<double>(b.totals.params_std);
  return c;
}

std::uint64_t dense_head_params(std::uint64_t in_features,
                                std::uint64_t classes) {
  return in_features * classes + classes;
}

HeadSavings gap_head_savings(const ModelGraph& graph, const Shape4& input) {
  const auto shapes = graph.trace_shapes(input);
  const auto& blocks = graph.blocks();
  const std::size_t classes = graph.num_classes();
  std::size_t start = blocks.size();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (shapes[i].c == classes) {
      start = i;
      break;
    }
  }
  if (start == 0 || start == blocks.size()) {
    throw InvalidArgument("gap_head_savings: no class-map stage found");
  }
  HeadSavings s;
  for (std::size_t i = start; i < blocks.size(); ++i) {
    for (const Layer& l : blocks[i].main) s.gap_head_params += l.num_learnable();
    if (blocks[i].residual) s.gap_head_params += blocks[i].residual->num_learnable();
  }
  const Shape4& feat = shapes[start - 1];
  s.fc_in_features = feat.c * feat.h * feat.w;
  s.fc_head_params = dense_head_params(s.fc_in_features, classes);
  s.reduction = 1.0 - static_cast<double>(s.gap_head_params) /
                          static_cast<double>(s.fc_head_params);
  return s;
}

std::uint64_t fc_variant_params(const ModelGraph& graph, const Shape4& input) {
  const auto shapes = graph.trace_shapes(input);
  const auto& blocks = graph.blocks();
  Shape4 s = blocks.size() > 1 ? shapes[blocks.size() - 2] : input;
  for (const Layer& l : blocks.back().main) {
    if (l.kind() == LayerKind::GlobalAvgPool) {
      return graph.num_parameters() +
             dense_head_params(s.c * s.h * s.w, graph.num_classes());
    }
    s = l.output_shape(s);
  }
  throw InvalidArgument("fc_variant_params: final block has no GlobalAvgPool");
}

void print_report(std::ostream& out, const ComplexityReport& r,
                  ParamMode mode) {
  out << "model: " << r.name << '\n';
  out << std::left << std::setw(14) << "layer" << std::setw(11) << "kind"
      << std::right << std::setw(7) << "n_prev" << std::setw(4) << "s"
      << std::setw(7) << "n" << std::setw(12) << "params_std" << std::setw(12)
      << "params_sep" << std::setw(12) << "macs" << std::setw(12) << "macs_sep"
      << '\n';
  for (const auto& row : r.rows) {
    const auto& e = row.entry;
    out << std::left << std::setw(14) << e.label << std::setw(11)
        << to_string(e.kind) << std::right << std::setw(7) << e.n_prev
        << std::setw(4) << e.s << std::setw(7) << e.n << std::setw(12)
        << row.params_std << std::setw(12) << row.params_sep << std::setw(12)
        << row.macs_eq2 << std::setw(12) << row.macs_sep_aware << '\n';
  }
  const bool separable = mode == ParamMode::Separable;
  out << "accounting: " << (separable ? "separable-aware" : "paper") << '\n';
  out << "total params: "
      << (separable ? r.totals.params_sep : r.totals.params_std) << '\n';
  out << "total macs: "
      << (separable ? r.totals.macs_sep_aware : r.totals.macs_eq2) << '\n';
  out << "total macs (paper): " << r.totals.macs_eq2 << '\n';
  out << "total macs (separable-aware): " << r.totals.macs_sep_aware << '\n';
  out << "training macs (x" << kTrainingCostMultiplier
      << "): " << r.training_macs() << '\n';
  if (r.totals.learnable > 0) {
    out << "learnable params (by layer kind): " << r.totals.learnable << '\n';
  }
  if (r.stated_macs) {
    out << "stated total: " << *r.stated_macs << '\n';
    out << "discrepancy: "
        << (r.discrepancy ? "YES (stated total differs from summed terms)"
                          : "no")
        << '\n';
  }
}

void print_machine(std::ostream& out, const ComplexityReport& r) {
  out << "kind,n_prev,s,n,params_std,params_sep,macs_eq2\n";
  for (const auto& row : r.rows) {
    const auto& e = row.entry;
    out << to_string(e.kind) << ',' << e.n_prev << ',' << e.s << ',' << e.n
        << ',' << row.params_std << ',' << row.params_sep << ','
        << row.macs_eq2 << '\n';
  }
}

void print_comparison(std::ostream& out, const Comparison& c) {
  const auto prec = out.precision();
  out << "compare: " << c.a.name << " / " << c.b.name << '\n';
  out << "basis: " << to_string(c.basis) << '\n';
  out << std::fixed << std::setprecision(4);
  out << "macs ratio: " << c.macs_ratio << '\n';
  out << "params ratio: " << c.params_ratio << '\n';
  out.unsetf(std::ios::fixed);
  out.precision(prec);
}

}  // namespace emo
