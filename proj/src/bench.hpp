#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mdbert {

// Cost model for one document: n total tokens, split into s sentences of
// ceil(n/s) tokens each (padding counted — dense kernels do the work).
struct ComplexityParams {
  std::size_t n = 512;
  std::size_t d = 768;
  std::size_t s = 16;
  std::size_t depth = 1;
  bool include_projections = false;
  std::size_t trials = 0;  // 0: analytic only
};

struct CostReport {
  ComplexityParams params;
  double flat_flops = 0;
  double hier_flops = 0;
  double ratio = 0;
  double measured_flat_ms = -1;  // <0: not measured
  double measured_hier_ms = -1;
  double measured_ratio = -1;
  bool timer_warning = false;  // some run finished under one millisecond
};

// Flat self-attention: depth * 2 n^2 d multiply-adds (score and weighted-sum
// passes). Hierarchical: the same per-sentence plus an s-length sentence
// stack. include_projections adds the 4 n d^2 input/output projections.
CostReport flop_model(const ComplexityParams& params);

// Wall-clock medians over `trials` runs of the flat stack vs the
// hierarchical pair, eval mode, single-threaded, two warmup runs excluded.
CostReport measure(ComplexityParams params);

// Attention-only analytic minimum of hier/flat in s, for fixed n.
double optimal_sentence_count(std::size_t n);

std::string cost_report_csv_header();
std::string cost_report_csv_row(const CostReport& report);

}  // namespace mdbert
