#include "bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "io_util.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace mdbert {

namespace {

double attention_flops(double tokens, double d, bool projections) {
  double flops = 2.0 * tokens * tokens * d;  // QK^T and attn*V multiply-adds
  if (projections) flops += 4.0 * tokens * d * d;
  return flops;
}

}  // namespace

CostReport flop_model(const ComplexityParams& params) {
  CostReport report;
  report.params = params;
  const double depth = double(params.depth);
  const double n = double(params.n), d = double(params.d), s = double(params.s);
  const double per_sentence = double((params.n + params.s - 1) / params.s);  // ceil(n/s)

  report.flat_flops = depth * attention_flops(n, d, params.include_projections);
  const double token_level = depth * s * attention_flops(per_sentence, d, params.include_projections);
  const double sentence_level = depth * attention_flops(s, d, params.include_projections);
  report.hier_flops = token_level + sentence_level;
  report.ratio = report.hier_flops / report.flat_flops;
  return report;
}

double optimal_sentence_count(std::size_t n) {
  // ratio(s) = 1/s + s^2/n^2, minimized at s = (n^2/2)^(1/3)
  return std::cbrt(double(n) * double(n) / 2.0);
}

namespace {

// One self-attention pass (optionally with Q/K/V/O projections) over a
// batch of sequences, forward only.
void attention_pass(Graph<float>& g, TensorPtr<float>& x, const TensorPtr<float>* projections,
                    double d) {
  const float inv_sqrt_d = float(1.0 / std::sqrt(d));
  TensorPtr<float> q = x, k = x, v = x;
  if (projections) {
    q = g.matmul(x, projections[0]);
    k = g.matmul(x, projections[1]);
    v = g.matmul(x, projections[2]);
  }
  auto attn = g.softmax_lastdim(g.scale(g.matmul(q, k, /*transpose_b=*/true), inv_sqrt_d));
  auto out = g.matmul(attn, v);
  if (projections) out = g.matmul(out, projections[3]);
  x = out;
}

double run_once(std::size_t batch, std::size_t tokens, std::size_t d, std::size_t depth,
                bool projections, Rng& rng) {
  Tensor<float> input({batch, tokens, d});
  for (auto& v : input.data) v = float(rng.uniform() - 0.5);
  Graph<float> g;
  auto x = g.constant(std::move(input));
  TensorPtr<float> proj[4];
  if (projections) {
    for (auto& p : proj) {
      Tensor<float> w({d, d});
      for (auto& v : w.data) v = float((rng.uniform() - 0.5) * 0.1);
      p = g.constant(std::move(w));
    }
  }
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t layer = 0; layer < depth; ++layer)
    attention_pass(g, x, projections ? proj : nullptr, double(d));
  const auto stop = std::chrono::steady_clock::now();
  volatile float sink = x->data[0];
  (void)sink;
  return std::chrono::duration<double, std::milli>(stop - start).count();
}

double median_of(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

CostReport measure(ComplexityParams params) {
  if (params.trials == 0) params.trials = 5;
  CostReport report = flop_model(params);
  report.params = params;
  const std::size_t per_sentence = (params.n + params.s - 1) / params.s;
  Rng rng(42);

  constexpr std::size_t kWarmup = 2;
  std::vector<double> flat_times, hier_times;
  for (std::size_t t = 0; t < kWarmup + params.trials; ++t) {
    const double flat = run_once(1, params.n, params.d, params.depth, params.include_projections, rng);
    const double token_level =
        run_once(params.s, per_sentence, params.d, params.depth, params.include_projections, rng);
    const double sentence_level =
        run_once(1, params.s, params.d, params.depth, params.include_projections, rng);
    if (t < kWarmup) continue;
    flat_times.push_back(flat);
    hier_times.push_back(token_level + sentence_level);
  }
  report.measured_flat_ms = median_of(flat_times);
  report.measured_hier_ms = median_of(hier_times);
  report.measured_ratio = report.measured_hier_ms / report.measured_flat_ms;
  for (double v : flat_times) report.timer_warning = report.timer_warning || v < 1.0;
  for (double v : hier_times) report.timer_warning = report.timer_warning || v < 1.0;
  return report;
}

std::string cost_report_csv_header() {
  return "n,d,s,flat_flops,hier_flops,ratio,flat_ms,hier_ms,measured_ratio\n";
}

std::string cost_report_csv_row(const CostReport& report) {
  std::ostringstream os;
  os << report.params.n << ',' << report.params.d << ',' << report.params.s << ','
     << format_double(report.flat_flops) << ',' << format_double(report.hier_flops) << ','
     << format_double(report.ratio) << ',';
  if (report.measured_flat_ms >= 0) os << format_double(report.measured_flat_ms);
  os << ',';
  if (report.measured_hier_ms >= 0) os << format_double(report.measured_hier_ms);
  os << ',';
  if (report.measured_ratio >= 0) os << format_double(report.measured_ratio);
  os << '\n';
  return os.str();
}

}  // namespace mdbert
