#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bench.hpp"
#include "encoder.hpp"
#include "retrieval.hpp"
#include "run_config.hpp"
#include "trainer.hpp"

namespace mdbert {

// A loaded checkpoint plus the vocabulary it was trained with.
struct ModelBundle {
  std::unique_ptr<Model<float>> model;
  Vocab vocab;
};

ModelBundle open_model(const std::string& checkpoint_path, const std::string& vocab_path);

struct TrainSummary {
  std::size_t best_epoch = 0;
  double best_dev_micro_f1 = 0;
  std::size_t epochs_run = 0;
  std::string out_dir;
  std::vector<std::string> warnings;
};

// Full training run driven by a RunConfig (file keys + overrides).
TrainSummary cmd_train(const std::optional<std::string>& config_path,
                       const std::vector<std::string>& overrides);

struct EvalOptions {
  std::string corpus_path;
  std::string labels_path;
  std::string fields;  // comma-separated; empty = record order
  std::vector<std::size_t> k_values = {5, 8, 15};
  std::size_t threads = 1;
  std::string summary_csv_path;
  std::string per_class_csv_path;
  std::string explain_csv_path;  // empty: no explanation output
};

MetricReport cmd_eval(const std::vector<const ModelBundle*>& bundles, const EvalOptions& options);

void cmd_embed(const ModelBundle& bundle, const std::string& corpus_path, const std::string& level,
               const std::string& fields, const std::string& out_path);

struct SearchOptions {
  std::string engine = "bm25";  // bm25 | embed
  std::string base_csv_path;
  std::string truth_path;
  std::string results_csv_path;  // empty: skip the per-query file
  const ModelBundle* bundle = nullptr;
};

SearchReport cmd_search(const SearchOptions& options);

std::string cmd_stats_csv(const std::string& corpus_path, const std::string& vocab_path,
                          const std::string& labels_path, const std::string& fields,
                          const IngestLimits& limits);

void cmd_build_vocab(const std::string& corpus_path, std::size_t target_size,
                     const std::string& out_path);

struct BenchOptions {
  ComplexityParams params;
  bool grid = false;  // sweep s over powers of two up to n
};

std::string cmd_bench_csv(const BenchOptions& options);

// Comma-separated field list -> vector (empty string -> empty vector).
std::vector<std::string> parse_fields(const std::string& fields);

std::size_t default_thread_count();

}  // namespace mdbert
