#include "mdbert/mdbert.h"

#include <cstring>
#include <new>
#include <string>

#include "checkpoint.hpp"
#include "commands.hpp"
#include "errors.hpp"

using namespace mdbert;

struct mdb_model {
  ModelBundle bundle;
};

namespace {

constexpr const char* kVersion = "0.1.0";

void copy_error(const std::string& message, char* err, size_t errcap) {
  if (!err || errcap == 0) return;
  const size_t n = std::min(message.size(), errcap - 1);
  std::memcpy(err, message.data(), n);
  err[n] = '\0';
}

template <class Fn>
int guarded(char* err, size_t errcap, Fn&& fn) {
  try {
    fn();
    return MDB_OK;
  } catch (const UsageError& e) {
    copy_error(e.what(), err, errcap);
    return MDB_ERR_USAGE;
  } catch (const NumericError& e) {
    copy_error(e.what(), err, errcap);
    return MDB_ERR_NUMERIC;
  } catch (const std::exception& e) {
    copy_error(e.what(), err, errcap);
    return MDB_ERR_DATA;
  } catch (...) {
    copy_error("unknown failure", err, errcap);
    return MDB_ERR_DATA;
  }
}

char* dup_string(const std::string& s) {
  char* out = new (std::nothrow) char[s.size() + 1];
  if (!out) return nullptr;
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

std::string require(const char* value, const char* what) {
  if (!value || !*value) throw UsageError(std::string(what) + " is required");
  return value;
}

}  // namespace

extern "C" {

const char* mdb_version(void) { return kVersion; }

uint32_t mdb_checkpoint_format_version(void) { return kCheckpointFormatVersion; }

void mdb_string_free(char* s) { delete[] s; }

int mdb_train(const char* config_path, const char* const* overrides, size_t n_overrides,
              char* err, size_t errcap) {
  return guarded(err, errcap, [&] {
    std::optional<std::string> config;
    if (config_path && *config_path) config = config_path;
    std::vector<std::string> override_list;
    for (size_t i = 0; i < n_overrides; ++i) {
      if (!overrides || !overrides[i]) throw UsageError("null override");
      override_list.emplace_back(overrides[i]);
    }
    cmd_train(config, override_list);
  });
}

int mdb_model_open(const char* checkpoint_path, const char* vocab_path, mdb_model** out,
                   char* err, size_t errcap) {
  return guarded(err, errcap, [&] {
    if (!out) throw UsageError("output handle is required");
    auto model = std::make_unique<mdb_model>();
    model->bundle = open_model(require(checkpoint_path, "checkpoint path"),
                               require(vocab_path, "vocab path"));
    *out = model.release();
  });
}

void mdb_model_close(mdb_model* model) { delete model; }

int mdb_eval(mdb_model* const* models, size_t n_models, const mdb_eval_options* options,
             char* err, size_t errcap) {
  return guarded(err, errcap, [&] {
    if (!models || n_models == 0) throw UsageError("at least one model is required");
    if (!options) throw UsageError("options are required");
    EvalOptions opts;
    opts.corpus_path = require(options->corpus_path, "corpus path");
    opts.labels_path = require(options->labels_path, "labels path");
    opts.fields = options->fields ? options->fields : "";
    opts.summary_csv_path = require(options->summary_csv, "summary output path");
    opts.per_class_csv_path = options->per_class_csv ? options->per_class_csv : "";
    opts.explain_csv_path = options->explain_csv ? options->explain_csv : "";
    if (options->p_at_k && options->n_p_at_k > 0) {
      opts.k_values.clear();
      for (size_t i = 0; i < options->n_p_at_k; ++i) {
        if (options->p_at_k[i] < 1) throw UsageError("p@k values must be positive");
        opts.k_values.push_back(static_cast<std::size_t>(options->p_at_k[i]));
      }
    }
    opts.threads = options->threads > 0 ? static_cast<std::size_t>(options->threads)
                                        : default_thread_count();
    std::vector<const ModelBundle*> bundles;
    for (size_t i = 0; i < n_models; ++i) {
      if (!models[i]) throw UsageError("null model handle");
      bundles.push_back(&models[i]->bundle);
    }
    cmd_eval(bundles, opts);
  });
}

int mdb_embed(mdb_model* model, const char* corpus_path, const char* level, const char* fields,
              const char* out_path, char* err, size_t errcap) {
  return guarded(err, errcap, [&] {
    if (!model) throw UsageError("model handle is required");
    cmd_embed(model->bundle, require(corpus_path, "corpus path"), require(level, "level"),
              fields ? fields : "", require(out_path, "output path"));
  });
}

int mdb_search(const mdb_search_options* options, mdb_search_report* report, char* err, size_t errcap) {
  return guarded(err, errcap, [&] {
    if (!options) throw UsageError("options are required");
    SearchOptions opts;
    opts.engine = require(options->engine, "engine");
    opts.base_csv_path = require(options->base_csv, "search base path");
    opts.truth_path = require(options->truth_path, "ground truth path");
    opts.results_csv_path = options->results_csv ? options->results_csv : "";
    opts.bundle = options->model ? &options->model->bundle : nullptr;
    const SearchReport result = cmd_search(opts);
    if (report) {
      report->hit_rate = result.hit_rate;
      report->top1_auc = result.top1_auc.value_or(0.0);
      report->auc_defined = result.top1_auc.has_value() ? 1 : 0;
      report->n_queries = result.hits.size();
    }
  });
}

int mdb_bench_csv(const mdb_bench_options* options, char** out_csv, char* err, size_t errcap) {
  return guarded(err, errcap, [&] {
    if (!options) throw UsageError("options are required");
    if (!out_csv) throw UsageError("output pointer is required");
    if (options->n == 0 || options->d == 0 || options->s == 0 || options->depth == 0)
      throw UsageError("bench: n, d, s and depth must be positive");
    if (options->s > options->n) throw UsageError("bench: s cannot exceed n");
    BenchOptions opts;
    opts.params.n = options->n;
    opts.params.d = options->d;
    opts.params.s = options->s;
    opts.params.depth = options->depth;
    opts.params.trials = options->trials;
    opts.params.include_projections = options->include_projections != 0;
    opts.grid = options->grid != 0;
    *out_csv = dup_string(cmd_bench_csv(opts));
    if (!*out_csv) throw DataError("out of memory");
  });
}

int mdb_stats_csv(const char* corpus_path, const char* vocab_path, const char* labels_path,
                  const char* fields, size_t max_tokens_per_sentence, size_t max_sentences_per_doc,
                  char** out_csv, char* err, size_t errcap) {
  return guarded(err, errcap, [&] {
    if (!out_csv) throw UsageError("output pointer is required");
    IngestLimits limits;
    if (max_tokens_per_sentence > 0) limits.max_tokens_per_sentence = max_tokens_per_sentence;
    if (max_sentences_per_doc > 0) limits.max_sentences_per_doc = max_sentences_per_doc;
    *out_csv = dup_string(cmd_stats_csv(require(corpus_path, "corpus path"),
                                        require(vocab_path, "vocab path"),
                                        labels_path ? labels_path : "", fields ? fields : "", limits));
    if (!*out_csv) throw DataError("out of memory");
  });
}

int mdb_build_vocab(const char* corpus_path, size_t target_size, const char* out_path,
                    char* err, size_t errcap) {
  return guarded(err, errcap, [&] {
    cmd_build_vocab(require(corpus_path, "corpus path"), target_size,
                    require(out_path, "output path"));
  });
}

}  // extern "C"
