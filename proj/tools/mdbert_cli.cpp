// Command-line front end; all work happens behind the C API.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <mdbert/mdbert.h>

namespace {

constexpr size_t kErrCap = 1024;

struct ModelGuard {
  mdb_model* handle = nullptr;
  ~ModelGuard() { mdb_model_close(handle); }
};

int report_error(int code, const char* err) {
  std::fprintf(stderr, "error: %s\n", err[0] ? err : "unknown failure");
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical document encoder: training, evaluation, embeddings, retrieval"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("mdbert ") + mdb_version() + " (checkpoint format " +
                                        std::to_string(mdb_checkpoint_format_version()) + ")");

  char err[kErrCap] = {0};

  // train
  auto* train = app.add_subcommand("train", "Train a model from a config file and/or flag overrides");
  std::string train_config;
  std::vector<std::string> overrides;
  train->add_option("--config", train_config, "key = value config file");
  train->add_option("--set", overrides, "override as key=value (repeatable)");
  auto add_override_flag = [&](CLI::App* cmd, const std::string& flag, const std::string& key,
                               const std::string& help) {
    cmd->add_option_function<std::string>(
           flag, [&overrides, key](const std::string& v) { overrides.push_back(key + "=" + v); }, help)
        ->type_name("TEXT");
  };
  add_override_flag(train, "--train", "train_path", "training corpus (line-delimited JSON)");
  add_override_flag(train, "--dev", "dev_path", "dev corpus for early stopping");
  add_override_flag(train, "--vocab", "vocab_path", "vocabulary file");
  add_override_flag(train, "--labels", "labels_path", "label vocabulary file");
  add_override_flag(train, "--out-dir", "out_dir", "output directory");
  add_override_flag(train, "--seed", "seed", "random seed");
  add_override_flag(train, "--lr", "lr", "learning rate");
  add_override_flag(train, "--max-epochs", "max_epochs", "epoch cap");
  add_override_flag(train, "--frozen-epochs", "frozen_epochs", "stage-1 epochs with a frozen token transformer");
  add_override_flag(train, "--patience", "patience", "early-stopping patience");
  add_override_flag(train, "--head", "head", "label_attention | pooled");
  add_override_flag(train, "--sentence-layers", "sentence_layers", "sentence transformer depth (0 removes it)");
  add_override_flag(train, "--desc-aug", "desc_augmentation", "description augmentation on/off");
  add_override_flag(train, "--w-doc", "w_doc", "positive weight for the document loss");
  add_override_flag(train, "--w-desc", "w_desc", "positive weight for the description loss");
  add_override_flag(train, "--fields", "fields", "comma-separated text fields");

  // eval
  auto* eval = app.add_subcommand("eval", "Score a labeled corpus with one or more checkpoints");
  std::vector<std::string> eval_ckpts;
  std::string eval_vocab, eval_corpus, eval_labels, eval_fields, eval_summary, eval_per_class, eval_explain;
  std::vector<int> eval_k;
  int eval_threads = 0;
  eval->add_option("--checkpoint", eval_ckpts, "checkpoint file (repeat to average predictions)")->required();
  eval->add_option("--vocab", eval_vocab, "vocabulary file")->required();
  eval->add_option("--corpus", eval_corpus, "labeled corpus")->required();
  eval->add_option("--labels", eval_labels, "label vocabulary file")->required();
  eval->add_option("--fields", eval_fields, "comma-separated text fields");
  eval->add_option("--summary", eval_summary, "summary CSV output")->required();
  eval->add_option("--per-class", eval_per_class, "per-class CSV output");
  eval->add_option("--explain", eval_explain, "per-document attention CSV output");
  eval->add_option("--k", eval_k, "precision@K values (repeatable)");
  eval->add_option("--threads", eval_threads, "worker threads (default: MDB_THREADS or all cores)");

  // embed
  auto* embed = app.add_subcommand("embed", "Export sentence or document embeddings");
  std::string embed_ckpt, embed_vocab, embed_corpus, embed_level = "document", embed_fields, embed_out;
  embed->add_option("--checkpoint", embed_ckpt, "checkpoint file")->required();
  embed->add_option("--vocab", embed_vocab, "vocabulary file")->required();
  embed->add_option("--corpus", embed_corpus, "corpus (labels optional)")->required();
  embed->add_option("--level", embed_level, "sentence | document");
  embed->add_option("--fields", embed_fields, "comma-separated text fields");
  embed->add_option("--out", embed_out, "output path (line-delimited JSON)")->required();

  // search
  auto* search = app.add_subcommand("search", "Standardize names against a search base");
  std::string search_engine = "bm25", search_base, search_truth, search_out, search_ckpt, search_vocab;
  search->add_option("--engine", search_engine, "bm25 | embed");
  search->add_option("--base", search_base, "search base CSV (id,group_id,name)")->required();
  search->add_option("--truth", search_truth, "ground truth (line-delimited JSON)")->required();
  search->add_option("--out", search_out, "per-query results CSV");
  search->add_option("--checkpoint", search_ckpt, "checkpoint (embed engine)");
  search->add_option("--vocab", search_vocab, "vocabulary (embed engine)");

  // bench
  auto* bench = app.add_subcommand("bench", "Self-attention cost model and timing harness");
  mdb_bench_options bench_opts = {512, 768, 16, 1, 0, 0, 0};
  bench->add_option("--n", bench_opts.n, "tokens per document");
  bench->add_option("--d", bench_opts.d, "hidden dimension");
  bench->add_option("--s", bench_opts.s, "sentences per document");
  bench->add_option("--depth", bench_opts.depth, "attention layers");
  bench->add_option("--trials", bench_opts.trials, "timing trials (0: analytic only)");
  bench->add_flag("--projections", bench_opts.include_projections, "count Q/K/V/O projections too");
  bench->add_flag("--grid", bench_opts.grid, "sweep s over powers of two");

  // stats
  auto* stats = app.add_subcommand("stats", "Corpus statistics (sentences and tokens per document)");
  std::string stats_corpus, stats_vocab, stats_labels, stats_fields, stats_out;
  size_t stats_max_tokens = 62, stats_max_sents = 256;
  stats->add_option("--corpus", stats_corpus, "corpus file")->required();
  stats->add_option("--vocab", stats_vocab, "vocabulary file")->required();
  stats->add_option("--labels", stats_labels, "label vocabulary file");
  stats->add_option("--fields", stats_fields, "comma-separated text fields");
  stats->add_option("--max-tokens", stats_max_tokens, "token cap per sentence");
  stats->add_option("--max-sentences", stats_max_sents, "sentence cap per document");
  stats->add_option("--out", stats_out, "write CSV here instead of stdout");

  // build-vocab
  auto* build = app.add_subcommand("build-vocab", "Derive a vocabulary from corpus text by frequency");
  std::string build_corpus, build_out;
  size_t build_size = 1000;
  build->add_option("--corpus", build_corpus, "corpus file")->required();
  build->add_option("--size", build_size, "target vocabulary size");
  build->add_option("--out", build_out, "output vocabulary file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // normalize CLI11's exit codes: 0 for --help/--version, 1 for usage errors
    const int code = app.exit(e);
    return code == 0 ? 0 : MDB_ERR_USAGE;
  }

  if (train->parsed()) {
    std::vector<const char*> raw;
    for (const auto& o : overrides) raw.push_back(o.c_str());
    const int code = mdb_train(train_config.empty() ? nullptr : train_config.c_str(), raw.data(),
                               raw.size(), err, kErrCap);
    if (code != MDB_OK) return report_error(code, err);
    std::printf("training finished; outputs in the configured out_dir\n");
    return 0;
  }

  if (eval->parsed()) {
    std::vector<ModelGuard> guards(eval_ckpts.size());
    std::vector<mdb_model*> models;
    for (size_t i = 0; i < eval_ckpts.size(); ++i) {
      const int code = mdb_model_open(eval_ckpts[i].c_str(), eval_vocab.c_str(), &guards[i].handle, err, kErrCap);
      if (code != MDB_OK) return report_error(code, err);
      models.push_back(guards[i].handle);
    }
    mdb_eval_options opts = {};
    opts.corpus_path = eval_corpus.c_str();
    opts.labels_path = eval_labels.c_str();
    opts.fields = eval_fields.empty() ? nullptr : eval_fields.c_str();
    opts.summary_csv = eval_summary.c_str();
    opts.per_class_csv = eval_per_class.empty() ? nullptr : eval_per_class.c_str();
    opts.explain_csv = eval_explain.empty() ? nullptr : eval_explain.c_str();
    opts.p_at_k = eval_k.empty() ? nullptr : eval_k.data();
    opts.n_p_at_k = eval_k.size();
    opts.threads = eval_threads;
    const int code = mdb_eval(models.data(), models.size(), &opts, err, kErrCap);
    if (code != MDB_OK) return report_error(code, err);
    std::printf("summary written to %s\n", eval_summary.c_str());
    return 0;
  }

  if (embed->parsed()) {
    ModelGuard guard;
    int code = mdb_model_open(embed_ckpt.c_str(), embed_vocab.c_str(), &guard.handle, err, kErrCap);
    if (code != MDB_OK) return report_error(code, err);
    code = mdb_embed(guard.handle, embed_corpus.c_str(), embed_level.c_str(),
                     embed_fields.empty() ? nullptr : embed_fields.c_str(), embed_out.c_str(), err, kErrCap);
    if (code != MDB_OK) return report_error(code, err);
    std::printf("embeddings written to %s\n", embed_out.c_str());
    return 0;
  }

  if (search->parsed()) {
    ModelGuard guard;
    if (search_engine == "embed") {
      if (search_ckpt.empty() || search_vocab.empty()) {
        std::fprintf(stderr, "error: embed search needs --checkpoint and --vocab\n");
        return MDB_ERR_USAGE;
      }
      const int code = mdb_model_open(search_ckpt.c_str(), search_vocab.c_str(), &guard.handle, err, kErrCap);
      if (code != MDB_OK) return report_error(code, err);
    }
    mdb_search_options opts = {};
    opts.engine = search_engine.c_str();
    opts.base_csv = search_base.c_str();
    opts.truth_path = search_truth.c_str();
    opts.results_csv = search_out.empty() ? nullptr : search_out.c_str();
    opts.model = guard.handle;
    mdb_search_report report = {};
    const int code = mdb_search(&opts, &report, err, kErrCap);
    if (code != MDB_OK) return report_error(code, err);
    std::printf("queries,%zu\n", report.n_queries);
    std::printf("hit_rate,%.6f\n", report.hit_rate);
    if (report.auc_defined) {
      std::printf("top1_auc,%.6f\n", report.top1_auc);
    } else {
      std::printf("top1_auc,\n");
    }
    return 0;
  }

  if (bench->parsed()) {
    char* csv = nullptr;
    const int code = mdb_bench_csv(&bench_opts, &csv, err, kErrCap);
    if (code != MDB_OK) return report_error(code, err);
    std::fputs(csv, stdout);
    mdb_string_free(csv);
    return 0;
  }

  if (stats->parsed()) {
    char* csv = nullptr;
    const int code = mdb_stats_csv(stats_corpus.c_str(), stats_vocab.c_str(),
                                   stats_labels.empty() ? nullptr : stats_labels.c_str(),
                                   stats_fields.empty() ? nullptr : stats_fields.c_str(),
                                   stats_max_tokens, stats_max_sents, &csv, err, kErrCap);
    if (code != MDB_OK) return report_error(code, err);
    if (!stats_out.empty()) {
      const std::string tmp = stats_out + ".tmp";
      FILE* f = std::fopen(tmp.c_str(), "wb");
      if (!f) {
        mdb_string_free(csv);
        return report_error(MDB_ERR_DATA, "cannot open stats output");
      }
      std::fputs(csv, f);
      std::fclose(f);
      if (std::rename(tmp.c_str(), stats_out.c_str()) != 0) {
        mdb_string_free(csv);
        return report_error(MDB_ERR_DATA, "cannot move stats output into place");
      }
    } else {
      std::fputs(csv, stdout);
    }
    mdb_string_free(csv);
    return 0;
  }

  if (build->parsed()) {
    const int code = mdb_build_vocab(build_corpus.c_str(), build_size, build_out.c_str(), err, kErrCap);
    if (code != MDB_OK) return report_error(code, err);
    std::printf("vocabulary written to %s\n", build_out.c_str());
    return 0;
  }

  return MDB_ERR_USAGE;
}
