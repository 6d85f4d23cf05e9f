#include "commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "checkpoint.hpp"
#include "errors.hpp"
#include "io_util.hpp"

namespace mdbert {

std::vector<std::string> parse_fields(const std::string& fields) {
  std::vector<std::string> out;
  if (trim(fields).empty()) return out;
  for (auto& f : split(fields, ',')) {
    const std::string name = trim(f);
    if (!name.empty()) out.push_back(name);
  }
  return out;
}

std::size_t default_thread_count() {
  if (const char* env = std::getenv("MDB_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n >= 1) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
      throw UsageError("MDB_THREADS must be a positive integer");
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

ModelBundle open_model(const std::string& checkpoint_path, const std::string& vocab_path) {
  ModelBundle bundle;
  bundle.vocab = Vocab::load(vocab_path);
  auto loaded = load_checkpoint(checkpoint_path);
  const ModelConfig config = ModelConfig::from_text(loaded.config_text);
  if (config.vocab_size != bundle.vocab.size())
    throw DataError("checkpoint expects vocab of size " + std::to_string(config.vocab_size) +
                    " but " + vocab_path + " has " + std::to_string(bundle.vocab.size()));
  bundle.model = std::make_unique<Model<float>>(config, std::move(loaded.params));
  return bundle;
}

namespace {

// Deterministic split: shuffle a copy of the indices, take the first chunk
// as dev, then restore corpus order inside each side.
void split_dev(std::vector<Document>& docs, double fraction, std::uint64_t seed,
               std::vector<Document>& train_out, std::vector<Document>& dev_out) {
  if (fraction <= 0 || fraction >= 1) throw UsageError("dev_fraction must be in (0, 1)");
  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed ^ 0x5eedULL);
  rng.shuffle(order);
  const std::size_t dev_count = std::max<std::size_t>(1, std::size_t(fraction * double(docs.size())));
  if (dev_count >= docs.size()) throw DataError("dev split would consume the whole corpus");
  std::vector<bool> is_dev(docs.size(), false);
  for (std::size_t i = 0; i < dev_count; ++i) is_dev[order[i]] = true;
  for (std::size_t i = 0; i < docs.size(); ++i)
    (is_dev[i] ? dev_out : train_out).push_back(std::move(docs[i]));
}

}  // namespace

TrainSummary cmd_train(const std::optional<std::string>& config_path,
                       const std::vector<std::string>& overrides) {
  RunConfig cfg = config_path ? RunConfig::from_file(*config_path) : RunConfig();
  for (const auto& expr : overrides) cfg.apply_override_expr(expr);

  const std::string train_path = cfg.get_string("train_path", "");
  const std::string vocab_path = cfg.get_string("vocab_path", "");
  const std::string labels_path = cfg.get_string("labels_path", "");
  if (train_path.empty() || vocab_path.empty() || labels_path.empty())
    throw UsageError("train needs train_path, vocab_path and labels_path");

  const Vocab vocab = Vocab::load(vocab_path);
  const LabelVocab labels = LabelVocab::load(labels_path);

  ModelConfig model_cfg;
  model_cfg.vocab_size = vocab.size();
  model_cfg.num_labels = labels.size();
  model_cfg.hidden_dim = cfg.get_size("hidden_dim", 128);
  model_cfg.num_heads = cfg.get_size("num_heads", 4);
  model_cfg.token_layers = cfg.get_size("token_layers", 2);
  model_cfg.sentence_layers = cfg.get_size("sentence_layers", 4);
  model_cfg.ffn_dim = cfg.get_size("ffn_dim", 4 * model_cfg.hidden_dim);
  model_cfg.max_tokens_per_sentence = cfg.get_size("max_tokens_per_sentence", 62);
  model_cfg.max_sentences_per_doc = cfg.get_size("max_sentences_per_doc", 256);
  model_cfg.dropout = cfg.get_double("dropout", 0.1);
  model_cfg.sentence_position_embeddings = cfg.get_bool("sentence_position_embeddings", true);
  const std::string head = cfg.get_string("head", "label_attention");
  if (head == "label_attention") model_cfg.head = HeadKind::LabelAttention;
  else if (head == "pooled") model_cfg.head = HeadKind::Pooled;
  else throw UsageError("config: head must be label_attention or pooled");
  const std::string head_level = cfg.get_string("head_level", "post");
  if (head_level == "post") model_cfg.head_level = HeadLevel::PostSentenceTransformer;
  else if (head_level == "pre") model_cfg.head_level = HeadLevel::PreSentenceTransformer;
  else throw UsageError("config: head_level must be pre or post");
  model_cfg.validate();

  IngestOptions ingest_opts;
  ingest_opts.limits.max_tokens_per_sentence = model_cfg.max_tokens_per_sentence;
  ingest_opts.limits.max_sentences_per_doc = model_cfg.max_sentences_per_doc;
  ingest_opts.fields = parse_fields(cfg.get_string("fields", ""));
  ingest_opts.strict_labels = cfg.get_bool("strict_labels", true);

  std::vector<Document> train_docs = ingest(train_path, vocab, labels, ingest_opts);
  std::vector<Document> dev_docs;
  const std::string dev_path = cfg.get_string("dev_path", "");
  const std::uint64_t seed = cfg.get_u64("seed", 0);
  if (!dev_path.empty()) {
    dev_docs = ingest(dev_path, vocab, labels, ingest_opts);
  } else {
    std::vector<Document> all = std::move(train_docs);
    train_docs.clear();
    split_dev(all, cfg.get_double("dev_fraction", 0.1), seed, train_docs, dev_docs);
  }

  TrainOptions options;
  options.schedule.frozen_epochs = cfg.get_size("frozen_epochs", 3);
  options.schedule.patience = cfg.get_size("patience", 3);
  options.schedule.max_epochs = cfg.get_size("max_epochs", 50);
  options.schedule.batch_sentence_budget = cfg.get_size("batch_sentence_budget", 128);
  options.schedule.seed = seed;
  options.schedule.lr = cfg.get_double("lr", 1e-5);
  options.schedule.weight_decay = cfg.get_double("weight_decay", 0.01);
  options.schedule.beta1 = cfg.get_double("beta1", 0.9);
  options.schedule.beta2 = cfg.get_double("beta2", 0.999);
  options.schedule.adam_eps = cfg.get_double("adam_eps", 1e-8);
  options.loss.w_doc = cfg.get_double("w_doc", 1.0);
  options.loss.w_desc = cfg.get_double("w_desc", 1.0);
  options.desc_augmentation = cfg.get_bool("desc_augmentation", true);
  options.out_dir = cfg.get_string("out_dir", "mdbert_run");

  TrainSummary summary;
  options.loss.validate(&summary.warnings);

  std::size_t desc_skipped = 0;
  std::vector<Document> desc_docs;
  if (options.desc_augmentation) {
    desc_docs = make_description_corpus(labels, vocab, ingest_opts.limits, &desc_skipped);
    if (desc_skipped > 0)
      summary.warnings.push_back(std::to_string(desc_skipped) +
                                 " label(s) without a description were skipped for augmentation");
  }

  Model<float> model(model_cfg, seed);
  const TrainResult result = train_model(model, train_docs, desc_docs, dev_docs, options);
  summary.best_epoch = result.best_epoch;
  summary.best_dev_micro_f1 = result.best_dev_micro_f1;
  summary.epochs_run = result.epochs_run;
  summary.out_dir = options.out_dir;
  return summary;
}

namespace {

void write_explanations(const ModelBundle& bundle, const std::vector<Document>& docs,
                        const std::vector<double>& probs, const std::string& path,
                        std::size_t batch_budget) {
  const auto& model = *bundle.model;
  if (model.config().head != HeadKind::LabelAttention)
    throw UsageError("--explain requires a label-attention head");
  const std::size_t L = model.config().num_labels;
  std::ostringstream os;
  os << "doc_id,label,probability,sent1,w1,sent2,w2,sent3,w3\n";
  std::size_t done = 0;
  while (done < docs.size()) {
    std::size_t end = done, sentences = 0;
    while (end < docs.size() && (end == done || sentences + docs[end].sentences.size() <= batch_budget)) {
      sentences += docs[end].sentences.size();
      ++end;
    }
    const SentenceBatch batch =
        make_sentence_batch(std::span<const Document>(docs.data() + done, end - done), model.config());
    Graph<float> g;
    const auto out = model.forward(g, batch);
    const std::size_t S = out.attention_maps->dim(2);
    for (std::size_t d = 0; d < end - done; ++d) {
      const std::size_t real_sentences = docs[done + d].sentences.size();
      for (std::size_t l = 0; l < L; ++l) {
        std::vector<std::size_t> order(real_sentences);
        std::iota(order.begin(), order.end(), 0);
        const float* weights = out.attention_maps->data.data() + (d * L + l) * S;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
        os << docs[done + d].id << ',' << l << ',' << format_double(probs[(done + d) * L + l]);
        for (std::size_t rank = 0; rank < 3; ++rank) {
          os << ',';
          if (rank < real_sentences) os << order[rank];
          os << ',';
          if (rank < real_sentences) os << format_double(double(weights[order[rank]]));
        }
        os << '\n';
      }
    }
    done = end;
  }
  write_file_atomic(path, os.str());
}

}  // namespace

MetricReport cmd_eval(const std::vector<const ModelBundle*>& bundles, const EvalOptions& options) {
  if (bundles.empty()) throw UsageError("eval needs at least one checkpoint");
  const auto& first = *bundles.front();
  const std::size_t L = first.model->config().num_labels;
  for (const auto* b : bundles)
    if (b->model->config().num_labels != L)
      throw DataError("eval: checkpoints disagree on the number of labels");

  const LabelVocab labels = LabelVocab::load(options.labels_path);
  if (labels.size() != L)
    throw DataError("eval: labels file has " + std::to_string(labels.size()) + " classes, checkpoint has " +
                    std::to_string(L));

  IngestOptions ingest_opts;
  ingest_opts.limits.max_tokens_per_sentence = first.model->config().max_tokens_per_sentence;
  ingest_opts.limits.max_sentences_per_doc = first.model->config().max_sentences_per_doc;
  ingest_opts.fields = parse_fields(options.fields);
  ingest_opts.strict_labels = false;
  const std::vector<Document> docs = ingest(options.corpus_path, first.vocab, labels, ingest_opts);
  if (docs.empty()) throw DataError("eval: no usable documents in " + options.corpus_path);

  const std::size_t budget = 128;
  std::vector<std::vector<double>> member_probs;
  for (const auto* b : bundles)
    member_probs.push_back(predict(*b->model, docs, budget, options.threads));
  const std::vector<double> probs = average_predictions(member_probs);

  PredictionSet preds;
  preds.docs = docs.size();
  preds.classes = L;
  preds.scores = probs;
  preds.labels = label_matrix(docs, L);

  std::vector<std::string> class_names;
  for (std::size_t l = 0; l < labels.size(); ++l) class_names.push_back(labels.name(l));
  const MetricReport report = evaluate_predictions(preds, class_names, 0.5, options.k_values);

  if (!options.summary_csv_path.empty())
    write_file_atomic(options.summary_csv_path, metric_summary_csv(report));
  if (!options.per_class_csv_path.empty())
    write_file_atomic(options.per_class_csv_path, metric_per_class_csv(report));
  if (!options.explain_csv_path.empty()) {
    if (bundles.size() != 1) throw UsageError("--explain works with a single checkpoint");
    write_explanations(first, docs, probs, options.explain_csv_path, budget);
  }
  return report;
}

void cmd_embed(const ModelBundle& bundle, const std::string& corpus_path, const std::string& level,
               const std::string& fields, const std::string& out_path) {
  if (level != "sentence" && level != "document")
    throw UsageError("embed level must be 'sentence' or 'document'");
  const auto& model = *bundle.model;

  IngestOptions ingest_opts;
  ingest_opts.limits.max_tokens_per_sentence = model.config().max_tokens_per_sentence;
  ingest_opts.limits.max_sentences_per_doc = model.config().max_sentences_per_doc;
  ingest_opts.fields = parse_fields(fields);
  ingest_opts.strict_labels = false;
  ingest_opts.require_labels = false;
  const std::vector<Document> docs = ingest(corpus_path, bundle.vocab, LabelVocab(), ingest_opts);
  if (docs.empty()) throw DataError("embed: no usable documents in " + corpus_path);

  std::ostringstream os;
  const std::size_t budget = 128;
  std::size_t done = 0;
  while (done < docs.size()) {
    std::size_t end = done, sentences = 0;
    while (end < docs.size() && (end == done || sentences + docs[end].sentences.size() <= budget)) {
      sentences += docs[end].sentences.size();
      ++end;
    }
    const SentenceBatch batch =
        make_sentence_batch(std::span<const Document>(docs.data() + done, end - done), model.config());
    Graph<float> g;
    const auto out = model.forward(g, batch);
    const std::size_t E = model.config().hidden_dim;
    if (level == "document") {
      for (std::size_t d = 0; d < end - done; ++d) {
        nlohmann::json record;
        record["id"] = docs[done + d].id;
        record["level"] = "document";
        std::vector<float> vec(out.document_embeddings->data.begin() + d * E,
                               out.document_embeddings->data.begin() + (d + 1) * E);
        record["vector"] = vec;
        os << record.dump() << '\n';
      }
    } else {
      for (std::size_t s = 0; s < batch.num_sentences; ++s) {
        nlohmann::json record;
        record["id"] = docs[done + batch.doc_index[s]].id + "#" + std::to_string(batch.sent_position[s]);
        record["level"] = "sentence";
        std::vector<float> vec(out.sentence_embeddings->data.begin() + s * E,
                               out.sentence_embeddings->data.begin() + (s + 1) * E);
        record["vector"] = vec;
        os << record.dump() << '\n';
      }
    }
    done = end;
  }
  write_file_atomic(out_path, os.str());
}

SearchReport cmd_search(const SearchOptions& options) {
  const SearchBase base = SearchBase::load_csv(options.base_csv_path);
  const GroundTruth truth = GroundTruth::load(options.truth_path);
  SearchReport report;
  if (options.engine == "bm25") {
    report = bm25_search(base, truth);
  } else if (options.engine == "embed") {
    if (!options.bundle) throw UsageError("embed search needs --checkpoint and --vocab");
    report = embed_search(*options.bundle->model, options.bundle->vocab, base, truth);
  } else {
    throw UsageError("search engine must be 'bm25' or 'embed'");
  }
  if (!options.results_csv_path.empty())
    write_file_atomic(options.results_csv_path, search_report_csv(report));
  return report;
}

std::string cmd_stats_csv(const std::string& corpus_path, const std::string& vocab_path,
                          const std::string& labels_path, const std::string& fields,
                          const IngestLimits& limits) {
  const Vocab vocab = Vocab::load(vocab_path);
  const LabelVocab labels = labels_path.empty() ? LabelVocab() : LabelVocab::load(labels_path);
  IngestOptions ingest_opts;
  ingest_opts.limits = limits;
  ingest_opts.fields = parse_fields(fields);
  ingest_opts.strict_labels = false;
  ingest_opts.require_labels = false;
  const std::vector<Document> docs = ingest(corpus_path, vocab, labels, ingest_opts);
  return corpus_stats_csv(corpus_stats(docs));
}

void cmd_build_vocab(const std::string& corpus_path, std::size_t target_size,
                     const std::string& out_path) {
  if (target_size <= kNumReserved) throw UsageError("build-vocab: size must exceed the reserved tokens");
  std::istringstream in(read_text_file(corpus_path));
  std::vector<std::string> texts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("corpus line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (record.contains("sentences") && record["sentences"].is_array()) {
      for (const auto& s : record["sentences"])
        if (s.is_string()) texts.push_back(s.get<std::string>());
    } else if (record.contains("text")) {
      if (record["text"].is_string()) {
        texts.push_back(record["text"].get<std::string>());
      } else if (record["text"].is_object()) {
        for (const auto& [_, value] : record["text"].items())
          if (value.is_string()) texts.push_back(value.get<std::string>());
      }
    }
  }
  if (texts.empty()) throw DataError("build-vocab: no text found in " + corpus_path);
  build_vocab(texts, target_size).save(out_path);
}

std::string cmd_bench_csv(const BenchOptions& options) {
  std::ostringstream os;
  os << cost_report_csv_header();
  std::vector<std::size_t> sweep;
  if (options.grid) {
    for (std::size_t s = 1; s <= options.params.n; s *= 2) sweep.push_back(s);
  } else {
    sweep.push_back(options.params.s);
  }
  for (std::size_t s : sweep) {
    ComplexityParams p = options.params;
    p.s = s;
    os << cost_report_csv_row(p.trials > 0 ? measure(p) : flop_model(p));
  }
  return os.str();
}

}  // namespace mdbert
