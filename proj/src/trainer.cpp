#include "trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <thread>

#include "checkpoint.hpp"
#include "errors.hpp"
#include "io_util.hpp"

namespace mdbert {

void LossConfig::validate(std::vector<std::string>* warnings) const {
  if (w_doc < 1.0 || w_desc < 1.0) throw UsageError("loss: positive-sample weights must be >= 1");
  if (warnings) {
    if (w_doc > 5.0) warnings->push_back("w_doc = " + format_double(w_doc) + " is outside the usual [1, 5] range");
    if (w_desc > 5.0) warnings->push_back("w_desc = " + format_double(w_desc) + " is outside the usual [1, 5] range");
  }
}

void TrainSchedule::validate() const {
  if (patience < 1) throw UsageError("schedule: patience must be >= 1");
  if (max_epochs < 1) throw UsageError("schedule: max_epochs must be >= 1");
  if (batch_sentence_budget < 1) throw UsageError("schedule: batch_sentence_budget must be >= 1");
  if (lr <= 0) throw UsageError("schedule: lr must be positive");
}

std::vector<Document> make_description_corpus(const LabelVocab& labels, const Vocab& vocab,
                                              const IngestLimits& limits, std::size_t* skipped) {
  if (skipped) *skipped = 0;
  std::vector<Document> docs;
  for (std::size_t l = 0; l < labels.size(); ++l) {
    if (trim(labels.description(l)).empty()) {
      if (skipped) ++*skipped;
      continue;
    }
    Document doc;
    doc.id = "desc:" + labels.name(l);
    doc.sentences.push_back(vocab.tokenize(labels.description(l), limits.max_tokens_per_sentence));
    doc.labels.assign(labels.size(), 0);
    doc.labels[l] = 1;
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<std::uint8_t> label_matrix(const std::vector<Document>& docs, std::size_t num_labels) {
  std::vector<std::uint8_t> out(docs.size() * num_labels, 0);
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (docs[d].labels.size() != num_labels)
      throw ShapeError("label matrix: document '" + docs[d].id + "' has the wrong label width");
    for (std::size_t l = 0; l < num_labels; ++l) out[d * num_labels + l] = docs[d].labels[l];
  }
  return out;
}

namespace {

// Consecutive documents packed until the sentence budget is reached;
// every batch holds at least one document.
std::vector<std::pair<std::size_t, std::size_t>> pack_batches(const std::vector<Document>& docs,
                                                              std::size_t budget) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  std::size_t start = 0;
  while (start < docs.size()) {
    std::size_t end = start;
    std::size_t sentences = 0;
    while (end < docs.size() && (end == start || sentences + docs[end].sentences.size() <= budget)) {
      sentences += docs[end].sentences.size();
      ++end;
    }
    ranges.emplace_back(start, end);
    start = end;
  }
  return ranges;
}

Tensor<float> labels_tensor(const std::vector<const Document*>& docs, std::size_t num_labels) {
  Tensor<float> t({docs.size(), num_labels});
  for (std::size_t d = 0; d < docs.size(); ++d)
    for (std::size_t l = 0; l < num_labels; ++l) t.data[d * num_labels + l] = float(docs[d]->labels[l]);
  return t;
}

}  // namespace

std::vector<double> predict(const Model<float>& model, const std::vector<Document>& docs,
                            std::size_t batch_sentence_budget, std::size_t threads) {
  const std::size_t L = model.config().num_labels;
  std::vector<double> probs(docs.size() * L, 0.0);
  const auto ranges = pack_batches(docs, batch_sentence_budget);

  auto run_range = [&](std::size_t first_batch, std::size_t last_batch) {
    for (std::size_t r = first_batch; r < last_batch; ++r) {
      const auto [start, end] = ranges[r];
      const SentenceBatch batch =
          make_sentence_batch(std::span<const Document>(docs.data() + start, end - start), model.config());
      Graph<float> g;
      const auto out = model.forward(g, batch);
      for (std::size_t d = 0; d < end - start; ++d)
        for (std::size_t l = 0; l < L; ++l)
          probs[(start + d) * L + l] = double(out.probabilities->data[d * L + l]);
    }
  };

  if (threads <= 1 || ranges.size() <= 1) {
    run_range(0, ranges.size());
  } else {
    const std::size_t workers = std::min(threads, ranges.size());
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (ranges.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t first = w * chunk;
      const std::size_t last = std::min(ranges.size(), first + chunk);
      if (first >= last) continue;
      pool.emplace_back([&, w, first, last]() {
        try {
          run_range(first, last);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& error : errors)
      if (error) std::rethrow_exception(error);
  }
  return probs;
}

std::string TrainResult::log_csv() const {
  std::ostringstream os;
  os << "epoch,stage,loss_doc,loss_desc,dev_micro_f1,dev_macro_f1\n";
  for (const auto& row : log) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%zu,%d,%.9f,%.9f,%.9f,%.9f\n", row.epoch, row.stage, row.loss_doc,
                  row.loss_desc, row.dev_micro_f1, row.dev_macro_f1);
    os << buf;
  }
  return os.str();
}

std::vector<double> average_predictions(const std::vector<std::vector<double>>& members) {
  if (members.empty()) throw DataError("average_predictions: empty member list");
  const std::size_t n = members[0].size();
  for (const auto& m : members)
    if (m.size() != n) throw ShapeError("average_predictions: member shapes differ");
  std::vector<double> out(n);
  const double inv = 1.0 / double(members.size());
  for (std::size_t i = 0; i < n; ++i) {
    // Anchored on the first member so identical members average to
    // themselves exactly.
    double delta = 0.0;
    for (std::size_t m = 1; m < members.size(); ++m) delta += members[m][i] - members[0][i];
    out[i] = std::min(1.0, std::max(0.0, members[0][i] + delta * inv));
  }
  return out;
}

TrainResult train_model(Model<float>& model, const std::vector<Document>& train_docs,
                        const std::vector<Document>& desc_docs, const std::vector<Document>& dev_docs,
                        const TrainOptions& options) {
  options.schedule.validate();
  options.loss.validate();
  if (train_docs.empty()) throw DataError("train: empty training corpus");
  if (dev_docs.empty()) throw DataError("train: a dev split is required for early stopping");
  const std::size_t L = model.config().num_labels;

  AdamW<float> optimizer({float(options.schedule.lr), float(options.schedule.beta1),
                          float(options.schedule.beta2), float(options.schedule.adam_eps),
                          float(options.schedule.weight_decay)});
  Rng rng(options.schedule.seed);

  struct Item {
    const Document* doc;
    bool is_description;
  };
  std::vector<Item> items;
  for (const auto& d : train_docs) items.push_back({&d, false});
  if (options.desc_augmentation)
    for (const auto& d : desc_docs) items.push_back({&d, true});

  const std::vector<std::uint8_t> dev_labels = label_matrix(dev_docs, L);

  if (!options.out_dir.empty()) std::filesystem::create_directories(options.out_dir);

  TrainResult result;
  EarlyStopper stopper(options.schedule.patience);
  ParamStore<float> best_params;
  auto snapshot_params = [&]() {
    ParamStore<float> copy;
    for (const auto& e : model.params().entries()) {
      Tensor<float> t(e.tensor->shape);
      t.data = e.tensor->data;
      copy.add(e.name, std::move(t));
    }
    return copy;
  };

  for (std::size_t epoch = 1; epoch <= options.schedule.max_epochs; ++epoch) {
    const bool stage1 = epoch <= options.schedule.frozen_epochs;
    model.params().set_frozen_prefixes(stage1 ? std::vector<std::string>{"token_tf."}
                                              : std::vector<std::string>{});

    rng.shuffle(items);
    std::vector<Document> epoch_docs;
    std::vector<bool> epoch_is_desc;
    epoch_docs.reserve(items.size());
    for (const auto& item : items) {
      epoch_docs.push_back(*item.doc);
      epoch_is_desc.push_back(item.is_description);
    }

    double doc_loss_sum = 0, desc_loss_sum = 0;
    std::size_t doc_rows = 0, desc_rows = 0;
    for (const auto& [start, end] : pack_batches(epoch_docs, options.schedule.batch_sentence_budget)) {
      const SentenceBatch batch = make_sentence_batch(
          std::span<const Document>(epoch_docs.data() + start, end - start), model.config());
      Graph<float> g;
      const auto out = model.forward(g, batch, &rng);

      std::vector<std::size_t> doc_idx, desc_idx;
      std::vector<const Document*> doc_ptrs, desc_ptrs;
      for (std::size_t d = start; d < end; ++d) {
        if (epoch_is_desc[d]) {
          desc_idx.push_back(d - start);
          desc_ptrs.push_back(&epoch_docs[d]);
        } else {
          doc_idx.push_back(d - start);
          doc_ptrs.push_back(&epoch_docs[d]);
        }
      }

      TensorPtr<float> total;
      double batch_doc_loss = 0, batch_desc_loss = 0;
      if (!doc_idx.empty()) {
        auto term = g.weighted_bce(g.select_rows(out.probabilities, doc_idx),
                                   labels_tensor(doc_ptrs, L), float(options.loss.w_doc));
        batch_doc_loss = double(term->data[0]);
        total = term;
      }
      if (!desc_idx.empty()) {
        auto term = g.weighted_bce(g.select_rows(out.probabilities, desc_idx),
                                   labels_tensor(desc_ptrs, L), float(options.loss.w_desc));
        batch_desc_loss = double(term->data[0]);
        total = total ? g.add(total, term) : term;
      }
      if (!std::isfinite(batch_doc_loss) || !std::isfinite(batch_desc_loss)) {
        std::string ids;
        for (std::size_t d = start; d < end; ++d) ids += (ids.empty() ? "" : ",") + epoch_docs[d].id;
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + " (lr " +
                           format_double(optimizer.options().lr) + ", batch docs: " + ids + ")");
      }
      g.backward(total);
      optimizer.step(model.params());

      doc_loss_sum += batch_doc_loss * double(doc_idx.size());
      desc_loss_sum += batch_desc_loss * double(desc_idx.size());
      doc_rows += doc_idx.size();
      desc_rows += desc_idx.size();
    }

    PredictionSet dev;
    dev.docs = dev_docs.size();
    dev.classes = L;
    dev.scores = predict(model, dev_docs, options.schedule.batch_sentence_budget);
    dev.labels = dev_labels;

    EpochLog row;
    row.epoch = epoch;
    row.stage = stage1 ? 1 : 2;
    row.loss_doc = doc_rows ? doc_loss_sum / double(doc_rows) : 0.0;
    row.loss_desc = desc_rows ? desc_loss_sum / double(desc_rows) : 0.0;
    row.dev_micro_f1 = f1_score(dev, 0.5, Averaging::Micro);
    row.dev_macro_f1 = f1_score(dev, 0.5, Averaging::Macro);
    result.log.push_back(row);
    result.epochs_run = epoch;

    if (stopper.observe(row.dev_micro_f1)) {
      best_params = snapshot_params();
      if (!options.out_dir.empty()) {
        char name[48];
        std::snprintf(name, sizeof(name), "checkpoint_epoch%03zu.mdb", epoch);
        save_checkpoint(options.out_dir + "/" + name, model.params(), model.config().to_text());
        save_checkpoint(options.out_dir + "/best.mdb", model.params(), model.config().to_text());
      }
    }
    if (stopper.stop()) {
      result.stopped_early = true;
      break;
    }
  }

  result.best_epoch = stopper.best_epoch();
  result.best_dev_micro_f1 = stopper.best_score();
  if (best_params.size() > 0) {
    for (const auto& e : best_params.entries()) model.params().get(e.name)->data = e.tensor->data;
  }
  model.params().set_frozen_prefixes({});
  if (!options.out_dir.empty()) write_file_atomic(options.out_dir + "/log.csv", result.log_csv());
  return result;
}

}  // namespace mdbert
