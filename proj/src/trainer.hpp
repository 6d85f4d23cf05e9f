#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adamw.hpp"
#include "corpus.hpp"
#include "encoder.hpp"
#include "metrics.hpp"

namespace mdbert {

// Positive-sample weights for the document and description loss terms.
struct LossConfig {
  double w_doc = 1.0;
  double w_desc = 1.0;

  // Both must be >= 1; values outside [1, 5] are legal but flagged.
  void validate(std::vector<std::string>* warnings = nullptr) const;
};

struct TrainSchedule {
  std::size_t frozen_epochs = 3;  // stage 1: token transformer frozen
  std::size_t patience = 3;       // consecutive non-improving epochs before stopping
  std::size_t max_epochs = 50;
  std::size_t batch_sentence_budget = 128;
  std::uint64_t seed = 0;
  double lr = 1e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

// Tracks the best dev score; stop() turns true after `patience` consecutive
// epochs without strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  // Returns true when the score strictly improves on the best so far.
  bool observe(double score) {
    ++epoch_;
    if (score > best_score_) {
      best_score_ = score;
      best_epoch_ = epoch_;
      bad_epochs_ = 0;
      return true;
    }
    ++bad_epochs_;
    return false;
  }

  bool stop() const { return bad_epochs_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_score() const { return best_score_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t bad_epochs_ = 0;
  std::size_t best_epoch_ = 0;
  double best_score_ = -1.0;
};

// One single-sentence document per label that has a description, one-hot
// labeled; labels without a description are skipped and counted.
std::vector<Document> make_description_corpus(const LabelVocab& labels, const Vocab& vocab,
                                              const IngestLimits& limits, std::size_t* skipped = nullptr);

// Eval-mode class probabilities for every document, row-major D x L.
// Batches are packed to the sentence budget; threads shard over batches.
std::vector<double> predict(const Model<float>& model, const std::vector<Document>& docs,
                            std::size_t batch_sentence_budget, std::size_t threads = 1);

struct EpochLog {
  std::size_t epoch = 0;
  int stage = 1;
  double loss_doc = 0;
  double loss_desc = 0;
  double dev_micro_f1 = 0;
  double dev_macro_f1 = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_dev_micro_f1 = 0;
  bool stopped_early = false;
  std::size_t epochs_run = 0;

  std::string log_csv() const;
};

struct TrainOptions {
  TrainSchedule schedule;
  LossConfig loss;
  bool desc_augmentation = true;
  std::string out_dir;  // empty: keep everything in memory, write no files
};

// Two-stage schedule: epochs 1..frozen_epochs train with the token
// transformer frozen, later epochs tune the whole model. Document and
// description batches are mixed by joint shuffling each epoch. After each
// epoch the dev split is scored (micro-F1 at 0.5) for early stopping; the
// best parameters are restored into the model on return and, when out_dir
// is set, written as checkpoint_epochNNN.mdb plus best.mdb.
TrainResult train_model(Model<float>& model, const std::vector<Document>& train_docs,
                        const std::vector<Document>& desc_docs, const std::vector<Document>& dev_docs,
                        const TrainOptions& options);

// Elementwise mean of probability matrices; exact when members agree.
std::vector<double> average_predictions(const std::vector<std::vector<double>>& members);

// Multi-hot label matrix for a document list, row-major D x L.
std::vector<std::uint8_t> label_matrix(const std::vector<Document>& docs, std::size_t num_labels);

}  // namespace mdbert
