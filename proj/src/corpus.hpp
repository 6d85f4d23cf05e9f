#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vocab.hpp"

namespace mdbert {

// One ingested document: tokenized sentences (each starting with [CLS]) and
// a multi-hot label vector over the label vocabulary.
struct Document {
  std::string id;
  std::vector<std::vector<TokenId>> sentences;
  std::vector<std::uint8_t> labels;

  std::size_t positive_labels() const {
    std::size_t n = 0;
    for (auto v : labels) n += v != 0;
    return n;
  }
};

class LabelVocab {
 public:
  LabelVocab() = default;

  // File format: one label per line, optionally "name<TAB>description".
  static LabelVocab load(const std::string& path);

  void add(const std::string& name, const std::string& description = "");
  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::string& description(std::size_t i) const { return descriptions_[i]; }
  std::optional<std::size_t> find(const std::string& name) const;

 private:
  std::vector<std::string> names_;
  std::vector<std::string> descriptions_;
  std::map<std::string, std::size_t> index_;
};

struct IngestLimits {
  std::size_t max_tokens_per_sentence = 62;
  std::size_t max_sentences_per_doc = 256;
};

struct IngestOptions {
  IngestLimits limits;
  std::vector<std::string> fields;  // empty: use every field, record order
  bool strict_labels = true;        // unknown label: error vs skip+count
  bool require_labels = true;       // drop zero-label documents when set
};

struct IngestReport {
  std::size_t records_read = 0;
  std::size_t documents_kept = 0;
  std::size_t dropped_no_labels = 0;
  std::size_t dropped_empty = 0;
  std::size_t truncated_documents = 0;
  std::size_t truncated_sentences = 0;
  std::size_t unknown_labels_skipped = 0;
};

// Line-delimited JSON records: {"id": ..., "text": string-or-object |
// "sentences": [...], "labels": [...]}. Object-valued text is joined field
// by field with [SEP]; the title field is kept as a single sentence.
std::vector<Document> ingest(const std::string& path, const Vocab& vocab, const LabelVocab& labels,
                             const IngestOptions& options, IngestReport* report = nullptr);

// Same pipeline applied to one raw text, without labels.
std::vector<std::vector<TokenId>> sentences_from_text(const std::string& text, const Vocab& vocab,
                                                      const IngestLimits& limits);

struct CorpusStats {
  double sentences_per_doc_mean = 0, sentences_per_doc_std = 0;
  double tokens_per_sentence_mean = 0, tokens_per_sentence_std = 0;
  double tokens_per_doc_mean = 0, tokens_per_doc_std = 0;
};

// Population mean/std; token counts exclude the [CLS] prefix.
CorpusStats corpus_stats(const std::vector<Document>& docs);
std::string corpus_stats_csv(const CorpusStats& stats);

}  // namespace mdbert
