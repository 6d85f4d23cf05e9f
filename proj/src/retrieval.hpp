#pragma once

#include <set>
#include <string>
#include <vector>

#include "bm25.hpp"
#include "encoder.hpp"
#include "vocab.hpp"

namespace mdbert {

// Acceptable canonical groups per query string.
struct GroundTruth {
  struct Entry {
    std::string query;
    std::set<std::size_t> groups;
  };
  std::vector<Entry> entries;

  // Line-delimited JSON: {"query": ..., "groups": [ids]}.
  static GroundTruth load(const std::string& path);
  void validate_against(const SearchBase& base) const;
};

// Sentence embeddings (token transformer + first average pooling) for a
// list of raw strings, each treated as a one-sentence document.
std::vector<std::vector<float>> encode_texts(const Model<float>& model, const Vocab& vocab,
                                             const std::vector<std::string>& texts);

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b);

struct SearchHit {
  std::string query;
  std::size_t top1_id = 0;
  std::size_t top1_group = 0;
  double score = 0;
  bool hit = false;
};

struct SearchReport {
  std::vector<SearchHit> hits;
  double hit_rate = 0;
  std::optional<double> top1_auc;  // undefined when outcomes are one-sided
};

SearchReport bm25_search(const SearchBase& base, const GroundTruth& truth);
SearchReport embed_search(const Model<float>& model, const Vocab& vocab, const SearchBase& base,
                          const GroundTruth& truth);

std::string search_report_csv(const SearchReport& report);

}  // namespace mdbert
