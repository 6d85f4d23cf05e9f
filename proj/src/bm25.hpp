#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mdbert {

// One entry of the standard-name search base. Synonyms share a group id so
// a hit on any of them counts as a hit on the canonical concept.
struct SearchBaseEntry {
  std::size_t id = 0;
  std::size_t group_id = 0;
  std::string name;
};

struct SearchBase {
  std::vector<SearchBaseEntry> entries;

  // CSV with header "id,group_id,name"; names may be double-quoted.
  static SearchBase load_csv(const std::string& path);
  void validate() const;  // ids dense 0..M-1
};

// Okapi-style inverted statistics over word-level tokens.
// Scoring constants k = 1.2 and b = 0.75.
class Bm25Index {
 public:
  static constexpr double kK = 1.2;
  static constexpr double kB = 0.75;

  static Bm25Index build(const SearchBase& base);

  std::size_t num_indications() const { return doc_lengths_.size(); }
  std::size_t doc_length(std::size_t i) const { return doc_lengths_[i]; }
  double average_length() const { return average_length_; }
  std::size_t document_frequency(const std::string& term) const;
  std::size_t term_frequency(std::size_t indication, const std::string& term) const;

  // Additive over query tokens; a token absent from an indication (or from
  // the whole base) contributes zero to it.
  std::vector<double> score(const std::vector<std::string>& query_tokens) const;

  struct Top1 {
    std::size_t id = 0;
    double score = 0;
    bool zero_score = false;  // every indication scored zero (ties fall to id 0)
  };
  Top1 top1(const std::vector<std::string>& query_tokens) const;

 private:
  struct Posting {
    std::size_t indication;
    std::size_t count;
  };
  std::map<std::string, std::vector<Posting>> postings_;  // sorted by indication id
  std::vector<std::size_t> doc_lengths_;
  double average_length_ = 0;
};

}  // namespace mdbert
