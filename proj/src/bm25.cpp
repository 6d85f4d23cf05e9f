#include "bm25.hpp"

#include <cmath>
#include <sstream>

#include "errors.hpp"
#include "io_util.hpp"
#include "vocab.hpp"

namespace mdbert {

SearchBase SearchBase::load_csv(const std::string& path) {
  SearchBase base;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("id,", 0) == 0) continue;  // header
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos)
      throw DataError("search base line " + std::to_string(line_no) + ": expected id,group_id,name");
    SearchBaseEntry entry;
    try {
      entry.id = std::stoull(trim(line.substr(0, c1)));
      entry.group_id = std::stoull(trim(line.substr(c1 + 1, c2 - c1 - 1)));
    } catch (const std::exception&) {
      throw DataError("search base line " + std::to_string(line_no) + ": bad id");
    }
    std::string name = trim(line.substr(c2 + 1));
    if (name.size() >= 2 && name.front() == '"' && name.back() == '"')
      name = name.substr(1, name.size() - 2);
    entry.name = name;
    base.entries.push_back(std::move(entry));
  }
  base.validate();
  return base;
}

void SearchBase::validate() const {
  if (entries.empty()) throw DataError("search base: empty");
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].id != i)
      throw DataError("search base: ids must be dense 0..M-1, got " + std::to_string(entries[i].id) +
                      " at row " + std::to_string(i));
}

Bm25Index Bm25Index::build(const SearchBase& base) {
  base.validate();
  Bm25Index index;
  index.doc_lengths_.resize(base.entries.size(), 0);
  std::size_t total_tokens = 0;
  for (const auto& entry : base.entries) {
    std::map<std::string, std::size_t> counts;
    for (const auto& token : word_tokens(entry.name)) ++counts[token];
    std::size_t length = 0;
    for (const auto& [term, count] : counts) {
      index.postings_[term].push_back({entry.id, count});
      length += count;
    }
    index.doc_lengths_[entry.id] = length;
    total_tokens += length;
  }
  index.average_length_ = double(total_tokens) / double(base.entries.size());
  return index;
}

std::size_t Bm25Index::document_frequency(const std::string& term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? 0 : it->second.size();
}

std::size_t Bm25Index::term_frequency(std::size_t indication, const std::string& term) const {
  auto it = postings_.find(term);
  if (it == postings_.end()) return 0;
  for (const auto& p : it->second)
    if (p.indication == indication) return p.count;
  return 0;
}

std::vector<double> Bm25Index::score(const std::vector<std::string>& query_tokens) const {
  const double m = double(num_indications());
  std::vector<double> scores(num_indications(), 0.0);
  for (const auto& term : query_tokens) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;  // IF finite but F = 0 everywhere
    const double df = double(it->second.size());
    const double inverse_frequency = std::log(1.0 + (m - df + 0.5) / (df + 0.5));
    for (const auto& posting : it->second) {
      const double tf = double(posting.count);
      const double relative_length = double(doc_lengths_[posting.indication]) / average_length_;
      const double frequency =
          tf * (1.0 + kK) / (tf + kK * (1.0 - kB + kB * relative_length));
      scores[posting.indication] += frequency * inverse_frequency;
    }
  }
  return scores;
}

Bm25Index::Top1 Bm25Index::top1(const std::vector<std::string>& query_tokens) const {
  const auto scores = score(query_tokens);
  Top1 best;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best.id]) best.id = i;
  best.score = scores[best.id];
  best.zero_score = best.score == 0.0;
  return best;
}

}  // namespace mdbert
