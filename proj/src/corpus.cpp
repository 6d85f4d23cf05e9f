#include "corpus.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "errors.hpp"
#include "io_util.hpp"
#include "segment.hpp"

namespace mdbert {

using json = nlohmann::ordered_json;

LabelVocab LabelVocab::load(const std::string& path) {
  LabelVocab lv;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      lv.add(trim(line));
    } else {
      lv.add(trim(line.substr(0, tab)), trim(line.substr(tab + 1)));
    }
  }
  return lv;
}

void LabelVocab::add(const std::string& name, const std::string& description) {
  if (name.empty()) throw DataError("label vocab: empty label name");
  if (index_.count(name)) throw DataError("label vocab: duplicate label '" + name + "'");
  index_[name] = names_.size();
  names_.push_back(name);
  descriptions_.push_back(description);
}

std::optional<std::size_t> LabelVocab::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

namespace {

// Field texts -> sentence strings. The title is never segmented; all other
// fields are joined with " [SEP] " first and segmented as one stream.
std::vector<std::string> field_sentences(const std::vector<std::pair<std::string, std::string>>& fields) {
  std::vector<std::string> sentences;
  std::string joined;
  bool later_fields = false;
  for (const auto& [name, text] : fields) {
    if (name != "title" && !trim(text).empty()) later_fields = true;
  }
  for (const auto& [name, text] : fields) {
    if (trim(text).empty()) continue;
    if (name == "title") {
      sentences.push_back(later_fields ? trim(text) + " [SEP]" : trim(text));
      continue;
    }
    if (!joined.empty()) joined += " [SEP] ";
    joined += text;
  }
  for (auto& s : segment(joined)) sentences.push_back(std::move(s));
  return sentences;
}

std::vector<std::vector<TokenId>> tokenize_sentences(const std::vector<std::string>& sentence_texts,
                                                     const Vocab& vocab, const IngestLimits& limits,
                                                     IngestReport* report) {
  std::vector<std::vector<TokenId>> out;
  for (const auto& text : sentence_texts) {
    auto ids = vocab.tokenize(text, limits.max_tokens_per_sentence);
    if (report) {
      // Count sentences that hit the token cap (re-tokenizing unbounded
      // would be wasteful; the cap is detectable from a full output).
      if (ids.size() == limits.max_tokens_per_sentence &&
          vocab.tokenize(text, limits.max_tokens_per_sentence + 1).size() > ids.size())
        ++report->truncated_sentences;
    }
    out.push_back(std::move(ids));
  }
  if (out.size() > limits.max_sentences_per_doc) {
    out.resize(limits.max_sentences_per_doc);
    if (report) ++report->truncated_documents;
  }
  return out;
}

}  // namespace

std::vector<std::vector<TokenId>> sentences_from_text(const std::string& text, const Vocab& vocab,
                                                      const IngestLimits& limits) {
  return tokenize_sentences(segment(text), vocab, limits, nullptr);
}

std::vector<Document> ingest(const std::string& path, const Vocab& vocab, const LabelVocab& labels,
                             const IngestOptions& options, IngestReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus: " + path);
  IngestReport local;
  IngestReport& rep = report ? *report : local;

  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++rep.records_read;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("corpus line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!record.is_object() || !record.contains("id") || !record["id"].is_string())
      throw DataError("corpus line " + std::to_string(line_no) + ": record needs a string 'id'");

    Document doc;
    doc.id = record["id"].get<std::string>();
    doc.labels.assign(labels.size(), 0);

    if (record.contains("labels")) {
      if (!record["labels"].is_array())
        throw DataError("corpus line " + std::to_string(line_no) + ": 'labels' must be an array");
      for (const auto& lab : record["labels"]) {
        if (!lab.is_string())
          throw DataError("corpus line " + std::to_string(line_no) + ": labels must be strings");
        const auto idx = labels.find(lab.get<std::string>());
        if (!idx) {
          if (options.strict_labels)
            throw DataError("corpus line " + std::to_string(line_no) + ": unknown label '" +
                            lab.get<std::string>() + "'");
          ++rep.unknown_labels_skipped;
          continue;
        }
        doc.labels[*idx] = 1;
      }
    }

    std::vector<std::string> sentence_texts;
    if (record.contains("sentences")) {
      if (!record["sentences"].is_array())
        throw DataError("corpus line " + std::to_string(line_no) + ": 'sentences' must be an array");
      for (const auto& s : record["sentences"]) {
        if (!s.is_string())
          throw DataError("corpus line " + std::to_string(line_no) + ": sentences must be strings");
        if (!trim(s.get<std::string>()).empty()) sentence_texts.push_back(s.get<std::string>());
      }
    } else if (record.contains("text")) {
      const auto& text = record["text"];
      if (text.is_string()) {
        sentence_texts = segment(text.get<std::string>());
      } else if (text.is_object()) {
        std::vector<std::pair<std::string, std::string>> fields;
        if (options.fields.empty()) {
          for (const auto& [key, value] : text.items()) {
            if (!value.is_string())
              throw DataError("corpus line " + std::to_string(line_no) + ": field '" + key +
                              "' must be a string");
            fields.emplace_back(key, value.get<std::string>());
          }
        } else {
          for (const auto& name : options.fields) {
            if (!text.contains(name)) continue;
            if (!text[name].is_string())
              throw DataError("corpus line " + std::to_string(line_no) + ": field '" + name +
                              "' must be a string");
            fields.emplace_back(name, text[name].get<std::string>());
          }
        }
        sentence_texts = field_sentences(fields);
      } else {
        throw DataError("corpus line " + std::to_string(line_no) + ": 'text' must be a string or object");
      }
    } else {
      throw DataError("corpus line " + std::to_string(line_no) + ": record needs 'text' or 'sentences'");
    }

    doc.sentences = tokenize_sentences(sentence_texts, vocab, options.limits, &rep);

    if (doc.sentences.empty()) {
      ++rep.dropped_empty;
      continue;
    }
    if (options.require_labels && doc.positive_labels() == 0) {
      ++rep.dropped_no_labels;
      continue;
    }
    docs.push_back(std::move(doc));
  }
  rep.documents_kept = docs.size();
  return docs;
}

namespace {

struct MeanStd {
  double mean = 0, std_dev = 0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd ms;
  if (xs.empty()) return ms;
  for (double x : xs) ms.mean += x;
  ms.mean /= double(xs.size());
  for (double x : xs) ms.std_dev += (x - ms.mean) * (x - ms.mean);
  ms.std_dev = std::sqrt(ms.std_dev / double(xs.size()));
  return ms;
}

}  // namespace

CorpusStats corpus_stats(const std::vector<Document>& docs) {
  if (docs.empty()) throw DataError("stats: empty corpus");
  std::vector<double> sents_per_doc, tokens_per_sentence, tokens_per_doc;
  for (const auto& doc : docs) {
    sents_per_doc.push_back(double(doc.sentences.size()));
    double doc_tokens = 0;
    for (const auto& sent : doc.sentences) {
      const double content = sent.empty() ? 0.0 : double(sent.size() - 1);  // [CLS] excluded
      tokens_per_sentence.push_back(content);
      doc_tokens += content;
    }
    tokens_per_doc.push_back(doc_tokens);
  }
  CorpusStats stats;
  const auto a = mean_std(sents_per_doc);
  stats.sentences_per_doc_mean = a.mean;
  stats.sentences_per_doc_std = a.std_dev;
  const auto b = mean_std(tokens_per_sentence);
  stats.tokens_per_sentence_mean = b.mean;
  stats.tokens_per_sentence_std = b.std_dev;
  const auto c = mean_std(tokens_per_doc);
  stats.tokens_per_doc_mean = c.mean;
  stats.tokens_per_doc_std = c.std_dev;
  return stats;
}

std::string corpus_stats_csv(const CorpusStats& stats) {
  std::ostringstream os;
  os << "metric,mean,std\n";
  os << "sentences_per_doc," << format_double(stats.sentences_per_doc_mean) << ','
     << format_double(stats.sentences_per_doc_std) << '\n';
  os << "tokens_per_sentence," << format_double(stats.tokens_per_sentence_mean) << ','
     << format_double(stats.tokens_per_sentence_std) << '\n';
  os << "tokens_per_doc," << format_double(stats.tokens_per_doc_mean) << ','
     << format_double(stats.tokens_per_doc_std) << '\n';
  return os.str();
}

}  // namespace mdbert
