#include "retrieval.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "errors.hpp"
#include "io_util.hpp"
#include "metrics.hpp"

namespace mdbert {

GroundTruth GroundTruth::load(const std::string& path) {
  GroundTruth truth;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("ground truth line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!record.contains("query") || !record["query"].is_string() || !record.contains("groups") ||
        !record["groups"].is_array() || record["groups"].empty())
      throw DataError("ground truth line " + std::to_string(line_no) +
                      ": expected {\"query\": ..., \"groups\": [...]} with a non-empty group set");
    Entry entry;
    entry.query = record["query"].get<std::string>();
    for (const auto& g : record["groups"]) entry.groups.insert(g.get<std::size_t>());
    truth.entries.push_back(std::move(entry));
  }
  if (truth.entries.empty()) throw DataError("ground truth: empty file " + path);
  return truth;
}

void GroundTruth::validate_against(const SearchBase& base) const {
  std::set<std::size_t> known_groups;
  for (const auto& entry : base.entries) known_groups.insert(entry.group_id);
  for (const auto& entry : entries)
    for (std::size_t g : entry.groups)
      if (!known_groups.count(g))
        throw DataError("ground truth: query '" + entry.query + "' references unknown group " +
                        std::to_string(g));
}

std::vector<std::vector<float>> encode_texts(const Model<float>& model, const Vocab& vocab,
                                             const std::vector<std::string>& texts) {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  const std::size_t batch_size = 64;
  for (std::size_t start = 0; start < texts.size(); start += batch_size) {
    const std::size_t end = std::min(texts.size(), start + batch_size);
    std::vector<Document> docs;
    for (std::size_t i = start; i < end; ++i) {
      Document doc;
      doc.id = std::to_string(i);
      doc.sentences.push_back(vocab.tokenize(texts[i], model.config().max_tokens_per_sentence));
      docs.push_back(std::move(doc));
    }
    const SentenceBatch batch = make_sentence_batch(docs, model.config());
    Graph<float> g;
    auto token_embeddings = model.encode_tokens(g, batch);
    auto pooled = g.masked_mean_axis1(token_embeddings, batch.token_mask<float>());
    const std::size_t E = pooled->dim(1);
    for (std::size_t row = 0; row < pooled->dim(0); ++row)
      out.emplace_back(pooled->data.begin() + row * E, pooled->data.begin() + (row + 1) * E);
  }
  return out;
}

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine: vector lengths differ");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * double(b[i]);
    na += double(a[i]) * double(a[i]);
    nb += double(b[i]) * double(b[i]);
  }
  if (na == 0 || nb == 0) throw DataError("cosine: zero-norm embedding");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

SearchReport finalize_report(std::vector<SearchHit> hits) {
  SearchReport report;
  std::size_t hit_count = 0;
  bool any_hit = false, any_miss = false;
  for (const auto& h : hits) {
    hit_count += h.hit;
    (h.hit ? any_hit : any_miss) = true;
  }
  report.hit_rate = hits.empty() ? 0.0 : double(hit_count) / double(hits.size());
  if (any_hit && any_miss) {
    // Rank AUC of the binary top-1 outcome against the top-1 similarity.
    PredictionSet preds;
    preds.docs = hits.size();
    preds.classes = 1;
    for (const auto& h : hits) {
      preds.scores.push_back(h.score);
      preds.labels.push_back(h.hit ? 1 : 0);
    }
    report.top1_auc = auc_roc(preds, Averaging::Micro);
  }
  report.hits = std::move(hits);
  return report;
}

}  // namespace

SearchReport bm25_search(const SearchBase& base, const GroundTruth& truth) {
  truth.validate_against(base);
  const Bm25Index index = Bm25Index::build(base);
  std::vector<SearchHit> hits;
  for (const auto& entry : truth.entries) {
    const auto top = index.top1(word_tokens(entry.query));
    SearchHit hit;
    hit.query = entry.query;
    hit.top1_id = top.id;
    hit.top1_group = base.entries[top.id].group_id;
    hit.score = top.score;
    hit.hit = entry.groups.count(hit.top1_group) != 0;
    hits.push_back(std::move(hit));
  }
  return finalize_report(std::move(hits));
}

SearchReport embed_search(const Model<float>& model, const Vocab& vocab, const SearchBase& base,
                          const GroundTruth& truth) {
  truth.validate_against(base);
  std::vector<std::string> base_names;
  for (const auto& entry : base.entries) base_names.push_back(entry.name);
  const auto base_vectors = encode_texts(model, vocab, base_names);
  for (std::size_t i = 0; i < base_vectors.size(); ++i) {
    double norm = 0;
    for (float v : base_vectors[i]) norm += double(v) * double(v);
    if (norm == 0) throw DataError("embed search: zero-norm embedding for '" + base.entries[i].name + "'");
  }

  std::vector<std::string> queries;
  for (const auto& entry : truth.entries) queries.push_back(entry.query);
  const auto query_vectors = encode_texts(model, vocab, queries);

  std::vector<SearchHit> hits;
  for (std::size_t q = 0; q < truth.entries.size(); ++q) {
    double qnorm = 0;
    for (float v : query_vectors[q]) qnorm += double(v) * double(v);
    if (qnorm == 0) throw DataError("embed search: zero-norm embedding for '" + queries[q] + "'");
    std::size_t best = 0;
    double best_score = cosine_similarity(query_vectors[q], base_vectors[0]);
    for (std::size_t i = 1; i < base_vectors.size(); ++i) {
      const double s = cosine_similarity(query_vectors[q], base_vectors[i]);
      if (s > best_score) {
        best = i;
        best_score = s;
      }
    }
    SearchHit hit;
    hit.query = queries[q];
    hit.top1_id = best;
    hit.top1_group = base.entries[best].group_id;
    hit.score = best_score;
    hit.hit = truth.entries[q].groups.count(hit.top1_group) != 0;
    hits.push_back(std::move(hit));
  }
  return finalize_report(std::move(hits));
}

std::string search_report_csv(const SearchReport& report) {
  std::ostringstream os;
  os << "query,top1_id,top1_group,score,hit\n";
  for (const auto& h : report.hits) {
    std::string query = h.query;
    if (query.find(',') != std::string::npos || query.find('"') != std::string::npos) {
      std::string quoted = "\"";
      for (char c : query) {
        if (c == '"') quoted += '"';
        quoted += c;
      }
      quoted += '"';
      query = quoted;
    }
    os << query << ',' << h.top1_id << ',' << h.top1_group << ',' << format_double(h.score) << ','
       << (h.hit ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace mdbert
