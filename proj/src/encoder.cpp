#include "encoder.hpp"

#include <algorithm>

#include "io_util.hpp"

namespace mdbert {

void ModelConfig::validate() const {
  if (vocab_size == 0 || num_labels == 0 || hidden_dim == 0 || num_heads == 0 || ffn_dim == 0 ||
      token_layers == 0 || max_tokens_per_sentence == 0 || max_sentences_per_doc == 0)
    throw UsageError("model config: all dimensions must be positive");
  if (hidden_dim % num_heads != 0)
    throw UsageError("model config: hidden_dim " + std::to_string(hidden_dim) +
                     " not divisible by num_heads " + std::to_string(num_heads));
  if (dropout < 0 || dropout >= 1) throw UsageError("model config: dropout must be in [0, 1)");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "vocab_size = " << vocab_size << '\n';
  os << "num_labels = " << num_labels << '\n';
  os << "hidden_dim = " << hidden_dim << '\n';
  os << "num_heads = " << num_heads << '\n';
  os << "token_layers = " << token_layers << '\n';
  os << "sentence_layers = " << sentence_layers << '\n';
  os << "ffn_dim = " << ffn_dim << '\n';
  os << "max_tokens_per_sentence = " << max_tokens_per_sentence << '\n';
  os << "max_sentences_per_doc = " << max_sentences_per_doc << '\n';
  os << "dropout = " << format_double(dropout) << '\n';
  os << "sentence_position_embeddings = " << (sentence_position_embeddings ? "true" : "false") << '\n';
  os << "head = " << (head == HeadKind::LabelAttention ? "label_attention" : "pooled") << '\n';
  os << "head_level = " << (head_level == HeadLevel::PostSentenceTransformer ? "post" : "pre") << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw DataError("model config: malformed line '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "vocab_size") cfg.vocab_size = std::stoull(value);
    else if (key == "num_labels") cfg.num_labels = std::stoull(value);
    else if (key == "hidden_dim") cfg.hidden_dim = std::stoull(value);
    else if (key == "num_heads") cfg.num_heads = std::stoull(value);
    else if (key == "token_layers") cfg.token_layers = std::stoull(value);
    else if (key == "sentence_layers") cfg.sentence_layers = std::stoull(value);
    else if (key == "ffn_dim") cfg.ffn_dim = std::stoull(value);
    else if (key == "max_tokens_per_sentence") cfg.max_tokens_per_sentence = std::stoull(value);
    else if (key == "max_sentences_per_doc") cfg.max_sentences_per_doc = std::stoull(value);
    else if (key == "dropout") cfg.dropout = std::stod(value);
    else if (key == "sentence_position_embeddings") cfg.sentence_position_embeddings = value == "true";
    else if (key == "head") cfg.head = value == "pooled" ? HeadKind::Pooled : HeadKind::LabelAttention;
    else if (key == "head_level") cfg.head_level = value == "pre" ? HeadLevel::PreSentenceTransformer
                                                                  : HeadLevel::PostSentenceTransformer;
    else throw DataError("model config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

SentenceBatch make_sentence_batch(std::span<const Document> docs, const ModelConfig& config) {
  SentenceBatch batch;
  batch.num_docs = docs.size();
  std::size_t seq_len = 1;
  for (const auto& doc : docs) {
    if (doc.sentences.empty()) throw DataError("batch: document '" + doc.id + "' has no sentences");
    if (doc.sentences.size() > config.max_sentences_per_doc)
      throw DataError("batch: document '" + doc.id + "' exceeds the sentence limit");
    batch.max_doc_sentences = std::max(batch.max_doc_sentences, doc.sentences.size());
    for (const auto& sent : doc.sentences) seq_len = std::max(seq_len, sent.size());
  }
  if (seq_len > config.max_tokens_per_sentence)
    throw DataError("batch: sentence exceeds the token limit");
  batch.seq_len = seq_len;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    batch.doc_ids.push_back(docs[d].id);
    for (std::size_t s = 0; s < docs[d].sentences.size(); ++s) {
      const auto& sent = docs[d].sentences[s];
      batch.token_ids.insert(batch.token_ids.end(), sent.begin(), sent.end());
      batch.token_ids.insert(batch.token_ids.end(), seq_len - sent.size(), kPadId);
      batch.sent_length.push_back(sent.size());
      batch.doc_index.push_back(d);
      batch.sent_position.push_back(s);
      ++batch.num_sentences;
    }
  }
  return batch;
}

}  // namespace mdbert
