#pragma once

#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "errors.hpp"
#include "param_store.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace mdbert {

enum class HeadKind { LabelAttention, Pooled };
enum class HeadLevel { PreSentenceTransformer, PostSentenceTransformer };

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t num_labels = 0;
  std::size_t hidden_dim = 128;
  std::size_t num_heads = 4;
  std::size_t token_layers = 2;
  std::size_t sentence_layers = 4;  // 0 removes the sentence transformer
  std::size_t ffn_dim = 512;
  std::size_t max_tokens_per_sentence = 62;
  std::size_t max_sentences_per_doc = 256;
  double dropout = 0.1;
  bool sentence_position_embeddings = true;
  HeadKind head = HeadKind::LabelAttention;
  HeadLevel head_level = HeadLevel::PostSentenceTransformer;

  void validate() const;
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
};

// Flat per-sentence view of a document batch: the shape the token
// transformer consumes. Sentences from different documents are interleaved
// freely; doc_index/sent_position recover the grouping.
struct SentenceBatch {
  std::size_t num_sentences = 0;
  std::size_t seq_len = 0;
  std::size_t num_docs = 0;
  std::size_t max_doc_sentences = 0;
  std::vector<TokenId> token_ids;          // num_sentences x seq_len
  std::vector<std::size_t> sent_length;    // real tokens per sentence; the rest is padding
  std::vector<std::size_t> doc_index;      // per sentence
  std::vector<std::size_t> sent_position;  // per sentence
  std::vector<std::string> doc_ids;        // per document

  template <class Real>
  Tensor<Real> token_mask() const {
    Tensor<Real> mask({num_sentences, seq_len});
    for (std::size_t s = 0; s < num_sentences; ++s)
      for (std::size_t t = 0; t < sent_length[s]; ++t) mask.data[s * seq_len + t] = Real(1);
    return mask;
  }

  template <class Real>
  Tensor<Real> sentence_mask() const {
    Tensor<Real> mask({num_docs, max_doc_sentences});
    for (std::size_t s = 0; s < num_sentences; ++s)
      mask.data[doc_index[s] * max_doc_sentences + sent_position[s]] = Real(1);
    return mask;
  }
};

SentenceBatch make_sentence_batch(std::span<const Document> docs, const ModelConfig& config);

// All semantic levels produced by one forward pass, kept alive together
// with the graph that built them.
template <class Real>
struct ForwardResult {
  TensorPtr<Real> token_embeddings;      // num_sentences x T x E
  TensorPtr<Real> sentence_embeddings;   // num_sentences x E (first pooling)
  TensorPtr<Real> document_batch;        // D x S x E (re-batched, pre sentence transformer)
  TensorPtr<Real> sentence_contextual;   // D x S x E (post sentence transformer)
  TensorPtr<Real> document_embeddings;   // D x E (second pooling)
  TensorPtr<Real> probabilities;         // D x L
  TensorPtr<Real> attention_maps;        // D x L x S (label attention only)
  Tensor<Real> sentence_mask;            // D x S
};

namespace enc_detail {

// Additive key mask shared by all query rows and heads:
// 0 where the key is visible, -1e30 where padded.
template <class Real>
Tensor<Real> key_mask_bias(const Tensor<Real>& mask, std::size_t heads, std::size_t queries) {
  const std::size_t B = mask.dim(0), S = mask.dim(1);
  Tensor<Real> bias({B * heads, queries, S});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t q = 0; q < queries; ++q) {
        Real* row = bias.data.data() + ((b * heads + h) * queries + q) * S;
        for (std::size_t s = 0; s < S; ++s)
          row[s] = mask.data[b * S + s] != Real(0) ? Real(0) : Real(-1e30);
      }
  return bias;
}

// Same masking expanded across the class axis: [D,S] -> [D,S,L].
template <class Real>
Tensor<Real> class_mask_bias(const Tensor<Real>& mask, std::size_t num_labels) {
  const std::size_t D = mask.dim(0), S = mask.dim(1);
  Tensor<Real> bias({D, S, num_labels});
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t s = 0; s < S; ++s) {
      const Real v = mask.data[d * S + s] != Real(0) ? Real(0) : Real(-1e30);
      Real* row = bias.data.data() + (d * S + s) * num_labels;
      for (std::size_t l = 0; l < num_labels; ++l) row[l] = v;
    }
  return bias;
}

}  // namespace enc_detail

// The hierarchical encoder: a token-level transformer over individual
// sentences, average pooling to sentence embeddings, re-batching into
// per-document sequences, a sentence-level transformer, and a second
// average pooling to document embeddings. The classifier head attaches to
// the sentence level (label-wise attention) or the document level (pooled).
template <class Real>
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    Rng rng(seed);
    init_params(rng);
  }

  Model(ModelConfig config, ParamStore<Real> params) : config_(std::move(config)), params_(std::move(params)) {
    config_.validate();
  }

  const ModelConfig& config() const { return config_; }
  ParamStore<Real>& params() { return params_; }
  const ParamStore<Real>& params() const { return params_; }

  // rng non-null enables dropout (training mode).
  ForwardResult<Real> forward(Graph<Real>& g, const SentenceBatch& batch, Rng* rng = nullptr) const {
    ForwardResult<Real> out;
    out.token_embeddings = encode_tokens(g, batch, rng);
    const Tensor<Real> token_mask = batch.template token_mask<Real>();
    out.sentence_embeddings = g.masked_mean_axis1(out.token_embeddings, token_mask);
    out.document_batch = g.rebatch(out.sentence_embeddings, batch.doc_index, batch.sent_position,
                                   batch.num_docs, batch.max_doc_sentences);
    out.sentence_mask = batch.template sentence_mask<Real>();
    out.sentence_contextual = encode_sentences(g, out.document_batch, out.sentence_mask, rng);
    out.document_embeddings = g.masked_mean_axis1(out.sentence_contextual, out.sentence_mask);
    if (config_.head == HeadKind::LabelAttention) {
      const auto& level = config_.head_level == HeadLevel::PreSentenceTransformer
                              ? out.document_batch
                              : out.sentence_contextual;
      auto scored = label_attention(g, level, out.sentence_mask);
      out.probabilities = scored.first;
      out.attention_maps = scored.second;
    } else {
      out.probabilities = pooled_scores(g, out.document_embeddings);
    }
    return out;
  }

  // Token transformer over a flat sentence batch.
  TensorPtr<Real> encode_tokens(Graph<Real>& g, const SentenceBatch& batch, Rng* rng = nullptr) const {
    if (batch.seq_len > config_.max_tokens_per_sentence)
      throw DataError("encode_tokens: sequence length " + std::to_string(batch.seq_len) +
                      " exceeds configured maximum " + std::to_string(config_.max_tokens_per_sentence));
    for (TokenId id : batch.token_ids)
      if (id >= config_.vocab_size) throw DataError("encode_tokens: token id out of vocabulary range");

    const std::size_t B = batch.num_sentences, T = batch.seq_len;
    std::vector<std::uint32_t> positions(B * T);
    for (std::size_t s = 0; s < B; ++s)
      for (std::size_t t = 0; t < T; ++t) positions[s * T + t] = static_cast<std::uint32_t>(t);

    auto x = g.add(g.embedding(params_.get("token_tf.embed.token"), batch.token_ids, {B, T}),
                   g.embedding(params_.get("token_tf.embed.pos"), positions, {B, T}));
    const Tensor<Real> mask = batch.template token_mask<Real>();
    for (std::size_t layer = 0; layer < config_.token_layers; ++layer)
      x = encoder_layer(g, x, mask, "token_tf.layer" + std::to_string(layer), rng);
    return x;
  }

  // Sentence transformer over re-batched documents; identity when depth 0.
  TensorPtr<Real> encode_sentences(Graph<Real>& g, const TensorPtr<Real>& doc_batch,
                                   const Tensor<Real>& sent_mask, Rng* rng = nullptr) const {
    if (config_.sentence_layers == 0) return doc_batch;
    const std::size_t D = doc_batch->dim(0), S = doc_batch->dim(1);
    auto x = doc_batch;
    if (config_.sentence_position_embeddings) {
      std::vector<std::uint32_t> positions(D * S);
      for (std::size_t d = 0; d < D; ++d)
        for (std::size_t s = 0; s < S; ++s) positions[d * S + s] = static_cast<std::uint32_t>(s);
      x = g.add(x, g.embedding(params_.get("sent_tf.embed.pos"), positions, {D, S}));
    }
    for (std::size_t layer = 0; layer < config_.sentence_layers; ++layer)
      x = encoder_layer(g, x, sent_mask, "sent_tf.layer" + std::to_string(layer), rng);
    return x;
  }

  // Label-wise attention head: per class l, attention over sentences
  // a_l = softmax(H w_l), summary u_l = a_l^T H, score = sigmoid(v_l u_l + b_l).
  std::pair<TensorPtr<Real>, TensorPtr<Real>> label_attention(Graph<Real>& g, const TensorPtr<Real>& H,
                                                              const Tensor<Real>& mask) const {
    const std::size_t D = H->dim(0), S = H->dim(1);
    for (std::size_t d = 0; d < D; ++d) {
      bool any = false;
      for (std::size_t s = 0; s < S; ++s) any = any || mask.data[d * S + s] != Real(0);
      if (!any) throw DataError("label_attention: document " + std::to_string(d) + " has no unmasked sentences");
    }
    auto logits = g.matmul(H, params_.get("head.label_attn.w_attn"), /*transpose_b=*/true);  // D x S x L
    logits = g.add(logits, g.constant(enc_detail::class_mask_bias<Real>(mask, config_.num_labels)));
    auto maps = g.softmax_lastdim(g.transpose_last2(logits));  // D x L x S
    auto summaries = g.matmul(maps, H);                        // D x L x E
    auto scores = g.sum_lastdim(g.mul(summaries, params_.get("head.label_attn.v")));  // D x L
    scores = g.add(scores, params_.get("head.label_attn.b"));
    return {g.sigmoid(scores), maps};
  }

  // Plain logistic head over pooled document embeddings.
  TensorPtr<Real> pooled_scores(Graph<Real>& g, const TensorPtr<Real>& doc_embeddings) const {
    auto logits = g.matmul(doc_embeddings, params_.get("head.pooled.w"), /*transpose_b=*/true);
    return g.sigmoid(g.add(logits, params_.get("head.pooled.b")));
  }

 private:
  TensorPtr<Real> encoder_layer(Graph<Real>& g, const TensorPtr<Real>& x, const Tensor<Real>& mask,
                                const std::string& prefix, Rng* rng) const {
    const std::size_t heads = config_.num_heads;
    const std::size_t E = config_.hidden_dim;
    const std::size_t T = x->dim(1);
    const Real inv_sqrt_dk = Real(1) / std::sqrt(Real(E / heads));

    auto q = g.split_heads(g.add(g.matmul(x, params_.get(prefix + ".attn.wq")), params_.get(prefix + ".attn.bq")), heads);
    auto k = g.split_heads(g.add(g.matmul(x, params_.get(prefix + ".attn.wk")), params_.get(prefix + ".attn.bk")), heads);
    auto v = g.split_heads(g.add(g.matmul(x, params_.get(prefix + ".attn.wv")), params_.get(prefix + ".attn.bv")), heads);
    auto scores = g.scale(g.matmul(q, k, /*transpose_b=*/true), inv_sqrt_dk);
    scores = g.add(scores, g.constant(enc_detail::key_mask_bias<Real>(mask, heads, T)));
    auto attn = g.softmax_lastdim(scores);
    if (rng && config_.dropout > 0) attn = g.dropout(attn, Real(config_.dropout), *rng);
    auto context = g.merge_heads(g.matmul(attn, v), heads);
    auto attn_out = g.add(g.matmul(context, params_.get(prefix + ".attn.wo")), params_.get(prefix + ".attn.bo"));
    if (rng && config_.dropout > 0) attn_out = g.dropout(attn_out, Real(config_.dropout), *rng);
    auto h = g.layer_norm(g.add(x, attn_out), params_.get(prefix + ".ln1.gain"), params_.get(prefix + ".ln1.bias"));

    auto f = g.gelu(g.add(g.matmul(h, params_.get(prefix + ".ffn.w1")), params_.get(prefix + ".ffn.b1")));
    f = g.add(g.matmul(f, params_.get(prefix + ".ffn.w2")), params_.get(prefix + ".ffn.b2"));
    if (rng && config_.dropout > 0) f = g.dropout(f, Real(config_.dropout), *rng);
    return g.layer_norm(g.add(h, f), params_.get(prefix + ".ln2.gain"), params_.get(prefix + ".ln2.bias"));
  }

  Tensor<Real> init_weight(Rng& rng, std::vector<std::size_t> shape) const {
    Tensor<Real> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<Real>(rng.truncated_normal(0.02));
    return t;
  }

  void add_layer_params(Rng& rng, const std::string& prefix) {
    const std::size_t E = config_.hidden_dim, F = config_.ffn_dim;
    for (const char* w : {"wq", "wk", "wv", "wo"})
      params_.add(prefix + ".attn." + w, init_weight(rng, {E, E}));
    for (const char* b : {"bq", "bk", "bv", "bo"})
      params_.add(prefix + ".attn." + b, Tensor<Real>({E}));
    params_.add(prefix + ".ln1.gain", Tensor<Real>({E}, Real(1)));
    params_.add(prefix + ".ln1.bias", Tensor<Real>({E}));
    params_.add(prefix + ".ffn.w1", init_weight(rng, {E, F}));
    params_.add(prefix + ".ffn.b1", Tensor<Real>({F}));
    params_.add(prefix + ".ffn.w2", init_weight(rng, {F, E}));
    params_.add(prefix + ".ffn.b2", Tensor<Real>({E}));
    params_.add(prefix + ".ln2.gain", Tensor<Real>({E}, Real(1)));
    params_.add(prefix + ".ln2.bias", Tensor<Real>({E}));
  }

  void init_params(Rng& rng) {
    const std::size_t E = config_.hidden_dim, L = config_.num_labels;
    params_.add("token_tf.embed.token", init_weight(rng, {config_.vocab_size, E}));
    params_.add("token_tf.embed.pos", init_weight(rng, {config_.max_tokens_per_sentence, E}));
    for (std::size_t i = 0; i < config_.token_layers; ++i)
      add_layer_params(rng, "token_tf.layer" + std::to_string(i));
    if (config_.sentence_layers > 0 && config_.sentence_position_embeddings)
      params_.add("sent_tf.embed.pos", init_weight(rng, {config_.max_sentences_per_doc, E}));
    for (std::size_t i = 0; i < config_.sentence_layers; ++i)
      add_layer_params(rng, "sent_tf.layer" + std::to_string(i));
    if (config_.head == HeadKind::LabelAttention) {
      params_.add("head.label_attn.w_attn", init_weight(rng, {L, E}));
      params_.add("head.label_attn.v", init_weight(rng, {L, E}));
      params_.add("head.label_attn.b", Tensor<Real>({L}));
    } else {
      params_.add("head.pooled.w", init_weight(rng, {L, E}));
      params_.add("head.pooled.b", Tensor<Real>({L}));
    }
  }

  ModelConfig config_;
  ParamStore<Real> params_;
};

}  // namespace mdbert
