#include <doctest.h>

#include <cmath>

#include "encoder.hpp"
#include "support/oracles.hpp"

using namespace mdbert;

namespace {

// A model whose head parameters we overwrite by hand.
Model<double> head_model(std::size_t labels, std::size_t hidden, HeadKind head) {
  ModelConfig cfg;
  cfg.vocab_size = 8;
  cfg.num_labels = labels;
  cfg.hidden_dim = hidden;
  cfg.num_heads = 1;
  cfg.token_layers = 1;
  cfg.sentence_layers = 1;
  cfg.ffn_dim = 8;
  cfg.max_tokens_per_sentence = 4;
  cfg.max_sentences_per_doc = 4;
  cfg.dropout = 0.0;
  cfg.head = head;
  return Model<double>(cfg, 1);
}

}  // namespace

TEST_SUITE("heads") {
  TEST_CASE("hand-evaluated two-sentence case") {
    auto model = head_model(1, 2, HeadKind::LabelAttention);
    model.params().get("head.label_attn.w_attn")->data = {1, 0};
    model.params().get("head.label_attn.v")->data = {1, 1};
    model.params().get("head.label_attn.b")->data = {0};

    Graph<double> g;
    auto H = g.constant(Tensor<double>({1, 2, 2}, {1, 0, 0, 1}));
    Tensor<double> mask({1, 2}, {1, 1});
    const auto [probs, maps] = model.label_attention(g, H, mask);

    const double e = std::exp(1.0);
    CHECK(maps->data[0] == doctest::Approx(e / (e + 1)).epsilon(1e-12));
    CHECK(maps->data[1] == doctest::Approx(1 / (e + 1)).epsilon(1e-12));
    CHECK(probs->data[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-9));
    CHECK(probs->data[0] == doctest::Approx(0.7310585786).epsilon(1e-6));
  }

  TEST_CASE("single sentence gets attention weight exactly one") {
    auto model = head_model(3, 4, HeadKind::LabelAttention);
    Graph<double> g;
    Rng rng(5);
    Tensor<double> h({1, 1, 4});
    for (auto& v : h.data) v = rng.uniform();
    auto H = g.constant(h);
    Tensor<double> mask({1, 1}, {1});
    const auto [probs, maps] = model.label_attention(g, H, mask);
    for (std::size_t l = 0; l < 3; ++l) CHECK(maps->data[l] == 1.0);
  }

  TEST_CASE("identical sentences collapse the summary to that row") {
    auto model = head_model(2, 3, HeadKind::LabelAttention);
    Graph<double> g;
    auto H = g.constant(Tensor<double>({1, 3, 3}, {2, -1, 0.5, 2, -1, 0.5, 2, -1, 0.5}));
    Tensor<double> mask({1, 3}, {1, 1, 1});
    const auto [probs, maps] = model.label_attention(g, H, mask);
    // u_l = sum_l a_l * row = row for any attention weights; check via the
    // pooled head with shared classifier parameters
    auto v = model.params().get("head.label_attn.v");
    auto b = model.params().get("head.label_attn.b");
    for (std::size_t l = 0; l < 2; ++l) {
      const double logit = 2 * v->data[l * 3] - 1 * v->data[l * 3 + 1] + 0.5 * v->data[l * 3 + 2] +
                           b->data[l];
      CHECK(probs->data[l] == doctest::Approx(1.0 / (1.0 + std::exp(-logit))).epsilon(1e-9));
    }
  }

  TEST_CASE("attention over unmasked sentences sums to one, masked get zero") {
    auto model = head_model(4, 6, HeadKind::LabelAttention);
    Graph<double> g;
    Rng rng(9);
    Tensor<double> h({2, 3, 6});
    for (auto& v : h.data) v = rng.uniform() * 4 - 2;
    auto H = g.constant(h);
    Tensor<double> mask({2, 3}, {1, 1, 0, 1, 0, 0});
    const auto [probs, maps] = model.label_attention(g, H, mask);
    for (std::size_t d = 0; d < 2; ++d)
      for (std::size_t l = 0; l < 4; ++l) {
        double sum = 0;
        for (std::size_t s = 0; s < 3; ++s) {
          const double a = maps->data[(d * 4 + l) * 3 + s];
          if (mask.data[d * 3 + s] == 0) CHECK(a == 0.0);
          sum += a;
        }
        CHECK(std::fabs(sum - 1.0) < 1e-9);
      }
    for (double p : probs->data) {
      CHECK(p > 0.0);
      CHECK(p < 1.0);
    }
  }

  TEST_CASE("all-masked document errors") {
    auto model = head_model(2, 4, HeadKind::LabelAttention);
    Graph<double> g;
    auto H = g.constant(Tensor<double>({1, 2, 4}));
    Tensor<double> mask({1, 2}, {0, 0});
    CHECK_THROWS_AS(model.label_attention(g, H, mask), DataError);
  }

  TEST_CASE("argmax attention follows the largest projection") {
    auto model = head_model(1, 2, HeadKind::LabelAttention);
    model.params().get("head.label_attn.w_attn")->data = {1, 0};
    Graph<double> g;
    auto H = g.constant(Tensor<double>({1, 3, 2}, {0.1, 5, 3.0, 5, 0.2, 5}));
    Tensor<double> mask({1, 3}, {1, 1, 1});
    const auto [probs, maps] = model.label_attention(g, H, mask);
    CHECK(maps->data[1] > maps->data[0]);
    CHECK(maps->data[1] > maps->data[2]);
  }

  TEST_CASE("pooled head: zero embedding and zero parameters give one half") {
    auto model = head_model(3, 4, HeadKind::Pooled);
    model.params().get("head.pooled.w")->data.assign(12, 0.0);
    model.params().get("head.pooled.b")->data.assign(3, 0.0);
    Graph<double> g;
    auto doc = g.constant(Tensor<double>({2, 4}));
    const auto probs = model.pooled_scores(g, doc);
    for (double p : probs->data) CHECK(p == 0.5);
  }

  TEST_CASE("pooled head gradient vs finite differences") {
    auto model = head_model(2, 4, HeadKind::Pooled);
    Graph<double> g;
    Rng rng(17);
    Tensor<double> d({3, 4});
    for (auto& v : d.data) v = rng.uniform() - 0.5;
    auto doc = Graph<double>::leaf(d, true);
    Tensor<double> labels({3, 2}, {1, 0, 0, 1, 1, 1});
    auto loss = g.weighted_bce(model.pooled_scores(g, doc), labels, 1.5);
    g.backward(loss);
    auto w = model.params().get("head.pooled.w");
    auto b = model.params().get("head.pooled.b");
    auto forward = [&]() {
      Graph<double> f;
      return f.weighted_bce(model.pooled_scores(f, doc), labels, 1.5)->data[0];
    };
    const auto report =
        oracle::finite_difference_check({{"doc", doc}, {"w", w}, {"b", b}}, forward);
    CHECK(report.max_rel_err < 1e-6);
  }

  TEST_CASE("identical sentences make label attention equal pooled scoring") {
    // With S copies of one row, u_l equals the mean row regardless of the
    // attention parameters, so sharing {v, b} reproduces the pooled head.
    auto attn_model = head_model(2, 3, HeadKind::LabelAttention);
    auto pooled_model = head_model(2, 3, HeadKind::Pooled);
    pooled_model.params().get("head.pooled.w")->data = attn_model.params().get("head.label_attn.v")->data;
    pooled_model.params().get("head.pooled.b")->data = attn_model.params().get("head.label_attn.b")->data;

    Graph<double> g;
    const std::vector<double> row = {0.3, -1.2, 0.8};
    Tensor<double> h({1, 2, 3}, {row[0], row[1], row[2], row[0], row[1], row[2]});
    Tensor<double> mask({1, 2}, {1, 1});
    const auto [attn_probs, maps] = attn_model.label_attention(g, g.constant(h), mask);
    auto mean = g.masked_mean_axis1(g.constant(h), mask);
    const auto pooled_probs = pooled_model.pooled_scores(g, mean);
    for (std::size_t l = 0; l < 2; ++l)
      CHECK(attn_probs->data[l] == doctest::Approx(pooled_probs->data[l]).epsilon(1e-12));
  }
}
