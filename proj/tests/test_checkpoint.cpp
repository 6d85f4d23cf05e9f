#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "checkpoint.hpp"
#include "encoder.hpp"
#include "io_util.hpp"

using namespace mdbert;
namespace fs = std::filesystem;

TEST_SUITE("checkpoint") {
  TEST_CASE("binary layout is exactly as documented") {
    ParamStore<float> params;
    params.add("w", Tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6}));
    params.add("b", Tensor<float>({3}, {7, 8, 9}));
    const std::string config = "hidden_dim = 3\n";
    const std::string bytes = serialize_checkpoint(params, config);

    REQUIRE(bytes.size() >= 12);
    CHECK(bytes.substr(0, 4) == "MDB1");
    std::uint32_t version, config_len;
    std::memcpy(&version, bytes.data() + 4, 4);
    std::memcpy(&config_len, bytes.data() + 8, 4);
    CHECK(version == kCheckpointFormatVersion);
    CHECK(config_len == config.size());
    CHECK(bytes.substr(12, config_len) == config);

    std::size_t pos = 12 + config_len;
    std::uint32_t name_len;
    std::memcpy(&name_len, bytes.data() + pos, 4);
    CHECK(name_len == 1);
    CHECK(bytes[pos + 4] == 'w');  // store order, not alphabetical
    std::uint32_t rank;
    std::memcpy(&rank, bytes.data() + pos + 5, 4);
    CHECK(rank == 2);
    std::uint64_t d0, d1;
    std::memcpy(&d0, bytes.data() + pos + 9, 8);
    std::memcpy(&d1, bytes.data() + pos + 17, 8);
    CHECK(d0 == 2);
    CHECK(d1 == 3);
    float first;
    std::memcpy(&first, bytes.data() + pos + 25, 4);
    CHECK(first == 1.0f);
  }

  TEST_CASE("round trip preserves bytes, names, order and data") {
    const auto dir = fs::temp_directory_path() / "mdbert_ckpt";
    fs::create_directories(dir);
    const std::string path = (dir / "model.mdb").string();

    ModelConfig cfg;
    cfg.vocab_size = 11;
    cfg.num_labels = 3;
    cfg.hidden_dim = 8;
    cfg.num_heads = 2;
    cfg.token_layers = 1;
    cfg.sentence_layers = 1;
    cfg.ffn_dim = 16;
    cfg.max_tokens_per_sentence = 6;
    cfg.max_sentences_per_doc = 4;
    cfg.dropout = 0.0;
    Model<float> model(cfg, 99);
    save_checkpoint(path, model.params(), cfg.to_text());

    const auto loaded = load_checkpoint(path);
    const ModelConfig parsed = ModelConfig::from_text(loaded.config_text);
    CHECK(parsed.vocab_size == cfg.vocab_size);
    CHECK(parsed.num_labels == cfg.num_labels);
    CHECK(parsed.head == cfg.head);
    REQUIRE(loaded.params.size() == model.params().size());
    for (std::size_t i = 0; i < model.params().size(); ++i) {
      CHECK(loaded.params.entries()[i].name == model.params().entries()[i].name);
      CHECK(loaded.params.entries()[i].tensor->data == model.params().entries()[i].tensor->data);
    }
    // byte-for-byte stable re-serialization
    CHECK(serialize_checkpoint(loaded.params, loaded.config_text) ==
          serialize_checkpoint(model.params(), cfg.to_text()));
    fs::remove_all(dir);
  }

  TEST_CASE("a reloaded model predicts bit-identically") {
    const auto dir = fs::temp_directory_path() / "mdbert_ckpt_pred";
    fs::create_directories(dir);
    const std::string path = (dir / "model.mdb").string();

    ModelConfig cfg;
    cfg.vocab_size = 12;
    cfg.num_labels = 2;
    cfg.hidden_dim = 8;
    cfg.num_heads = 2;
    cfg.token_layers = 1;
    cfg.sentence_layers = 1;
    cfg.ffn_dim = 16;
    cfg.max_tokens_per_sentence = 6;
    cfg.max_sentences_per_doc = 4;
    cfg.dropout = 0.0;
    Model<float> model(cfg, 5);
    save_checkpoint(path, model.params(), cfg.to_text());

    auto loaded = load_checkpoint(path);
    Model<float> restored(ModelConfig::from_text(loaded.config_text), std::move(loaded.params));

    Document doc;
    doc.id = "d";
    doc.sentences = {{kClsId, 6, 7}, {kClsId, 8, 9, 10}};
    doc.labels = {1, 0};
    std::vector<Document> docs = {doc};
    const auto batch = make_sentence_batch(docs, cfg);
    Graph<float> g1, g2;
    const auto a = model.forward(g1, batch);
    const auto b = restored.forward(g2, batch);
    CHECK(a.probabilities->data == b.probabilities->data);
    CHECK(a.document_embeddings->data == b.document_embeddings->data);
    fs::remove_all(dir);
  }

  TEST_CASE("corrupted files are rejected") {
    const auto dir = fs::temp_directory_path() / "mdbert_ckpt_bad";
    fs::create_directories(dir);
    const std::string path = (dir / "bad.mdb").string();
    write_file_atomic(path, "NOPE");
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
    write_file_atomic(path, std::string("MDB1") + std::string(2, '\0'));
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
    fs::remove_all(dir);
  }
}
