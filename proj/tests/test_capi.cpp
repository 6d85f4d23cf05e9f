#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <mdbert/mdbert.h>

#include "io_util.hpp"
#include "support/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("mdbert_capi_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string train_once(const TempDir& dir, const std::string& out_name, const std::string& seed) {
  const auto data = synthetic::make(12, 4, 3);
  synthetic::write_files(data, dir.path);
  const std::string out_dir = dir.file(out_name);
  const std::string train_path = "train_path=" + dir.file("corpus.jsonl");
  const std::string vocab_path = "vocab_path=" + dir.file("vocab.txt");
  const std::string labels_path = "labels_path=" + dir.file("labels.tsv");
  const std::string dev_path = "dev_path=" + dir.file("corpus.jsonl");
  const std::string out = "out_dir=" + out_dir;
  const std::string seed_kv = "seed=" + seed;
  const char* overrides[] = {
      train_path.c_str(), vocab_path.c_str(), labels_path.c_str(), dev_path.c_str(), out.c_str(),
      seed_kv.c_str(),    "hidden_dim=16",    "num_heads=2",       "token_layers=1",
      "sentence_layers=1", "ffn_dim=32",      "max_tokens_per_sentence=16",
      "max_sentences_per_doc=8", "dropout=0", "lr=0.005",          "max_epochs=3",
      "frozen_epochs=1",  "patience=3",       "batch_sentence_budget=64"};
  char err[512] = {0};
  const int code = mdb_train(nullptr, overrides, sizeof(overrides) / sizeof(overrides[0]), err,
                             sizeof(err));
  REQUIRE_MESSAGE(code == MDB_OK, err);
  return out_dir;
}

}  // namespace

TEST_SUITE("capi") {
  TEST_CASE("version strings") {
    CHECK(std::string(mdb_version()).find('.') != std::string::npos);
    CHECK(mdb_checkpoint_format_version() == 1);
  }

  TEST_CASE("bench produces the analytic csv") {
    mdb_bench_options opts = {512, 768, 16, 1, 0, 0, 0};
    char* csv = nullptr;
    char err[256] = {0};
    REQUIRE(mdb_bench_csv(&opts, &csv, err, sizeof(err)) == MDB_OK);
    const std::string text = csv;
    mdb_string_free(csv);
    CHECK(text.find("n,d,s,") == 0);
    CHECK(text.find("0.0634765625") != std::string::npos);
  }

  TEST_CASE("bench rejects bad parameters with a usage code") {
    mdb_bench_options opts = {16, 8, 32, 1, 0, 0, 0};  // s > n
    char* csv = nullptr;
    char err[256] = {0};
    CHECK(mdb_bench_csv(&opts, &csv, err, sizeof(err)) == MDB_ERR_USAGE);
    CHECK(std::strlen(err) > 0);
  }

  TEST_CASE("train, open, eval, embed and search through the C surface") {
    TempDir dir("full");
    const std::string out_dir = train_once(dir, "run", "11");
    REQUIRE(fs::exists(out_dir + "/best.mdb"));
    REQUIRE(fs::exists(out_dir + "/log.csv"));

    mdb_model* model = nullptr;
    char err[512] = {0};
    REQUIRE_MESSAGE(mdb_model_open((out_dir + "/best.mdb").c_str(), dir.file("vocab.txt").c_str(),
                                   &model, err, sizeof(err)) == MDB_OK,
                    err);

    mdb_eval_options eval = {};
    const std::string summary = dir.file("summary.csv");
    const std::string per_class = dir.file("per_class.csv");
    const std::string explain = dir.file("explain.csv");
    const std::string corpus = dir.file("corpus.jsonl");
    const std::string labels = dir.file("labels.tsv");
    eval.corpus_path = corpus.c_str();
    eval.labels_path = labels.c_str();
    eval.summary_csv = summary.c_str();
    eval.per_class_csv = per_class.c_str();
    eval.explain_csv = explain.c_str();
    const int k_values[] = {1, 2};
    eval.p_at_k = k_values;
    eval.n_p_at_k = 2;
    eval.threads = 2;
    REQUIRE_MESSAGE(mdb_eval(&model, 1, &eval, err, sizeof(err)) == MDB_OK, err);
    const std::string summary_text = mdbert::read_text_file(summary);
    CHECK(summary_text.find("metric,value\n") == 0);
    CHECK(summary_text.find("f1_micro,") != std::string::npos);
    CHECK(summary_text.find("p_at_1,") != std::string::npos);
    const std::string explain_text = mdbert::read_text_file(explain);
    CHECK(explain_text.find("doc_id,label,probability,sent1,w1,") == 0);

    const std::string embeddings = dir.file("embeddings.jsonl");
    REQUIRE_MESSAGE(mdb_embed(model, corpus.c_str(), "document", nullptr, embeddings.c_str(), err,
                              sizeof(err)) == MDB_OK,
                    err);
    const std::string embed_text = mdbert::read_text_file(embeddings);
    CHECK(embed_text.find("\"level\":\"document\"") != std::string::npos);
    CHECK(embed_text.find("\"vector\":[") != std::string::npos);

    const std::string sentence_vecs = dir.file("sent.jsonl");
    REQUIRE(mdb_embed(model, corpus.c_str(), "sentence", nullptr, sentence_vecs.c_str(), err,
                      sizeof(err)) == MDB_OK);
    CHECK(mdbert::read_text_file(sentence_vecs).find("#0") != std::string::npos);

    // search: bm25 against a tiny base
    {
      std::ofstream out(dir.file("base.csv"));
      out << "id,group_id,name\n0,0,alpha marker\n1,1,bravo marker\n2,2,routine panel\n";
    }
    {
      std::ofstream out(dir.file("truth.jsonl"));
      out << R"({"query":"alpha marker","groups":[0]})" << "\n";
      out << R"({"query":"routine scan","groups":[1]})" << "\n";
    }
    mdb_search_options search = {};
    mdb_search_report report = {};
    const std::string base_path = dir.file("base.csv");
    const std::string truth_path = dir.file("truth.jsonl");
    const std::string results_path = dir.file("results.csv");
    search.engine = "bm25";
    search.base_csv = base_path.c_str();
    search.truth_path = truth_path.c_str();
    search.results_csv = results_path.c_str();
    REQUIRE_MESSAGE(mdb_search(&search, &report, err, sizeof(err)) == MDB_OK, err);
    CHECK(report.n_queries == 2);
    CHECK(report.hit_rate == doctest::Approx(0.5));

    search.engine = "embed";
    search.model = model;
    REQUIRE_MESSAGE(mdb_search(&search, &report, err, sizeof(err)) == MDB_OK, err);
    CHECK(report.n_queries == 2);

    mdb_model_close(model);
  }

  TEST_CASE("prediction averaging across checkpoints via eval") {
    TempDir dir("avg");
    const std::string run_a = train_once(dir, "m1", "41");
    const std::string run_b = train_once(dir, "m2", "42");
    mdb_model* models[2] = {nullptr, nullptr};
    char err[512] = {0};
    REQUIRE(mdb_model_open((run_a + "/best.mdb").c_str(), dir.file("vocab.txt").c_str(), &models[0],
                           err, sizeof(err)) == MDB_OK);
    REQUIRE(mdb_model_open((run_b + "/best.mdb").c_str(), dir.file("vocab.txt").c_str(), &models[1],
                           err, sizeof(err)) == MDB_OK);
    mdb_eval_options eval = {};
    const std::string corpus = dir.file("corpus.jsonl");
    const std::string labels = dir.file("labels.tsv");
    const std::string summary = dir.file("avg_summary.csv");
    eval.corpus_path = corpus.c_str();
    eval.labels_path = labels.c_str();
    eval.summary_csv = summary.c_str();
    REQUIRE_MESSAGE(mdb_eval(models, 2, &eval, err, sizeof(err)) == MDB_OK, err);
    CHECK(mdbert::read_text_file(summary).find("auc_micro,") != std::string::npos);

    // explanations are a single-model feature
    const std::string explain = dir.file("avg_explain.csv");
    eval.explain_csv = explain.c_str();
    CHECK(mdb_eval(models, 2, &eval, err, sizeof(err)) == MDB_ERR_USAGE);

    mdb_model_close(models[0]);
    mdb_model_close(models[1]);
  }

  TEST_CASE("train splits a dev set by fraction when no dev path is given") {
    TempDir dir("devsplit");
    const auto data = synthetic::make(12, 4, 3);
    synthetic::write_files(data, dir.path);
    const std::string train_path = "train_path=" + dir.file("corpus.jsonl");
    const std::string vocab_path = "vocab_path=" + dir.file("vocab.txt");
    const std::string labels_path = "labels_path=" + dir.file("labels.tsv");
    const std::string out = "out_dir=" + dir.file("run");
    const char* overrides[] = {train_path.c_str(),
                               vocab_path.c_str(),
                               labels_path.c_str(),
                               out.c_str(),
                               "dev_fraction=0.25",
                               "seed=5",
                               "hidden_dim=16",
                               "num_heads=2",
                               "token_layers=1",
                               "sentence_layers=0",
                               "ffn_dim=32",
                               "max_tokens_per_sentence=16",
                               "max_sentences_per_doc=8",
                               "dropout=0",
                               "lr=0.01",
                               "max_epochs=2",
                               "frozen_epochs=1",
                               "patience=2"};
    char err[512] = {0};
    REQUIRE_MESSAGE(mdb_train(nullptr, overrides, sizeof(overrides) / sizeof(overrides[0]), err,
                              sizeof(err)) == MDB_OK,
                    err);
    REQUIRE(fs::exists(dir.file("run") + "/log.csv"));
    // two epochs logged against the held-out quarter
    const std::string log = mdbert::read_text_file(dir.file("run") + "/log.csv");
    CHECK(std::count(log.begin(), log.end(), '\n') == 3);  // header + 2 epochs
  }

  TEST_CASE("stats and build-vocab") {
    TempDir dir("stats");
    const auto data = synthetic::make(6, 4, 5);
    synthetic::write_files(data, dir.path);
    char* csv = nullptr;
    char err[256] = {0};
    REQUIRE_MESSAGE(mdb_stats_csv(dir.file("corpus.jsonl").c_str(), dir.file("vocab.txt").c_str(),
                                  dir.file("labels.tsv").c_str(), nullptr, 16, 8, &csv, err,
                                  sizeof(err)) == MDB_OK,
                    err);
    const std::string text = csv;
    mdb_string_free(csv);
    CHECK(text.find("metric,mean,std\n") == 0);
    CHECK(text.find("sentences_per_doc,") != std::string::npos);

    REQUIRE(mdb_build_vocab(dir.file("corpus.jsonl").c_str(), 64, dir.file("built.txt").c_str(), err,
                            sizeof(err)) == MDB_OK);
    const std::string vocab_text = mdbert::read_text_file(dir.file("built.txt"));
    CHECK(vocab_text.find("[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\n") == 0);
    CHECK(vocab_text.find("marker") != std::string::npos);
  }

  TEST_CASE("error paths map to data and usage codes") {
    char err[256] = {0};
    mdb_model* model = nullptr;
    CHECK(mdb_model_open("/nonexistent/ckpt.mdb", "/nonexistent/vocab.txt", &model, err, sizeof(err)) ==
          MDB_ERR_DATA);
    CHECK(std::strlen(err) > 0);

    const char* bad_override[] = {"definitely_not_a_key=1"};
    CHECK(mdb_train(nullptr, bad_override, 1, err, sizeof(err)) == MDB_ERR_USAGE);
  }

  TEST_CASE("training twice with the same seed is byte-identical") {
    TempDir dir("determinism");
    const std::string run_a = train_once(dir, "run_a", "33");
    const std::string run_b = train_once(dir, "run_b", "33");
    CHECK(mdbert::read_text_file(run_a + "/log.csv") == mdbert::read_text_file(run_b + "/log.csv"));
    CHECK(mdbert::read_text_file(run_a + "/best.mdb") == mdbert::read_text_file(run_b + "/best.mdb"));
  }
}
