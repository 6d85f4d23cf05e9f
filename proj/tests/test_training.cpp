#include <doctest.h>

#include <cmath>

#include "support/synthetic.hpp"
#include "trainer.hpp"

using namespace mdbert;

TEST_SUITE("training") {
  TEST_CASE("weight one reduces to standard cross entropy bitwise") {
    Graph<double> g;
    Rng rng(2);
    Tensor<double> probs({3, 4});
    for (auto& v : probs.data) v = 0.05 + 0.9 * rng.uniform();
    Tensor<double> labels({3, 4});
    for (auto& v : labels.data) v = rng.uniform() < 0.4 ? 1.0 : 0.0;

    const auto weighted = g.weighted_bce(g.constant(probs), labels, 1.0);
    double reference = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      const double p = std::min(1.0 - 1e-7, std::max(1e-7, probs.data[i]));
      reference += -(labels.data[i] * std::log(p) + (1 - labels.data[i]) * std::log(1 - p));
    }
    reference /= 3.0;
    CHECK(std::fabs(weighted->data[0] - reference) <= 1e-12);
  }

  TEST_CASE("raising the positive weight raises the loss iff positives are missed") {
    Graph<double> g;
    Tensor<double> probs({1, 2}, {0.2, 0.9});  // false negative on class 0
    Tensor<double> labels({1, 2}, {1.0, 0.0});
    const double low = g.weighted_bce(g.constant(probs), labels, 1.0)->data[0];
    const double high = g.weighted_bce(g.constant(probs), labels, 3.0)->data[0];
    CHECK(high > low);

    Tensor<double> no_pos({1, 2}, {0.0, 0.0});
    const double a = g.weighted_bce(g.constant(probs), no_pos, 1.0)->data[0];
    const double b = g.weighted_bce(g.constant(probs), no_pos, 5.0)->data[0];
    CHECK(a == b);
  }

  TEST_CASE("combined loss is the plain sum and the description term is optional") {
    Graph<double> g;
    auto doc_term = g.constant(Tensor<double>({1}, {0.7}));
    auto desc_term = g.constant(Tensor<double>({1}, {0.3}));
    CHECK(g.add(doc_term, desc_term)->data[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(g.add(g.constant(Tensor<double>({1}, {0.0})), g.constant(Tensor<double>({1}, {0.0})))->data[0] ==
          0.0);
  }

  TEST_CASE("loss config validation") {
    LossConfig bad{0.5, 1.0};
    CHECK_THROWS_AS(bad.validate(), UsageError);
    LossConfig warned{1.0, 10.0};
    std::vector<std::string> warnings;
    warned.validate(&warnings);
    CHECK(warnings.size() == 1);
  }

  TEST_CASE("description corpus: one one-hot single-sentence document per described label") {
    LabelVocab labels;
    labels.add("pneumonia", "inflammation of the lung");
    labels.add("undescribed");
    labels.add("fracture", "broken bone");
    Vocab vocab({"inflammation", "of", "the", "lung", "broken", "bone"});
    std::size_t skipped = 0;
    const auto docs = make_description_corpus(labels, vocab, IngestLimits{}, &skipped);
    REQUIRE(docs.size() == 2);
    CHECK(skipped == 1);
    CHECK(docs[0].sentences.size() == 1);
    CHECK(docs[0].labels == std::vector<std::uint8_t>{1, 0, 0});
    CHECK(docs[1].labels == std::vector<std::uint8_t>{0, 0, 1});
    CHECK(docs[0].sentences[0][0] == kClsId);
  }

  TEST_CASE("early stopping trace: patience 3 over plateau stops at epoch five") {
    EarlyStopper stopper(3);
    const double scores[] = {0.5, 0.6, 0.6, 0.6, 0.6};
    std::size_t stopped_after = 0;
    for (std::size_t i = 0; i < 5; ++i) {
      stopper.observe(scores[i]);
      if (stopper.stop()) {
        stopped_after = i + 1;
        break;
      }
    }
    CHECK(stopped_after == 5);
    CHECK(stopper.best_epoch() == 2);
    CHECK(stopper.best_score() == doctest::Approx(0.6));
  }

  TEST_CASE("stage one never touches token-transformer parameters") {
    const auto data = synthetic::make(8, 4, 3);
    auto cfg = synthetic::toy_model_config(data);
    Model<float> model(cfg, 21);

    std::vector<std::vector<float>> frozen_before;
    std::vector<std::string> frozen_names;
    for (const auto& e : model.params().entries())
      if (e.name.rfind("token_tf.", 0) == 0) {
        frozen_names.push_back(e.name);
        frozen_before.push_back(e.tensor->data);
      }
    REQUIRE(!frozen_names.empty());

    TrainOptions options;
    options.schedule.frozen_epochs = 1;
    options.schedule.max_epochs = 1;
    options.schedule.patience = 5;
    options.schedule.lr = 0.01;
    options.schedule.seed = 21;
    const auto desc = make_description_corpus(data.labels, data.vocab, IngestLimits{});
    train_model(model, data.docs, desc, data.docs, options);

    for (std::size_t i = 0; i < frozen_names.size(); ++i)
      CHECK(model.params().get(frozen_names[i])->data == frozen_before[i]);
  }

  TEST_CASE("stage two does update token-transformer parameters") {
    const auto data = synthetic::make(8, 4, 3);
    auto cfg = synthetic::toy_model_config(data);
    Model<float> model(cfg, 22);
    const auto before = model.params().get("token_tf.layer0.attn.wq")->data;

    TrainOptions options;
    options.schedule.frozen_epochs = 0;
    options.schedule.max_epochs = 1;
    options.schedule.lr = 0.01;
    options.schedule.seed = 22;
    train_model(model, data.docs, {}, data.docs, options);
    CHECK(model.params().get("token_tf.layer0.attn.wq")->data != before);
  }

  TEST_CASE("training is bit-reproducible for a fixed seed") {
    const auto data = synthetic::make(10, 4, 5);
    const auto cfg = synthetic::toy_model_config(data);
    TrainOptions options;
    options.schedule.frozen_epochs = 1;
    options.schedule.max_epochs = 3;
    options.schedule.lr = 0.005;
    options.schedule.seed = 77;
    const auto desc = make_description_corpus(data.labels, data.vocab, IngestLimits{});

    Model<float> m1(cfg, 7), m2(cfg, 7);
    const auto r1 = train_model(m1, data.docs, desc, data.docs, options);
    const auto r2 = train_model(m2, data.docs, desc, data.docs, options);
    CHECK(r1.log_csv() == r2.log_csv());
    for (const auto& e : m1.params().entries())
      CHECK(e.tensor->data == m2.params().get(e.name)->data);
  }

  TEST_CASE("average_predictions: identity, midpoint, bounds") {
    CHECK_THROWS_AS(average_predictions({}), DataError);
    const std::vector<double> member = {0.123456789, 0.987654321, 1.0 / 3.0};
    const auto same = average_predictions({member, member, member});
    for (std::size_t i = 0; i < member.size(); ++i) CHECK(same[i] == member[i]);  // bit-exact

    const auto mid = average_predictions({{0.2}, {0.8}});
    CHECK(mid[0] == doctest::Approx(0.5).epsilon(1e-15));

    Rng rng(31);
    std::vector<std::vector<double>> members(3, std::vector<double>(50));
    for (auto& m : members)
      for (auto& v : m) v = rng.uniform();
    for (double v : average_predictions(members)) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  TEST_CASE("threaded prediction matches the serial result bit for bit") {
    const auto data = synthetic::make(24, 6, 8);
    const auto cfg = synthetic::toy_model_config(data);
    Model<float> model(cfg, 15);
    const auto serial = predict(model, data.docs, 32, 1);
    const auto threaded = predict(model, data.docs, 32, 4);
    CHECK(serial == threaded);
  }

  TEST_CASE("non-finite loss aborts with a numeric error") {
    const auto data = synthetic::make(4, 4, 9);
    auto cfg = synthetic::toy_model_config(data);
    Model<float> model(cfg, 5);
    // poison a parameter so the forward pass produces NaN
    model.params().get("token_tf.embed.token")->data[0] = std::nanf("");
    TrainOptions options;
    options.schedule.max_epochs = 1;
    options.schedule.seed = 5;
    CHECK_THROWS_AS(train_model(model, data.docs, {}, data.docs, options), NumericError);
  }
}
