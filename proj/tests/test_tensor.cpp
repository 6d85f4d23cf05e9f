#include <doctest.h>

#include <cmath>

#include "rng.hpp"
#include "support/oracles.hpp"
#include "tensor.hpp"

using namespace mdbert;
using G = Graph<double>;
using P = TensorPtr<double>;

namespace {

Tensor<double> random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = (rng.uniform() - 0.5) * 2.0 * scale;
  return t;
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("matmul identity and hand case") {
    G g;
    auto identity = g.constant(Tensor<double>({2, 2}, {1, 0, 0, 1}));
    auto a = g.constant(Tensor<double>({2, 2}, {1, 2, 3, 4}));
    auto out = g.matmul(identity, a);
    CHECK(out->data == std::vector<double>{1, 2, 3, 4});

    auto row = g.constant(Tensor<double>({1, 2}, {1, 2}));
    auto col = g.constant(Tensor<double>({2, 1}, {3, 4}));
    CHECK(g.matmul(row, col)->data[0] == doctest::Approx(11.0).epsilon(1e-15));
  }

  TEST_CASE("matmul rejects mismatched shapes with both in the message") {
    G g;
    auto a = g.constant(Tensor<double>({2, 3}));
    auto b = g.constant(Tensor<double>({2, 4}));
    CHECK_THROWS_AS(g.matmul(a, b), ShapeError);
    try {
      g.matmul(a, b);
      CHECK(false);
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
      CHECK(msg.find("[2x4]") != std::string::npos);
    }
  }

  TEST_CASE("matmul gradient matches finite differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      G g;
      auto a = G::leaf(random_tensor({3, 4}, rng), true);
      auto b = G::leaf(random_tensor({4, 2}, rng), true);
      auto loss = g.sum_all(g.matmul(a, b));
      g.backward(loss);
      auto forward = [&]() {
        G fresh;
        return fresh.sum_all(fresh.matmul(a, b))->data[0];
      };
      const auto report = oracle::finite_difference_check({{"a", a}, {"b", b}}, forward);
      CHECK(report.max_rel_err < 1e-6);
    }
  }

  TEST_CASE("batched and transposed matmul gradients") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed);
      G g;
      auto a = G::leaf(random_tensor({2, 3, 4}, rng), true);
      auto w = G::leaf(random_tensor({5, 4}, rng), true);  // used transposed
      auto b = G::leaf(random_tensor({2, 3, 5}, rng), true);
      auto prod = g.matmul(a, w, /*transpose_b=*/true);  // 2x3x5
      auto loss = g.sum_all(g.matmul(g.transpose_last2(prod), b));  // (2x5x3)(2x3x5)
      g.backward(loss);
      auto forward = [&]() {
        G f;
        auto p = f.matmul(a, w, true);
        return f.sum_all(f.matmul(f.transpose_last2(p), b))->data[0];
      };
      const auto report = oracle::finite_difference_check({{"a", a}, {"w", w}, {"b", b}}, forward);
      CHECK(report.max_rel_err < 1e-6);
    }
  }

  TEST_CASE("softmax symmetry, stability and row sums") {
    G g;
    auto x = g.constant(Tensor<double>({1, 3}, {0, 0, 0}));
    auto y = g.softmax_lastdim(x);
    for (double v : y->data) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

    auto big = g.constant(Tensor<double>({1, 2}, {1000, 0}));
    auto stable = g.softmax_lastdim(big);
    CHECK(stable->data[0] == doctest::Approx(1.0));
    CHECK(stable->data[1] < 1e-300);
    CHECK(std::isfinite(stable->data[0]));

    Rng rng(7);
    auto r = g.softmax_lastdim(g.constant(random_tensor({4, 6}, rng, 3.0)));
    for (std::size_t row = 0; row < 4; ++row) {
      double sum = 0;
      for (std::size_t i = 0; i < 6; ++i) sum += r->data[row * 6 + i];
      CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
  }

  TEST_CASE("softmax gradient vs finite differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      G g;
      auto x = G::leaf(random_tensor({1, 4}, rng, 2.0), true);
      auto weights = g.constant(random_tensor({1, 4}, rng));
      auto loss = g.sum_all(g.mul(g.softmax_lastdim(x), weights));
      g.backward(loss);
      auto forward = [&]() {
        G f;
        return f.sum_all(f.mul(f.softmax_lastdim(x), weights))->data[0];
      };
      CHECK(oracle::finite_difference_check({{"x", x}}, forward).max_rel_err < 1e-6);
    }
  }

  TEST_CASE("layer_norm constant row and already-normalized row") {
    G g;
    auto gain = g.constant(Tensor<double>({4}, 1.0));
    auto bias = g.constant(Tensor<double>({4}));
    auto flat = g.layer_norm(g.constant(Tensor<double>({1, 4}, {5, 5, 5, 5})), gain, bias);
    for (double v : flat->data) CHECK(v == doctest::Approx(0.0).epsilon(1e-9));

    auto gain2 = g.constant(Tensor<double>({2}, 1.0));
    auto bias2 = g.constant(Tensor<double>({2}));
    auto norm = g.layer_norm(g.constant(Tensor<double>({1, 2}, {1, -1})), gain2, bias2);
    CHECK(norm->data[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(norm->data[1] == doctest::Approx(-1.0).epsilon(1e-6));
  }

  TEST_CASE("layer_norm gradient vs finite differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      G g;
      auto x = G::leaf(random_tensor({2, 8}, rng), true);
      auto gain = G::leaf(random_tensor({8}, rng), true);
      auto bias = G::leaf(random_tensor({8}, rng), true);
      auto weights = g.constant(random_tensor({2, 8}, rng));
      auto loss = g.sum_all(g.mul(g.layer_norm(x, gain, bias), weights));
      g.backward(loss);
      auto forward = [&]() {
        G f;
        return f.sum_all(f.mul(f.layer_norm(x, gain, bias), weights))->data[0];
      };
      const auto report = oracle::finite_difference_check({{"x", x}, {"gain", gain}, {"bias", bias}}, forward);
      CHECK(report.max_rel_err < 1e-5);
    }
  }

  TEST_CASE("gelu and sigmoid pointwise values and gradients") {
    G g;
    CHECK(g.sigmoid(g.constant(Tensor<double>({1}, {0.0})))->data[0] == doctest::Approx(0.5));
    CHECK(g.gelu(g.constant(Tensor<double>({1}, {0.0})))->data[0] == doctest::Approx(0.0));

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      G f;
      auto x = G::leaf(random_tensor({6}, rng, 2.0), true);
      auto w = f.constant(random_tensor({6}, rng));
      auto loss = f.sum_all(f.mul(f.add(f.gelu(x), f.sigmoid(x)), w));
      f.backward(loss);
      auto forward = [&]() {
        G h;
        return h.sum_all(h.mul(h.add(h.gelu(x), h.sigmoid(x)), w))->data[0];
      };
      CHECK(oracle::finite_difference_check({{"x", x}}, forward).max_rel_err < 1e-6);
    }
  }

  TEST_CASE("masked_mean identity, invariance and empty-group error") {
    G g;
    Tensor<double> mask({1, 3});
    mask.data = {1, 0, 0};
    auto x = g.constant(Tensor<double>({1, 3, 2}, {5, 6, 100, 200, 300, 400}));
    auto pooled = g.masked_mean_axis1(x, mask);
    CHECK(pooled->data == std::vector<double>{5, 6});

    // mutating masked content leaves the output bit-identical
    auto x2 = g.constant(Tensor<double>({1, 3, 2}, {5, 6, -1, -2, 9e9, -9e9}));
    auto pooled2 = g.masked_mean_axis1(x2, mask);
    CHECK(pooled2->data[0] == pooled->data[0]);
    CHECK(pooled2->data[1] == pooled->data[1]);

    Tensor<double> empty_mask({1, 3});
    CHECK_THROWS_AS(g.masked_mean_axis1(x, empty_mask), DataError);
  }

  TEST_CASE("masked_mean gradient vs finite differences") {
    Rng rng(3);
    G g;
    auto x = G::leaf(random_tensor({2, 4, 3}, rng), true);
    Tensor<double> mask({2, 4});
    mask.data = {1, 1, 0, 0, 1, 0, 1, 1};
    auto w = g.constant(random_tensor({2, 3}, rng));
    auto loss = g.sum_all(g.mul(g.masked_mean_axis1(x, mask), w));
    g.backward(loss);
    auto forward = [&]() {
      G f;
      return f.sum_all(f.mul(f.masked_mean_axis1(x, mask), w))->data[0];
    };
    CHECK(oracle::finite_difference_check({{"x", x}}, forward).max_rel_err < 1e-6);
  }

  TEST_CASE("gradient accumulation over reuse is additive") {
    G g;
    auto x = G::leaf(Tensor<double>({2}, {3.0, 4.0}), true);
    // loss = sum(x * x) => d/dx = 2x, both uses contribute
    auto loss = g.sum_all(g.mul(x, x));
    g.backward(loss);
    CHECK(x->grad[0] == doctest::Approx(6.0));
    CHECK(x->grad[1] == doctest::Approx(8.0));
  }

  TEST_CASE("rebatch groups, orders and rejects duplicates") {
    G g;
    // flat rows: doc1 pos1, doc0 pos0, doc0 pos2, doc1 pos0, doc0 pos1
    auto flat = g.constant(Tensor<double>({5, 1}, {11, 0, 2, 10, 1}));
    auto grouped = g.rebatch(flat, {1, 0, 0, 1, 0}, {1, 0, 2, 0, 1}, 2, 3);
    CHECK(grouped->data == std::vector<double>{0, 1, 2, 10, 11, 0});

    auto dup = g.constant(Tensor<double>({2, 1}, {1, 2}));
    CHECK_THROWS_AS(g.rebatch(dup, {0, 0}, {1, 1}, 1, 2), DataError);
  }

  TEST_CASE("embedding, select_rows, split/merge heads gradients") {
    Rng rng(11);
    G g;
    auto table = G::leaf(random_tensor({7, 6}, rng), true);
    auto x = g.embedding(table, {3, 0, 6, 3}, {2, 2});
    auto picked = g.select_rows(x, {1, 0});
    auto heads = g.merge_heads(g.split_heads(picked, 3), 3);
    auto w = g.constant(random_tensor({2, 2, 6}, rng));
    auto loss = g.sum_all(g.mul(heads, w));
    g.backward(loss);
    auto forward = [&]() {
      G f;
      auto fx = f.embedding(table, {3, 0, 6, 3}, {2, 2});
      auto fp = f.select_rows(fx, {1, 0});
      auto fh = f.merge_heads(f.split_heads(fp, 3), 3);
      return f.sum_all(f.mul(fh, w))->data[0];
    };
    CHECK(oracle::finite_difference_check({{"table", table}}, forward).max_rel_err < 1e-6);
  }

  TEST_CASE("weighted_bce values and gradient") {
    G g;
    // y=1, p=0.5, w=2 -> 2*ln 2
    auto p = g.constant(Tensor<double>({1, 1}, {0.5}));
    Tensor<double> y({1, 1}, {1.0});
    CHECK(g.weighted_bce(p, y, 2.0)->data[0] == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));

    // y=0, p -> 0 contributes ~0
    auto small = g.constant(Tensor<double>({1, 1}, {1e-9}));
    Tensor<double> zero({1, 1}, {0.0});
    CHECK(g.weighted_bce(small, zero, 3.0)->data[0] == doctest::Approx(0.0).epsilon(1e-6));

    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed);
      G f;
      Tensor<double> probs({2, 3});
      for (auto& v : probs.data) v = 0.1 + 0.8 * rng.uniform();
      Tensor<double> labels({2, 3});
      for (auto& v : labels.data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
      auto node = G::leaf(probs, true);
      auto loss = f.weighted_bce(node, labels, 2.5);
      f.backward(loss);
      auto forward = [&]() {
        G h;
        return h.weighted_bce(node, labels, 2.5)->data[0];
      };
      CHECK(oracle::finite_difference_check({{"probs", node}}, forward).max_rel_err < 1e-6);
    }
  }

  TEST_CASE("rng stream is stable") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(123);
    CHECK(c.next_u64() == Rng(123).next_u64());
  }
}
