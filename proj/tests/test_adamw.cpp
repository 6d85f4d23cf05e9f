#include <doctest.h>

#include <cmath>

#include "adamw.hpp"
#include "tensor.hpp"

using namespace mdbert;

TEST_SUITE("adamw") {
  TEST_CASE("zero gradient and zero weight decay leave parameters unchanged") {
    ParamStore<double> params;
    auto p = params.add("p", Tensor<double>({2}, {1.0, -2.0}));
    p->ensure_grad();
    AdamW<double> opt({0.1, 0.9, 0.999, 1e-8, 0.0});
    opt.step(params);
    CHECK(p->data[0] == 1.0);
    CHECK(p->data[1] == -2.0);
    CHECK(opt.step_count() == 1);
  }

  TEST_CASE("one step moves against the gradient") {
    ParamStore<double> params;
    auto p = params.add("p", Tensor<double>({1}, {1.0}));
    p->ensure_grad();
    p->grad[0] = 1.0;
    AdamW<double> opt({0.1, 0.9, 0.999, 1e-8, 0.0});
    opt.step(params);
    CHECK(p->data[0] < 1.0);
    CHECK(p->grad[0] == 0.0);  // zeroed after the step
  }

  TEST_CASE("converges on a convex quadratic") {
    ParamStore<double> params;
    auto p = params.add("p", Tensor<double>({1}, {0.0}));
    AdamW<double> opt({0.2, 0.9, 0.99, 1e-8, 0.0});
    for (int step = 0; step < 100; ++step) {
      p->ensure_grad();
      p->grad[0] = 2.0 * (p->data[0] - 3.0);  // d/dp (p-3)^2
      opt.step(params);
    }
    CHECK(std::fabs(p->data[0] - 3.0) < 0.01);
  }

  TEST_CASE("frozen parameters receive zero updates") {
    ParamStore<double> params;
    auto frozen = params.add("token_tf.w", Tensor<double>({1}, {5.0}));
    auto live = params.add("head.w", Tensor<double>({1}, {5.0}));
    params.set_frozen_prefixes({"token_tf."});
    frozen->ensure_grad();
    frozen->grad[0] = 1.0;
    live->ensure_grad();
    live->grad[0] = 1.0;
    AdamW<double> opt({0.1, 0.9, 0.999, 1e-8, 0.0});
    opt.step(params);
    CHECK(frozen->data[0] == 5.0);
    CHECK(live->data[0] != 5.0);
    CHECK(frozen->grad[0] == 0.0);  // still cleared
  }

  TEST_CASE("missing gradient on a live parameter names it") {
    ParamStore<double> params;
    params.add("head.bias", Tensor<double>({1}, {0.0}));
    AdamW<double> opt;
    try {
      opt.step(params);
      CHECK(false);
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("head.bias") != std::string::npos);
    }
  }

  TEST_CASE("decoupled weight decay shrinks even with zero gradient") {
    ParamStore<double> params;
    auto p = params.add("p", Tensor<double>({1}, {1.0}));
    p->ensure_grad();
    AdamW<double> opt({0.1, 0.9, 0.999, 1e-8, 0.5});
    opt.step(params);
    CHECK(p->data[0] == doctest::Approx(1.0 - 0.1 * 0.5 * 1.0));
  }
}
