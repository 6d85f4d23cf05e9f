#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "errors.hpp"
#include "param_store.hpp"

namespace mdbert {

// AdamW with decoupled weight decay: the decay is applied to the parameter
// itself, never mixed into the gradient moments. Frozen parameters are
// skipped entirely; all gradients are zeroed after the step.
template <class Real>
class AdamW {
 public:
  struct Options {
    Real lr = Real(1e-5);
    Real beta1 = Real(0.9);
    Real beta2 = Real(0.999);
    Real eps = Real(1e-8);
    Real weight_decay = Real(0.01);
  };

  explicit AdamW(Options opts = {}) : opts_(opts) {}

  Options& options() { return opts_; }
  std::uint64_t step_count() const { return step_; }

  void step(ParamStore<Real>& params) {
    ++step_;
    const Real bc1 = Real(1) - std::pow(opts_.beta1, Real(step_));
    const Real bc2 = Real(1) - std::pow(opts_.beta2, Real(step_));
    for (const auto& entry : params.entries()) {
      if (params.is_frozen(entry.name)) continue;
      auto& p = *entry.tensor;
      if (p.grad.size() != p.data.size())
        throw DataError("adamw: missing gradient for parameter '" + entry.name + "'");
      auto& slot = moments_[entry.name];
      if (slot.m.size() != p.data.size()) {
        slot.m.assign(p.data.size(), Real(0));
        slot.v.assign(p.data.size(), Real(0));
      }
      for (std::size_t i = 0; i < p.data.size(); ++i) {
        const Real g = p.grad[i];
        slot.m[i] = opts_.beta1 * slot.m[i] + (Real(1) - opts_.beta1) * g;
        slot.v[i] = opts_.beta2 * slot.v[i] + (Real(1) - opts_.beta2) * g * g;
        const Real m_hat = slot.m[i] / bc1;
        const Real v_hat = slot.v[i] / bc2;
        p.data[i] -= opts_.lr * (m_hat / (std::sqrt(v_hat) + opts_.eps) + opts_.weight_decay * p.data[i]);
      }
    }
    for (const auto& entry : params.entries()) {
      entry.tensor->ensure_grad();
      entry.tensor->zero_grad();
    }
  }

 private:
  struct Moments {
    std::vector<Real> m, v;
  };

  Options opts_;
  std::uint64_t step_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace mdbert
