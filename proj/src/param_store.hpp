#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

namespace mdbert {

// Named trainable tensors in deterministic (insertion) order, plus a set of
// name prefixes excluded from optimizer updates.
template <class Real>
class ParamStore {
 public:
  using P = TensorPtr<Real>;

  P add(const std::string& name, Tensor<Real> t) {
    if (index_.count(name)) throw DataError("parameter '" + name + "' already exists");
    auto p = std::make_shared<Tensor<Real>>(std::move(t));
    p->requires_grad = true;
    index_[name] = entries_.size();
    entries_.push_back({name, p});
    return p;
  }

  P get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("unknown parameter '" + name + "'");
    return entries_[it->second].tensor;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }

  struct Entry {
    std::string name;
    P tensor;
  };
  const std::vector<Entry>& entries() const { return entries_; }

  void set_frozen_prefixes(std::vector<std::string> prefixes) { frozen_prefixes_ = std::move(prefixes); }
  const std::vector<std::string>& frozen_prefixes() const { return frozen_prefixes_; }

  bool is_frozen(const std::string& name) const {
    for (const auto& prefix : frozen_prefixes_)
      if (name.rfind(prefix, 0) == 0) return true;
    return false;
  }

  void zero_grads() {
    for (auto& e : entries_)
      if (!e.tensor->grad.empty()) e.tensor->zero_grad();
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> frozen_prefixes_;
};

}  // namespace mdbert
