#pragma once

#include <deque>
#include <string>
#include <unordered_map>

#include "dualmod/rng.hpp"
#include "dualmod/tensor.hpp"

namespace dualmod {

// Registry of all trainable parameters of a model, in creation order.
// Returned Parameter copies alias the stored buffers, so layers can hold
// their own handles while the optimizer and checkpoint code iterate here.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
    items_.emplace_back(name, std::move(init));
    index_[name] = items_.size() - 1;
    return items_.back();
  }

  std::size_t count() const { return items_.size(); }
  Parameter& at(std::size_t i) { return items_[i]; }
  const Parameter& at(std::size_t i) const { return items_[i]; }

  Parameter* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &items_[it->second];
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const Parameter& p : items_) n += p.size();
    return n;
  }

  void zero_grad() {
    for (Parameter& p : items_) p.zero_grad();
  }

  std::deque<Parameter>& items() { return items_; }
  const std::deque<Parameter>& items() const { return items_; }

 private:
  std::deque<Parameter> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline Tensor xavier_uniform(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-a, a);
  return t;
}

}  // namespace dualmod
