#pragma once

#include "mrvpc/nncore/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mrvpc::nn {

/// Ordered collection of named learnable tensors, each paired with a gradient
/// accumulator of the same shape.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
  };

  std::size_t add(const std::string& name, Shape shape) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back({name, Tensor<T>(shape), Tensor<T>(shape)});
    return entries_.size() - 1;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return it->second;
  }
  Entry& at(const std::string& name) { return entries_[index_of(name)]; }
  const Entry& at(const std::string& name) const { return entries_[index_of(name)]; }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad() {
    for (auto& e : entries_) e.grad.fill(T(0));
  }

  std::size_t num_values() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& e : entries_)
      if (!e.value.all_finite()) return false;
    return true;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) {
      std::size_t i = out.add(e.name, e.value.shape);
      out[i].value = e.value.template cast<U>();
      out[i].grad = e.grad.template cast<U>();
    }
    return out;
  }

  /// Copies values from a store with identical names and shapes.
  template <typename U>
  void assign_from(const ParamStore<U>& other) {
    if (other.size() != size()) throw std::invalid_argument("param store size mismatch");
    for (std::size_t i = 0; i < size(); ++i) {
      if (other[i].name != entries_[i].name || other[i].value.shape != entries_[i].value.shape)
        throw std::invalid_argument("param store layout mismatch at " + entries_[i].name);
      for (std::size_t j = 0; j < entries_[i].value.size(); ++j)
        entries_[i].value.values[j] = static_cast<T>(other[i].value.values[j]);
    }
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace mrvpc::nn
