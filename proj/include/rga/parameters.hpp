#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rga/tensor.hpp"

namespace rga {

template <class T>
struct ParamEntry {
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
};

/// Named, shaped tensors for one model. Trainable entries carry a gradient
/// accumulator of the same shape; batch-norm running statistics are stored as
/// non-trainable entries ("<prefix>.running_mean", "<prefix>.running_var").
/// Iteration order is the lexicographic name order.
template <class T>
class ParameterSet {
 public:
  using Map = std::map<std::string, ParamEntry<T>, std::less<>>;

  /// Inserts a new entry; a duplicate name is an error.
  ParamEntry<T>& add(const std::string& name, Tensor<T> value, bool trainable = true);

  bool contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }
  ParamEntry<T>& entry(std::string_view name);
  const ParamEntry<T>& entry(std::string_view name) const;
  Tensor<T>& value(std::string_view name) { return entry(name).value; }
  const Tensor<T>& value(std::string_view name) const { return entry(name).value; }
  Tensor<T>& grad(std::string_view name) { return entry(name).grad; }

  void zero_grad();

  /// Number of trainable scalars.
  std::int64_t trainable_count() const;
  /// Trainable scalars among entries whose name starts with `prefix`.
  std::int64_t trainable_count(std::string_view prefix) const;

  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }

  typename Map::iterator begin() { return entries_.begin(); }
  typename Map::iterator end() { return entries_.end(); }
  typename Map::const_iterator begin() const { return entries_.begin(); }
  typename Map::const_iterator end() const { return entries_.end(); }

  template <class U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& [name, e] : entries_) out.add(name, e.value.template cast<U>(), e.trainable);
    return out;
  }

 private:
  Map entries_;
};

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

}  // namespace rga
