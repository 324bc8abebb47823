#include "rga/parameters.hpp"

#include <stdexcept>

namespace rga {

template <class T>
ParamEntry<T>& ParameterSet<T>::add(const std::string& name, Tensor<T> value, bool trainable) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  ParamEntry<T> e;
  e.grad = Tensor<T>(value.shape(), T{0});
  e.value = std::move(value);
  e.trainable = trainable;
  return entries_.emplace(name, std::move(e)).first->second;
}

template <class T>
ParamEntry<T>& ParameterSet<T>::entry(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

template <class T>
const ParamEntry<T>& ParameterSet<T>::entry(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

template <class T>
void ParameterSet<T>::zero_grad() {
  for (auto& [_, e] : entries_) e.grad.fill(T{0});
}

template <class T>
std::int64_t ParameterSet<T>::trainable_count() const {
  return trainable_count("");
}

template <class T>
std::int64_t ParameterSet<T>::trainable_count(std::string_view prefix) const {
  std::int64_t n = 0;
  for (const auto& [name, e] : entries_) {
    if (e.trainable && std::string_view(name).starts_with(prefix)) n += static_cast<std::int64_t>(e.value.size());
  }
  return n;
}

template <class T>
std::vector<std::string> ParameterSet<T>::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace rga
