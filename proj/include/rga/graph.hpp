#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rga/parameters.hpp"
#include "rga/tensor.hpp"

namespace rga {

enum class OpKind : std::uint8_t {
  kConstant,
  kVariable,
  kParameter,
  kMatMul,
  kConv1x1,
  kConv2d,
  kBatchNorm,
  kRelu,
  kSigmoid,
  kSoftmax,
  kMean,
  kMax,
  kAdd,
  kMul,
  kScale,
  kConcat,
  kSlice,
  kReshape,
  kPermute,
  kSum,
  kSmoothedCrossEntropy,
  kTripletBatchHard,
};

const char* op_name(OpKind kind);

/// Handle to a node of one Graph.
struct Var {
  int id = -1;
  std::uint64_t graph = 0;
  bool valid() const { return id >= 0; }
};

/// Computation record: an append-only, topologically ordered list of executed
/// primitives with the intermediates each one needs for differentiation.
///
/// Every primitive stores a forward closure (so the record can be replayed)
/// and a backward closure that accumulates into its inputs' gradients.
/// Parameter leaves remember the ParameterSet entry they were read from;
/// backward() adds their gradients into that set's buffers.
template <class T>
class Graph {
 public:
  using Inputs = std::span<const Tensor<T>* const>;
  using InputGrads = std::span<Tensor<T>* const>;
  using Saved = std::vector<Tensor<T>>;
  using ForwardFn = std::function<Tensor<T>(Inputs in, Saved& saved)>;
  /// `gin[k]` is null when input k does not require a gradient.
  using BackwardFn =
      std::function<void(Inputs in, const Tensor<T>& out, const Tensor<T>& gout, const Saved& saved, InputGrads gin)>;

  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var constant(Tensor<T> value);
  /// Leaf whose gradient is retained and readable through grad().
  Var variable(Tensor<T> value);
  Var parameter(ParameterSet<T>& params, std::string_view name);

  Var apply(OpKind kind, std::vector<Var> inputs, ForwardFn forward, BackwardFn backward);

  /// With recording off, primitives still execute but keep no closures or
  /// intermediates, and their outputs do not require gradients.
  void set_recording(bool on) { recording_ = on; }
  bool recording() const { return recording_; }

  const Tensor<T>& value(Var v) const;
  const Tensor<T>& grad(Var v) const;
  const Saved& saved(Var v) const;
  OpKind kind(Var v) const;
  const std::vector<int>& inputs(Var v) const;
  bool requires_grad(Var v) const;
  bool contains(Var v) const { return v.graph == id_ && v.id >= 0 && v.id < static_cast<int>(nodes_.size()); }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Trainable parameter gradients are
  /// accumulated into their ParameterSet buffers; non-trainable entries are
  /// never written.
  void backward(Var loss);

  /// Re-executes every non-leaf primitive in record order from the stored
  /// leaf values.
  void replay();

 private:
  struct Node {
    OpKind kind = OpKind::kConstant;
    std::vector<int> inputs;
    Tensor<T> value;
    Tensor<T> grad;
    Saved saved;
    ForwardFn forward;
    BackwardFn backward;
    bool requires_grad = false;
    ParameterSet<T>* params = nullptr;
    std::string param_name;
  };

  const Node& node(Var v) const;
  Var push(Node n);

  std::uint64_t id_;
  bool recording_ = true;
  std::vector<Node> nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace rga
