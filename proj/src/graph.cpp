#include "rga/graph.hpp"

#include <atomic>
#include <stdexcept>

namespace rga {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kVariable: return "variable";
    case OpKind::kParameter: return "parameter";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kConv1x1: return "conv1x1";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kBatchNorm: return "batch_norm";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kMean: return "mean";
    case OpKind::kMax: return "max";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kReshape: return "reshape";
    case OpKind::kPermute: return "permute";
    case OpKind::kSum: return "sum";
    case OpKind::kSmoothedCrossEntropy: return "smoothed_cross_entropy";
    case OpKind::kTripletBatchHard: return "triplet_batch_hard";
  }
  return "unknown";
}

namespace {
std::uint64_t next_graph_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}
}  // namespace

template <class T>
Graph<T>::Graph() : id_(next_graph_id()) {}

template <class T>
Var Graph<T>::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1), id_};
}

template <class T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  if (!contains(v)) throw std::invalid_argument("variable does not belong to this computation record");
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <class T>
Var Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.kind = OpKind::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

template <class T>
Var Graph<T>::variable(Tensor<T> value) {
  Node n;
  n.kind = OpKind::kVariable;
  n.value = std::move(value);
  n.requires_grad = recording_;
  return push(std::move(n));
}

template <class T>
Var Graph<T>::parameter(ParameterSet<T>& params, std::string_view name) {
  const auto& e = params.entry(name);
  Node n;
  n.kind = OpKind::kParameter;
  n.value = e.value;
  n.requires_grad = recording_ && e.trainable;
  n.params = &params;
  n.param_name = std::string(name);
  return push(std::move(n));
}

template <class T>
Var Graph<T>::apply(OpKind kind, std::vector<Var> inputs, ForwardFn forward, BackwardFn backward) {
  std::vector<const Tensor<T>*> in;
  in.reserve(inputs.size());
  Node n;
  n.kind = kind;
  for (const Var& v : inputs) {
    const Node& src = node(v);
    in.push_back(&src.value);
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || src.requires_grad;
  }
  n.value = forward(in, n.saved);
  if (recording_) {
    n.forward = std::move(forward);
    n.backward = std::move(backward);
  } else {
    n.requires_grad = false;
    n.saved.clear();
  }
  return push(std::move(n));
}

template <class T>
const Tensor<T>& Graph<T>::value(Var v) const {
  return node(v).value;
}

template <class T>
const Tensor<T>& Graph<T>::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) throw std::logic_error("no gradient has reached this variable");
  return n.grad;
}

template <class T>
const typename Graph<T>::Saved& Graph<T>::saved(Var v) const {
  return node(v).saved;
}

template <class T>
OpKind Graph<T>::kind(Var v) const {
  return node(v).kind;
}

template <class T>
const std::vector<int>& Graph<T>::inputs(Var v) const {
  return node(v).inputs;
}

template <class T>
bool Graph<T>::requires_grad(Var v) const {
  return node(v).requires_grad;
}

template <class T>
void Graph<T>::backward(Var loss) {
  if (!contains(loss)) throw std::invalid_argument("loss does not belong to this computation record");
  const Node& ln = node(loss);
  if (ln.value.size() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + shape_str(ln.value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor<T>();
  if (!ln.requires_grad) return;
  nodes_[static_cast<std::size_t>(loss.id)].grad = Tensor<T>(ln.value.shape(), T{1});

  std::vector<const Tensor<T>*> in;
  std::vector<Tensor<T>*> gin;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    in.clear();
    gin.clear();
    for (int src_id : n.inputs) {
      Node& src = nodes_[static_cast<std::size_t>(src_id)];
      in.push_back(&src.value);
      if (src.requires_grad) {
        if (src.grad.empty()) src.grad = Tensor<T>(src.value.shape(), T{0});
        gin.push_back(&src.grad);
      } else {
        gin.push_back(nullptr);
      }
    }
    n.backward(in, n.value, n.grad, n.saved, gin);
  }

  for (auto& n : nodes_) {
    if (n.kind != OpKind::kParameter || n.grad.empty()) continue;
    auto& e = n.params->entry(n.param_name);
    if (!e.trainable) continue;
    auto dst = e.grad.data();
    auto src = n.grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

template <class T>
void Graph<T>::replay() {
  std::vector<const Tensor<T>*> in;
  for (auto& n : nodes_) {
    if (!n.forward) continue;
    in.clear();
    for (int src_id : n.inputs) in.push_back(&nodes_[static_cast<std::size_t>(src_id)].value);
    n.saved.clear();
    n.value = n.forward(in, n.saved);
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace rga
