#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rga/graph.hpp"

// Differentiable primitives. Every function executes its forward pass
// immediately and appends itself to the graph.
//
// Broadcasting is limited to size-1 axes of equal-rank operands (add, mul);
// there is no implicit rank promotion.

namespace rga::ops {

/// (M,K)x(K,N) -> (M,N); (B,M,K)x(B,K,N) -> (B,M,N); (M,K)x(B,K,N) -> (B,M,N).
template <class T>
Var matmul(Graph<T>& g, Var a, Var b);

/// Per-position linear map over the channel axis: x (B,Cin,...) with
/// w (Cout,Cin) gives (B,Cout,...).
template <class T>
Var conv1x1(Graph<T>& g, Var x, Var w);

/// Square-kernel 2-D convolution with zero padding; x (B,Cin,H,W),
/// w (Cout,Cin,k,k).
template <class T>
Var conv2d(Graph<T>& g, Var x, Var w, int stride, int padding);

struct BatchNormAttrs {
  bool training = true;
  double eps = 1e-5;
};

/// Per-channel normalisation of x (B,C,...) over batch and trailing axes.
/// Training mode normalises by batch statistics (biased variance) and saves
/// {x_hat, inv_std, mean, var}; eval mode needs running_mean/running_var.
template <class T>
Var batch_norm(Graph<T>& g, Var x, Var gamma, Var beta, std::optional<Var> running_mean,
               std::optional<Var> running_var, BatchNormAttrs attrs);

template <class T>
Var relu(Graph<T>& g, Var x);

template <class T>
Var sigmoid(Graph<T>& g, Var x);

/// Softmax over the last axis.
template <class T>
Var softmax(Graph<T>& g, Var x);

template <class T>
Var mean(Graph<T>& g, Var x, int axis, bool keepdim = true);

/// Ties route the gradient to the first maximal index.
template <class T>
Var max(Graph<T>& g, Var x, int axis, bool keepdim = true);

template <class T>
Var add(Graph<T>& g, Var a, Var b);

template <class T>
Var mul(Graph<T>& g, Var a, Var b);

template <class T>
Var scale(Graph<T>& g, Var a, double s);

template <class T>
Var concat(Graph<T>& g, const std::vector<Var>& parts, int axis);

template <class T>
Var slice(Graph<T>& g, Var x, int axis, std::int64_t start, std::int64_t length);

template <class T>
Var reshape(Graph<T>& g, Var x, Shape shape);

template <class T>
Var permute(Graph<T>& g, Var x, std::vector<int> perm);

/// Sum of all elements as a rank-0 tensor.
template <class T>
Var sum(Graph<T>& g, Var x);

template <class T>
Var mean_all(Graph<T>& g, Var x);

/// Shape of broadcasting a against b under the size-1 rule.
Shape broadcast_shape(const Shape& a, const Shape& b);

}  // namespace rga::ops
