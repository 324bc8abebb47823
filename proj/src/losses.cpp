#include "rga/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rga {

template <class T>
Var id_loss(Graph<T>& g, Var logits, const std::vector<int>& labels, double epsilon) {
  const Shape s = g.value(logits).shape();
  if (s.size() != 2) throw ShapeError("id_loss: logits must be (B,K), got " + shape_str(s));
  const std::int64_t b = s[0], k = s[1];
  if (static_cast<std::int64_t>(labels.size()) != b) throw ShapeError("id_loss: label count does not match batch");
  if (epsilon < 0.0 || epsilon >= 1.0) throw std::invalid_argument("id_loss: epsilon must be in [0, 1)");
  if (k < 2 && epsilon > 0.0) throw std::invalid_argument("id_loss: label smoothing needs at least two classes");
  for (int l : labels) {
    if (l < 0 || l >= k) {
      throw std::invalid_argument("id_loss: label " + std::to_string(l) + " outside [0, " + std::to_string(k) + ")");
    }
  }
  const T on = static_cast<T>(1.0 - epsilon);
  const T off = k > 1 ? static_cast<T>(epsilon / static_cast<double>(k - 1)) : T{0};

  auto fwd = [=](typename Graph<T>::Inputs in, typename Graph<T>::Saved& saved) {
    Tensor<T> prob(s);
    T total{0};
    for (std::int64_t r = 0; r < b; ++r) {
      const T* z = in[0]->ptr() + r * k;
      const T mx = *std::max_element(z, z + k);
      T se{0};
      for (std::int64_t j = 0; j < k; ++j) se += std::exp(z[j] - mx);
      const T lse = mx + std::log(se);
      T row{0};
      for (std::int64_t j = 0; j < k; ++j) {
        const T q = j == labels[r] ? on : off;
        row -= q * (z[j] - lse);
        prob[r * k + j] = std::exp(z[j] - lse);
      }
      total += row;
    }
    saved.push_back(std::move(prob));
    return Tensor<T>::scalar(total / static_cast<T>(b));
  };
  auto bwd = [=](typename Graph<T>::Inputs, const Tensor<T>&, const Tensor<T>& gout,
                 const typename Graph<T>::Saved& saved, typename Graph<T>::InputGrads gin) {
    const Tensor<T>& prob = saved[0];
    const T scale = gout[0] / static_cast<T>(b);
    T* gz = gin[0]->ptr();
    for (std::int64_t r = 0; r < b; ++r) {
      for (std::int64_t j = 0; j < k; ++j) {
        const T q = j == labels[r] ? on : off;
        gz[r * k + j] += scale * (prob[r * k + j] - q);
      }
    }
  };
  return g.apply(OpKind::kSmoothedCrossEntropy, {logits}, fwd, bwd);
}

template <class T>
Var triplet_batch_hard(Graph<T>& g, Var embeddings, const std::vector<int>& labels, double margin) {
  const Shape s = g.value(embeddings).shape();
  if (s.size() != 2) throw ShapeError("triplet_batch_hard: embeddings must be (B,D), got " + shape_str(s));
  const std::int64_t b = s[0], d = s[1];
  if (static_cast<std::int64_t>(labels.size()) != b) {
    throw ShapeError("triplet_batch_hard: label count does not match batch");
  }
  // Anchors that have at least one positive and one negative.
  std::vector<char> active(static_cast<std::size_t>(b), 0);
  std::int64_t n_active = 0;
  for (std::int64_t a = 0; a < b; ++a) {
    bool pos = false, neg = false;
    for (std::int64_t j = 0; j < b; ++j) {
      if (j == a) continue;
      (labels[j] == labels[a] ? pos : neg) = true;
    }
    active[a] = pos && neg;
    n_active += active[a];
  }
  if (n_active == 0) throw std::invalid_argument("triplet_batch_hard: no anchor has both a positive and a negative");
  const T m = static_cast<T>(margin);

  // saved: [distances (B,B), per-anchor {hinge active, pos index, neg index} (B,3)]
  auto fwd = [=](typename Graph<T>::Inputs in, typename Graph<T>::Saved& saved) {
    const T* e = in[0]->ptr();
    Tensor<T> dist(Shape{b, b}, T{0});
    for (std::int64_t i = 0; i < b; ++i) {
      for (std::int64_t j = 0; j < b; ++j) {
        T acc{0};
        for (std::int64_t k = 0; k < d; ++k) {
          const T diff = e[i * d + k] - e[j * d + k];
          acc += diff * diff;
        }
        dist[i * b + j] = std::sqrt(acc);
      }
    }
    Tensor<T> pick(Shape{b, 3}, T{0});
    T total{0};
    for (std::int64_t a = 0; a < b; ++a) {
      if (!active[a]) continue;
      std::int64_t p = -1, n = -1;
      for (std::int64_t j = 0; j < b; ++j) {
        if (j == a) continue;
        const T dj = dist[a * b + j];
        if (labels[j] == labels[a]) {
          if (p < 0 || dj > dist[a * b + p]) p = j;
        } else if (n < 0 || dj < dist[a * b + n]) {
          n = j;
        }
      }
      const T hinge = dist[a * b + p] - dist[a * b + n] + m;
      pick[a * 3 + 1] = static_cast<T>(p);
      pick[a * 3 + 2] = static_cast<T>(n);
      if (hinge > T{0}) {
        total += hinge;
        pick[a * 3] = T{1};
      }
    }
    saved.push_back(std::move(dist));
    saved.push_back(std::move(pick));
    return Tensor<T>::scalar(total / static_cast<T>(n_active));
  };
  auto bwd = [=](typename Graph<T>::Inputs in, const Tensor<T>&, const Tensor<T>& gout,
                 const typename Graph<T>::Saved& saved, typename Graph<T>::InputGrads gin) {
    const Tensor<T>& dist = saved[0];
    const Tensor<T>& pick = saved[1];
    const T* e = in[0]->ptr();
    T* ge = gin[0]->ptr();
    const T scale = gout[0] / static_cast<T>(n_active);
    // d||ea - ej|| / d ea = (ea - ej) / ||ea - ej||; zero at coincident points.
    auto push = [&](std::int64_t a, std::int64_t j, T sign) {
      const T dj = dist[a * b + j];
      if (dj <= T{0}) return;
      const T k = sign * scale / dj;
      for (std::int64_t c = 0; c < d; ++c) {
        const T diff = e[a * d + c] - e[j * d + c];
        ge[a * d + c] += k * diff;
        ge[j * d + c] -= k * diff;
      }
    };
    for (std::int64_t a = 0; a < b; ++a) {
      if (pick[a * 3] == T{0}) continue;
      push(a, static_cast<std::int64_t>(pick[a * 3 + 1]), T{1});
      push(a, static_cast<std::int64_t>(pick[a * 3 + 2]), T{-1});
    }
  };
  return g.apply(OpKind::kTripletBatchHard, {embeddings}, fwd, bwd);
}

template Var id_loss<float>(Graph<float>&, Var, const std::vector<int>&, double);
template Var id_loss<double>(Graph<double>&, Var, const std::vector<int>&, double);
template Var triplet_batch_hard<float>(Graph<float>&, Var, const std::vector<int>&, double);
template Var triplet_batch_hard<double>(Graph<double>&, Var, const std::vector<int>&, double);

}  // namespace rga
