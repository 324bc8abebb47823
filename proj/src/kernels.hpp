#pragma once

#include <cstdint>
#include <cstring>
#include <vector>

#include "rga/tensor.hpp"

namespace rga::kernels {

/// C(MxN) += A(MxK) * B(KxN), all row-major and contiguous. Each output
/// element accumulates over k in increasing order.
namespace detail {

inline constexpr int kVecBytes = 32;

template <class T>
struct Vec {
  static constexpr int kLanes = kVecBytes / sizeof(T);
  typedef T type __attribute__((vector_size(kVecBytes)));
};

template <class T>
inline typename Vec<T>::type load(const T* p) {
  typename Vec<T>::type v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <class T>
inline void store(T* p, typename Vec<T>::type v) {
  std::memcpy(p, &v, sizeof v);
}

// R rows by NV vectors of C stay in registers for the whole k loop.
template <class T, int R, int NV>
inline void gemm_tile(std::int64_t n, std::int64_t k, const T* __restrict a, const T* __restrict b, T* __restrict c) {
  using V = typename Vec<T>::type;
  constexpr int L = Vec<T>::kLanes;
  V acc[R][NV];
  for (int r = 0; r < R; ++r) {
    for (int v = 0; v < NV; ++v) acc[r][v] = load(c + r * n + v * L);
  }
  for (std::int64_t p = 0; p < k; ++p) {
    V bv[NV];
    for (int v = 0; v < NV; ++v) bv[v] = load(b + p * n + v * L);
    for (int r = 0; r < R; ++r) {
      const T av = a[r * k + p];
      for (int v = 0; v < NV; ++v) acc[r][v] += av * bv[v];
    }
  }
  for (int r = 0; r < R; ++r) {
    for (int v = 0; v < NV; ++v) store(c + r * n + v * L, acc[r][v]);
  }
}

template <class T, int R>
inline void gemm_tail(std::int64_t n, std::int64_t k, std::int64_t j0, const T* __restrict a, const T* __restrict b,
                      T* __restrict c) {
  for (int r = 0; r < R; ++r) {
    T* crow = c + r * n;
    const T* arow = a + r * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::int64_t j = j0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T, int R>
inline void gemm_rows(std::int64_t n, std::int64_t k, const T* __restrict a, const T* __restrict b,
                      T* __restrict c) {
  constexpr int L = Vec<T>::kLanes;
  std::int64_t j = 0;
  if constexpr (R == 1) {
    for (; j + 4 * L <= n; j += 4 * L) gemm_tile<T, R, 4>(n, k, a, b + j, c + j);
  }
  for (; j + 2 * L <= n; j += 2 * L) gemm_tile<T, R, 2>(n, k, a, b + j, c + j);
  for (; j + L <= n; j += L) gemm_tile<T, R, 1>(n, k, a, b + j, c + j);
  if (j < n) gemm_tail<T, R>(n, k, j, a, b, c);
}

}  // namespace detail

template <class T>
inline void gemm_acc(std::int64_t m, std::int64_t n, std::int64_t k, const T* __restrict a, const T* __restrict b,
                     T* __restrict c) {
  std::int64_t i = 0;
  for (; i + 4 <= m; i += 4) detail::gemm_rows<T, 4>(n, k, a + i * k, b, c + i * n);
  for (; i < m; ++i) detail::gemm_rows<T, 1>(n, k, a + i * k, b, c + i * n);
}

/// acc + sum of x[0..n) and acc + sum of (x - shift)^2. Double sums are strictly
/// sequential; float sums run in eight fixed lanes that are folded in order.
template <class T>
inline T sum_run(const T* __restrict x, std::int64_t n, T acc) {
  if constexpr (sizeof(T) == 4) {
    T lane[8] = {};
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
      for (int l = 0; l < 8; ++l) lane[l] += x[i + l];
    }
    for (int l = 0; l < 8; ++l) acc += lane[l];
    for (; i < n; ++i) acc += x[i];
  } else {
    for (std::int64_t i = 0; i < n; ++i) acc += x[i];
  }
  return acc;
}

template <class T>
inline T sq_dev_run(const T* __restrict x, std::int64_t n, T shift, T acc) {
  if constexpr (sizeof(T) == 4) {
    T lane[8] = {};
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
      for (int l = 0; l < 8; ++l) lane[l] += (x[i + l] - shift) * (x[i + l] - shift);
    }
    for (int l = 0; l < 8; ++l) acc += lane[l];
    for (; i < n; ++i) acc += (x[i] - shift) * (x[i] - shift);
  } else {
    for (std::int64_t i = 0; i < n; ++i) acc += (x[i] - shift) * (x[i] - shift);
  }
  return acc;
}

/// dst(cols x rows) = transpose of src(rows x cols).
template <class T>
inline void transpose(const T* src, std::int64_t rows, std::int64_t cols, T* dst) {
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

template <class T>
inline std::vector<T> transposed(const T* src, std::int64_t rows, std::int64_t cols) {
  std::vector<T> out(static_cast<std::size_t>(rows * cols));
  transpose(src, rows, cols, out.data());
  return out;
}

/// C(MxN) += A(MxK) * B(NxK)^T. Narrow outputs are formed transposed so the
/// vectorised axis stays wide; accumulation order over k is the same.
template <class T>
inline void gemm_nt_acc(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c) {
  if (n >= 16 || n >= m) {
    const auto bt = transposed(b, n, k);
    gemm_acc(m, n, k, a, bt.data(), c);
    return;
  }
  const auto at = transposed(a, m, k);
  auto ct = transposed(c, m, n);
  gemm_acc(n, m, k, b, at.data(), ct.data());
  transpose(ct.data(), n, m, c);
}

/// C(MxN) += A(KxM)^T * B(KxN).
template <class T>
inline void gemm_tn_acc(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c) {
  if (n >= 16 || n >= m) {
    const auto at = transposed(a, k, m);
    gemm_acc(m, n, k, at.data(), b, c);
    return;
  }
  const auto bt = transposed(b, k, n);
  auto ct = transposed(c, m, n);
  gemm_acc(n, m, k, bt.data(), a, ct.data());
  transpose(ct.data(), n, m, c);
}

}  // namespace rga::kernels
