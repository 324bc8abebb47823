#include "rga/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace rga {

MissingIdentityError::MissingIdentityError(int id, std::int64_t query)
    : std::invalid_argument("query " + std::to_string(query) + " has identity " + std::to_string(id) +
                            " which does not appear in the gallery"),
      id_(id) {}

template <class T>
EvalReport cmc_map(const Tensor<T>& query, const std::vector<int>& query_ids, const Tensor<T>& gallery,
                   const std::vector<int>& gallery_ids, int max_rank) {
  if (query.rank() != 2 || gallery.rank() != 2 || query.dim(1) != gallery.dim(1)) {
    throw ShapeError("cmc_map: query " + shape_str(query.shape()) + " and gallery " + shape_str(gallery.shape()) +
                     " must be (Q,D) and (G,D)");
  }
  const std::int64_t nq = query.dim(0), ng = gallery.dim(0), d = query.dim(1);
  if (static_cast<std::int64_t>(query_ids.size()) != nq || static_cast<std::int64_t>(gallery_ids.size()) != ng) {
    throw ShapeError("cmc_map: id lists do not match embedding counts");
  }
  if (max_rank < 1) throw std::invalid_argument("cmc_map: max_rank must be positive");
  for (std::int64_t q = 0; q < nq; ++q) {
    if (std::find(gallery_ids.begin(), gallery_ids.end(), query_ids[q]) == gallery_ids.end()) {
      throw MissingIdentityError(query_ids[q], q);
    }
  }

  EvalReport rep;
  rep.num_query = nq;
  rep.num_gallery = ng;
  std::vector<std::int64_t> hits(static_cast<std::size_t>(max_rank), 0);
  std::vector<double> dist(static_cast<std::size_t>(ng));
  std::vector<std::int64_t> order(static_cast<std::size_t>(ng));
  double ap_sum = 0.0;
  for (std::int64_t q = 0; q < nq; ++q) {
    const T* qp = query.ptr() + q * d;
    for (std::int64_t j = 0; j < ng; ++j) {
      const T* gp = gallery.ptr() + j * d;
      double acc = 0.0;
      for (std::int64_t k = 0; k < d; ++k) {
        const double diff = static_cast<double>(qp[k]) - static_cast<double>(gp[k]);
        acc += diff * diff;
      }
      dist[j] = acc;
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return dist[a] < dist[b]; });

    std::int64_t first = -1, relevant = 0;
    double precision_sum = 0.0;
    for (std::int64_t r = 0; r < ng; ++r) {
      if (gallery_ids[order[r]] != query_ids[q]) continue;
      if (first < 0) first = r;
      ++relevant;
      precision_sum += static_cast<double>(relevant) / static_cast<double>(r + 1);
    }
    ap_sum += precision_sum / static_cast<double>(relevant);
    for (std::int64_t k = first; k < max_rank; ++k) ++hits[k];
  }
  rep.cmc.resize(static_cast<std::size_t>(max_rank));
  for (int k = 0; k < max_rank; ++k) rep.cmc[k] = nq ? static_cast<double>(hits[k]) / static_cast<double>(nq) : 0.0;
  rep.map = nq ? ap_sum / static_cast<double>(nq) : 0.0;
  return rep;
}

template EvalReport cmc_map<float>(const Tensor<float>&, const std::vector<int>&, const Tensor<float>&,
                                   const std::vector<int>&, int);
template EvalReport cmc_map<double>(const Tensor<double>&, const std::vector<int>&, const Tensor<double>&,
                                    const std::vector<int>&, int);

}  // namespace rga
