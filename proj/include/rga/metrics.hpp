#pragma once

#include <cstdint>
#include <vector>

#include "rga/tensor.hpp"

namespace rga {

struct EvalReport {
  std::vector<double> cmc;  // cmc[k-1] = rank-k match rate, k = 1..max_rank
  double map = 0.0;
  std::int64_t num_query = 0;
  std::int64_t num_gallery = 0;

  double rank1() const { return cmc.empty() ? 0.0 : cmc.front(); }
  bool operator==(const EvalReport&) const = default;
};

/// Raised when a query identity has no match in the gallery.
class MissingIdentityError : public std::invalid_argument {
 public:
  MissingIdentityError(int id, std::int64_t query);
  int id() const { return id_; }

 private:
  int id_;
};

/// Single-gallery retrieval protocol on Euclidean distances. The gallery
/// is ranked per query by ascending distance, ties broken by gallery index.
/// CMC@k is the fraction of queries with a correct match in the top k; AP
/// averages precision@rank over the relevant positions.
template <class T>
EvalReport cmc_map(const Tensor<T>& query, const std::vector<int>& query_ids, const Tensor<T>& gallery,
                   const std::vector<int>& gallery_ids, int max_rank = 10);

}  // namespace rga
