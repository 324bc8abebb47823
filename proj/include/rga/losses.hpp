#pragma once

#include <cstdint>
#include <vector>

#include "rga/graph.hpp"

namespace rga {

/// Cross-entropy of logits (B,K) against label-smoothed targets: 1-eps on
/// the true class and eps/(K-1) on every other class, averaged over the batch.
template <class T>
Var id_loss(Graph<T>& g, Var logits, const std::vector<int>& labels, double epsilon = 0.1);

/// Batch-hard triplet loss on Euclidean distances between rows of
/// embeddings (B,D). Per anchor: hardest positive (max same-id distance),
/// hardest negative (min other-id distance), hinge max(0, d+ - d- + margin),
/// averaged over anchors that have both. Anchors without a positive or a
/// negative are skipped; if none remain the call is rejected.
template <class T>
Var triplet_batch_hard(Graph<T>& g, Var embeddings, const std::vector<int>& labels, double margin = 0.3);

}  // namespace rga
