#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rga/backbone.hpp"
#include "rga/gradcheck.hpp"

namespace rga {

struct ModuleCheck {
  std::string module;
  CheckReport report;
};

/// Modules covered by gradcheck_suite, in order.
const std::vector<std::string>& suite_modules();

/// Gradient checks in double precision with frozen (eval-mode) batch norm
/// whose statistics and affine parameters are randomised away from the
/// identity. Attention maps are checked through loss = mean(map), gated
/// blocks through a fixed random projection of the output, and the full
/// model through id_loss on a 2-image batch.
std::vector<ModuleCheck> gradcheck_suite(const AttentionConfig& attention, const BackboneConfig& model,
                                         const GradCheckOptions& options, std::uint64_t seed);

/// Sets every batch-norm entry of ps to seeded values near the identity.
template <class T>
void randomize_batch_norm(ParameterSet<T>& ps, Rng rng);

}  // namespace rga
