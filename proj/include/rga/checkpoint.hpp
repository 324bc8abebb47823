#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "rga/parameters.hpp"

namespace rga {

/// File layout (little-endian): "RGAW", u32 version, u32 tensor count, then
/// per tensor u16 name length, name bytes, u8 rank, u32 dims, f32 values.
/// Tensors are written in name order, running statistics included.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The file's tensors do not match the parameters the config builds.
class CheckpointMismatch : public CheckpointError {
 public:
  CheckpointMismatch(std::string tensor, const std::string& detail);
  const std::string& tensor() const { return tensor_; }

 private:
  std::string tensor_;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterSet<float>& params);

/// Reads every tensor of a checkpoint into a fresh set (all entries
/// trainable except names ending in running_mean / running_var).
ParameterSet<float> read_checkpoint(const std::filesystem::path& path);

/// Overwrites the values of `params` from the file. The file must hold
/// exactly the same names and shapes; the first difference in name order
/// is reported.
void load_checkpoint(const std::filesystem::path& path, ParameterSet<float>& params);

}  // namespace rga
