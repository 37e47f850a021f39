#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "trl3d/core/nn.hpp"

namespace trl3d {

// Container layout (all integers little-endian):
//   "TRL3D\0" | u32 version | { u32 name_len | name | u32 rank | u64 extents[rank] | f64 payload[] }*
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_checkpoint(std::ostream& os, const ParamList& params);
ParamList read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const ParamList& params);
ParamList load_checkpoint(const std::filesystem::path& path);

/// Copies values from `src` into the existing tensors of `dst`. Every name
/// in `dst` must be present in `src` with an identical shape.
void assign_parameters(const ParamList& dst, const ParamList& src);

}  // namespace trl3d
