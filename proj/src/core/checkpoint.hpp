#pragma once

#include <string>

#include "core/models.hpp"

namespace laif {

/// Binary checkpoint layout (all integers little-endian):
///   magic "LAIF" | u16 version (=1) | payload | u32 CRC32(payload)
/// payload:
///   u16 arch_len, arch bytes
///   u16 class_count, then per class u16 len + bytes (0 for GAN nets)
///   u32 tensor_count, then per tensor:
///     u16 name_len + name, u8 rank, u32 dims[rank], f32 data (little-endian)
/// Tensors appear in the model's canonical traversal order (layer index, then
/// params before buffers) and hold every parameter and buffer bitwise.
void save_checkpoint(Model& model, const std::string& path);

/// Rebuilds the architecture named by the stored tag (geometry inferred from
/// tensor shapes) and restores every tensor bitwise. If require_prefix is
/// non-empty the stored tag must start with it.
Model load_checkpoint(const std::string& path, const std::string& require_prefix = "");

}  // namespace laif
