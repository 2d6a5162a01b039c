#pragma once

#include <filesystem>

#include "ecg/neural.hpp"

namespace ecg {

/// Flat binary container: 8-byte magic "ECGSEGCK", u32 version, then one
/// record per tensor: u32 name length, name bytes, u32 rank, u64 dims,
/// little-endian 64-bit floats in row-major dim order. Learnable tensors
/// are followed by the batch-norm running stats. The loader rebuilds the
/// architecture from the tensor shapes and validates the learnable total.
void save_checkpoint(const ModelParams<double>& params,
                     const std::filesystem::path& path);

ModelParams<double> load_checkpoint(const std::filesystem::path& path);

}  // namespace ecg
