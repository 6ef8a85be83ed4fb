#pragma once

#include <cstdint>
#include <filesystem>

#include "lopmap/field/field.hpp"

namespace lopmap::field {

/// Checkpoint layout, little-endian:
///   "LOPC" | u32 version
///   i32 levels, features, log2_table_size, base_resolution, finest_resolution
///   6 x f64 bounds (min xyz, max xyz)
///   u32 d, hidden, dv, ds, activation
///   f64 log_tau_init, tau_min, tau_max, weight_v, weight_s | u32 learn_tau, use_point_weights
///   f32 blocks: tables (level-major), trunk W (row-major), trunk b, head_v W, head_v b,
///               head_s W, head_s b, log_tau
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  LopField field;
  LossConfig loss;
};

void save_checkpoint(const std::filesystem::path& path, const LopField& field,
                     const LossConfig& loss);
/// Throws CorruptCheckpoint on bad magic, version or size.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a of the checkpoint file bytes, for provenance records.
std::uint64_t checkpoint_hash(const std::filesystem::path& path);

}  // namespace lopmap::field
