#pragma once

// Binary checkpoint, all integers and floats little-endian:
//
//   "DBANCKPT"                        8-byte magic
//   u32 version                       kCheckpointVersion
//   i32 x 8                           ModelConfig: scale, in_channels, num_units,
//                                     layers_per_unit, growth, feat_channels,
//                                     bottleneck_channels, attention_ratio
//   i64 step                          optimizer step counter
//   f64 learning_rate
//   u32 flags                         bit 0: Adam moments present
//   u32 entry_count
//   entry_count x { u32 name_len, name bytes, u32 rank, u32 dims[rank],
//                   u64 byte_offset, u64 element_count }
//   raw f32 data; byte_offset is relative to the start of this section
//
// Parameter entries use the names produced by visit_params; Adam moments are
// stored as "adam.m/<name>" and "adam.v/<name>".

#include "dban/network.hpp"
#include "dban/training.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace dban {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelConfig config;
    ModelParams<float> params;
    std::optional<AdamState<float>> adam;
    std::int64_t step = 0;
    double learning_rate = 0.0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

} // namespace dban
