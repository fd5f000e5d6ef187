#pragma once

#include "dban/tensor.hpp"

#include <cstdint>
#include <string>

namespace dban {

/// Reads an 8-bit PNG as a (1, channels, h, w) tensor with values in [0, 1].
/// Grayscale sources replicate to `channels`; RGB sources read with
/// channels == 1 collapse to BT.601 luma. Alpha is dropped.
Tensor load_image(const std::string& path, int channels = 3);

/// Writes a (1, 1|3, h, w) tensor as an 8-bit PNG. Values clamp to [0, 1]
/// and quantize round-half-up.
void save_image(const Tensor& img, const std::string& path);

std::uint8_t quantize_8bit(double v) noexcept;

/// BT.601 digital YCbCr from RGB in [0, 1]; output is also on [0, 1].
template <typename T>
BasicTensor<T> rgb_to_ycbcr(const BasicTensor<T>& rgb);

/// Luma plane (n, 1, h, w) on [0, 1]. Single-channel input is treated as gray RGB.
template <typename T>
BasicTensor<T> luma_plane(const BasicTensor<T>& img);

} // namespace dban
