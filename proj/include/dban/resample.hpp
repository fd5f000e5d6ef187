#pragma once

// Separable image resampling with MATLAB imresize semantics: output sample i
// is centred at (i + 0.5) / factor - 0.5 in input coordinates, and when
// shrinking the kernel is stretched by 1/factor (antialiasing). Weights are
// renormalized per output sample and out-of-range taps clamp to the edge.

#include "dban/tensor.hpp"

namespace dban {

enum class ResampleKernel { Bicubic, Bilinear };

/// Keys cubic with a = -0.5.
double cubic_kernel(double x);
double triangle_kernel(double x);

/// Output extent is round(factor * extent) on both spatial axes.
template <typename T>
BasicTensor<T> resize(const BasicTensor<T>& img, double factor, ResampleKernel kernel);

template <typename T>
BasicTensor<T> bicubic_resize(const BasicTensor<T>& img, double factor) {
    return resize(img, factor, ResampleKernel::Bicubic);
}

template <typename T>
BasicTensor<T> bilinear_resize(const BasicTensor<T>& img, double factor) {
    return resize(img, factor, ResampleKernel::Bilinear);
}

} // namespace dban
