#pragma once

// Differentiable primitive layers: 2-D convolution, transposed convolution
// and pointwise activations. Every forward op has an analytic backward op
// that returns exact partial derivatives of sum(grad_out * forward(...)).

#include "dban/tensor.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace dban {

// weight: out_channels x in_channels x k x k. An empty bias means the layer has none.
template <typename T>
struct Conv2dParams {
    BasicTensor<T> weight;
    std::vector<T> bias;
    int stride = 1;
    int pad = 0;

    int out_channels() const noexcept { return weight.n(); }
    int in_channels() const noexcept { return weight.c(); }
    int kernel() const noexcept { return weight.h(); }
    bool has_bias() const noexcept { return !bias.empty(); }
};

// weight: in_channels x out_channels x k x k. Requires k - 2*pad == stride.
template <typename T>
struct Deconv2dParams {
    BasicTensor<T> weight;
    std::vector<T> bias;
    int stride = 1;
    int pad = 0;

    int in_channels() const noexcept { return weight.n(); }
    int out_channels() const noexcept { return weight.c(); }
    int kernel() const noexcept { return weight.h(); }
};

template <typename T>
struct PReluParams {
    std::vector<T> slope;
};

template <typename T>
struct LayerGrads {
    BasicTensor<T> x;
    BasicTensor<T> weight;
    std::vector<T> bias;
};

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const Conv2dParams<T>& p);

template <typename T>
LayerGrads<T> conv2d_backward(const BasicTensor<T>& x, const Conv2dParams<T>& p,
                              const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> deconv2d_forward(const BasicTensor<T>& x, const Deconv2dParams<T>& p);

template <typename T>
LayerGrads<T> deconv2d_backward(const BasicTensor<T>& x, const Deconv2dParams<T>& p,
                                const BasicTensor<T>& grad_out);

enum class Activation { Relu, PRelu, Sigmoid };

// `slope` is only read for PRelu and must hold one value per channel.
template <typename T>
BasicTensor<T> activation_forward(const BasicTensor<T>& x, Activation kind,
                                  std::span<const T> slope = {});

template <typename T>
struct ActivationGrads {
    BasicTensor<T> x;
    std::vector<T> slope; // empty unless kind == PRelu
};

// Derivative of ReLU at exactly 0 is 0.
template <typename T>
ActivationGrads<T> activation_backward(const BasicTensor<T>& x, Activation kind,
                                       const BasicTensor<T>& grad_out, std::span<const T> slope = {});

/// Zero-mean normal draws with std sqrt(2 / fan_in), fan_in = shape.c * shape.h * shape.w.
template <typename T>
BasicTensor<T> init_params(Shape shape, std::mt19937_64& rng);

template <typename T>
BasicTensor<T> init_params(Shape shape, std::uint64_t seed);

template <typename T>
Conv2dParams<T> make_conv(int in_channels, int out_channels, int kernel, int stride, int pad,
                          bool with_bias, std::mt19937_64& rng);

// Deconvolution fan_in is taken as in_channels * k * k.
template <typename T>
Deconv2dParams<T> make_deconv(int in_channels, int out_channels, int kernel, int stride, int pad,
                              std::mt19937_64& rng);

} // namespace dban
