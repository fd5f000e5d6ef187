#pragma once

// Blended attention: tau = sigmoid(expand(relu(reduce(x)))), y = tau * x.
// Both convolutions are 1x1, so tau has the full shape of x and weights
// channels and spatial positions jointly.

#include "dban/layers.hpp"

#include <random>

namespace dban {

template <typename T>
struct AttentionParams {
    Conv2dParams<T> reduce; // C -> max(C/ratio, 1), no bias
    Conv2dParams<T> expand; // reduced -> C, bias
    int ratio = 16;

    int channels() const noexcept { return reduce.in_channels(); }
};

int attention_reduced_channels(int channels, int ratio);

template <typename T>
AttentionParams<T> make_attention(int channels, int ratio, std::mt19937_64& rng);

template <typename T>
struct AttentionOutput {
    BasicTensor<T> y;
    BasicTensor<T> tau;
};

template <typename T>
AttentionOutput<T> attention_forward(const BasicTensor<T>& x, const AttentionParams<T>& p);

template <typename T>
struct AttentionGrads {
    BasicTensor<T> x;
    BasicTensor<T> reduce_weight;
    BasicTensor<T> expand_weight;
    std::vector<T> expand_bias;
};

template <typename T>
AttentionGrads<T> attention_backward(const BasicTensor<T>& x, const AttentionParams<T>& p,
                                     const BasicTensor<T>& grad_y);

} // namespace dban
