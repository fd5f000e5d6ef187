#include "dban/attention.hpp"

#include "dban/error.hpp"

#include <algorithm>

namespace dban {

int attention_reduced_channels(int channels, int ratio) {
    if (channels < 1 || ratio < 1)
        throw ConfigError("attention: channels and ratio must be positive");
    return std::max(channels / ratio, 1);
}

template <typename T>
AttentionParams<T> make_attention(int channels, int ratio, std::mt19937_64& rng) {
    const int reduced = attention_reduced_channels(channels, ratio);
    AttentionParams<T> p;
    p.reduce = make_conv<T>(channels, reduced, 1, 1, 0, /*with_bias=*/false, rng);
    p.expand = make_conv<T>(reduced, channels, 1, 1, 0, /*with_bias=*/true, rng);
    p.ratio = ratio;
    return p;
}

namespace {

template <typename T>
void check_params(const BasicTensor<T>& x, const AttentionParams<T>& p) {
    if (x.c() != p.reduce.in_channels() || p.expand.out_channels() != p.reduce.in_channels() ||
        p.expand.in_channels() != p.reduce.out_channels())
        throw ShapeError("attention: input has " + std::to_string(x.c()) + " channels, block built for " +
                         std::to_string(p.reduce.in_channels()));
}

} // namespace

template <typename T>
AttentionOutput<T> attention_forward(const BasicTensor<T>& x, const AttentionParams<T>& p) {
    check_params(x, p);
    const auto hidden = activation_forward(conv2d_forward(x, p.reduce), Activation::Relu);
    auto tau = activation_forward(conv2d_forward(hidden, p.expand), Activation::Sigmoid);
    auto y = hadamard(tau, x);
    return {std::move(y), std::move(tau)};
}

template <typename T>
AttentionGrads<T> attention_backward(const BasicTensor<T>& x, const AttentionParams<T>& p,
                                     const BasicTensor<T>& grad_y) {
    check_params(x, p);
    if (grad_y.shape() != x.shape())
        throw ShapeError("attention_backward: grad_y shape " + grad_y.shape().str() +
                         " does not match input " + x.shape().str());

    const auto reduced = conv2d_forward(x, p.reduce);
    const auto hidden = activation_forward(reduced, Activation::Relu);
    const auto expanded = conv2d_forward(hidden, p.expand);
    const auto tau = activation_forward(expanded, Activation::Sigmoid);

    // y = tau * x: the identity path sees tau, the descriptor path sees x.
    auto grad_x = hadamard(grad_y, tau);
    const auto grad_tau = hadamard(grad_y, x);
    const auto grad_expanded = activation_backward(expanded, Activation::Sigmoid, grad_tau).x;
    auto expand_grads = conv2d_backward(hidden, p.expand, grad_expanded);
    const auto grad_reduced = activation_backward(reduced, Activation::Relu, expand_grads.x).x;
    auto reduce_grads = conv2d_backward(x, p.reduce, grad_reduced);
    add_inplace(grad_x, reduce_grads.x);

    return {std::move(grad_x), std::move(reduce_grads.weight), std::move(expand_grads.weight),
            std::move(expand_grads.bias)};
}

#define DBAN_INSTANTIATE(T)                                                                        \
    template AttentionParams<T> make_attention<T>(int, int, std::mt19937_64&);                     \
    template AttentionOutput<T> attention_forward<T>(const BasicTensor<T>&,                        \
                                                     const AttentionParams<T>&);                   \
    template AttentionGrads<T> attention_backward<T>(const BasicTensor<T>&,                        \
                                                     const AttentionParams<T>&,                    \
                                                     const BasicTensor<T>&);

DBAN_INSTANTIATE(float)
DBAN_INSTANTIATE(double)

} // namespace dban
