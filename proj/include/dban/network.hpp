#pragma once

// Dense blended attention network.
//
//   lr -> conv3x3 + relu                        (feat_channels)
//      -> unit_1 .. unit_U, unit j consumes concat(features, out_1 .. out_{j-1})
//      -> concat(features, out_1 .. out_U)     (feat + U * growth * layers)
//      -> conv1x1 bottleneck + relu
//      -> [deconv + prelu] x stages             (x2: s2k4p1, x3: s3k5p1, x4: two s2k4p1)
//      -> conv3x3 reconstruction                (in_channels, no activation)
//
// Inside a unit, layer i sees concat(unit input, h_1 .. h_{i-1}) and emits
// `growth` channels; the unit output is attention(concat(h_1 .. h_L)).

#include "dban/attention.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dban {

struct ModelConfig {
    int scale = 2;
    int in_channels = 3;
    int num_units = 8;
    int layers_per_unit = 8;
    int growth = 16;
    int feat_channels = 128;
    int bottleneck_channels = 256;
    int attention_ratio = 16;

    bool operator==(const ModelConfig&) const = default;

    int unit_out_channels() const noexcept { return growth * layers_per_unit; }
    int unit_in_channels(int unit) const noexcept { return feat_channels + unit * unit_out_channels(); }
    int bottleneck_in_channels() const noexcept { return unit_in_channels(num_units); }

    // Small preset used by tests and the --toy CLI flag.
    static ModelConfig toy(int scale = 2);
};

void validate(const ModelConfig& cfg);

struct DeconvSpec {
    int stride, kernel, pad;
};
std::vector<DeconvSpec> deconv_plan(int scale);

template <typename T>
struct BasicUnitParams {
    std::vector<Conv2dParams<T>> convs;
    AttentionParams<T> attention;
};

template <typename T>
struct DeconvStage {
    Deconv2dParams<T> deconv;
    PReluParams<T> prelu;
};

template <typename T>
struct ModelParams {
    Conv2dParams<T> feature_conv;
    std::vector<BasicUnitParams<T>> units;
    Conv2dParams<T> bottleneck;
    std::vector<DeconvStage<T>> deconvs;
    Conv2dParams<T> recon_conv;
};

/// Calls `fn(name, values, dims)` for every learnable array in a fixed order.
/// Works on const and non-const ModelParams; convolutions without bias are skipped.
template <typename M, typename Fn>
void visit_params(M& m, Fn&& fn) {
    auto conv = [&](const std::string& prefix, auto& c) {
        const auto& s = c.weight.shape();
        fn(prefix + ".weight", c.weight.values(), std::vector<int>{s.n, s.c, s.h, s.w});
        if (!c.bias.empty())
            fn(prefix + ".bias", std::span(c.bias), std::vector<int>{static_cast<int>(c.bias.size())});
    };
    conv("feature", m.feature_conv);
    for (std::size_t j = 0; j < m.units.size(); ++j) {
        auto& unit = m.units[j];
        const std::string u = "unit" + std::to_string(j);
        for (std::size_t i = 0; i < unit.convs.size(); ++i)
            conv(u + ".conv" + std::to_string(i), unit.convs[i]);
        conv(u + ".attention.reduce", unit.attention.reduce);
        conv(u + ".attention.expand", unit.attention.expand);
    }
    conv("bottleneck", m.bottleneck);
    for (std::size_t s = 0; s < m.deconvs.size(); ++s) {
        auto& stage = m.deconvs[s];
        const std::string d = "deconv" + std::to_string(s);
        conv(d, stage.deconv);
        fn(d + ".prelu", std::span(stage.prelu.slope),
           std::vector<int>{static_cast<int>(stage.prelu.slope.size())});
    }
    conv("recon", m.recon_conv);
}

template <typename T>
ModelParams<T> build_model(const ModelConfig& cfg, std::uint64_t seed);

/// Throws ConfigError unless every adjacent pair of layers agrees with `cfg`'s channel plan.
template <typename T>
void check_channel_plan(const ModelParams<T>& m, const ModelConfig& cfg);

template <typename T>
ModelParams<T> zeros_like(const ModelParams<T>& m);

template <typename T>
std::size_t param_count(const ModelParams<T>& m);

/// Learnable scalar count for `cfg` (weights + biases + PReLU slopes).
std::int64_t count_params(const ModelConfig& cfg);

template <typename T>
BasicTensor<T> unit_forward(const BasicTensor<T>& x, const BasicUnitParams<T>& u);

template <typename T>
struct UnitCache {
    std::vector<BasicTensor<T>> layer_inputs; // layer_inputs[0] is the unit input
    std::vector<BasicTensor<T>> pre_activations;
    BasicTensor<T> concat;                    // attention input
    BasicTensor<T> output;
};

template <typename T>
struct ForwardCache {
    BasicTensor<T> input;
    BasicTensor<T> feature_pre;
    std::vector<BasicTensor<T>> blocks; // features, then each unit output
    std::vector<UnitCache<T>> units;
    BasicTensor<T> bottleneck_in;
    BasicTensor<T> bottleneck_pre;
    std::vector<BasicTensor<T>> deconv_in;
    std::vector<BasicTensor<T>> deconv_pre;
    BasicTensor<T> recon_in;
    BasicTensor<T> output;
};

template <typename T>
UnitCache<T> unit_forward_cached(const BasicTensor<T>& x, const BasicUnitParams<T>& u);

template <typename T>
ForwardCache<T> model_forward_cached(const BasicTensor<T>& lr_batch, const ModelParams<T>& m,
                                     const ModelConfig& cfg);

/// Output is (n, in_channels, scale*h, scale*w) and is not clamped.
template <typename T>
BasicTensor<T> model_forward(const BasicTensor<T>& lr_batch, const ModelParams<T>& m,
                             const ModelConfig& cfg);

template <typename T>
struct ModelGradients {
    ModelParams<T> params;
    BasicTensor<T> input;
};

template <typename T>
ModelGradients<T> model_backward(const ForwardCache<T>& cache, const ModelParams<T>& m,
                                 const ModelConfig& cfg, const BasicTensor<T>& grad_out);

template <typename T>
ModelGradients<T> model_backward(const BasicTensor<T>& lr_batch, const ModelParams<T>& m,
                                 const ModelConfig& cfg, const BasicTensor<T>& grad_out);

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& m);

} // namespace dban
