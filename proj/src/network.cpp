#include "dban/network.hpp"

#include "dban/error.hpp"

#include <random>

namespace dban {

ModelConfig ModelConfig::toy(int scale) {
    ModelConfig cfg;
    cfg.scale = scale;
    cfg.num_units = 2;
    cfg.layers_per_unit = 2;
    cfg.growth = 8;
    cfg.feat_channels = 16;
    cfg.bottleneck_channels = 32;
    return cfg;
}

void validate(const ModelConfig& cfg) {
    if (cfg.scale < 2 || cfg.scale > 4)
        throw ConfigError("scale must be 2, 3 or 4, got " + std::to_string(cfg.scale));
    if (cfg.in_channels < 1 || cfg.num_units < 1 || cfg.layers_per_unit < 1 || cfg.growth < 1 ||
        cfg.feat_channels < 1 || cfg.bottleneck_channels < 1 || cfg.attention_ratio < 1)
        throw ConfigError("model config counts must all be positive");
}

std::vector<DeconvSpec> deconv_plan(int scale) {
    switch (scale) {
    case 2:
        return {{2, 4, 1}};
    case 3:
        return {{3, 5, 1}};
    case 4:
        return {{2, 4, 1}, {2, 4, 1}};
    default:
        throw ConfigError("no deconvolution plan for scale " + std::to_string(scale));
    }
}

template <typename T>
ModelParams<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    std::mt19937_64 rng(seed);
    ModelParams<T> m;
    m.feature_conv = make_conv<T>(cfg.in_channels, cfg.feat_channels, 3, 1, 1, true, rng);
    for (int j = 0; j < cfg.num_units; ++j) {
        BasicUnitParams<T> unit;
        const int unit_in = cfg.unit_in_channels(j);
        for (int i = 0; i < cfg.layers_per_unit; ++i)
            unit.convs.push_back(make_conv<T>(unit_in + cfg.growth * i, cfg.growth, 3, 1, 1, true, rng));
        unit.attention = make_attention<T>(cfg.unit_out_channels(), cfg.attention_ratio, rng);
        m.units.push_back(std::move(unit));
    }
    m.bottleneck = make_conv<T>(cfg.bottleneck_in_channels(), cfg.bottleneck_channels, 1, 1, 0, true, rng);
    for (const DeconvSpec& d : deconv_plan(cfg.scale)) {
        DeconvStage<T> stage;
        stage.deconv = make_deconv<T>(cfg.bottleneck_channels, cfg.bottleneck_channels, d.kernel,
                                      d.stride, d.pad, rng);
        stage.prelu.slope.assign(static_cast<std::size_t>(cfg.bottleneck_channels), T(0.25));
        m.deconvs.push_back(std::move(stage));
    }
    m.recon_conv = make_conv<T>(cfg.bottleneck_channels, cfg.in_channels, 3, 1, 1, true, rng);
    check_channel_plan(m, cfg);
    return m;
}

namespace {

template <typename T>
void expect_conv(const Conv2dParams<T>& c, int in, int out, int k, int pad, bool bias, const std::string& name) {
    const bool ok = c.in_channels() == in && c.out_channels() == out && c.kernel() == k &&
                    c.weight.w() == k && c.stride == 1 && c.pad == pad &&
                    (bias ? static_cast<int>(c.bias.size()) == out : c.bias.empty());
    if (!ok)
        throw ConfigError(name + ": expected " + std::to_string(in) + "->" + std::to_string(out) + " k=" +
                          std::to_string(k) + ", found " + c.weight.shape().str());
}

} // namespace

template <typename T>
void check_channel_plan(const ModelParams<T>& m, const ModelConfig& cfg) {
    validate(cfg);
    expect_conv(m.feature_conv, cfg.in_channels, cfg.feat_channels, 3, 1, true, "feature");
    if (static_cast<int>(m.units.size()) != cfg.num_units)
        throw ConfigError("model has " + std::to_string(m.units.size()) + " units, config says " +
                          std::to_string(cfg.num_units));
    const int reduced = attention_reduced_channels(cfg.unit_out_channels(), cfg.attention_ratio);
    for (int j = 0; j < cfg.num_units; ++j) {
        const auto& unit = m.units[j];
        const std::string u = "unit" + std::to_string(j);
        if (static_cast<int>(unit.convs.size()) != cfg.layers_per_unit)
            throw ConfigError(u + ": wrong layer count");
        for (int i = 0; i < cfg.layers_per_unit; ++i)
            expect_conv(unit.convs[i], cfg.unit_in_channels(j) + cfg.growth * i, cfg.growth, 3, 1, true,
                        u + ".conv" + std::to_string(i));
        expect_conv(unit.attention.reduce, cfg.unit_out_channels(), reduced, 1, 0, false, u + ".attention.reduce");
        expect_conv(unit.attention.expand, reduced, cfg.unit_out_channels(), 1, 0, true, u + ".attention.expand");
    }
    expect_conv(m.bottleneck, cfg.bottleneck_in_channels(), cfg.bottleneck_channels, 1, 0, true, "bottleneck");
    const auto plan = deconv_plan(cfg.scale);
    if (m.deconvs.size() != plan.size())
        throw ConfigError("deconvolution stage count does not match scale " + std::to_string(cfg.scale));
    for (std::size_t s = 0; s < plan.size(); ++s) {
        const auto& d = m.deconvs[s].deconv;
        if (d.in_channels() != cfg.bottleneck_channels || d.out_channels() != cfg.bottleneck_channels ||
            d.kernel() != plan[s].kernel || d.weight.w() != plan[s].kernel || d.stride != plan[s].stride ||
            d.pad != plan[s].pad || static_cast<int>(d.bias.size()) != cfg.bottleneck_channels ||
            static_cast<int>(m.deconvs[s].prelu.slope.size()) != cfg.bottleneck_channels)
            throw ConfigError("deconv" + std::to_string(s) + ": does not match the channel plan");
    }
    expect_conv(m.recon_conv, cfg.bottleneck_channels, cfg.in_channels, 3, 1, true, "recon");
}

template <typename T>
ModelParams<T> zeros_like(const ModelParams<T>& m) {
    ModelParams<T> z = m;
    visit_params(z, [](const std::string&, std::span<T> v, const std::vector<int>&) {
        std::fill(v.begin(), v.end(), T(0));
    });
    return z;
}

template <typename T>
std::size_t param_count(const ModelParams<T>& m) {
    std::size_t total = 0;
    visit_params(m, [&](const std::string&, std::span<const T> v, const std::vector<int>&) {
        total += v.size();
    });
    return total;
}

std::int64_t count_params(const ModelConfig& cfg) {
    validate(cfg);
    auto conv = [](std::int64_t in, std::int64_t out, std::int64_t k, bool bias) {
        return in * out * k * k + (bias ? out : 0);
    };
    std::int64_t total = conv(cfg.in_channels, cfg.feat_channels, 3, true);
    const int reduced = attention_reduced_channels(cfg.unit_out_channels(), cfg.attention_ratio);
    for (int j = 0; j < cfg.num_units; ++j) {
        for (int i = 0; i < cfg.layers_per_unit; ++i)
            total += conv(cfg.unit_in_channels(j) + cfg.growth * i, cfg.growth, 3, true);
        total += conv(cfg.unit_out_channels(), reduced, 1, false);
        total += conv(reduced, cfg.unit_out_channels(), 1, true);
    }
    total += conv(cfg.bottleneck_in_channels(), cfg.bottleneck_channels, 1, true);
    for (const DeconvSpec& d : deconv_plan(cfg.scale))
        total += conv(cfg.bottleneck_channels, cfg.bottleneck_channels, d.kernel, true) + cfg.bottleneck_channels;
    total += conv(cfg.bottleneck_channels, cfg.in_channels, 3, true);
    return total;
}

template <typename T>
UnitCache<T> unit_forward_cached(const BasicTensor<T>& x, const BasicUnitParams<T>& u) {
    if (u.convs.empty())
        throw ConfigError("unit has no layers");
    if (x.c() != u.convs.front().in_channels())
        throw ShapeError("unit: input has " + std::to_string(x.c()) + " channels, unit expects " +
                         std::to_string(u.convs.front().in_channels()));
    UnitCache<T> cache;
    std::vector<BasicTensor<T>> outputs;
    cache.layer_inputs.push_back(x);
    for (std::size_t i = 0; i < u.convs.size(); ++i) {
        if (i > 0) {
            std::vector<const BasicTensor<T>*> parts{&x};
            for (const auto& h : outputs)
                parts.push_back(&h);
            cache.layer_inputs.push_back(concat_channels<T>(std::span<const BasicTensor<T>* const>(parts)));
        }
        cache.pre_activations.push_back(conv2d_forward(cache.layer_inputs[i], u.convs[i]));
        outputs.push_back(activation_forward(cache.pre_activations[i], Activation::Relu));
    }
    cache.concat = concat_channels(outputs);
    cache.output = attention_forward(cache.concat, u.attention).y;
    return cache;
}

template <typename T>
BasicTensor<T> unit_forward(const BasicTensor<T>& x, const BasicUnitParams<T>& u) {
    return unit_forward_cached(x, u).output;
}

template <typename T>
ForwardCache<T> model_forward_cached(const BasicTensor<T>& lr_batch, const ModelParams<T>& m,
                                     const ModelConfig& cfg) {
    validate(cfg);
    if (lr_batch.c() != cfg.in_channels)
        throw ShapeError("model: input has " + std::to_string(lr_batch.c()) + " channels, model expects " +
                         std::to_string(cfg.in_channels));
    if (static_cast<int>(m.units.size()) != cfg.num_units ||
        m.deconvs.size() != deconv_plan(cfg.scale).size())
        throw ShapeError("model parameters do not match config");

    ForwardCache<T> cache;
    cache.input = lr_batch;
    cache.feature_pre = conv2d_forward(lr_batch, m.feature_conv);
    cache.blocks.push_back(activation_forward(cache.feature_pre, Activation::Relu));
    for (const auto& unit : m.units) {
        auto unit_in = concat_channels(cache.blocks);
        cache.units.push_back(unit_forward_cached(unit_in, unit));
        cache.blocks.push_back(cache.units.back().output);
    }
    cache.bottleneck_in = concat_channels(cache.blocks);
    cache.bottleneck_pre = conv2d_forward(cache.bottleneck_in, m.bottleneck);
    auto current = activation_forward(cache.bottleneck_pre, Activation::Relu);
    for (const auto& stage : m.deconvs) {
        cache.deconv_in.push_back(std::move(current));
        cache.deconv_pre.push_back(deconv2d_forward(cache.deconv_in.back(), stage.deconv));
        current = activation_forward(cache.deconv_pre.back(), Activation::PRelu,
                                     std::span<const T>(stage.prelu.slope));
    }
    cache.recon_in = std::move(current);
    cache.output = conv2d_forward(cache.recon_in, m.recon_conv);
    return cache;
}

template <typename T>
BasicTensor<T> model_forward(const BasicTensor<T>& lr_batch, const ModelParams<T>& m,
                             const ModelConfig& cfg) {
    // Same arithmetic as the cached path, without holding every activation.
    validate(cfg);
    if (lr_batch.c() != cfg.in_channels)
        throw ShapeError("model: input has " + std::to_string(lr_batch.c()) + " channels, model expects " +
                         std::to_string(cfg.in_channels));
    if (static_cast<int>(m.units.size()) != cfg.num_units ||
        m.deconvs.size() != deconv_plan(cfg.scale).size())
        throw ShapeError("model parameters do not match config");

    std::vector<BasicTensor<T>> blocks;
    blocks.push_back(activation_forward(conv2d_forward(lr_batch, m.feature_conv), Activation::Relu));
    for (const auto& unit : m.units)
        blocks.push_back(unit_forward(concat_channels(blocks), unit));
    auto current = activation_forward(conv2d_forward(concat_channels(blocks), m.bottleneck), Activation::Relu);
    blocks.clear();
    for (const auto& stage : m.deconvs)
        current = activation_forward(deconv2d_forward(current, stage.deconv), Activation::PRelu,
                                     std::span<const T>(stage.prelu.slope));
    return conv2d_forward(current, m.recon_conv);
}

namespace {

template <typename T>
void accumulate(Conv2dParams<T>& dst, const LayerGrads<T>& g) {
    add_inplace(dst.weight, g.weight);
    for (std::size_t i = 0; i < dst.bias.size(); ++i)
        dst.bias[i] += g.bias[i];
}

// Returns the gradient w.r.t. the unit input; parameter gradients accumulate into `grads`.
template <typename T>
BasicTensor<T> unit_backward(const UnitCache<T>& cache, const BasicUnitParams<T>& u, BasicUnitParams<T>& grads,
                             const BasicTensor<T>& grad_out) {
    const auto att = attention_backward(cache.concat, u.attention, grad_out);
    add_inplace(grads.attention.reduce.weight, att.reduce_weight);
    add_inplace(grads.attention.expand.weight, att.expand_weight);
    for (std::size_t i = 0; i < att.expand_bias.size(); ++i)
        grads.attention.expand.bias[i] += att.expand_bias[i];

    const int layers = static_cast<int>(u.convs.size());
    const int growth = u.convs.front().out_channels();
    const BasicTensor<T>& x = cache.layer_inputs.front();
    std::vector<BasicTensor<T>> grad_h;
    for (int i = 0; i < layers; ++i)
        grad_h.push_back(slice_channels(att.x, i * growth, (i + 1) * growth));

    BasicTensor<T> grad_x(x.shape());
    for (int i = layers - 1; i >= 0; --i) {
        const auto grad_pre = activation_backward(cache.pre_activations[i], Activation::Relu, grad_h[i]).x;
        const auto conv = conv2d_backward(cache.layer_inputs[i], u.convs[i], grad_pre);
        accumulate(grads.convs[i], conv);
        add_inplace(grad_x, slice_channels(conv.x, 0, x.c()));
        for (int j = 0; j < i; ++j)
            add_inplace(grad_h[j], slice_channels(conv.x, x.c() + j * growth, x.c() + (j + 1) * growth));
    }
    return grad_x;
}

} // namespace

template <typename T>
ModelGradients<T> model_backward(const ForwardCache<T>& cache, const ModelParams<T>& m,
                                 const ModelConfig& cfg, const BasicTensor<T>& grad_out) {
    check_channel_plan(m, cfg);
    if (grad_out.shape() != cache.output.shape())
        throw ShapeError("model_backward: grad_out shape " + grad_out.shape().str() +
                         " does not match model output " + cache.output.shape().str());
    ModelGradients<T> out{zeros_like(m), BasicTensor<T>(cache.input.shape())};
    ModelParams<T>& g = out.params;

    auto recon = conv2d_backward(cache.recon_in, m.recon_conv, grad_out);
    accumulate(g.recon_conv, recon);
    BasicTensor<T> grad = std::move(recon.x);
    for (int s = static_cast<int>(m.deconvs.size()) - 1; s >= 0; --s) {
        const auto& stage = m.deconvs[s];
        auto act = activation_backward(cache.deconv_pre[s], Activation::PRelu, grad,
                                       std::span<const T>(stage.prelu.slope));
        for (std::size_t c = 0; c < act.slope.size(); ++c)
            g.deconvs[s].prelu.slope[c] += act.slope[c];
        auto dec = deconv2d_backward(cache.deconv_in[s], stage.deconv, act.x);
        add_inplace(g.deconvs[s].deconv.weight, dec.weight);
        for (std::size_t c = 0; c < dec.bias.size(); ++c)
            g.deconvs[s].deconv.bias[c] += dec.bias[c];
        grad = std::move(dec.x);
    }
    grad = activation_backward(cache.bottleneck_pre, Activation::Relu, grad).x;
    auto bott = conv2d_backward(cache.bottleneck_in, m.bottleneck, grad);
    accumulate(g.bottleneck, bott);

    // Route the concat gradient back to each block; dense fan-out sums.
    std::vector<BasicTensor<T>> grad_blocks;
    int offset = 0;
    for (const auto& block : cache.blocks) {
        grad_blocks.push_back(slice_channels(bott.x, offset, offset + block.c()));
        offset += block.c();
    }
    for (int j = static_cast<int>(m.units.size()) - 1; j >= 0; --j) {
        const auto grad_in = unit_backward(cache.units[j], m.units[j], g.units[j], grad_blocks[j + 1]);
        int off = 0;
        for (int k = 0; k <= j; ++k) {
            add_inplace(grad_blocks[k], slice_channels(grad_in, off, off + cache.blocks[k].c()));
            off += cache.blocks[k].c();
        }
    }
    grad = activation_backward(cache.feature_pre, Activation::Relu, grad_blocks.front()).x;
    auto feat = conv2d_backward(cache.input, m.feature_conv, grad);
    accumulate(g.feature_conv, feat);
    out.input = std::move(feat.x);
    return out;
}

template <typename T>
ModelGradients<T> model_backward(const BasicTensor<T>& lr_batch, const ModelParams<T>& m,
                                 const ModelConfig& cfg, const BasicTensor<T>& grad_out) {
    return model_backward(model_forward_cached(lr_batch, m, cfg), m, cfg, grad_out);
}

namespace {

template <typename To, typename From>
std::vector<To> cast_vec(const std::vector<From>& v) {
    return std::vector<To>(v.begin(), v.end());
}

template <typename To, typename From>
Conv2dParams<To> cast_conv(const Conv2dParams<From>& c) {
    return {c.weight.template cast<To>(), cast_vec<To>(c.bias), c.stride, c.pad};
}

} // namespace

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& m) {
    ModelParams<To> out;
    out.feature_conv = cast_conv<To>(m.feature_conv);
    for (const auto& u : m.units) {
        BasicUnitParams<To> unit;
        for (const auto& c : u.convs)
            unit.convs.push_back(cast_conv<To>(c));
        unit.attention.reduce = cast_conv<To>(u.attention.reduce);
        unit.attention.expand = cast_conv<To>(u.attention.expand);
        unit.attention.ratio = u.attention.ratio;
        out.units.push_back(std::move(unit));
    }
    out.bottleneck = cast_conv<To>(m.bottleneck);
    for (const auto& s : m.deconvs) {
        DeconvStage<To> stage;
        stage.deconv = {s.deconv.weight.template cast<To>(), cast_vec<To>(s.deconv.bias), s.deconv.stride,
                        s.deconv.pad};
        stage.prelu.slope = cast_vec<To>(s.prelu.slope);
        out.deconvs.push_back(std::move(stage));
    }
    out.recon_conv = cast_conv<To>(m.recon_conv);
    return out;
}

#define DBAN_INSTANTIATE(T)                                                                        \
    template ModelParams<T> build_model<T>(const ModelConfig&, std::uint64_t);                     \
    template void check_channel_plan<T>(const ModelParams<T>&, const ModelConfig&);                \
    template ModelParams<T> zeros_like<T>(const ModelParams<T>&);                                  \
    template std::size_t param_count<T>(const ModelParams<T>&);                                    \
    template BasicTensor<T> unit_forward<T>(const BasicTensor<T>&, const BasicUnitParams<T>&);     \
    template UnitCache<T> unit_forward_cached<T>(const BasicTensor<T>&, const BasicUnitParams<T>&); \
    template ForwardCache<T> model_forward_cached<T>(const BasicTensor<T>&, const ModelParams<T>&, \
                                                     const ModelConfig&);                          \
    template BasicTensor<T> model_forward<T>(const BasicTensor<T>&, const ModelParams<T>&,         \
                                             const ModelConfig&);                                  \
    template ModelGradients<T> model_backward<T>(const ForwardCache<T>&, const ModelParams<T>&,    \
                                                 const ModelConfig&, const BasicTensor<T>&);       \
    template ModelGradients<T> model_backward<T>(const BasicTensor<T>&, const ModelParams<T>&,     \
                                                 const ModelConfig&, const BasicTensor<T>&);

DBAN_INSTANTIATE(float)
DBAN_INSTANTIATE(double)

template ModelParams<double> cast_params<double, float>(const ModelParams<float>&);
template ModelParams<float> cast_params<float, double>(const ModelParams<double>&);
template ModelParams<float> cast_params<float, float>(const ModelParams<float>&);
template ModelParams<double> cast_params<double, double>(const ModelParams<double>&);

} // namespace dban
