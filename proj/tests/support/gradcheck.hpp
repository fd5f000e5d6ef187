#pragma once

// Finite-difference gradient checks over randomized small instances.
// Each check returns the worst relative error seen across all instances.

#include "oracles.hpp"

#include "dban/training.hpp"

#include <array>
#include <string>

namespace gradcheck {

using dban::Shape;
using dban::TensorD;

struct Result {
    std::string name;
    int instances = 0;
    long checked = 0;
    double max_rel = 0.0;
    int unprobed = 0; // arrays with no element on a smooth interval

    void absorb(double err, long n) {
        max_rel = std::max(max_rel, err);
        checked += n;
    }
};

inline constexpr double kLayerStep = 1e-4;

inline int pick(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Values bounded away from 0 so a step of kLayerStep never crosses a kink.
inline TensorD off_kink(Shape s, std::mt19937_64& rng) {
    TensorD t = oracle::random_tensor(s, rng, 0.05, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (std::size_t i = 0; i < t.size(); ++i)
        if (sign(rng))
            t[i] = -t[i];
    return t;
}

inline Result conv(int instances, std::uint64_t seed) {
    Result r{"conv2d", instances};
    std::mt19937_64 rng(seed);
    for (int it = 0; it < instances; ++it) {
        const int k = std::array{1, 3, 5}[pick(rng, 0, 2)];
        const int stride = pick(rng, 1, 2);
        const int pad = pick(rng, 0, 1) ? (k - 1) / 2 : 0;
        const int oh = pick(rng, 2, 4), ow = pick(rng, 2, 4);
        const Shape xs{pick(rng, 1, 2), pick(rng, 1, 3), (oh - 1) * stride + k - 2 * pad,
                       (ow - 1) * stride + k - 2 * pad};
        const int cout = pick(rng, 1, 3);
        TensorD x = oracle::random_tensor(xs, rng);
        dban::Conv2dParams<double> p{oracle::random_tensor(Shape{cout, xs.c, k, k}, rng),
                                     oracle::random_vector(static_cast<std::size_t>(cout), rng), stride, pad};
        const TensorD g = oracle::random_tensor(dban::conv2d_forward(x, p).shape(), rng);
        const auto grads = dban::conv2d_backward(x, p, g);
        auto loss = [&] { return oracle::dot(g, dban::conv2d_forward(x, p)); };
        r.absorb(oracle::max_fd_error(x.values(), grads.x.values(), kLayerStep, loss), x.size());
        r.absorb(oracle::max_fd_error(p.weight.values(), grads.weight.values(), kLayerStep, loss), p.weight.size());
        r.absorb(oracle::max_fd_error(p.bias, grads.bias, kLayerStep, loss), cout);
    }
    return r;
}

inline Result deconv(int instances, std::uint64_t seed) {
    Result r{"deconv2d", instances};
    std::mt19937_64 rng(seed);
    const std::array<std::array<int, 3>, 6> family{{{1, 1, 0}, {1, 3, 1}, {2, 4, 1}, {2, 2, 0}, {3, 5, 1}, {3, 3, 0}}};
    for (int it = 0; it < instances; ++it) {
        const auto [stride, k, pad] = family[static_cast<std::size_t>(pick(rng, 0, 5))];
        const Shape xs{pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 2, 4), pick(rng, 2, 4)};
        const int cout = pick(rng, 1, 3);
        TensorD x = oracle::random_tensor(xs, rng);
        dban::Deconv2dParams<double> p{oracle::random_tensor(Shape{xs.c, cout, k, k}, rng),
                                       oracle::random_vector(static_cast<std::size_t>(cout), rng), stride, pad};
        const TensorD g = oracle::random_tensor(dban::deconv2d_forward(x, p).shape(), rng);
        const auto grads = dban::deconv2d_backward(x, p, g);
        auto loss = [&] { return oracle::dot(g, dban::deconv2d_forward(x, p)); };
        r.absorb(oracle::max_fd_error(x.values(), grads.x.values(), kLayerStep, loss), x.size());
        r.absorb(oracle::max_fd_error(p.weight.values(), grads.weight.values(), kLayerStep, loss), p.weight.size());
        r.absorb(oracle::max_fd_error(p.bias, grads.bias, kLayerStep, loss), cout);
    }
    return r;
}

inline Result activation(dban::Activation kind, int instances, std::uint64_t seed) {
    const char* names[] = {"relu", "prelu", "sigmoid"};
    Result r{names[static_cast<int>(kind)], instances};
    std::mt19937_64 rng(seed);
    for (int it = 0; it < instances; ++it) {
        const Shape s{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 4)};
        TensorD x = kind == dban::Activation::Sigmoid ? oracle::random_tensor(s, rng, -3.0, 3.0) : off_kink(s, rng);
        std::vector<double> slope = oracle::random_vector(static_cast<std::size_t>(s.c), rng, 0.0, 0.5);
        const std::span<const double> sl = kind == dban::Activation::PRelu ? std::span<const double>(slope)
                                                                           : std::span<const double>();
        const TensorD g = oracle::random_tensor(s, rng);
        const auto grads = dban::activation_backward(x, kind, g, sl);
        auto loss = [&] { return oracle::dot(g, dban::activation_forward(x, kind, sl)); };
        r.absorb(oracle::max_fd_error(x.values(), grads.x.values(), kLayerStep, loss), x.size());
        if (kind == dban::Activation::PRelu)
            r.absorb(oracle::max_fd_error(slope, grads.slope, kLayerStep, loss), s.c);
    }
    return r;
}

inline Result attention(int instances, std::uint64_t seed) {
    Result r{"attention", instances};
    std::mt19937_64 rng(seed);
    int built = 0;
    while (built < instances) {
        const int ratio = std::array{2, 4, 16}[pick(rng, 0, 2)];
        const int c = std::array{4, 8, 16, 32}[pick(rng, 0, 3)];
        const Shape s{pick(rng, 1, 2), c, pick(rng, 2, 3), pick(rng, 2, 3)};
        TensorD x = oracle::random_tensor(s, rng);
        auto p = dban::make_attention<double>(c, ratio, rng);
        p.expand.bias = oracle::random_vector(static_cast<std::size_t>(c), rng);
        // Reject draws with a reduce output near the ReLU kink.
        const TensorD reduced = dban::conv2d_forward(x, p.reduce);
        const bool near_kink = std::any_of(reduced.values().begin(), reduced.values().end(),
                                           [](double v) { return std::abs(v) < 1e-2; });
        if (near_kink)
            continue;
        ++built;
        const TensorD g = oracle::random_tensor(s, rng);
        const auto grads = dban::attention_backward(x, p, g);
        auto loss = [&] { return oracle::dot(g, dban::attention_forward(x, p).y); };
        r.absorb(oracle::max_fd_error(x.values(), grads.x.values(), kLayerStep, loss), x.size());
        r.absorb(oracle::max_fd_error(p.reduce.weight.values(), grads.reduce_weight.values(), kLayerStep, loss),
                 p.reduce.weight.size());
        r.absorb(oracle::max_fd_error(p.expand.weight.values(), grads.expand_weight.values(), kLayerStep, loss),
                 p.expand.weight.size());
        r.absorb(oracle::max_fd_error(p.expand.bias, grads.expand_bias, kLayerStep, loss), c);
    }
    return r;
}

inline Result l2(int instances, std::uint64_t seed) {
    Result r{"l2_loss", instances};
    std::mt19937_64 rng(seed);
    for (int it = 0; it < instances; ++it) {
        const Shape s{pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5)};
        TensorD sr = oracle::random_tensor(s, rng);
        const TensorD hr = oracle::random_tensor(s, rng);
        const auto res = dban::l2_loss(sr, hr);
        auto loss = [&] { return static_cast<long double>(dban::l2_loss(sr, hr).loss); };
        r.absorb(oracle::max_fd_error(sr.values(), res.grad.values(), kLayerStep, loss), sr.size());
    }
    return r;
}

// Sign pattern of every ReLU / PReLU input in the model. Finite differences
// are only meaningful on an interval where this pattern does not change.
inline std::vector<bool> kink_pattern(const TensorD& x, const dban::ModelParams<double>& m,
                                      const dban::ModelConfig& cfg) {
    const auto cache = dban::model_forward_cached(x, m, cfg);
    std::vector<bool> bits;
    auto add = [&](const TensorD& t) {
        for (double v : t.values())
            bits.push_back(v > 0);
    };
    add(cache.feature_pre);
    for (std::size_t j = 0; j < cache.units.size(); ++j) {
        for (const auto& pre : cache.units[j].pre_activations)
            add(pre);
        add(dban::conv2d_forward(cache.units[j].concat, m.units[j].attention.reduce));
    }
    add(cache.bottleneck_pre);
    for (const auto& pre : cache.deconv_pre)
        add(pre);
    return bits;
}

// Whole toy model in f64. Every parameter array (and the input) is probed at
// `per_array` random elements per instance. The step starts at `step` and
// halves down to kLayerStep until no activation changes sign across the
// stencil; elements that sit closer than that to a kink are redrawn.
inline Result model(int instances, std::uint64_t seed, int per_array = 6, double step = 1e-3) {
    Result r{"model", instances};
    std::mt19937_64 rng(seed);
    for (int it = 0; it < instances; ++it) {
        const dban::ModelConfig cfg = dban::ModelConfig::toy(std::array{2, 3, 4}[it % 3]);
        auto m = dban::build_model<double>(cfg, rng());
        // Non-trivial attention and PReLU so every path carries signal.
        for (auto& u : m.units)
            u.attention.expand.bias = oracle::random_vector(u.attention.expand.bias.size(), rng, -0.5, 0.5);
        for (auto& d : m.deconvs)
            d.prelu.slope = oracle::random_vector(d.prelu.slope.size(), rng, 0.1, 0.4);
        const int side = pick(rng, 3, 5);
        TensorD x = oracle::random_tensor(Shape{pick(rng, 1, 2), cfg.in_channels, side, side}, rng, 0.0, 1.0);
        const TensorD g = oracle::random_tensor(dban::model_forward(x, m, cfg).shape(), rng);
        const auto grads = dban::model_backward(x, m, cfg, g);
        auto loss = [&] { return oracle::dot(g, dban::model_forward(x, m, cfg)); };
        const auto base = kink_pattern(x, m, cfg);

        auto smooth_step = [&](double* slot, double min_step) {
            const double saved = *slot;
            for (double h = step; h >= min_step; h /= 2) {
                bool stable = true;
                for (double d : {-2 * h, 2 * h}) {
                    *slot = saved + d;
                    stable = stable && kink_pattern(x, m, cfg) == base;
                }
                *slot = saved;
                if (stable)
                    return h;
            }
            return 0.0;
        };

        std::vector<std::span<const double>> analytic;
        dban::visit_params(grads.params, [&](const std::string&, std::span<const double> v, const std::vector<int>&) {
            analytic.push_back(v);
        });
        std::size_t idx = 0;
        auto probe = [&](std::span<double> values, std::span<const double> an) {
            int k = 0;
            // Arrays where every element is near a kink (biases feeding every
            // pixel) fall back to smaller steps.
            for (double min_step : {kLayerStep, 1e-7}) {
                for (int tries = 0; k < per_array && tries < 20 * per_array; ++tries) {
                    const auto i = static_cast<std::size_t>(pick(rng, 0, static_cast<int>(values.size()) - 1));
                    const double h = smooth_step(&values[i], min_step);
                    if (h == 0.0)
                        continue;
                    r.absorb(oracle::rel_error(an[i], oracle::central_difference(&values[i], h, loss)), 1);
                    ++k;
                }
                if (k > 0)
                    break;
            }
            if (k == 0)
                ++r.unprobed;
        };
        dban::visit_params(m, [&](const std::string&, std::span<double> v, const std::vector<int>&) {
            probe(v, analytic[idx++]);
        });
        probe(x.values(), grads.input.values());
    }
    return r;
}

} // namespace gradcheck
