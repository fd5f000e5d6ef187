#pragma once

// Naive reference implementations used only by tests. Everything here is a
// direct loop over the defining sums, in double, with no shared code paths
// with the library kernels.

#include "dban/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace oracle {

using dban::Shape;
using dban::TensorD;

inline TensorD random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    TensorD t(s);
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = u(rng);
    return t;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v)
        x = u(rng);
    return v;
}

// Extended-precision accumulation keeps finite-difference round-off small.
inline long double dot(const TensorD& a, const TensorD& b) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += static_cast<long double>(a[i]) * b[i];
    return s;
}

using Loss = std::function<long double()>;

inline TensorD conv(const TensorD& x, const TensorD& w, const std::vector<double>& bias, int stride, int pad) {
    const int k = w.h();
    const int oh = (x.h() + 2 * pad - k) / stride + 1;
    const int ow = (x.w() + 2 * pad - k) / stride + 1;
    TensorD out(Shape{x.n(), w.n(), oh, ow});
    for (int b = 0; b < x.n(); ++b)
        for (int o = 0; o < w.n(); ++o)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    double s = bias.empty() ? 0.0 : bias[o];
                    for (int c = 0; c < x.c(); ++c)
                        for (int u = 0; u < k; ++u)
                            for (int v = 0; v < k; ++v) {
                                const int y = i * stride + u - pad;
                                const int xx = j * stride + v - pad;
                                if (y >= 0 && y < x.h() && xx >= 0 && xx < x.w())
                                    s += w(o, c, u, v) * x(b, c, y, xx);
                            }
                    out(b, o, i, j) = s;
                }
    return out;
}

// Transposed convolution as a scatter: every input pixel stamps its kernel.
inline TensorD deconv(const TensorD& x, const TensorD& w, const std::vector<double>& bias, int stride, int pad) {
    const int k = w.h();
    const int oh = (x.h() - 1) * stride - 2 * pad + k;
    const int ow = (x.w() - 1) * stride - 2 * pad + k;
    TensorD out(Shape{x.n(), w.c(), oh, ow});
    for (int b = 0; b < x.n(); ++b) {
        for (int o = 0; o < w.c(); ++o)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j)
                    out(b, o, i, j) = bias.empty() ? 0.0 : bias[o];
        for (int c = 0; c < x.c(); ++c)
            for (int i = 0; i < x.h(); ++i)
                for (int j = 0; j < x.w(); ++j)
                    for (int o = 0; o < w.c(); ++o)
                        for (int u = 0; u < k; ++u)
                            for (int v = 0; v < k; ++v) {
                                const int y = i * stride + u - pad;
                                const int xx = j * stride + v - pad;
                                if (y >= 0 && y < oh && xx >= 0 && xx < ow)
                                    out(b, o, y, xx) += w(c, o, u, v) * x(b, c, i, j);
                            }
    }
    return out;
}

inline TensorD map(const TensorD& x, const std::function<double(double, int)>& f) {
    TensorD out(x.shape());
    for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c)
            for (int i = 0; i < x.h(); ++i)
                for (int j = 0; j < x.w(); ++j)
                    out(b, c, i, j) = f(x(b, c, i, j), c);
    return out;
}

inline TensorD relu(const TensorD& x) {
    return map(x, [](double v, int) { return v > 0 ? v : 0.0; });
}

inline TensorD sigmoid(const TensorD& x) {
    return map(x, [](double v, int) { return 1.0 / (1.0 + std::exp(-v)); });
}

inline TensorD prelu(const TensorD& x, const std::vector<double>& slope) {
    return map(x, [&](double v, int c) { return v > 0 ? v : slope[c] * v; });
}

inline TensorD concat(const std::vector<TensorD>& parts) {
    int total = 0;
    for (const auto& p : parts)
        total += p.c();
    const auto& s = parts.front().shape();
    TensorD out(Shape{s.n, total, s.h, s.w});
    int off = 0;
    for (const auto& p : parts) {
        for (int b = 0; b < s.n; ++b)
            for (int c = 0; c < p.c(); ++c)
                for (int i = 0; i < s.h; ++i)
                    for (int j = 0; j < s.w; ++j)
                        out(b, off + c, i, j) = p(b, c, i, j);
        off += p.c();
    }
    return out;
}

inline TensorD attention(const TensorD& x, const dban::AttentionParams<double>& p) {
    const TensorD r = relu(conv(x, p.reduce.weight, p.reduce.bias, 1, 0));
    const TensorD tau = sigmoid(conv(r, p.expand.weight, p.expand.bias, 1, 0));
    TensorD y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = tau[i] * x[i];
    return y;
}

inline TensorD unit(const TensorD& x, const dban::BasicUnitParams<double>& u) {
    std::vector<TensorD> seen{x};
    std::vector<TensorD> outs;
    for (const auto& c : u.convs) {
        const TensorD h = relu(conv(concat(seen), c.weight, c.bias, c.stride, c.pad));
        seen.push_back(h);
        outs.push_back(h);
    }
    return attention(concat(outs), u.attention);
}

inline TensorD model(const TensorD& lr, const dban::ModelParams<double>& m) {
    const auto& f = m.feature_conv;
    std::vector<TensorD> blocks{relu(conv(lr, f.weight, f.bias, 1, 1))};
    for (const auto& u : m.units)
        blocks.push_back(unit(concat(blocks), u));
    TensorD y = relu(conv(concat(blocks), m.bottleneck.weight, m.bottleneck.bias, 1, 0));
    for (const auto& st : m.deconvs)
        y = prelu(deconv(y, st.deconv.weight, st.deconv.bias, st.deconv.stride, st.deconv.pad), st.prelu.slope);
    return conv(y, m.recon_conv.weight, m.recon_conv.bias, 1, 1);
}

// Relative error with an absolute floor so that two values at round-off
// level do not register as a mismatch.
inline double rel_error(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Five-point central difference of `loss` w.r.t. *slot (O(h^4) truncation).
inline double central_difference(double* slot, double h, const Loss& loss) {
    const double saved = *slot;
    auto at = [&](double d) {
        *slot = saved + d;
        return loss();
    };
    const long double d = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12.0L * h);
    *slot = saved;
    return static_cast<double>(d);
}

// Max relative error of `analytic` against central differences over every slot.
inline double max_fd_error(std::span<double> values, std::span<const double> analytic, double h,
                           const Loss& loss) {
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
        worst = std::max(worst, rel_error(analytic[i], central_difference(&values[i], h, loss)));
    return worst;
}

inline double mse(const TensorD& a, const TensorD& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

inline double psnr(const TensorD& a, const TensorD& b) {
    const double m = mse(a, b);
    return m == 0.0 ? INFINITY : 10.0 * std::log10(255.0 * 255.0 / m);
}

// Direct sliding window SSIM: every window position recomputes its weighted
// moments from scratch.
inline double ssim(const TensorD& a, const TensorD& b) {
    const int win = 11;
    const double sigma = 1.5;
    std::vector<double> g(win * win);
    double total = 0.0;
    for (int u = 0; u < win; ++u)
        for (int v = 0; v < win; ++v) {
            const double dy = u - 5, dx = v - 5;
            g[u * win + v] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
            total += g[u * win + v];
        }
    for (auto& x : g)
        x /= total;
    const double c1 = (0.01 * 255) * (0.01 * 255);
    const double c2 = (0.03 * 255) * (0.03 * 255);
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i + win <= a.h(); ++i)
        for (int j = 0; j + win <= a.w(); ++j) {
            double ma = 0, mb = 0;
            for (int u = 0; u < win; ++u)
                for (int v = 0; v < win; ++v) {
                    ma += g[u * win + v] * a(0, 0, i + u, j + v);
                    mb += g[u * win + v] * b(0, 0, i + u, j + v);
                }
            double va = 0, vb = 0, cov = 0;
            for (int u = 0; u < win; ++u)
                for (int v = 0; v < win; ++v) {
                    const double da = a(0, 0, i + u, j + v) - ma;
                    const double db = b(0, 0, i + u, j + v) - mb;
                    va += g[u * win + v] * da * da;
                    vb += g[u * win + v] * db * db;
                    cov += g[u * win + v] * da * db;
                }
            sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return sum / count;
}

// BT.601 luma on the 0..255 scale from an RGB tensor on [0, 1].
inline TensorD luma255(const dban::Tensor& rgb) {
    TensorD y(Shape{1, 1, rgb.h(), rgb.w()});
    for (int i = 0; i < rgb.h(); ++i)
        for (int j = 0; j < rgb.w(); ++j) {
            const double r = rgb(0, 0, i, j), g = rgb(0, 1, i, j), b = rgb(0, 2, i, j);
            y(0, 0, i, j) = 16.0 + 65.481 * r + 128.553 * g + 24.966 * b;
        }
    return y;
}

} // namespace oracle
