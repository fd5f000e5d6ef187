#include "dban/resample.hpp"

#include "dban/error.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dban {

double cubic_kernel(double x) {
    constexpr double a = -0.5;
    const double ax = std::abs(x);
    const double ax2 = ax * ax;
    const double ax3 = ax2 * ax;
    if (ax <= 1.0)
        return (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0;
    if (ax < 2.0)
        return a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a;
    return 0.0;
}

double triangle_kernel(double x) {
    const double ax = std::abs(x);
    return ax < 1.0 ? 1.0 - ax : 0.0;
}

namespace {

// Sparse interpolation matrix for one axis: each output sample reads
// `taps` consecutive (clamped) input indices.
struct AxisWeights {
    int taps = 0;
    std::vector<int> index;     // out_len * taps
    std::vector<double> weight; // out_len * taps
};

AxisWeights axis_weights(int in_len, int out_len, double factor, ResampleKernel kind) {
    const double support = kind == ResampleKernel::Bicubic ? 4.0 : 2.0;
    const bool shrink = factor < 1.0;
    const double width = shrink ? support / factor : support;
    auto kernel = [&](double x) {
        const double k = kind == ResampleKernel::Bicubic ? cubic_kernel(shrink ? x * factor : x)
                                                         : triangle_kernel(shrink ? x * factor : x);
        return shrink ? factor * k : k;
    };

    AxisWeights aw;
    aw.taps = static_cast<int>(std::ceil(width)) + 2;
    aw.index.resize(static_cast<std::size_t>(out_len) * aw.taps);
    aw.weight.resize(aw.index.size());
    for (int i = 0; i < out_len; ++i) {
        const double centre = (i + 0.5) / factor - 0.5;
        const int left = static_cast<int>(std::floor(centre - width / 2.0));
        double total = 0.0;
        for (int t = 0; t < aw.taps; ++t) {
            const double w = kernel(centre - (left + t));
            aw.weight[i * aw.taps + t] = w;
            aw.index[i * aw.taps + t] = std::clamp(left + t, 0, in_len - 1);
            total += w;
        }
        for (int t = 0; t < aw.taps; ++t)
            aw.weight[i * aw.taps + t] /= total;
    }
    return aw;
}

} // namespace

template <typename T>
BasicTensor<T> resize(const BasicTensor<T>& img, double factor, ResampleKernel kernel) {
    if (!(factor > 0.0) || !std::isfinite(factor))
        throw ArgumentError("resize: factor must be positive, got " + std::to_string(factor));
    const int out_h = static_cast<int>(std::lround(factor * img.h()));
    const int out_w = static_cast<int>(std::lround(factor * img.w()));
    if (out_h < 1 || out_w < 1)
        throw ArgumentError("resize: factor " + std::to_string(factor) + " gives an empty image for " +
                            img.shape().str());

    const AxisWeights rows = axis_weights(img.h(), out_h, factor, kernel);
    const AxisWeights cols = axis_weights(img.w(), out_w, factor, kernel);
    BasicTensor<T> out(Shape{img.n(), img.c(), out_h, out_w});
    std::vector<double> tmp(static_cast<std::size_t>(out_h) * img.w());

    for (int b = 0; b < img.n(); ++b) {
        for (int c = 0; c < img.c(); ++c) {
            const T* src = img.plane(b, c);
            for (int i = 0; i < out_h; ++i) {
                double* dst = tmp.data() + static_cast<std::size_t>(i) * img.w();
                std::fill_n(dst, img.w(), 0.0);
                for (int t = 0; t < rows.taps; ++t) {
                    const double w = rows.weight[i * rows.taps + t];
                    const T* row = src + static_cast<std::size_t>(rows.index[i * rows.taps + t]) * img.w();
                    for (int x = 0; x < img.w(); ++x)
                        dst[x] += w * static_cast<double>(row[x]);
                }
            }
            T* dst = out.plane(b, c);
            for (int i = 0; i < out_h; ++i) {
                const double* row = tmp.data() + static_cast<std::size_t>(i) * img.w();
                for (int j = 0; j < out_w; ++j) {
                    double acc = 0.0;
                    for (int t = 0; t < cols.taps; ++t)
                        acc += cols.weight[j * cols.taps + t] * row[cols.index[j * cols.taps + t]];
                    dst[static_cast<std::size_t>(i) * out_w + j] = static_cast<T>(acc);
                }
            }
        }
    }
    return out;
}

template BasicTensor<float> resize<float>(const BasicTensor<float>&, double, ResampleKernel);
template BasicTensor<double> resize<double>(const BasicTensor<double>&, double, ResampleKernel);

} // namespace dban
