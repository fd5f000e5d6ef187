#include "dban/layers.hpp"

#include "dban/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace dban {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct Geometry {
    int channels, height, width; // the "image" side
    int kernel, stride, pad;
    int out_h, out_w;            // the "column" side spatial extent

    long col_rows() const { return static_cast<long>(channels) * kernel * kernel; }
    long col_cols() const { return static_cast<long>(out_h) * out_w; }
};

// Output columns j with 0 <= j*stride + offset < extent form [lo, hi).
struct ValidRange {
    int lo, hi;
};

ValidRange valid_range(int offset, int stride, int extent, int count) {
    int lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
    int hi = extent - offset <= 0 ? 0 : (extent - 1 - offset) / stride + 1;
    lo = std::min(lo, count);
    hi = std::clamp(hi, lo, count);
    return {lo, hi};
}

template <typename T>
void im2col(const T* img, const Geometry& g, T* col) {
    const long cols = g.col_cols();
    for (int c = 0; c < g.channels; ++c) {
        const T* plane = img + static_cast<long>(c) * g.height * g.width;
        for (int u = 0; u < g.kernel; ++u) {
            const ValidRange ry = valid_range(u - g.pad, g.stride, g.height, g.out_h);
            for (int v = 0; v < g.kernel; ++v) {
                T* row = col + ((static_cast<long>(c) * g.kernel + u) * g.kernel + v) * cols;
                const ValidRange rx = valid_range(v - g.pad, g.stride, g.width, g.out_w);
                std::fill_n(row, static_cast<long>(ry.lo) * g.out_w, T(0));
                for (int i = ry.lo; i < ry.hi; ++i) {
                    const T* src = plane + static_cast<long>(i * g.stride + u - g.pad) * g.width + (v - g.pad);
                    T* dst = row + static_cast<long>(i) * g.out_w;
                    std::fill_n(dst, rx.lo, T(0));
                    if (g.stride == 1) {
                        std::copy(src + rx.lo, src + rx.hi, dst + rx.lo);
                    } else {
                        for (int j = rx.lo; j < rx.hi; ++j)
                            dst[j] = src[j * g.stride];
                    }
                    std::fill(dst + rx.hi, dst + g.out_w, T(0));
                }
                std::fill(row + static_cast<long>(ry.hi) * g.out_w, row + cols, T(0));
            }
        }
    }
}

// Adjoint of im2col: accumulates columns back into the image.
template <typename T>
void col2im(const T* col, const Geometry& g, T* img) {
    const long cols = g.col_cols();
    for (int c = 0; c < g.channels; ++c) {
        T* plane = img + static_cast<long>(c) * g.height * g.width;
        for (int u = 0; u < g.kernel; ++u) {
            const ValidRange ry = valid_range(u - g.pad, g.stride, g.height, g.out_h);
            for (int v = 0; v < g.kernel; ++v) {
                const T* row = col + ((static_cast<long>(c) * g.kernel + u) * g.kernel + v) * cols;
                const ValidRange rx = valid_range(v - g.pad, g.stride, g.width, g.out_w);
                for (int i = ry.lo; i < ry.hi; ++i) {
                    const T* src = row + static_cast<long>(i) * g.out_w;
                    T* dst = plane + static_cast<long>(i * g.stride + u - g.pad) * g.width + (v - g.pad);
                    if (g.stride == 1) {
                        for (int j = rx.lo; j < rx.hi; ++j)
                            dst[j] += src[j];
                    } else {
                        for (int j = rx.lo; j < rx.hi; ++j)
                            dst[j * g.stride] += src[j];
                    }
                }
            }
        }
    }
}

bool is_pointwise(const Geometry& g) {
    return g.kernel == 1 && g.stride == 1 && g.pad == 0;
}

template <typename T>
Geometry conv_geometry(const BasicTensor<T>& x, const Conv2dParams<T>& p) {
    const int k = p.kernel();
    if (p.weight.h() != p.weight.w())
        throw ConfigError("conv2d: kernel must be square");
    if (k % 2 == 0)
        throw ConfigError("conv2d: kernel size must be odd, got " + std::to_string(k));
    if (p.stride < 1 || p.pad < 0)
        throw ConfigError("conv2d: stride must be positive and pad non-negative");
    if (p.has_bias() && static_cast<int>(p.bias.size()) != p.out_channels())
        throw ShapeError("conv2d: bias length does not match out_channels");
    if (x.c() != p.in_channels())
        throw ShapeError("conv2d: input has " + std::to_string(x.c()) + " channels, layer expects " +
                         std::to_string(p.in_channels()));
    const int span_h = x.h() + 2 * p.pad - k;
    const int span_w = x.w() + 2 * p.pad - k;
    if (span_h < 0 || span_w < 0 || span_h % p.stride != 0 || span_w % p.stride != 0)
        throw ShapeError("conv2d: input " + x.shape().str() + " gives non-integral output size for k=" +
                         std::to_string(k) + " stride=" + std::to_string(p.stride) +
                         " pad=" + std::to_string(p.pad));
    return Geometry{x.c(), x.h(), x.w(), k, p.stride, p.pad, span_h / p.stride + 1,
                    span_w / p.stride + 1};
}

template <typename T>
Geometry deconv_geometry(const BasicTensor<T>& x, const Deconv2dParams<T>& p) {
    const int k = p.kernel();
    if (p.weight.h() != p.weight.w())
        throw ConfigError("deconv2d: kernel must be square");
    if (p.stride < 1 || p.pad < 0 || k - 2 * p.pad != p.stride)
        throw ConfigError("deconv2d: requires k - 2*pad == stride, got k=" + std::to_string(k) +
                          " pad=" + std::to_string(p.pad) + " stride=" + std::to_string(p.stride));
    if (static_cast<int>(p.bias.size()) != p.out_channels())
        throw ShapeError("deconv2d: bias length does not match out_channels");
    if (x.c() != p.in_channels())
        throw ShapeError("deconv2d: input has " + std::to_string(x.c()) + " channels, layer expects " +
                         std::to_string(p.in_channels()));
    const int out_h = (x.h() - 1) * p.stride - 2 * p.pad + k;
    const int out_w = (x.w() - 1) * p.stride - 2 * p.pad + k;
    // Image side is the (larger) output; column side is the input grid.
    return Geometry{p.out_channels(), out_h, out_w, k, p.stride, p.pad, x.h(), x.w()};
}

template <typename T>
void require_slope(const BasicTensor<T>& x, std::span<const T> slope) {
    if (static_cast<int>(slope.size()) != x.c())
        throw ShapeError("prelu: slope length " + std::to_string(slope.size()) + " does not match " +
                         std::to_string(x.c()) + " channels");
}

} // namespace

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const Conv2dParams<T>& p) {
    const Geometry g = conv_geometry(x, p);
    const int out_c = p.out_channels();
    BasicTensor<T> out(Shape{x.n(), out_c, g.out_h, g.out_w});
    ConstMatMap<T> weight(p.weight.data(), out_c, g.col_rows());
    AlignedVector<T> col;
    if (!is_pointwise(g))
        col.resize(static_cast<std::size_t>(g.col_rows() * g.col_cols()));

    for (int b = 0; b < x.n(); ++b) {
        const T* cols = x.plane(b, 0);
        if (!is_pointwise(g)) {
            im2col(x.plane(b, 0), g, col.data());
            cols = col.data();
        }
        MatMap<T> y(out.plane(b, 0), out_c, g.col_cols());
        y.noalias() = weight * ConstMatMap<T>(cols, g.col_rows(), g.col_cols());
        if (p.has_bias())
            for (int o = 0; o < out_c; ++o)
                y.row(o).array() += p.bias[o];
    }
    return out;
}

template <typename T>
LayerGrads<T> conv2d_backward(const BasicTensor<T>& x, const Conv2dParams<T>& p,
                              const BasicTensor<T>& grad_out) {
    const Geometry g = conv_geometry(x, p);
    const int out_c = p.out_channels();
    if (grad_out.shape() != Shape{x.n(), out_c, g.out_h, g.out_w})
        throw ShapeError("conv2d_backward: grad_out shape " + grad_out.shape().str() +
                         " does not match forward output");

    LayerGrads<T> grads{BasicTensor<T>(x.shape()), BasicTensor<T>(p.weight.shape()),
                        std::vector<T>(p.bias.size(), T(0))};
    ConstMatMap<T> weight(p.weight.data(), out_c, g.col_rows());
    MatMap<T> grad_w(grads.weight.data(), out_c, g.col_rows());
    const bool pointwise = is_pointwise(g);
    AlignedVector<T> col, grad_col;
    if (!pointwise) {
        col.resize(static_cast<std::size_t>(g.col_rows() * g.col_cols()));
        grad_col.resize(col.size());
    }

    for (int b = 0; b < x.n(); ++b) {
        ConstMatMap<T> gy(grad_out.plane(b, 0), out_c, g.col_cols());
        if (pointwise) {
            ConstMatMap<T> cols(x.plane(b, 0), g.col_rows(), g.col_cols());
            grad_w.noalias() += gy * cols.transpose();
            MatMap<T>(grads.x.plane(b, 0), g.col_rows(), g.col_cols()).noalias() =
                weight.transpose() * gy;
        } else {
            im2col(x.plane(b, 0), g, col.data());
            ConstMatMap<T> cols(col.data(), g.col_rows(), g.col_cols());
            grad_w.noalias() += gy * cols.transpose();
            MatMap<T>(grad_col.data(), g.col_rows(), g.col_cols()).noalias() = weight.transpose() * gy;
            col2im(grad_col.data(), g, grads.x.plane(b, 0));
        }
        if (p.has_bias())
            for (int o = 0; o < out_c; ++o)
                grads.bias[o] += gy.row(o).sum();
    }
    return grads;
}

template <typename T>
BasicTensor<T> deconv2d_forward(const BasicTensor<T>& x, const Deconv2dParams<T>& p) {
    const Geometry g = deconv_geometry(x, p);
    const int out_c = p.out_channels();
    BasicTensor<T> out(Shape{x.n(), out_c, g.height, g.width});
    ConstMatMap<T> weight(p.weight.data(), p.in_channels(), g.col_rows());
    AlignedVector<T> col(static_cast<std::size_t>(g.col_rows() * g.col_cols()));
    const std::size_t plane = static_cast<std::size_t>(g.height) * g.width;

    for (int b = 0; b < x.n(); ++b) {
        ConstMatMap<T> in(x.plane(b, 0), p.in_channels(), g.col_cols());
        MatMap<T>(col.data(), g.col_rows(), g.col_cols()).noalias() = weight.transpose() * in;
        col2im(col.data(), g, out.plane(b, 0));
        for (int o = 0; o < out_c; ++o) {
            T* dst = out.plane(b, o);
            for (std::size_t i = 0; i < plane; ++i)
                dst[i] += p.bias[o];
        }
    }
    return out;
}

template <typename T>
LayerGrads<T> deconv2d_backward(const BasicTensor<T>& x, const Deconv2dParams<T>& p,
                                const BasicTensor<T>& grad_out) {
    const Geometry g = deconv_geometry(x, p);
    const int out_c = p.out_channels();
    if (grad_out.shape() != Shape{x.n(), out_c, g.height, g.width})
        throw ShapeError("deconv2d_backward: grad_out shape " + grad_out.shape().str() +
                         " does not match forward output");

    LayerGrads<T> grads{BasicTensor<T>(x.shape()), BasicTensor<T>(p.weight.shape()),
                        std::vector<T>(p.bias.size(), T(0))};
    ConstMatMap<T> weight(p.weight.data(), p.in_channels(), g.col_rows());
    MatMap<T> grad_w(grads.weight.data(), p.in_channels(), g.col_rows());
    AlignedVector<T> grad_col(static_cast<std::size_t>(g.col_rows() * g.col_cols()));
    const std::size_t plane = static_cast<std::size_t>(g.height) * g.width;

    for (int b = 0; b < x.n(); ++b) {
        im2col(grad_out.plane(b, 0), g, grad_col.data());
        ConstMatMap<T> gcol(grad_col.data(), g.col_rows(), g.col_cols());
        ConstMatMap<T> in(x.plane(b, 0), p.in_channels(), g.col_cols());
        grad_w.noalias() += in * gcol.transpose();
        MatMap<T>(grads.x.plane(b, 0), p.in_channels(), g.col_cols()).noalias() = weight * gcol;
        for (int o = 0; o < out_c; ++o) {
            const T* src = grad_out.plane(b, o);
            T acc = T(0);
            for (std::size_t i = 0; i < plane; ++i)
                acc += src[i];
            grads.bias[o] += acc;
        }
    }
    return grads;
}

template <typename T>
BasicTensor<T> activation_forward(const BasicTensor<T>& x, Activation kind, std::span<const T> slope) {
    BasicTensor<T> out(x.shape());
    switch (kind) {
    case Activation::Relu:
        for (std::size_t i = 0; i < x.size(); ++i)
            out[i] = x[i] > T(0) ? x[i] : T(0);
        break;
    case Activation::Sigmoid:
        for (std::size_t i = 0; i < x.size(); ++i)
            out[i] = T(1) / (T(1) + std::exp(-x[i]));
        break;
    case Activation::PRelu: {
        require_slope(x, slope);
        const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
        for (int b = 0; b < x.n(); ++b)
            for (int c = 0; c < x.c(); ++c) {
                const T* src = x.plane(b, c);
                T* dst = out.plane(b, c);
                for (std::size_t i = 0; i < hw; ++i)
                    dst[i] = src[i] > T(0) ? src[i] : slope[c] * src[i];
            }
        break;
    }
    }
    return out;
}

template <typename T>
ActivationGrads<T> activation_backward(const BasicTensor<T>& x, Activation kind,
                                       const BasicTensor<T>& grad_out, std::span<const T> slope) {
    if (grad_out.shape() != x.shape())
        throw ShapeError("activation_backward: grad_out shape " + grad_out.shape().str() +
                         " does not match input " + x.shape().str());
    ActivationGrads<T> grads{BasicTensor<T>(x.shape()), {}};
    switch (kind) {
    case Activation::Relu:
        for (std::size_t i = 0; i < x.size(); ++i)
            grads.x[i] = x[i] > T(0) ? grad_out[i] : T(0);
        break;
    case Activation::Sigmoid:
        for (std::size_t i = 0; i < x.size(); ++i) {
            const T s = T(1) / (T(1) + std::exp(-x[i]));
            grads.x[i] = grad_out[i] * s * (T(1) - s);
        }
        break;
    case Activation::PRelu: {
        require_slope(x, slope);
        grads.slope.assign(slope.size(), T(0));
        const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
        for (int b = 0; b < x.n(); ++b)
            for (int c = 0; c < x.c(); ++c) {
                const T* src = x.plane(b, c);
                const T* gy = grad_out.plane(b, c);
                T* gx = grads.x.plane(b, c);
                T acc = T(0);
                for (std::size_t i = 0; i < hw; ++i) {
                    if (src[i] > T(0)) {
                        gx[i] = gy[i];
                    } else {
                        gx[i] = slope[c] * gy[i];
                        acc += src[i] * gy[i];
                    }
                }
                grads.slope[c] += acc;
            }
        break;
    }
    }
    return grads;
}

namespace {

template <typename T>
BasicTensor<T> normal_fill(Shape shape, double fan_in, std::mt19937_64& rng) {
    BasicTensor<T> out(shape);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<T>(dist(rng));
    return out;
}

} // namespace

template <typename T>
BasicTensor<T> init_params(Shape shape, std::mt19937_64& rng) {
    return normal_fill<T>(shape, static_cast<double>(shape.c) * shape.h * shape.w, rng);
}

template <typename T>
BasicTensor<T> init_params(Shape shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return init_params<T>(shape, rng);
}

template <typename T>
Conv2dParams<T> make_conv(int in_channels, int out_channels, int kernel, int stride, int pad,
                          bool with_bias, std::mt19937_64& rng) {
    Conv2dParams<T> p;
    p.weight = init_params<T>(Shape{out_channels, in_channels, kernel, kernel}, rng);
    if (with_bias)
        p.bias.assign(static_cast<std::size_t>(out_channels), T(0));
    p.stride = stride;
    p.pad = pad;
    return p;
}

template <typename T>
Deconv2dParams<T> make_deconv(int in_channels, int out_channels, int kernel, int stride, int pad,
                              std::mt19937_64& rng) {
    Deconv2dParams<T> p;
    p.weight = normal_fill<T>(Shape{in_channels, out_channels, kernel, kernel},
                              static_cast<double>(in_channels) * kernel * kernel, rng);
    p.bias.assign(static_cast<std::size_t>(out_channels), T(0));
    p.stride = stride;
    p.pad = pad;
    return p;
}

#define DBAN_INSTANTIATE(T)                                                                        \
    template BasicTensor<T> conv2d_forward<T>(const BasicTensor<T>&, const Conv2dParams<T>&);      \
    template LayerGrads<T> conv2d_backward<T>(const BasicTensor<T>&, const Conv2dParams<T>&,       \
                                              const BasicTensor<T>&);                              \
    template BasicTensor<T> deconv2d_forward<T>(const BasicTensor<T>&, const Deconv2dParams<T>&);  \
    template LayerGrads<T> deconv2d_backward<T>(const BasicTensor<T>&, const Deconv2dParams<T>&,   \
                                                const BasicTensor<T>&);                            \
    template BasicTensor<T> activation_forward<T>(const BasicTensor<T>&, Activation,               \
                                                  std::span<const T>);                             \
    template ActivationGrads<T> activation_backward<T>(const BasicTensor<T>&, Activation,          \
                                                       const BasicTensor<T>&, std::span<const T>); \
    template BasicTensor<T> init_params<T>(Shape, std::mt19937_64&);                               \
    template BasicTensor<T> init_params<T>(Shape, std::uint64_t);                                  \
    template Conv2dParams<T> make_conv<T>(int, int, int, int, int, bool, std::mt19937_64&);        \
    template Deconv2dParams<T> make_deconv<T>(int, int, int, int, int, std::mt19937_64&);

DBAN_INSTANTIATE(float)
DBAN_INSTANTIATE(double)

} // namespace dban
