#include "dban/tensor.hpp"

#include "dban/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace dban {

std::string Shape::str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
}

namespace {

void check_shape(const Shape& s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1)
        throw ShapeError("tensor dimensions must be >= 1, got " + s.str());
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
}

} // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(shape) {
    check_shape(shape);
    data_.assign(shape.size(), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(data.begin(), data.end()) {
    check_shape(shape);
    if (data_.size() != shape.size())
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape.str());
}

template <typename T>
BasicTensor<T> BasicTensor<T>::item(int b) const {
    if (b < 0 || b >= shape_.n)
        throw BoundsError("batch index " + std::to_string(b) + " out of range");
    BasicTensor out(Shape{1, shape_.c, shape_.h, shape_.w});
    const std::size_t stride = out.size();
    std::copy_n(data_.data() + b * stride, stride, out.data());
    return out;
}

template <typename T>
bool BasicTensor<T>::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> inputs) {
    if (inputs.empty())
        throw ShapeError("concat_channels: empty input list");
    const Shape first = inputs[0]->shape();
    int channels = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Shape& s = inputs[i]->shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w)
            throw ShapeError("concat_channels: input " + std::to_string(i) + " has shape " + s.str() +
                             ", expected n/h/w of " + first.str());
        channels += s.c;
    }
    BasicTensor<T> out(Shape{first.n, channels, first.h, first.w});
    const std::size_t hw = static_cast<std::size_t>(first.h) * first.w;
    for (int b = 0; b < first.n; ++b) {
        T* dst = out.plane(b, 0);
        for (const BasicTensor<T>* t : inputs) {
            const std::size_t block = hw * t->c();
            std::memcpy(dst, t->plane(b, 0), block * sizeof(T));
            dst += block;
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& inputs) {
    std::vector<const BasicTensor<T>*> ptrs;
    ptrs.reserve(inputs.size());
    for (const auto& t : inputs)
        ptrs.push_back(&t);
    return concat_channels<T>(std::span<const BasicTensor<T>* const>(ptrs));
}

template <typename T>
BasicTensor<T> hadamard(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "hadamard");
    BasicTensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = a[i] * b[i];
    return out;
}

template <typename T>
BasicTensor<T> pixelwise_add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a, b, "pixelwise_add");
    BasicTensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = a[i] + b[i];
    return out;
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, int from, int to) {
    if (from < 0 || to > x.c() || from >= to)
        throw BoundsError("slice_channels: range [" + std::to_string(from) + "," + std::to_string(to) +
                          ") invalid for " + std::to_string(x.c()) + " channels");
    BasicTensor<T> out(Shape{x.n(), to - from, x.h(), x.w()});
    const std::size_t block = static_cast<std::size_t>(to - from) * x.h() * x.w();
    for (int b = 0; b < x.n(); ++b)
        std::memcpy(out.plane(b, 0), x.plane(b, from), block * sizeof(T));
    return out;
}

template <typename T>
void add_into_channels(BasicTensor<T>& dst, const BasicTensor<T>& src, int offset) {
    if (src.n() != dst.n() || src.h() != dst.h() || src.w() != dst.w() || offset < 0 ||
        offset + src.c() > dst.c())
        throw ShapeError("add_into_channels: cannot place " + src.shape().str() + " at channel " +
                         std::to_string(offset) + " of " + dst.shape().str());
    const std::size_t block = static_cast<std::size_t>(src.c()) * src.h() * src.w();
    for (int b = 0; b < src.n(); ++b) {
        T* d = dst.plane(b, offset);
        const T* s = src.plane(b, 0);
        for (std::size_t i = 0; i < block; ++i)
            d[i] += s[i];
    }
}

template <typename T>
BasicTensor<T> stack_batch(std::span<const BasicTensor<T>* const> items) {
    if (items.empty())
        throw ShapeError("stack_batch: empty input list");
    const Shape s = items[0]->shape();
    BasicTensor<T> out(Shape{static_cast<int>(items.size()), s.c, s.h, s.w});
    const std::size_t stride = static_cast<std::size_t>(s.c) * s.h * s.w;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const Shape& si = items[i]->shape();
        if (si.n != 1 || si.c != s.c || si.h != s.h || si.w != s.w)
            throw ShapeError("stack_batch: item " + std::to_string(i) + " has shape " + si.str());
        std::memcpy(out.data() + i * stride, items[i]->data(), stride * sizeof(T));
    }
    return out;
}

template <typename T>
void add_inplace(BasicTensor<T>& dst, const BasicTensor<T>& src) {
    require_same_shape(dst, src, "add_inplace");
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i] += src[i];
}

#define DBAN_INSTANTIATE(T)                                                                        \
    template class BasicTensor<T>;                                                                 \
    template BasicTensor<T> concat_channels<T>(std::span<const BasicTensor<T>* const>);            \
    template BasicTensor<T> concat_channels<T>(const std::vector<BasicTensor<T>>&);                \
    template BasicTensor<T> hadamard<T>(const BasicTensor<T>&, const BasicTensor<T>&);             \
    template BasicTensor<T> pixelwise_add<T>(const BasicTensor<T>&, const BasicTensor<T>&);        \
    template BasicTensor<T> slice_channels<T>(const BasicTensor<T>&, int, int);                    \
    template void add_into_channels<T>(BasicTensor<T>&, const BasicTensor<T>&, int);               \
    template BasicTensor<T> stack_batch<T>(std::span<const BasicTensor<T>* const>);                \
    template void add_inplace<T>(BasicTensor<T>&, const BasicTensor<T>&);

DBAN_INSTANTIATE(float)
DBAN_INSTANTIATE(double)

} // namespace dban
