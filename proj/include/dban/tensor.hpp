#pragma once

// Dense rank-4 tensor in n -> c -> h -> w row-major order.
// No broadcasting anywhere: every binary op requires identical shapes.

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace dban {

// Fixed 64-byte alignment keeps vectorized kernels on the same code path (and
// hence the same summation order) no matter where the allocator lands.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() noexcept = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

struct Shape {
    int n = 1;
    int c = 1;
    int h = 1;
    int w = 1;

    std::size_t size() const noexcept {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, T fill = T(0));
    BasicTensor(Shape shape, std::vector<T> data);
    BasicTensor(int n, int c, int h, int w, T fill = T(0)) : BasicTensor(Shape{n, c, h, w}, fill) {}

    static BasicTensor zeros(Shape s) { return BasicTensor(s, T(0)); }
    static BasicTensor ones(Shape s) { return BasicTensor(s, T(1)); }

    const Shape& shape() const noexcept { return shape_; }
    int n() const noexcept { return shape_.n; }
    int c() const noexcept { return shape_.c; }
    int h() const noexcept { return shape_.h; }
    int w() const noexcept { return shape_.w; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t index(int b, int ch, int y, int x) const noexcept {
        return ((static_cast<std::size_t>(b) * shape_.c + ch) * shape_.h + y) * shape_.w + x;
    }
    T& operator()(int b, int ch, int y, int x) noexcept { return data_[index(b, ch, y, x)]; }
    const T& operator()(int b, int ch, int y, int x) const noexcept { return data_[index(b, ch, y, x)]; }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    // Pointer to the h*w plane of (b, ch).
    T* plane(int b, int ch) noexcept { return data_.data() + index(b, ch, 0, 0); }
    const T* plane(int b, int ch) const noexcept { return data_.data() + index(b, ch, 0, 0); }

    // One batch item as a (1, c, h, w) tensor.
    BasicTensor item(int b) const;

    bool all_finite() const noexcept;

    template <typename U>
    BasicTensor<U> cast() const {
        BasicTensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i)
            out[i] = static_cast<U>(data_[i]);
        return out;
    }

    friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_{1, 1, 1, 1};
    AlignedVector<T> data_ = AlignedVector<T>(1, T(0));
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> inputs);

template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& inputs);

template <typename T>
BasicTensor<T> hadamard(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> pixelwise_add(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Channels [from, to).
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, int from, int to);

// dst[:, offset:offset+src.c] += src
template <typename T>
void add_into_channels(BasicTensor<T>& dst, const BasicTensor<T>& src, int offset);

// Stack (1,c,h,w) tensors along the batch axis.
template <typename T>
BasicTensor<T> stack_batch(std::span<const BasicTensor<T>* const> items);

template <typename T>
void add_inplace(BasicTensor<T>& dst, const BasicTensor<T>& src);

} // namespace dban
