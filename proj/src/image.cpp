#include "dban/image.hpp"

#include "dban/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace dban {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
    auto* err = static_cast<std::string*>(png_get_error_ptr(png));
    if (err)
        *err = msg ? msg : "unknown libpng error";
    png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

} // namespace

std::uint8_t quantize_8bit(double v) noexcept {
    if (!(v > 0.0))
        return 0;
    if (v >= 1.0)
        return 255;
    return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

Tensor load_image(const std::string& path, int channels) {
    if (channels != 1 && channels != 3)
        throw ArgumentError("load_image: channels must be 1 or 3");
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file)
        throw IoError("cannot open image '" + path + "'");
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw IoError("'" + path + "' is not a PNG file");

    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
    if (!png)
        throw IoError("libpng init failed for '" + path + "'");
    png_infop info = png_create_info_struct(png);
    std::vector<png_byte> pixels;
    std::vector<png_bytep> rows;
    png_uint_32 width = 0, height = 0;
    int src_channels = 0;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("corrupt PNG '" + path + "': " + err);
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    src_channels = png_get_channels(png, info);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    pixels.resize(row_bytes * height);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y)
        rows[y] = pixels.data() + y * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (src_channels != 1 && src_channels != 3)
        throw IoError("unsupported PNG channel layout in '" + path + "'");
    const int h = static_cast<int>(height), w = static_cast<int>(width);
    Tensor out(Shape{1, channels, h, w});
    for (int y = 0; y < h; ++y) {
        const png_byte* row = pixels.data() + static_cast<std::size_t>(y) * row_bytes;
        for (int x = 0; x < w; ++x) {
            const png_byte* px = row + static_cast<std::size_t>(x) * src_channels;
            if (src_channels == 1) {
                for (int c = 0; c < channels; ++c)
                    out(0, c, y, x) = px[0] / 255.0f;
            } else if (channels == 3) {
                for (int c = 0; c < 3; ++c)
                    out(0, c, y, x) = px[c] / 255.0f;
            } else {
                out(0, 0, y, x) =
                    static_cast<float>((0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0);
            }
        }
    }
    return out;
}

void save_image(const Tensor& img, const std::string& path) {
    if (img.n() != 1 || (img.c() != 1 && img.c() != 3))
        throw ShapeError("save_image: expected (1, 1|3, h, w), got " + img.shape().str());
    const int h = img.h(), w = img.w(), channels = img.c();
    std::vector<png_byte> pixels(static_cast<std::size_t>(h) * w * channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                pixels[(static_cast<std::size_t>(y) * w + x) * channels + c] = quantize_8bit(img(0, c, y, x));

    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file)
        throw IoError("cannot write image '" + path + "'");
    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
    if (!png)
        throw IoError("libpng init failed for '" + path + "'");
    png_infop info = png_create_info_struct(png);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[y] = pixels.data() + static_cast<std::size_t>(y) * w * channels;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing PNG '" + path + "': " + err);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

template <typename T>
BasicTensor<T> rgb_to_ycbcr(const BasicTensor<T>& rgb) {
    if (rgb.c() != 3)
        throw ShapeError("rgb_to_ycbcr: expected 3 channels, got " + rgb.shape().str());
    BasicTensor<T> out(rgb.shape());
    const std::size_t hw = static_cast<std::size_t>(rgb.h()) * rgb.w();
    for (int b = 0; b < rgb.n(); ++b) {
        const T* r = rgb.plane(b, 0);
        const T* g = rgb.plane(b, 1);
        const T* bl = rgb.plane(b, 2);
        T* y = out.plane(b, 0);
        T* cb = out.plane(b, 1);
        T* cr = out.plane(b, 2);
        for (std::size_t i = 0; i < hw; ++i) {
            y[i] = static_cast<T>((16.0 + 65.481 * r[i] + 128.553 * g[i] + 24.966 * bl[i]) / 255.0);
            // Chroma coefficients sum to 112, so differences keep neutral gray at exactly 128.
            const double db = static_cast<double>(bl[i]);
            const double dr = static_cast<double>(r[i]);
            cb[i] = static_cast<T>((128.0 + 37.797 * (db - r[i]) + 74.203 * (db - g[i])) / 255.0);
            cr[i] = static_cast<T>((128.0 + 93.786 * (dr - g[i]) + 18.214 * (dr - bl[i])) / 255.0);
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> luma_plane(const BasicTensor<T>& img) {
    if (img.c() == 3)
        return slice_channels(rgb_to_ycbcr(img), 0, 1);
    if (img.c() != 1)
        throw ShapeError("luma_plane: expected 1 or 3 channels, got " + img.shape().str());
    BasicTensor<T> out(img.shape());
    for (std::size_t i = 0; i < img.size(); ++i)
        out[i] = static_cast<T>((16.0 + 219.0 * img[i]) / 255.0);
    return out;
}

template BasicTensor<float> rgb_to_ycbcr<float>(const BasicTensor<float>&);
template BasicTensor<double> rgb_to_ycbcr<double>(const BasicTensor<double>&);
template BasicTensor<float> luma_plane<float>(const BasicTensor<float>&);
template BasicTensor<double> luma_plane<double>(const BasicTensor<double>&);

} // namespace dban
