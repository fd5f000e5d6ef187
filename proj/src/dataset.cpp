#include "dban/dataset.hpp"

#include "dban/error.hpp"
#include "dban/image.hpp"
#include "dban/resample.hpp"

#include <algorithm>
#include <random>

namespace dban {

std::vector<int> patch_positions(int extent, int patch, int stride, int offset) {
    if (patch < 1 || stride < 1)
        throw ArgumentError("patch size and stride must be positive");
    std::vector<int> pos;
    if (extent < patch)
        return pos;
    offset = std::clamp(offset, 0, extent - patch);
    for (int p = offset; p + patch <= extent; p += stride)
        pos.push_back(p);
    if (pos.back() + patch < extent)
        pos.push_back(extent - patch);
    return pos;
}

CropResult crop_patches(const Tensor& img, int patch_size, int stride, std::optional<std::uint64_t> seed) {
    if (img.n() != 1)
        throw ShapeError("crop_patches: expected a single image, got " + img.shape().str());
    CropResult result;
    if (img.h() < patch_size || img.w() < patch_size) {
        result.warnings.push_back("image " + std::to_string(img.h()) + "x" + std::to_string(img.w()) +
                                  " is smaller than patch size " + std::to_string(patch_size) + "; skipped");
        return result;
    }
    int off_y = 0, off_x = 0;
    if (seed) {
        std::mt19937_64 rng(*seed);
        std::uniform_int_distribution<int> dy(0, std::min(stride - 1, img.h() - patch_size));
        std::uniform_int_distribution<int> dx(0, std::min(stride - 1, img.w() - patch_size));
        off_y = dy(rng);
        off_x = dx(rng);
    }
    const auto ys = patch_positions(img.h(), patch_size, stride, off_y);
    const auto xs = patch_positions(img.w(), patch_size, stride, off_x);
    for (int y : ys) {
        for (int x : xs) {
            Tensor patch(Shape{1, img.c(), patch_size, patch_size});
            for (int c = 0; c < img.c(); ++c)
                for (int i = 0; i < patch_size; ++i)
                    std::copy_n(&img(0, c, y + i, x), patch_size, &patch(0, c, i, 0));
            result.patches.push_back(std::move(patch));
            result.origins.push_back({y, x});
        }
    }
    return result;
}

namespace {

template <typename T>
BasicTensor<T> rotate_ccw(const BasicTensor<T>& in) {
    BasicTensor<T> out(Shape{in.n(), in.c(), in.w(), in.h()});
    for (int b = 0; b < in.n(); ++b)
        for (int c = 0; c < in.c(); ++c)
            for (int y = 0; y < out.h(); ++y)
                for (int x = 0; x < out.w(); ++x)
                    out(b, c, y, x) = in(b, c, x, in.w() - 1 - y);
    return out;
}

template <typename T>
BasicTensor<T> flip_horizontal(const BasicTensor<T>& in) {
    BasicTensor<T> out(in.shape());
    for (int b = 0; b < in.n(); ++b)
        for (int c = 0; c < in.c(); ++c)
            for (int y = 0; y < in.h(); ++y)
                for (int x = 0; x < in.w(); ++x)
                    out(b, c, y, x) = in(b, c, y, in.w() - 1 - x);
    return out;
}

} // namespace

template <typename T>
BasicTensor<T> augment(const BasicTensor<T>& patch, int code) {
    if (code < 0 || code > 7)
        throw ArgumentError("augment: code must be in 0..7, got " + std::to_string(code));
    BasicTensor<T> out = patch;
    for (int r = 0; r < (code & 3); ++r)
        out = rotate_ccw(out);
    if (code & 4)
        out = flip_horizontal(out);
    return out;
}

int compose_augment(int first, int second) {
    if (first < 0 || first > 7 || second < 0 || second > 7)
        throw ArgumentError("compose_augment: codes must be in 0..7");
    // F^f2 R^r2 F^f1 R^r1 = F^(f1^f2) R^(r1 + (-1)^f1 r2), using F R F = R^-1.
    const int r1 = first & 3, f1 = first >> 2;
    const int r2 = second & 3, f2 = second >> 2;
    const int r = ((r1 + (f1 ? -r2 : r2)) % 4 + 4) % 4;
    return r + 4 * (f1 ^ f2);
}

Tensor modcrop(const Tensor& img, int scale) {
    if (scale < 1)
        throw ArgumentError("modcrop: scale must be positive");
    const int h = img.h() - img.h() % scale;
    const int w = img.w() - img.w() % scale;
    if (h < 1 || w < 1)
        throw ShapeError("modcrop: image " + img.shape().str() + " is smaller than scale");
    if (h == img.h() && w == img.w())
        return img;
    Tensor out(Shape{img.n(), img.c(), h, w});
    for (int b = 0; b < img.n(); ++b)
        for (int c = 0; c < img.c(); ++c)
            for (int y = 0; y < h; ++y)
                std::copy_n(&img(b, c, y, 0), w, &out(b, c, y, 0));
    return out;
}

PairSet make_pairs(const std::vector<Tensor>& hr_images, const std::vector<std::string>& ids,
                   const DatasetSpec& spec) {
    if (spec.scale < 2 || spec.scale > 4)
        throw ConfigError("dataset scale must be 2, 3 or 4");
    if (spec.patch_size % spec.scale != 0)
        throw ConfigError("patch size " + std::to_string(spec.patch_size) + " is not divisible by scale " +
                          std::to_string(spec.scale));
    if (ids.size() != hr_images.size())
        throw ArgumentError("make_pairs: one id per image required");
    PairSet set;
    const int codes = spec.augment ? 8 : 1;
    for (std::size_t i = 0; i < hr_images.size(); ++i) {
        auto crops = crop_patches(hr_images[i], spec.patch_size, spec.patch_stride);
        for (auto& w : crops.warnings)
            set.warnings.push_back(ids[i] + ": " + w);
        for (std::size_t p = 0; p < crops.patches.size(); ++p) {
            for (int code = 0; code < codes; ++code) {
                ImageSample s;
                s.hr = augment(crops.patches[p], code);
                s.lr = bicubic_resize(s.hr, 1.0 / spec.scale);
                s.scale = spec.scale;
                s.source_id = ids[i] + "@" + std::to_string(crops.origins[p].y) + "," +
                              std::to_string(crops.origins[p].x) + "#" + std::to_string(code);
                set.samples.push_back(std::move(s));
            }
        }
    }
    if (spec.shuffle) {
        std::mt19937_64 rng(spec.seed);
        std::shuffle(set.samples.begin(), set.samples.end(), rng);
    }
    return set;
}

PairSet make_pairs(const DatasetSpec& spec) {
    std::vector<Tensor> images;
    for (const auto& path : spec.image_paths)
        images.push_back(load_image(path, spec.channels));
    return make_pairs(images, spec.image_paths, spec);
}

template BasicTensor<float> augment<float>(const BasicTensor<float>&, int);
template BasicTensor<double> augment<double>(const BasicTensor<double>&, int);

} // namespace dban
