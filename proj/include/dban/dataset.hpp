#pragma once

// HR patch cropping, dihedral augmentation and LR/HR pair generation.

#include "dban/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dban {

struct ImageSample {
    Tensor hr; // (1, C, H, W) in [0, 1]
    Tensor lr; // bicubic_resize(hr, 1/scale)
    int scale = 2;
    std::string source_id;
};

struct PatchOrigin {
    int y = 0;
    int x = 0;
    bool operator==(const PatchOrigin&) const = default;
};

/// Window start positions along one axis. The trailing window snaps to the
/// edge so the whole extent is covered.
std::vector<int> patch_positions(int extent, int patch, int stride, int offset = 0);

struct CropResult {
    std::vector<Tensor> patches;
    std::vector<PatchOrigin> origins;
    std::vector<std::string> warnings;
};

/// Regular-grid crops of `img` (1, C, H, W). With a seed, the grid origin is
/// jittered by a seeded offset in [0, min(stride - 1, extent - patch)].
CropResult crop_patches(const Tensor& img, int patch_size, int stride,
                        std::optional<std::uint64_t> seed = std::nullopt);

/// code = rotation + 4 * flip: rotation in quarter turns counter-clockwise
/// (0..3), followed by a horizontal flip when flip == 1. Pure pixel permutation.
template <typename T>
BasicTensor<T> augment(const BasicTensor<T>& patch, int code);

/// The code c with augment(augment(p, a), b) == augment(p, c).
int compose_augment(int first, int second);

struct DatasetSpec {
    std::vector<std::string> image_paths;
    int patch_size = 96;
    int patch_stride = 96;
    int scale = 2;
    bool augment = true; // all 8 dihedral variants of every patch
    std::uint64_t seed = 0;
    int channels = 3;
    bool shuffle = true;
};

struct PairSet {
    std::vector<ImageSample> samples;
    std::vector<std::string> warnings;
};

/// Builds pairs from in-memory HR images (ids label provenance).
PairSet make_pairs(const std::vector<Tensor>& hr_images, const std::vector<std::string>& ids,
                   const DatasetSpec& spec);

/// Loads every path in `spec.image_paths` and builds pairs.
PairSet make_pairs(const DatasetSpec& spec);

/// Crops H and W down to multiples of `scale` (top-left anchored).
Tensor modcrop(const Tensor& img, int scale);

} // namespace dban
