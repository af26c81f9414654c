#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "vst/rng.hpp"
#include "vst/tensor.hpp"

namespace vst {

struct ManifestRecord {
    std::string image_path;
    std::string mask_path;
    std::string depth_path;  // empty when absent
};

// One record per line, tab-separated paths (image, mask[, depth]),
// `#` comment lines, UTF-8. Every referenced file must exist.
struct Manifest {
    std::vector<ManifestRecord> records;
    std::string tag;
};

Manifest load_manifest(const std::string& path, const std::string& tag = "");

struct DatasetSample {
    Tensor<float> image;        // h×w×3 in [0,1]
    Tensor<float> depth;        // h×w×3 in [0,1], undefined when absent
    Tensor<float> gt_mask;      // h×w in {0,1}
    Tensor<float> gt_boundary;  // h×w in {0,1}, derived from gt_mask

    bool has_depth() const { return depth.defined(); }
};

// Loads and normalizes one record: image scaled to [0,1], depth min-max
// normalized then duplicated to three channels (constant depth maps
// normalize to all zeros), mask binarized at 0.5.
DatasetSample load_sample(const ManifestRecord& record);

// 3×3 Sobel gradient magnitude over a binary mask with replicate border
// handling; any nonzero response marks a boundary pixel.
template <typename T>
Tensor<T> sobel_binary(const Tensor<T>& mask) {
    if (mask.ndim() != 2) throw ShapeError("sobel boundary: expected h×w mask");
    const int h = mask.dim(0), w = mask.dim(1);
    const auto px = [&](int y, int x) {
        y = std::clamp(y, 0, h - 1);
        x = std::clamp(x, 0, w - 1);
        return mask.at(y, x);
    };
    Tensor<T> out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const T gx = -px(y - 1, x - 1) + px(y - 1, x + 1) - T(2) * px(y, x - 1) +
                         T(2) * px(y, x + 1) - px(y + 1, x - 1) + px(y + 1, x + 1);
            const T gy = -px(y - 1, x - 1) - T(2) * px(y - 1, x) - px(y - 1, x + 1) +
                         px(y + 1, x - 1) + T(2) * px(y + 1, x) + px(y + 1, x + 1);
            out.at(y, x) = gx * gx + gy * gy > T(0) ? T(1) : T(0);
        }
    return out;
}

inline Tensor<float> sobel_boundary(const Tensor<float>& mask) { return sobel_binary(mask); }

// Bilinear resize with the align-corners-false convention: output pixel
// (i,j) samples source coordinate ((i+0.5)*h/oh - 0.5, (j+0.5)*w/ow - 0.5),
// clamped to the source rectangle. Works on h×w and h×w×c tensors.
Tensor<float> resize_bilinear(const Tensor<float>& src, int oh, int ow);

struct ModelInput {
    Tensor<float> image;        // crop×crop×3
    Tensor<float> depth;        // crop×crop×3 or undefined
    Tensor<float> gt_mask;      // crop×crop
    Tensor<float> gt_boundary;  // crop×crop, recomputed after resize/crop
};

// Resize to resize_to², then crop to crop_to². Train mode draws, in
// this order, crop row offset, crop column offset, and (when flipping
// is enabled) one flip coin; eval mode center-crops deterministically.
// All geometric transforms are applied jointly to image, depth, mask.
ModelInput preprocess(const DatasetSample& sample, int resize_to, int crop_to, bool train,
                      bool flip_enabled, Rng& rng);

}  // namespace vst
