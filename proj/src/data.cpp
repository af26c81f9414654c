#include "vst/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "vst/errors.hpp"
#include "vst/image_io.hpp"

namespace vst {

namespace {

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

Tensor<float> to_gray(const Image& img) {
    Tensor<float> out({img.h, img.w});
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            if (img.channels == 1) {
                out.at(y, x) = img.at(y, x, 0) / 255.0f;
            } else {
                float acc = 0;
                for (int ch = 0; ch < img.channels; ++ch) acc += img.at(y, x, ch);
                out.at(y, x) = acc / (255.0f * img.channels);
            }
        }
    return out;
}

Tensor<float> to_rgb(const Image& img) {
    Tensor<float> out({img.h, img.w, 3});
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                out.at(y, x, ch) = img.at(y, x, img.channels == 1 ? 0 : ch) / 255.0f;
    return out;
}

Tensor<float> gray_to_3ch(const Tensor<float>& g) {
    Tensor<float> out({g.dim(0), g.dim(1), 3});
    for (int y = 0; y < g.dim(0); ++y)
        for (int x = 0; x < g.dim(1); ++x)
            for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = g.at(y, x);
    return out;
}

Tensor<float> crop(const Tensor<float>& t, int y0, int x0, int size) {
    const int c = t.ndim() == 3 ? t.dim(2) : 1;
    Tensor<float> out(t.ndim() == 3 ? Shape{size, size, c} : Shape{size, size});
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int ch = 0; ch < c; ++ch) {
                const float v = t.ndim() == 3 ? t.at(y0 + y, x0 + x, ch) : t.at(y0 + y, x0 + x);
                if (t.ndim() == 3)
                    out.at(y, x, ch) = v;
                else
                    out.at(y, x) = v;
            }
    return out;
}

Tensor<float> hflip(const Tensor<float>& t) {
    const int h = t.dim(0), w = t.dim(1);
    const int c = t.ndim() == 3 ? t.dim(2) : 1;
    Tensor<float> out(t.shape());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                if (t.ndim() == 3)
                    out.at(y, x, ch) = t.at(y, w - 1 - x, ch);
                else
                    out.at(y, x) = t.at(y, w - 1 - x);
            }
    return out;
}

Tensor<float> binarize(const Tensor<float>& t, float threshold) {
    Tensor<float> out(t.shape());
    for (std::int64_t i = 0; i < t.numel(); ++i) out.at(i) = t.at(i) >= threshold ? 1.0f : 0.0f;
    return out;
}

}  // namespace

Manifest load_manifest(const std::string& path, const std::string& tag) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    Manifest m;
    m.tag = tag;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        size_t start = 0;
        while (true) {
            const size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() < 2 || fields.size() > 3)
            throw IoError("manifest " + path + " line " + std::to_string(line_no) +
                          ": expected 2 or 3 tab-separated paths, got " +
                          std::to_string(fields.size()));
        ManifestRecord rec;
        rec.image_path = fields[0];
        rec.mask_path = fields[1];
        if (fields.size() == 3) rec.depth_path = fields[2];
        for (const std::string& p : {rec.image_path, rec.mask_path, rec.depth_path})
            if (!p.empty() && !std::filesystem::exists(p))
                throw IoError("manifest " + path + " line " + std::to_string(line_no) +
                              ": file does not exist: " + p);
        m.records.push_back(std::move(rec));
    }
    return m;
}

DatasetSample load_sample(const ManifestRecord& record) {
    DatasetSample s;
    const Image img = read_image(record.image_path);
    s.image = to_rgb(img);

    const Image mask_img = read_image(record.mask_path);
    if (mask_img.h != img.h || mask_img.w != img.w)
        throw IoError("mask size " + std::to_string(mask_img.h) + "x" +
                      std::to_string(mask_img.w) + " does not match image in " +
                      record.mask_path);
    s.gt_mask = binarize(to_gray(mask_img), 0.5f);

    if (!record.depth_path.empty()) {
        const Image depth_img = read_image(record.depth_path);
        if (depth_img.h != img.h || depth_img.w != img.w)
            throw IoError("depth size does not match image in " + record.depth_path);
        Tensor<float> d = to_gray(depth_img);
        float lo = d.at(0), hi = d.at(0);
        for (std::int64_t i = 0; i < d.numel(); ++i) {
            lo = std::min(lo, d.at(i));
            hi = std::max(hi, d.at(i));
        }
        if (hi > lo) {
            for (std::int64_t i = 0; i < d.numel(); ++i) d.at(i) = (d.at(i) - lo) / (hi - lo);
        } else {
            for (std::int64_t i = 0; i < d.numel(); ++i) d.at(i) = 0.0f;
        }
        s.depth = gray_to_3ch(d);
    }

    s.gt_boundary = sobel_boundary(s.gt_mask);
    return s;
}

Tensor<float> resize_bilinear(const Tensor<float>& src, int oh, int ow) {
    if (src.ndim() != 2 && src.ndim() != 3)
        throw ShapeError("resize: expected h×w or h×w×c, got " + shape_str(src.shape()));
    const int h = src.dim(0), w = src.dim(1);
    const int c = src.ndim() == 3 ? src.dim(2) : 1;
    Tensor<float> out(src.ndim() == 3 ? Shape{oh, ow, c} : Shape{oh, ow});
    const float sy = static_cast<float>(h) / oh;
    const float sx = static_cast<float>(w) / ow;
    for (int i = 0; i < oh; ++i) {
        const float fy = std::clamp((i + 0.5f) * sy - 0.5f, 0.0f, static_cast<float>(h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, h - 1);
        const float wy = fy - y0;
        for (int j = 0; j < ow; ++j) {
            const float fx = std::clamp((j + 0.5f) * sx - 0.5f, 0.0f, static_cast<float>(w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, w - 1);
            const float wx = fx - x0;
            for (int ch = 0; ch < c; ++ch) {
                const auto pval = [&](int y, int x) {
                    return src.ndim() == 3 ? src.at(y, x, ch) : src.at(y, x);
                };
                const float top = pval(y0, x0) * (1 - wx) + pval(y0, x1) * wx;
                const float bot = pval(y1, x0) * (1 - wx) + pval(y1, x1) * wx;
                const float v = top * (1 - wy) + bot * wy;
                if (src.ndim() == 3)
                    out.at(i, j, ch) = v;
                else
                    out.at(i, j) = v;
            }
        }
    }
    return out;
}

ModelInput preprocess(const DatasetSample& sample, int resize_to, int crop_to, bool train,
                      bool flip_enabled, Rng& rng) {
    if (crop_to > resize_to)
        throw ConfigError("preprocess: crop " + std::to_string(crop_to) + " exceeds resize " +
                          std::to_string(resize_to));
    Tensor<float> image = resize_bilinear(sample.image, resize_to, resize_to);
    Tensor<float> depth;
    if (sample.has_depth()) depth = resize_bilinear(sample.depth, resize_to, resize_to);
    Tensor<float> mask = binarize(resize_bilinear(sample.gt_mask, resize_to, resize_to), 0.5f);

    int cy = (resize_to - crop_to) / 2;
    int cx = cy;
    bool flip = false;
    if (train) {
        cy = rng.next_int(resize_to - crop_to + 1);
        cx = rng.next_int(resize_to - crop_to + 1);
        if (flip_enabled) flip = rng.next_coin();
    }

    ModelInput input;
    input.image = crop(image, cy, cx, crop_to);
    if (depth.defined()) input.depth = crop(depth, cy, cx, crop_to);
    input.gt_mask = crop(mask, cy, cx, crop_to);
    if (flip) {
        input.image = hflip(input.image);
        if (input.depth.defined()) input.depth = hflip(input.depth);
        input.gt_mask = hflip(input.gt_mask);
    }
    input.gt_boundary = sobel_boundary(input.gt_mask);
    return input;
}

}  // namespace vst
