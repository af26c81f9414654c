#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vst {

// 8-bit raster image, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Image {
    int h = 0;
    int w = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(int y, int x, int ch) const {
        return pixels[(static_cast<size_t>(y) * w + x) * channels + ch];
    }
};

// Reads a PNG (color type 0 or 2, 8-bit, non-interlaced) or a binary PNM
// (P5/P6, maxval <= 255). Dispatches on the file's magic bytes. Throws
// IoError naming the path on any problem.
Image read_image(const std::string& path);

// 8-bit grayscale PNG writer (filter 0, zlib-compressed).
void write_png_gray(const std::string& path, const std::uint8_t* data, int h, int w);

// 8-bit RGB PNG writer, used by fixture generators.
void write_png_rgb(const std::string& path, const std::uint8_t* data, int h, int w);

}  // namespace vst
