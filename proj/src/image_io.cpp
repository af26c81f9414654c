#include "vst/image_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "vst/errors.hpp"

namespace vst {

namespace {

constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

std::uint32_t be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
           std::uint32_t(p[3]);
}

std::vector<std::uint8_t> zlib_inflate(const std::vector<std::uint8_t>& in, size_t expected,
                                       const std::string& path) {
    std::vector<std::uint8_t> out(expected);
    uLongf out_len = static_cast<uLongf>(expected);
    const int rc = uncompress(out.data(), &out_len, in.data(), static_cast<uLong>(in.size()));
    if (rc != Z_OK || out_len != expected)
        throw IoError("PNG inflate failed in " + path);
    return out;
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

Image decode_png(const std::vector<std::uint8_t>& bytes, const std::string& path) {
    if (bytes.size() < 8 + 25 || std::memcmp(bytes.data(), kPngSig, 8) != 0)
        throw IoError("not a PNG file: " + path);
    size_t pos = 8;
    Image img;
    int bit_depth = 0, color_type = -1;
    std::vector<std::uint8_t> idat;
    bool saw_iend = false;
    while (pos + 8 <= bytes.size() && !saw_iend) {
        const std::uint32_t len = be32(&bytes[pos]);
        if (pos + 12 + len > bytes.size()) throw IoError("truncated PNG chunk in " + path);
        const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
        const std::uint8_t* data = &bytes[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw IoError("bad IHDR in " + path);
            img.w = static_cast<int>(be32(data));
            img.h = static_cast<int>(be32(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0) throw IoError("interlaced PNG unsupported: " + path);
            if (bit_depth != 8)
                throw IoError("unsupported PNG bit depth " + std::to_string(bit_depth) + " in " +
                              path);
            if (color_type == 0)
                img.channels = 1;
            else if (color_type == 2)
                img.channels = 3;
            else
                throw IoError("unsupported PNG color type " + std::to_string(color_type) +
                              " in " + path + " (need 8-bit gray or RGB)");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        pos += 12 + len;
    }
    if (img.w <= 0 || img.h <= 0 || idat.empty())
        throw IoError("missing PNG image data in " + path);

    const size_t row_bytes = static_cast<size_t>(img.w) * img.channels;
    std::vector<std::uint8_t> raw =
        zlib_inflate(idat, (row_bytes + 1) * static_cast<size_t>(img.h), path);
    img.pixels.assign(row_bytes * static_cast<size_t>(img.h), 0);
    const int bpp = img.channels;
    for (int y = 0; y < img.h; ++y) {
        const std::uint8_t filter = raw[(row_bytes + 1) * static_cast<size_t>(y)];
        const std::uint8_t* src = &raw[(row_bytes + 1) * static_cast<size_t>(y) + 1];
        std::uint8_t* dst = &img.pixels[row_bytes * static_cast<size_t>(y)];
        const std::uint8_t* up = y > 0 ? dst - row_bytes : nullptr;
        for (size_t x = 0; x < row_bytes; ++x) {
            const int left = x >= static_cast<size_t>(bpp) ? dst[x - bpp] : 0;
            const int above = up ? up[x] : 0;
            const int upleft = (up && x >= static_cast<size_t>(bpp)) ? up[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += left; break;
                case 2: v += above; break;
                case 3: v += (left + above) / 2; break;
                case 4: v += paeth(left, above, upleft); break;
                default: throw IoError("bad PNG filter type in " + path);
            }
            dst[x] = static_cast<std::uint8_t>(v & 0xff);
        }
    }
    return img;
}

// P5 (gray) / P6 (RGB) with maxval <= 255.
Image decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& path) {
    size_t pos = 0;
    const auto next_token = [&]() -> std::string {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        std::string tok;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) tok += static_cast<char>(bytes[pos++]);
        return tok;
    };
    const std::string magic = next_token();
    Image img;
    if (magic == "P5")
        img.channels = 1;
    else if (magic == "P6")
        img.channels = 3;
    else
        throw IoError("unsupported PNM magic '" + magic + "' in " + path + " (need P5 or P6)");
    try {
        img.w = std::stoi(next_token());
        img.h = std::stoi(next_token());
        const int maxval = std::stoi(next_token());
        if (maxval <= 0 || maxval > 255)
            throw IoError("unsupported PNM maxval in " + path + " (need 8-bit)");
    } catch (const std::invalid_argument&) {
        throw IoError("bad PNM header in " + path);
    }
    ++pos;  // single whitespace after maxval
    const size_t need = static_cast<size_t>(img.w) * img.h * img.channels;
    if (bytes.size() < pos + need) throw IoError("truncated PNM data in " + path);
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
    return img;
}

void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& data) {
    append_be32(out, static_cast<std::uint32_t>(data.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc = crc32(crc32(0L, Z_NULL, 0), out.data() + start,
                            static_cast<uInt>(out.size() - start));
    append_be32(out, static_cast<std::uint32_t>(crc));
}

void write_png(const std::string& path, const std::uint8_t* data, int h, int w, int channels) {
    const size_t row_bytes = static_cast<size_t>(w) * channels;
    std::vector<std::uint8_t> raw((row_bytes + 1) * static_cast<size_t>(h));
    for (int y = 0; y < h; ++y) {
        raw[(row_bytes + 1) * static_cast<size_t>(y)] = 0;  // filter: none
        std::memcpy(&raw[(row_bytes + 1) * static_cast<size_t>(y) + 1],
                    data + row_bytes * static_cast<size_t>(y), row_bytes);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_len);
    if (compress(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size())) != Z_OK)
        throw IoError("PNG deflate failed for " + path);
    comp.resize(comp_len);

    std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);
    std::vector<std::uint8_t> ihdr;
    append_be32(ihdr, static_cast<std::uint32_t>(w));
    append_be32(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);                                        // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);                    // color type
    ihdr.push_back(0), ihdr.push_back(0), ihdr.push_back(0);  // compression/filter/interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", comp);
    append_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open image for writing: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write for image: " + path);
}

}  // namespace

Image read_image(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0)
        return decode_png(bytes, path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'))
        return decode_pnm(bytes, path);
    throw IoError("unsupported raster format in " + path + " (need PNG or binary PNM)");
}

void write_png_gray(const std::string& path, const std::uint8_t* data, int h, int w) {
    write_png(path, data, h, w, 1);
}

void write_png_rgb(const std::string& path, const std::uint8_t* data, int h, int w) {
    write_png(path, data, h, w, 3);
}

}  // namespace vst
