#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "vst/tape.hpp"
#include "vst/tensor.hpp"

namespace vst {

// Overlapping patch split: k×k windows, s pixels of overlap between
// neighbours (stride k-s), p zero-padding on every border.
struct SplitSpec {
    int k = 1;
    int s = 0;
    int p = 0;

    void validate() const {
        if (k < 1) throw ConfigError("split spec: k must be >= 1, got " + std::to_string(k));
        if (s < 0 || s > k - 1)
            throw ConfigError("split spec: need 0 <= s <= k-1, got k=" + std::to_string(k) +
                              " s=" + std::to_string(s));
        if (p < 0) throw ConfigError("split spec: p must be >= 0, got " + std::to_string(p));
    }

    int stride() const { return k - s; }

    bool operator==(const SplitSpec&) const = default;
};

inline std::string spec_str(const SplitSpec& spec) {
    return "(k=" + std::to_string(spec.k) + ",s=" + std::to_string(spec.s) +
           ",p=" + std::to_string(spec.p) + ")";
}

// Token grid after splitting an h×w image.
inline std::pair<int, int> output_len(int h, int w, const SplitSpec& spec) {
    spec.validate();
    if (spec.stride() < 1)
        throw ConfigError("split spec " + spec_str(spec) + ": stride k-s must be >= 1");
    if (h + 2 * spec.p < spec.k || w + 2 * spec.p < spec.k)
        throw ConfigError("split spec " + spec_str(spec) + ": window larger than padded image " +
                          std::to_string(h) + "x" + std::to_string(w));
    const int ho = (h + 2 * spec.p - spec.k) / spec.stride() + 1;
    const int wo = (w + 2 * spec.p - spec.k) / spec.stride() + 1;
    return {ho, wo};
}

// Token sequence with its 2-d grid; tokens row i corresponds to grid
// position (i / grid_w, i % grid_w).
template <typename T>
struct TokenSeq {
    Tensor<T> tokens;  // (grid_h*grid_w) × dim
    int grid_h = 0;
    int grid_w = 0;

    int len() const { return grid_h * grid_w; }
    int dim() const { return tokens.dim(1); }

    void check() const {
        if (tokens.ndim() != 2 || tokens.dim(0) != grid_h * grid_w)
            throw ShapeError("token sequence " + shape_str(tokens.shape()) +
                             " does not match grid " + std::to_string(grid_h) + "x" +
                             std::to_string(grid_w));
    }
};

namespace detail {

// Patch element (dy,dx,ch) of token (gy,gx) maps to padded-image pixel
// (gy*stride+dy, gx*stride+dx); flattening order within a token is
// (row, column, channel).
template <typename T>
void split_gather(const T* img, T* tok, int h, int w, int c, const SplitSpec& spec, int ho,
                  int wo) {
    const int stride = spec.stride();
    for (int gy = 0; gy < ho; ++gy) {
        for (int gx = 0; gx < wo; ++gx) {
            T* trow = tok + (static_cast<size_t>(gy) * wo + gx) * spec.k * spec.k * c;
            for (int dy = 0; dy < spec.k; ++dy) {
                const int y = gy * stride + dy - spec.p;
                for (int dx = 0; dx < spec.k; ++dx) {
                    const int x = gx * stride + dx - spec.p;
                    T* dst = trow + (static_cast<size_t>(dy) * spec.k + dx) * c;
                    if (y < 0 || y >= h || x < 0 || x >= w) {
                        for (int ch = 0; ch < c; ++ch) dst[ch] = T(0);
                    } else {
                        const T* src = img + (static_cast<size_t>(y) * w + x) * c;
                        for (int ch = 0; ch < c; ++ch) dst[ch] = src[ch];
                    }
                }
            }
        }
    }
}

// Adjoint of split_gather: adds each token's patch into the image,
// overlaps summing, padding border dropped. `img` must be zeroed.
template <typename T>
void split_scatter(const T* tok, T* img, int h, int w, int c, const SplitSpec& spec, int ho,
                   int wo) {
    const int stride = spec.stride();
    for (int gy = 0; gy < ho; ++gy) {
        for (int gx = 0; gx < wo; ++gx) {
            const T* trow = tok + (static_cast<size_t>(gy) * wo + gx) * spec.k * spec.k * c;
            for (int dy = 0; dy < spec.k; ++dy) {
                const int y = gy * stride + dy - spec.p;
                if (y < 0 || y >= h) continue;
                for (int dx = 0; dx < spec.k; ++dx) {
                    const int x = gx * stride + dx - spec.p;
                    if (x < 0 || x >= w) continue;
                    const T* src = trow + (static_cast<size_t>(dy) * spec.k + dx) * c;
                    T* dst = img + (static_cast<size_t>(y) * w + x) * c;
                    for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
                }
            }
        }
    }
}

}  // namespace detail

// Unfold an h×w×c image into overlapping k×k patches.
template <typename T>
TokenSeq<T> soft_split(Tape<T>& tape, const Tensor<T>& img, const SplitSpec& spec) {
    if (img.ndim() != 3)
        throw ShapeError("soft_split: expected h×w×c image, got " + shape_str(img.shape()));
    const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
    const auto [ho, wo] = output_len(h, w, spec);
    Tensor<T> tok({ho * wo, c * spec.k * spec.k});
    detail::split_gather(img.data(), tok.data(), h, w, c, spec, ho, wo);
    tape.record_custom(tok, {&img},
                       [h, w, c, spec, ho, wo](const Tensor<T>& g,
                                               const typename Tape<T>::AddGrad& add) {
                           Tensor<T> gi({h, w, c});
                           detail::split_scatter(g.data(), gi.data(), h, w, c, spec, ho, wo);
                           add(0, gi);
                       });
    return {tok, ho, wo};
}

// Exact adjoint of soft_split: each token's patch is added back onto the
// target canvas, overlapping contributions sum, padding is cropped.
template <typename T>
Tensor<T> fold(Tape<T>& tape, const TokenSeq<T>& tok, const SplitSpec& spec, int target_h,
               int target_w) {
    tok.check();
    const auto [ho, wo] = output_len(target_h, target_w, spec);
    if (ho != tok.grid_h || wo != tok.grid_w)
        throw ConfigError("fold: target " + std::to_string(target_h) + "x" +
                          std::to_string(target_w) + " with spec " + spec_str(spec) +
                          " yields grid " + std::to_string(ho) + "x" + std::to_string(wo) +
                          ", tokens have " + std::to_string(tok.grid_h) + "x" +
                          std::to_string(tok.grid_w));
    if (tok.dim() % (spec.k * spec.k) != 0)
        throw ShapeError("fold: token dim " + std::to_string(tok.dim()) +
                         " is not a multiple of k^2=" + std::to_string(spec.k * spec.k));
    const int c = tok.dim() / (spec.k * spec.k);
    Tensor<T> img({target_h, target_w, c});
    detail::split_scatter(tok.tokens.data(), img.data(), target_h, target_w, c, spec, ho, wo);
    const Tensor<T>& tt = tok.tokens;
    const int gh = ho, gw = wo;
    tape.record_custom(img, {&tt},
                       [target_h, target_w, c, spec, gh, gw](
                           const Tensor<T>& g, const typename Tape<T>::AddGrad& add) {
                           Tensor<T> gt({gh * gw, c * spec.k * spec.k});
                           detail::split_gather(g.data(), gt.data(), target_h, target_w, c, spec,
                                                gh, gw);
                           add(0, gt);
                       });
    return img;
}

// One tokens-to-token step: transform the sequence with the given layer,
// view it as its 2-d grid, and soft split to the next (coarser) grid.
template <typename T, typename LayerFn>
TokenSeq<T> t2t_module(Tape<T>& tape, const TokenSeq<T>& tok, LayerFn&& layer,
                       const SplitSpec& spec) {
    tok.check();
    Tensor<T> transformed = layer(tape, tok.tokens);
    Tensor<T> img = tape.reshape(transformed, {tok.grid_h, tok.grid_w, transformed.dim(1)});
    return soft_split(tape, img, spec);
}

// Reverse tokens-to-token upsampling: project d→c, expand c→c·k², fold
// the sub-tokens onto the finer target grid, and read the result back as
// a token sequence of length target_h*target_w.
template <typename T>
struct Rt2tParams {
    Tensor<T> proj_in_w, proj_in_b;    // d → c
    Tensor<T> expand_w, expand_b;      // c → c·k²
};

template <typename T>
TokenSeq<T> rt2t(Tape<T>& tape, const TokenSeq<T>& tok, const SplitSpec& spec, int target_h,
                 int target_w, const Rt2tParams<T>& params) {
    tok.check();
    Tensor<T> low = tape.linear(tok.tokens, params.proj_in_w, &params.proj_in_b);
    Tensor<T> expanded = tape.linear(low, params.expand_w, &params.expand_b);
    TokenSeq<T> sub{expanded, tok.grid_h, tok.grid_w};
    Tensor<T> img = fold(tape, sub, spec, target_h, target_w);
    const int c = img.dim(2);
    Tensor<T> out = tape.reshape(img, {target_h * target_w, c});
    return {out, target_h, target_w};
}

// Deterministic 2-d sinusoidal position embedding: the first d/2
// channels encode the row index, the last d/2 the column index, each
// half with the standard sin/cos frequency ladder.
template <typename T>
Tensor<T> sinusoidal_pos_embed(int grid_h, int grid_w, int d) {
    if (d % 4 != 0)
        throw ConfigError("position embedding dim must be divisible by 4, got " +
                          std::to_string(d));
    const int half = d / 2;
    Tensor<T> out({grid_h * grid_w, d});
    const auto fill_half = [&](int base, auto pos_of) {
        for (int r = 0; r < grid_h; ++r) {
            for (int cidx = 0; cidx < grid_w; ++cidx) {
                const int row = r * grid_w + cidx;
                const double pos = static_cast<double>(pos_of(r, cidx));
                for (int i = 0; i < half / 2; ++i) {
                    const double freq =
                        std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(half));
                    out.at(row, base + 2 * i) = static_cast<T>(std::sin(pos * freq));
                    out.at(row, base + 2 * i + 1) = static_cast<T>(std::cos(pos * freq));
                }
            }
        }
    };
    fill_half(0, [](int r, int) { return r; });
    fill_half(half, [](int, int c) { return c; });
    return out;
}

}  // namespace vst
