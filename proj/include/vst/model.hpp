#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vst/attention.hpp"
#include "vst/rng.hpp"
#include "vst/tape.hpp"
#include "vst/tensor.hpp"
#include "vst/token_ops.hpp"

namespace vst {

enum class Modality { kRgb, kRgbd };

inline std::string modality_str(Modality m) { return m == Modality::kRgb ? "rgb" : "rgbd"; }

// Every architectural knob of the saliency transformer. One struct
// instantiates both the full-size and toy models.
struct VstConfig {
    int input_h = 224;
    int input_w = 224;
    Modality modality = Modality::kRgb;
    int c = 64;   // low-level token dim
    int d = 384;  // model dim
    SplitSpec encoder_specs[3] = {{7, 3, 2}, {3, 1, 1}, {3, 1, 1}};
    SplitSpec decoder_specs[3] = {{3, 1, 1}, {3, 1, 1}, {7, 3, 3}};
    int layers_encoder = 14;
    int layers_convertor = 4;
    int layers_decoder3 = 4;
    int layers_decoder2 = 2;
    int layers_decoder1 = 2;
    int n_heads = 0;  // 0 resolves to d/64, at least 1
    int mlp_ratio_backbone = 3;
    int mlp_ratio_head = 4;
    std::uint64_t seed = 0;

    int heads() const {
        if (n_heads > 0) return n_heads;
        return d >= 64 ? d / 64 : 1;
    }

    void validate() const;
};

// Encoder/decoder grid sizes implied by the config.
struct GridPlan {
    int h4, w4;    // 1/4 scale
    int h8, w8;    // 1/8
    int h16, w16;  // 1/16
};

inline GridPlan grid_plan(const VstConfig& cfg) {
    GridPlan g{};
    auto [h4, w4] = output_len(cfg.input_h, cfg.input_w, cfg.encoder_specs[0]);
    auto [h8, w8] = output_len(h4, w4, cfg.encoder_specs[1]);
    auto [h16, w16] = output_len(h8, w8, cfg.encoder_specs[2]);
    g.h4 = h4, g.w4 = w4, g.h8 = h8, g.w8 = w8, g.h16 = h16, g.w16 = w16;
    return g;
}

inline void VstConfig::validate() const {
    if (input_h <= 0 || input_w <= 0 || input_h % 16 != 0 || input_w % 16 != 0)
        throw ConfigError("input size " + std::to_string(input_h) + "x" +
                          std::to_string(input_w) + " must be positive and divisible by 16");
    if (c <= 0 || d <= 0) throw ConfigError("token dims must be positive");
    if (d % 4 != 0) throw ConfigError("model dim must be divisible by 4 for position embedding");
    if (d % heads() != 0)
        throw ConfigError("model dim " + std::to_string(d) + " not divisible by head count " +
                          std::to_string(heads()));
    if (layers_encoder < 0 || layers_convertor < 0 || layers_decoder3 < 0 ||
        layers_decoder2 < 0 || layers_decoder1 < 0)
        throw ConfigError("layer counts must be non-negative");
    if (mlp_ratio_backbone < 1 || mlp_ratio_head < 1)
        throw ConfigError("mlp ratios must be >= 1");
    for (const auto& s : encoder_specs) s.validate();
    for (const auto& s : decoder_specs) s.validate();

    const GridPlan g = grid_plan(*this);
    if (g.h4 != input_h / 4 || g.w4 != input_w / 4 || g.h8 != input_h / 8 ||
        g.w8 != input_w / 8 || g.h16 != input_h / 16 || g.w16 != input_w / 16)
        throw ConfigError("encoder specs do not produce the 1/4, 1/8, 1/16 grid chain");
    // The decoder must climb 1/16 -> 1/8 -> 1/4 -> 1/1 exactly.
    const auto check_up = [&](const SplitSpec& spec, int th, int tw, int sh, int sw,
                              const char* what) {
        auto [oh, ow] = output_len(th, tw, spec);
        if (oh != sh || ow != sw)
            throw ConfigError(std::string("decoder spec ") + spec_str(spec) + " for " + what +
                              " maps target " + std::to_string(th) + "x" + std::to_string(tw) +
                              " to grid " + std::to_string(oh) + "x" + std::to_string(ow) +
                              ", expected " + std::to_string(sh) + "x" + std::to_string(sw));
    };
    check_up(decoder_specs[0], g.h8, g.w8, g.h16, g.w16, "1/16->1/8");
    check_up(decoder_specs[1], g.h4, g.w4, g.h8, g.w8, "1/8->1/4");
    check_up(decoder_specs[2], input_h, input_w, g.h4, g.w4, "1/4->full");
}

// ---------------------------------------------------------------------
// Parameter construction. The same walk over the architecture serves
// three purposes: allocating+initializing tensors, counting parameters,
// and producing the per-module ledger, so they can never disagree.
// ---------------------------------------------------------------------

enum class Init { kTruncNormal, kZeros, kOnes };

template <typename T>
class ParamBuilder {
  public:
    ParamBuilder(std::uint64_t seed, bool counting_only)
        : rng_(seed), counting_(counting_only) {}

    Tensor<T> make(const std::string& name, Shape shape, Init init) {
        const std::int64_t n = shape_numel(shape);
        defs_.emplace_back(name, n);
        total_ += n;
        if (counting_) return Tensor<T>();
        Tensor<T> t(shape);
        if (init == Init::kOnes) {
            std::fill(t.data(), t.data() + n, T(1));
        } else if (init == Init::kTruncNormal) {
            for (std::int64_t i = 0; i < n; ++i)
                t.at(i) = static_cast<T>(rng_.next_trunc_normal(0.02));
        }
        t.set_requires_grad(true);
        named_.emplace_back(name, t);
        return t;
    }

    std::int64_t total() const { return total_; }
    const std::vector<std::pair<std::string, std::int64_t>>& defs() const { return defs_; }
    std::vector<std::pair<std::string, Tensor<T>>> take_named() { return std::move(named_); }

  private:
    Rng rng_;
    bool counting_;
    std::int64_t total_ = 0;
    std::vector<std::pair<std::string, std::int64_t>> defs_;
    std::vector<std::pair<std::string, Tensor<T>>> named_;
};

template <typename T>
struct EncoderParams {
    Tensor<T> proj1_w, proj1_b;  // 3·k1² → c
    LayerParams<T> restruct1;    // dim c
    Tensor<T> proj2_w, proj2_b;  // c·k2² → c
    LayerParams<T> restruct2;    // dim c
    Tensor<T> proj3_w, proj3_b;  // c·k3² → c
    Tensor<T> embed_w, embed_b;  // c → d
    std::vector<LayerParams<T>> blocks;
};

template <typename T>
struct CmtBlockParams {
    CmtParams<T> cmt;
    LayerParams<T> tf_r, tf_d;
};

template <typename T>
struct FuseParams {
    Tensor<T> low_w, low_b;          // c → d on the low-level tokens
    Tensor<T> reduce_w, reduce_b;    // (c+d) → c after concatenation
    LayerParams<T> layer;            // dim c
    Tensor<T> recover_w, recover_b;  // c → d
};

template <typename T>
struct TaskHeadParams {
    PatchTaskParams<T> attn;
    Tensor<T> head_w, head_b;  // per-token scalar logit
};

template <typename T>
struct DecoderLevelParams {
    std::vector<LayerParams<T>> blocks;  // dim d, task tokens appended
    TaskHeadParams<T> aux_sal, aux_bnd;  // heads at this level's dim d
};

template <typename T>
struct VstParams {
    EncoderParams<T> encoder_rgb;
    EncoderParams<T> encoder_depth;  // rgbd only
    std::vector<LayerParams<T>> convertor_rgb;
    std::vector<CmtBlockParams<T>> convertor_rgbd;
    Tensor<T> convertor_fuse_w, convertor_fuse_b;  // 2d → d
    Tensor<T> task_saliency, task_boundary;        // 1×d
    DecoderLevelParams<T> level3, level2, level1;
    Rt2tParams<T> up_3to2, up_2to1;
    FuseParams<T> fuse2, fuse1;
    TaskHeadParams<T> final_sal, final_bnd;  // attn at d, head over c
    Rt2tParams<T> up_final_sal, up_final_bnd;
};

namespace detail {

template <typename T>
LayerNormParams<T> make_ln(ParamBuilder<T>& b, const std::string& prefix, int dim) {
    return {b.make(prefix + ".g", {dim}, Init::kOnes), b.make(prefix + ".b", {dim}, Init::kZeros)};
}

template <typename T>
AttnParams<T> make_attn(ParamBuilder<T>& b, const std::string& prefix, int dim, int heads) {
    AttnParams<T> p;
    p.w_q = b.make(prefix + ".wq", {dim, dim}, Init::kTruncNormal);
    p.w_k = b.make(prefix + ".wk", {dim, dim}, Init::kTruncNormal);
    p.w_v = b.make(prefix + ".wv", {dim, dim}, Init::kTruncNormal);
    p.w_o = b.make(prefix + ".wo", {dim, dim}, Init::kTruncNormal);
    p.n_heads = heads;
    return p;
}

template <typename T>
MlpParams<T> make_mlp(ParamBuilder<T>& b, const std::string& prefix, int dim, int ratio) {
    MlpParams<T> p;
    const int hidden = dim * ratio;
    p.w1 = b.make(prefix + ".w1", {dim, hidden}, Init::kTruncNormal);
    p.b1 = b.make(prefix + ".b1", {hidden}, Init::kZeros);
    p.w2 = b.make(prefix + ".w2", {hidden, dim}, Init::kTruncNormal);
    p.b2 = b.make(prefix + ".b2", {dim}, Init::kZeros);
    return p;
}

template <typename T>
LayerParams<T> make_layer(ParamBuilder<T>& b, const std::string& prefix, int dim, int ratio,
                          int heads) {
    LayerParams<T> p;
    p.ln1 = make_ln(b, prefix + ".ln1", dim);
    p.attn = make_attn(b, prefix + ".attn", dim, heads);
    p.ln2 = make_ln(b, prefix + ".ln2", dim);
    p.mlp = make_mlp(b, prefix + ".mlp", dim, ratio);
    return p;
}

template <typename T>
PatchTaskParams<T> make_ptattn(ParamBuilder<T>& b, const std::string& prefix, int dim) {
    PatchTaskParams<T> p;
    p.w_q = b.make(prefix + ".wq", {dim, dim}, Init::kTruncNormal);
    p.w_k = b.make(prefix + ".wk", {dim, dim}, Init::kTruncNormal);
    p.w_v = b.make(prefix + ".wv", {dim, dim}, Init::kTruncNormal);
    return p;
}

template <typename T>
Rt2tParams<T> make_rt2t(ParamBuilder<T>& b, const std::string& prefix, int d, int c, int k) {
    Rt2tParams<T> p;
    p.proj_in_w = b.make(prefix + ".in.w", {d, c}, Init::kTruncNormal);
    p.proj_in_b = b.make(prefix + ".in.b", {c}, Init::kZeros);
    p.expand_w = b.make(prefix + ".expand.w", {c, c * k * k}, Init::kTruncNormal);
    p.expand_b = b.make(prefix + ".expand.b", {c * k * k}, Init::kZeros);
    return p;
}

template <typename T>
EncoderParams<T> make_encoder(ParamBuilder<T>& b, const std::string& prefix,
                              const VstConfig& cfg) {
    EncoderParams<T> e;
    const int c = cfg.c, d = cfg.d;
    const int in1 = 3 * cfg.encoder_specs[0].k * cfg.encoder_specs[0].k;
    const int in2 = c * cfg.encoder_specs[1].k * cfg.encoder_specs[1].k;
    const int in3 = c * cfg.encoder_specs[2].k * cfg.encoder_specs[2].k;
    e.proj1_w = b.make(prefix + ".proj1.w", {in1, c}, Init::kTruncNormal);
    e.proj1_b = b.make(prefix + ".proj1.b", {c}, Init::kZeros);
    e.restruct1 = make_layer(b, prefix + ".restruct1", c, cfg.mlp_ratio_backbone, 1);
    e.proj2_w = b.make(prefix + ".proj2.w", {in2, c}, Init::kTruncNormal);
    e.proj2_b = b.make(prefix + ".proj2.b", {c}, Init::kZeros);
    e.restruct2 = make_layer(b, prefix + ".restruct2", c, cfg.mlp_ratio_backbone, 1);
    e.proj3_w = b.make(prefix + ".proj3.w", {in3, c}, Init::kTruncNormal);
    e.proj3_b = b.make(prefix + ".proj3.b", {c}, Init::kZeros);
    e.embed_w = b.make(prefix + ".embed.w", {c, d}, Init::kTruncNormal);
    e.embed_b = b.make(prefix + ".embed.b", {d}, Init::kZeros);
    for (int i = 0; i < cfg.layers_encoder; ++i)
        e.blocks.push_back(make_layer(b, prefix + ".block" + std::to_string(i), d,
                                      cfg.mlp_ratio_backbone, cfg.heads()));
    return e;
}

template <typename T>
CmtParams<T> make_cmt(ParamBuilder<T>& b, const std::string& prefix, const VstConfig& cfg) {
    CmtParams<T> p;
    const int d = cfg.d, heads = cfg.heads(), r = cfg.mlp_ratio_head;
    p.ln1_r = make_ln(b, prefix + ".ln1_r", d);
    p.ln1_d = make_ln(b, prefix + ".ln1_d", d);
    p.attn_r = make_attn(b, prefix + ".attn_r", d, heads);
    p.attn_d = make_attn(b, prefix + ".attn_d", d, heads);
    p.ln2_r = make_ln(b, prefix + ".ln2_r", d);
    p.ln2_d = make_ln(b, prefix + ".ln2_d", d);
    p.mlp_r = make_mlp(b, prefix + ".mlp_r", d, r);
    p.mlp_d = make_mlp(b, prefix + ".mlp_d", d, r);
    return p;
}

template <typename T>
FuseParams<T> make_fuse(ParamBuilder<T>& b, const std::string& prefix, const VstConfig& cfg) {
    FuseParams<T> f;
    const int c = cfg.c, d = cfg.d;
    f.low_w = b.make(prefix + ".low.w", {c, d}, Init::kTruncNormal);
    f.low_b = b.make(prefix + ".low.b", {d}, Init::kZeros);
    f.reduce_w = b.make(prefix + ".reduce.w", {c + d, c}, Init::kTruncNormal);
    f.reduce_b = b.make(prefix + ".reduce.b", {c}, Init::kZeros);
    f.layer = make_layer(b, prefix + ".layer", c, cfg.mlp_ratio_head, 1);
    f.recover_w = b.make(prefix + ".recover.w", {c, d}, Init::kTruncNormal);
    f.recover_b = b.make(prefix + ".recover.b", {d}, Init::kZeros);
    return f;
}

template <typename T>
TaskHeadParams<T> make_task_head(ParamBuilder<T>& b, const std::string& prefix, int attn_dim,
                                 int head_dim) {
    TaskHeadParams<T> h;
    h.attn = make_ptattn(b, prefix + ".attn", attn_dim);
    h.head_w = b.make(prefix + ".head.w", {head_dim, 1}, Init::kTruncNormal);
    h.head_b = b.make(prefix + ".head.b", {1}, Init::kZeros);
    return h;
}

template <typename T>
DecoderLevelParams<T> make_level(ParamBuilder<T>& b, const std::string& prefix, int n_blocks,
                                 const VstConfig& cfg) {
    DecoderLevelParams<T> lv;
    for (int i = 0; i < n_blocks; ++i)
        lv.blocks.push_back(make_layer(b, prefix + ".block" + std::to_string(i), cfg.d,
                                       cfg.mlp_ratio_head, cfg.heads()));
    lv.aux_sal = make_task_head(b, prefix + ".aux_sal", cfg.d, cfg.d);
    lv.aux_bnd = make_task_head(b, prefix + ".aux_bnd", cfg.d, cfg.d);
    return lv;
}

template <typename T>
VstParams<T> build_params(const VstConfig& cfg, ParamBuilder<T>& b) {
    VstParams<T> p;
    p.encoder_rgb = make_encoder(b, "encoder.rgb", cfg);
    if (cfg.modality == Modality::kRgbd) p.encoder_depth = make_encoder(b, "encoder.depth", cfg);

    if (cfg.modality == Modality::kRgb) {
        for (int i = 0; i < cfg.layers_convertor; ++i)
            p.convertor_rgb.push_back(make_layer(b, "convertor.block" + std::to_string(i), cfg.d,
                                                 cfg.mlp_ratio_head, cfg.heads()));
    } else {
        for (int i = 0; i < cfg.layers_convertor; ++i) {
            CmtBlockParams<T> blk;
            const std::string prefix = "convertor.block" + std::to_string(i);
            blk.cmt = make_cmt(b, prefix + ".cmt", cfg);
            blk.tf_r = make_layer(b, prefix + ".tf_r", cfg.d, cfg.mlp_ratio_head, cfg.heads());
            blk.tf_d = make_layer(b, prefix + ".tf_d", cfg.d, cfg.mlp_ratio_head, cfg.heads());
            p.convertor_rgbd.push_back(std::move(blk));
        }
        p.convertor_fuse_w = b.make("convertor.fuse.w", {2 * cfg.d, cfg.d}, Init::kTruncNormal);
        p.convertor_fuse_b = b.make("convertor.fuse.b", {cfg.d}, Init::kZeros);
    }

    p.task_saliency = b.make("decoder.task.saliency", {1, cfg.d}, Init::kTruncNormal);
    p.task_boundary = b.make("decoder.task.boundary", {1, cfg.d}, Init::kTruncNormal);
    p.level3 = make_level(b, "decoder.level3", cfg.layers_decoder3, cfg);
    p.up_3to2 = make_rt2t(b, "decoder.up32", cfg.d, cfg.c, cfg.decoder_specs[0].k);
    p.fuse2 = make_fuse(b, "decoder.fuse2", cfg);
    p.level2 = make_level(b, "decoder.level2", cfg.layers_decoder2, cfg);
    p.up_2to1 = make_rt2t(b, "decoder.up21", cfg.d, cfg.c, cfg.decoder_specs[1].k);
    p.fuse1 = make_fuse(b, "decoder.fuse1", cfg);
    p.level1 = make_level(b, "decoder.level1", cfg.layers_decoder1, cfg);
    p.final_sal = make_task_head(b, "decoder.final_sal", cfg.d, cfg.c);
    p.final_bnd = make_task_head(b, "decoder.final_bnd", cfg.d, cfg.c);
    p.up_final_sal = make_rt2t(b, "decoder.final_sal.up", cfg.d, cfg.c, cfg.decoder_specs[2].k);
    p.up_final_bnd = make_rt2t(b, "decoder.final_bnd.up", cfg.d, cfg.c, cfg.decoder_specs[2].k);
    return p;
}

}  // namespace detail

// Total scalar parameter count of the architecture; depends on the
// config only, never on seed or input contents.
inline std::int64_t count_params(const VstConfig& cfg) {
    cfg.validate();
    ParamBuilder<float> b(0, /*counting_only=*/true);
    detail::build_params(cfg, b);
    return b.total();
}

// Per-module subtotals for `inspect`, grouped by name prefix.
inline std::vector<std::pair<std::string, std::int64_t>> param_ledger(const VstConfig& cfg) {
    cfg.validate();
    ParamBuilder<float> b(0, /*counting_only=*/true);
    detail::build_params(cfg, b);
    std::vector<std::pair<std::string, std::int64_t>> groups;
    const auto group_of = [](const std::string& name) {
        size_t first = name.find('.');
        if (name.compare(0, 8, "encoder.") == 0) {
            size_t second = name.find('.', first + 1);
            return name.substr(0, second);
        }
        return name.substr(0, first);
    };
    for (const auto& [name, count] : b.defs()) {
        const std::string g = group_of(name);
        if (groups.empty() || groups.back().first != g)
            groups.emplace_back(g, 0);
        groups.back().second += count;
    }
    return groups;
}

// Final full-resolution predictions plus the per-level deep-supervision
// maps. Probability maps are sigmoid outputs in [0,1]; the pre-sigmoid
// logit maps ride along for the numerically safe training loss.
template <typename T>
struct SaliencyOutput {
    Tensor<T> saliency, boundary;                // H×W
    Tensor<T> saliency_logits, boundary_logits;  // H×W
    struct Aux {
        int level;  // 3 = 1/16 scale, 2 = 1/8, 1 = 1/4
        int grid_h, grid_w;
        Tensor<T> saliency, boundary;
        Tensor<T> saliency_logits, boundary_logits;
    };
    std::vector<Aux> aux;
};

template <typename T>
struct EncodeResult {
    TokenSeq<T> t1;  // c-dim, 1/4 grid
    TokenSeq<T> t2;  // c-dim, 1/8 grid
    TokenSeq<T> te;  // d-dim, 1/16 grid
};

template <typename T>
class VstModel {
  public:
    explicit VstModel(const VstConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        ParamBuilder<T> b(cfg_.seed, /*counting_only=*/false);
        params_ = detail::build_params(cfg_, b);
        named_ = b.take_named();
        for (size_t i = 0; i < named_.size(); ++i) index_[named_[i].first] = i;
    }

    const VstConfig& config() const { return cfg_; }
    const VstParams<T>& params() const { return params_; }
    std::vector<std::pair<std::string, Tensor<T>>>& named_params() { return named_; }
    const std::vector<std::pair<std::string, Tensor<T>>>& named_params() const { return named_; }

    Tensor<T>* find_param(const std::string& name) {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &named_[it->second].second;
    }

    std::int64_t param_count() const {
        std::int64_t n = 0;
        for (const auto& [name, t] : named_) n += t.numel();
        return n;
    }

    // Multi-level tokenization of one stream; see EncodeResult.
    EncodeResult<T> encode(Tape<T>& tape, const Tensor<T>& img,
                           const EncoderParams<T>& enc) const {
        if (img.ndim() != 3 || img.dim(0) != cfg_.input_h || img.dim(1) != cfg_.input_w ||
            img.dim(2) != 3)
            throw ConfigError("encode: expected " + std::to_string(cfg_.input_h) + "x" +
                              std::to_string(cfg_.input_w) + "x3 input, got " +
                              shape_str(img.shape()));
        TokenSeq<T> tok = soft_split(tape, img, cfg_.encoder_specs[0]);
        Tensor<T> x = tape.linear(tok.tokens, enc.proj1_w, &enc.proj1_b);
        Tensor<T> t1 = transformer_layer(tape, x, enc.restruct1);
        TokenSeq<T> t1_seq{t1, tok.grid_h, tok.grid_w};

        TokenSeq<T> tok2 = t2t_step(tape, t1_seq, cfg_.encoder_specs[1]);
        Tensor<T> x2 = tape.linear(tok2.tokens, enc.proj2_w, &enc.proj2_b);
        Tensor<T> t2 = transformer_layer(tape, x2, enc.restruct2);
        TokenSeq<T> t2_seq{t2, tok2.grid_h, tok2.grid_w};

        TokenSeq<T> tok3 = t2t_step(tape, t2_seq, cfg_.encoder_specs[2]);
        Tensor<T> t3 = tape.linear(tok3.tokens, enc.proj3_w, &enc.proj3_b);

        Tensor<T> e = tape.linear(t3, enc.embed_w, &enc.embed_b);
        Tensor<T> pos = sinusoidal_pos_embed<T>(tok3.grid_h, tok3.grid_w, cfg_.d);
        e = tape.add(e, pos);
        for (const auto& block : enc.blocks) e = transformer_layer(tape, e, block);
        return {t1_seq, t2_seq, {e, tok3.grid_h, tok3.grid_w}};
    }

    TokenSeq<T> convert_rgb(Tape<T>& tape, const TokenSeq<T>& te) const {
        Tensor<T> x = te.tokens;
        for (const auto& block : params_.convertor_rgb) x = transformer_layer(tape, x, block);
        return {x, te.grid_h, te.grid_w};
    }

    TokenSeq<T> convert_rgbd(Tape<T>& tape, const TokenSeq<T>& te_r,
                             const TokenSeq<T>& te_d) const {
        if (te_r.grid_h != te_d.grid_h || te_r.grid_w != te_d.grid_w)
            throw ContractError("convertor: modality grids differ");
        Tensor<T> xr = te_r.tokens, xd = te_d.tokens;
        for (const auto& block : params_.convertor_rgbd) {
            auto [cr, cd] = cmt_layer(tape, xr, xd, block.cmt);
            xr = transformer_layer(tape, cr, block.tf_r);
            xd = transformer_layer(tape, cd, block.tf_d);
        }
        Tensor<T> cat = tape.concat_cols({xr, xd});
        Tensor<T> fused = tape.linear(cat, params_.convertor_fuse_w, &params_.convertor_fuse_b);
        return {fused, te_r.grid_h, te_r.grid_w};
    }

    SaliencyOutput<T> decode(Tape<T>& tape, const TokenSeq<T>& tc, const TokenSeq<T>& t1,
                             const TokenSeq<T>& t2) const {
        const GridPlan g = grid_plan(cfg_);
        if (tc.grid_h != g.h16 || tc.grid_w != g.w16)
            throw ContractError("decode: converted tokens must be on the 1/16 grid");
        if (t2.grid_h != g.h8 || t2.grid_w != g.w8 || t1.grid_h != g.h4 || t1.grid_w != g.w4)
            throw ContractError("decode: low-level token grids do not match 1/8 and 1/4 scales");

        SaliencyOutput<T> out;
        Tensor<T> ts = params_.task_saliency;
        Tensor<T> tb = params_.task_boundary;

        // Level 3 at 1/16.
        Tensor<T> x = tc.tokens;
        run_level(tape, x, ts, tb, params_.level3, out, 3, g.h16, g.w16);
        TokenSeq<T> up = rt2t(tape, TokenSeq<T>{x, g.h16, g.w16}, cfg_.decoder_specs[0], g.h8,
                              g.w8, params_.up_3to2);

        // Level 2 at 1/8: fuse with T2, then task layers.
        x = fuse_low(tape, up, t2, params_.fuse2);
        run_level(tape, x, ts, tb, params_.level2, out, 2, g.h8, g.w8);
        up = rt2t(tape, TokenSeq<T>{x, g.h8, g.w8}, cfg_.decoder_specs[1], g.h4, g.w4,
                  params_.up_2to1);

        // Level 1 at 1/4.
        x = fuse_low(tape, up, t1, params_.fuse1);
        run_level(tape, x, ts, tb, params_.level1, out, 1, g.h4, g.w4);

        // Final task-gated readout, upsampled to full resolution.
        const auto predict_full = [&](const TaskHeadParams<T>& head, const Rt2tParams<T>& up_p,
                                      const Tensor<T>& task, Tensor<T>& prob, Tensor<T>& logits) {
            Tensor<T> gated = patch_task_attention(tape, x, task, head.attn);
            TokenSeq<T> full = rt2t(tape, TokenSeq<T>{gated, g.h4, g.w4}, cfg_.decoder_specs[2],
                                    cfg_.input_h, cfg_.input_w, up_p);
            Tensor<T> z = tape.linear(full.tokens, head.head_w, &head.head_b);
            logits = tape.reshape(z, {cfg_.input_h, cfg_.input_w});
            prob = tape.sigmoid(logits);
        };
        predict_full(params_.final_sal, params_.up_final_sal, ts, out.saliency,
                     out.saliency_logits);
        predict_full(params_.final_bnd, params_.up_final_bnd, tb, out.boundary,
                     out.boundary_logits);
        return out;
    }

    // Full forward pass. In rgb mode the depth argument is ignored; in
    // rgbd mode it is required.
    SaliencyOutput<T> forward(Tape<T>& tape, const Tensor<T>& image,
                              const Tensor<T>* depth = nullptr) const {
        EncodeResult<T> rgb = encode(tape, image, params_.encoder_rgb);
        TokenSeq<T> tc;
        if (cfg_.modality == Modality::kRgb) {
            tc = convert_rgb(tape, rgb.te);
        } else {
            if (!depth)
                throw ContractError("forward: rgbd model requires a depth input");
            EncodeResult<T> dep = encode(tape, *depth, params_.encoder_depth);
            tc = convert_rgbd(tape, rgb.te, dep.te);
        }
        return decode(tape, tc, rgb.t1, rgb.t2);
    }

  private:
    TokenSeq<T> t2t_step(Tape<T>& tape, const TokenSeq<T>& tok, const SplitSpec& spec) const {
        Tensor<T> img = tape.reshape(tok.tokens, {tok.grid_h, tok.grid_w, tok.dim()});
        return soft_split(tape, img, spec);
    }

    Tensor<T> fuse_low(Tape<T>& tape, const TokenSeq<T>& up, const TokenSeq<T>& low,
                       const FuseParams<T>& f) const {
        if (up.grid_h != low.grid_h || up.grid_w != low.grid_w)
            throw ContractError("decoder fusion: grid mismatch");
        Tensor<T> low_d = tape.linear(low.tokens, f.low_w, &f.low_b);
        Tensor<T> cat = tape.concat_cols({up.tokens, low_d});
        Tensor<T> red = tape.linear(cat, f.reduce_w, &f.reduce_b);
        red = transformer_layer(tape, red, f.layer);
        return tape.linear(red, f.recover_w, &f.recover_b);
    }

    // Append task tokens, run the level's transformer blocks, strip the
    // tokens back out, and emit this level's deep-supervision maps.
    void run_level(Tape<T>& tape, Tensor<T>& x, Tensor<T>& ts, Tensor<T>& tb,
                   const DecoderLevelParams<T>& lv, SaliencyOutput<T>& out, int level, int gh,
                   int gw) const {
        const int l = x.dim(0);
        Tensor<T> seq = tape.concat_rows({x, ts, tb});
        for (const auto& block : lv.blocks) seq = transformer_layer(tape, seq, block);
        x = tape.slice_rows(seq, 0, l);
        ts = tape.slice_rows(seq, l, l + 1);
        tb = tape.slice_rows(seq, l + 1, l + 2);

        typename SaliencyOutput<T>::Aux aux;
        aux.level = level;
        aux.grid_h = gh;
        aux.grid_w = gw;
        const auto predict = [&](const TaskHeadParams<T>& head, const Tensor<T>& task,
                                 Tensor<T>& prob, Tensor<T>& logits) {
            Tensor<T> gated = patch_task_attention(tape, x, task, head.attn);
            Tensor<T> z = tape.linear(gated, head.head_w, &head.head_b);
            logits = tape.reshape(z, {gh, gw});
            prob = tape.sigmoid(logits);
        };
        predict(lv.aux_sal, ts, aux.saliency, aux.saliency_logits);
        predict(lv.aux_bnd, tb, aux.boundary, aux.boundary_logits);
        out.aux.push_back(std::move(aux));
    }

    VstConfig cfg_;
    VstParams<T> params_;
    std::vector<std::pair<std::string, Tensor<T>>> named_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace vst
