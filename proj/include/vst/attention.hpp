#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "vst/tape.hpp"
#include "vst/tensor.hpp"

namespace vst {

// Projection weights of one attention block. Bias-free, following the
// plain formulation; head_dim = d / n_heads.
template <typename T>
struct AttnParams {
    Tensor<T> w_q, w_k, w_v, w_o;  // each d×d
    int n_heads = 1;

    int dim() const { return w_q.dim(0); }
    int head_dim() const { return dim() / n_heads; }

    void check() const {
        if (n_heads < 1 || dim() % n_heads != 0)
            throw ConfigError("attention: dim " + std::to_string(dim()) +
                              " not divisible by n_heads " + std::to_string(n_heads));
    }
};

template <typename T>
struct MlpParams {
    Tensor<T> w1, b1;  // d → r·d
    Tensor<T> w2, b2;  // r·d → d
};

template <typename T>
struct LayerNormParams {
    Tensor<T> gamma, beta;
};

// Pre-norm transformer layer: x + MSA(LN(x)), then + MLP(LN(·)).
template <typename T>
struct LayerParams {
    AttnParams<T> attn;
    MlpParams<T> mlp;
    LayerNormParams<T> ln1, ln2;
};

// Cross-modality layer: the attention branch swaps keys/values between
// the two streams; everything else mirrors the transformer layer, with
// per-modality parameters.
template <typename T>
struct CmtParams {
    AttnParams<T> attn_r, attn_d;
    MlpParams<T> mlp_r, mlp_d;
    LayerNormParams<T> ln1_r, ln1_d, ln2_r, ln2_d;
};

// Single-head gate projections of patch-task-attention. Bias-free, no
// output projection.
template <typename T>
struct PatchTaskParams {
    Tensor<T> w_q, w_k, w_v;  // d×d
};

inline constexpr double kLayerNormEps = 1e-6;

// softmax(q·kᵀ/√dh)·v over the keys.
template <typename T>
Tensor<T> scaled_dot_attention(Tape<T>& tape, const Tensor<T>& q, const Tensor<T>& k,
                               const Tensor<T>& v) {
    if (q.ndim() != 2 || k.ndim() != 2 || v.ndim() != 2 || q.dim(1) != k.dim(1) ||
        k.dim(0) != v.dim(0))
        throw ShapeError("attention: incompatible q" + shape_str(q.shape()) + " k" +
                         shape_str(k.shape()) + " v" + shape_str(v.shape()));
    const T scale = T(1) / std::sqrt(static_cast<T>(q.dim(1)));
    Tensor<T> logits = tape.scale(tape.matmul(q, tape.transpose(k)), scale);
    Tensor<T> weights = tape.softmax(logits, 1);
    return tape.matmul(weights, v);
}

namespace detail {

// Shared multi-head core: project with two (possibly identical)
// parameter sets, attend queries of one stream against keys/values of
// the other, concatenate heads, output-project.
template <typename T>
Tensor<T> multi_head_attend(Tape<T>& tape, const Tensor<T>& query_src, const Tensor<T>& kv_src,
                            const AttnParams<T>& p_query, const AttnParams<T>& p_kv) {
    p_query.check();
    const int dh = p_query.head_dim();
    Tensor<T> q = tape.matmul(query_src, p_query.w_q);
    Tensor<T> k = tape.matmul(kv_src, p_kv.w_k);
    Tensor<T> v = tape.matmul(kv_src, p_kv.w_v);
    std::vector<Tensor<T>> heads;
    heads.reserve(static_cast<size_t>(p_query.n_heads));
    for (int h = 0; h < p_query.n_heads; ++h) {
        Tensor<T> qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
        Tensor<T> kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
        Tensor<T> vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
        heads.push_back(scaled_dot_attention(tape, qh, kh, vh));
    }
    Tensor<T> merged = p_query.n_heads == 1 ? heads[0] : tape.concat_cols(heads);
    return tape.matmul(merged, p_query.w_o);
}

template <typename T>
Tensor<T> mlp_forward(Tape<T>& tape, const Tensor<T>& x, const MlpParams<T>& mlp) {
    Tensor<T> hidden = tape.gelu(tape.linear(x, mlp.w1, &mlp.b1));
    return tape.linear(hidden, mlp.w2, &mlp.b2);
}

template <typename T>
Tensor<T> prenorm(Tape<T>& tape, const Tensor<T>& x, const LayerNormParams<T>& ln) {
    return tape.layer_norm(x, ln.gamma, ln.beta, T(kLayerNormEps));
}

}  // namespace detail

template <typename T>
Tensor<T> multi_head_self_attention(Tape<T>& tape, const Tensor<T>& x, const AttnParams<T>& p) {
    if (x.ndim() != 2 || x.dim(1) != p.dim())
        throw ShapeError("self-attention: input " + shape_str(x.shape()) +
                         " does not match params dim " + std::to_string(p.dim()));
    return detail::multi_head_attend(tape, x, x, p, p);
}

template <typename T>
Tensor<T> transformer_layer(Tape<T>& tape, const Tensor<T>& x, const LayerParams<T>& p) {
    Tensor<T> x1 = tape.add(x, multi_head_self_attention(tape, detail::prenorm(tape, x, p.ln1),
                                                         p.attn));
    return tape.add(x1, detail::mlp_forward(tape, detail::prenorm(tape, x1, p.ln2), p.mlp));
}

// Eq.-style cross attention: (Attn(Q_r,K_d,V_d), Attn(Q_d,K_r,V_r)),
// multi-head, each direction with its own output projection.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> cross_modality_attention(Tape<T>& tape, const Tensor<T>& t_r,
                                                         const Tensor<T>& t_d,
                                                         const AttnParams<T>& p_r,
                                                         const AttnParams<T>& p_d) {
    if (t_r.shape() != t_d.shape())
        throw ContractError("cross-modality attention: sequences must align, got " +
                            shape_str(t_r.shape()) + " vs " + shape_str(t_d.shape()));
    Tensor<T> out_r = detail::multi_head_attend(tape, t_r, t_d, p_r, p_d);
    Tensor<T> out_d = detail::multi_head_attend(tape, t_d, t_r, p_d, p_r);
    return {out_r, out_d};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> cmt_layer(Tape<T>& tape, const Tensor<T>& t_r,
                                          const Tensor<T>& t_d, const CmtParams<T>& p) {
    Tensor<T> nr = detail::prenorm(tape, t_r, p.ln1_r);
    Tensor<T> nd = detail::prenorm(tape, t_d, p.ln1_d);
    auto [cross_r, cross_d] = cross_modality_attention(tape, nr, nd, p.attn_r, p.attn_d);
    Tensor<T> x_r = tape.add(t_r, cross_r);
    Tensor<T> x_d = tape.add(t_d, cross_d);
    Tensor<T> out_r =
        tape.add(x_r, detail::mlp_forward(tape, detail::prenorm(tape, x_r, p.ln2_r), p.mlp_r));
    Tensor<T> out_d =
        tape.add(x_d, detail::mlp_forward(tape, detail::prenorm(tape, x_d, p.ln2_d), p.mlp_d));
    return {out_r, out_d};
}

// sigmoid(Q·Kᵀ/√d)·V + patches: a per-patch scalar gate against the
// single task token, residual-added.
template <typename T>
Tensor<T> patch_task_attention(Tape<T>& tape, const Tensor<T>& t_patch, const Tensor<T>& t_task,
                               const PatchTaskParams<T>& p) {
    if (t_task.ndim() != 2 || t_task.dim(0) != 1)
        throw ContractError("patch-task attention: task token must be a single row, got " +
                            shape_str(t_task.shape()));
    if (t_patch.dim(1) != t_task.dim(1))
        throw ShapeError("patch-task attention: dim mismatch " + shape_str(t_patch.shape()) +
                         " vs " + shape_str(t_task.shape()));
    const T scale = T(1) / std::sqrt(static_cast<T>(t_patch.dim(1)));
    Tensor<T> q = tape.matmul(t_patch, p.w_q);
    Tensor<T> k = tape.matmul(t_task, p.w_k);
    Tensor<T> v = tape.matmul(t_task, p.w_v);
    Tensor<T> gate = tape.sigmoid(tape.scale(tape.matmul(q, tape.transpose(k)), scale));
    return tape.add(tape.matmul(gate, v), t_patch);
}

}  // namespace vst
