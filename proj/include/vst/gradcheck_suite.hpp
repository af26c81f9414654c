#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vst/attention.hpp"
#include "vst/gradcheck.hpp"
#include "vst/model.hpp"
#include "vst/rng.hpp"
#include "vst/token_ops.hpp"
#include "vst/training.hpp"

namespace vst {

struct GradCheckCase {
    std::string name;
    double max_rel_err = 0;
    double tolerance = 0;

    bool pass() const { return max_rel_err < tolerance; }
};

// Toy architecture used by the end-to-end finite-difference check.
inline VstConfig toy_gradcheck_config(Modality modality, std::uint64_t seed) {
    VstConfig cfg;
    cfg.input_h = cfg.input_w = 64;
    cfg.modality = modality;
    cfg.c = 16;
    cfg.d = 48;
    cfg.layers_encoder = 1;
    cfg.layers_convertor = 1;
    cfg.layers_decoder3 = 1;
    cfg.layers_decoder2 = 1;
    cfg.layers_decoder1 = 1;
    cfg.seed = seed;
    return cfg;
}

namespace detail {

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t.at(i) = (rng.next_unit() * 2.0 - 1.0) * scale;
    return t;
}

inline Tensor<double> random_param(Shape shape, Rng& rng, double scale = 0.3) {
    return random_tensor(std::move(shape), rng, scale).set_requires_grad(true);
}

inline LayerParams<double> random_layer(Rng& rng, int dim, int ratio, int heads) {
    LayerParams<double> p;
    p.ln1 = {Tensor<double>::ones({dim}).set_requires_grad(true),
             random_param({dim}, rng, 0.05)};
    p.attn = {random_param({dim, dim}, rng), random_param({dim, dim}, rng),
              random_param({dim, dim}, rng), random_param({dim, dim}, rng), heads};
    p.ln2 = {Tensor<double>::ones({dim}).set_requires_grad(true),
             random_param({dim}, rng, 0.05)};
    const int hidden = dim * ratio;
    p.mlp = {random_param({dim, hidden}, rng), random_param({hidden}, rng, 0.05),
             random_param({hidden, dim}, rng), random_param({dim}, rng, 0.05)};
    return p;
}

inline void collect(const LayerParams<double>& p, std::vector<Tensor<double>>& out) {
    out.insert(out.end(), {p.ln1.gamma, p.ln1.beta, p.attn.w_q, p.attn.w_k, p.attn.w_v,
                           p.attn.w_o, p.ln2.gamma, p.ln2.beta, p.mlp.w1, p.mlp.b1, p.mlp.w2,
                           p.mlp.b2});
}

// Projects the output against fixed random weights so the scalar loss
// has nondegenerate gradients everywhere.
inline Tensor<double> weighted_sum(Tape<double>& tape, const Tensor<double>& y,
                                   const Tensor<double>& weights) {
    return tape.sum_all(tape.mul(y, weights));
}

}  // namespace detail

// Finite-difference sweep over every layer type plus an end-to-end toy
// model. Per-layer tolerance 1e-6, end-to-end 1e-4, all at 64-bit with
// eps = 1e-5. `corrupt` is a test hook: the named component's analytic
// gradients are scaled by 1.01 before comparison, which must trip the
// checker.
inline std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed,
                                                      const std::string& corrupt = "",
                                                      int e2e_coords_per_tensor = 2) {
    const double eps = 1e-5;
    const double layer_tol = 1e-6;
    const double e2e_tol = 1e-4;
    std::vector<GradCheckCase> cases;
    Rng rng(seed);

    const auto run = [&](const std::string& name, double tol,
                         const std::function<Tensor<double>(Tape<double>&)>& f,
                         std::vector<Tensor<double>> watched, int max_coords = -1) {
        const double scale = name == corrupt ? 1.01 : 1.0;
        const double err = grad_check<double>(f, std::move(watched), eps, max_coords, scale);
        cases.push_back({name, err, tol});
    };

    using detail::random_param;
    using detail::random_tensor;
    using detail::weighted_sum;

    {  // matmul
        auto a = random_param({4, 3}, rng, 1.0);
        auto b = random_param({3, 5}, rng, 1.0);
        auto w = random_tensor({4, 5}, rng);
        run("matmul", layer_tol,
            [=](Tape<double>& t) { return weighted_sum(t, t.matmul(a, b), w); }, {a, b});
    }
    {  // softmax
        auto x = random_param({4, 5}, rng, 2.0);
        auto w = random_tensor({4, 5}, rng);
        run("softmax", layer_tol,
            [=](Tape<double>& t) { return weighted_sum(t, t.softmax(x, 1), w); }, {x});
    }
    {  // sigmoid
        auto x = random_param({3, 6}, rng, 2.0);
        auto w = random_tensor({3, 6}, rng);
        run("sigmoid", layer_tol,
            [=](Tape<double>& t) { return weighted_sum(t, t.sigmoid(x), w); }, {x});
    }
    {  // gelu
        auto x = random_param({3, 6}, rng, 2.0);
        auto w = random_tensor({3, 6}, rng);
        run("gelu", layer_tol, [=](Tape<double>& t) { return weighted_sum(t, t.gelu(x), w); },
            {x});
    }
    {  // layer_norm
        auto x = random_param({4, 8}, rng, 1.0);
        auto gamma = random_param({8}, rng, 0.5);
        auto beta = random_param({8}, rng, 0.5);
        auto w = random_tensor({4, 8}, rng);
        run("layer_norm", layer_tol,
            [=](Tape<double>& t) {
                return weighted_sum(t, t.layer_norm(x, gamma, beta, 1e-6), w);
            },
            {x, gamma, beta});
    }
    {  // linear
        auto x = random_param({4, 6}, rng, 1.0);
        auto wgt = random_param({6, 5}, rng, 1.0);
        auto bias = random_param({5}, rng, 0.5);
        auto w = random_tensor({4, 5}, rng);
        run("linear", layer_tol,
            [=](Tape<double>& t) { return weighted_sum(t, t.linear(x, wgt, &bias), w); },
            {x, wgt, bias});
    }
    {  // bce
        auto logits = random_param({3, 4}, rng, 2.0);
        Tensor<double> gt({3, 4});
        for (std::int64_t i = 0; i < gt.numel(); ++i) gt.at(i) = rng.next_coin() ? 1.0 : 0.0;
        run("bce", layer_tol, [=](Tape<double>& t) { return t.bce_logits(logits, gt); },
            {logits});
    }
    {  // soft_split
        auto img = random_param({5, 6, 2}, rng, 1.0);
        const SplitSpec spec{3, 1, 1};
        auto [gh, gw] = output_len(5, 6, spec);
        auto w = random_tensor({gh * gw, 2 * 9}, rng);
        run("soft_split", layer_tol,
            [=](Tape<double>& t) { return weighted_sum(t, soft_split(t, img, spec).tokens, w); },
            {img});
    }
    {  // fold
        const SplitSpec spec{3, 1, 1};
        auto [gh, gw] = output_len(6, 6, spec);
        auto tok = random_param({gh * gw, 2 * 9}, rng, 1.0);
        auto w = random_tensor({6, 6, 2}, rng);
        run("fold", layer_tol,
            [=](Tape<double>& t) {
                return weighted_sum(t, fold(t, TokenSeq<double>{tok, gh, gw}, spec, 6, 6), w);
            },
            {tok});
    }
    {  // rt2t
        const SplitSpec spec{3, 1, 1};
        Rt2tParams<double> p{random_param({8, 4}, rng), random_param({4}, rng, 0.3),
                             random_param({4, 4 * 9}, rng), random_param({4 * 9}, rng, 0.3)};
        auto tok = random_param({4, 8}, rng, 1.0);  // grid 2x2, target 4x4
        auto w = random_tensor({16, 4}, rng);
        run("rt2t", layer_tol,
            [=](Tape<double>& t) {
                return weighted_sum(
                    t, rt2t(t, TokenSeq<double>{tok, 2, 2}, spec, 4, 4, p).tokens, w);
            },
            {tok, p.proj_in_w, p.proj_in_b, p.expand_w, p.expand_b});
    }
    {  // scaled_dot_attention
        auto q = random_param({4, 6}, rng, 1.0);
        auto k = random_param({5, 6}, rng, 1.0);
        auto v = random_param({5, 6}, rng, 1.0);
        auto w = random_tensor({4, 6}, rng);
        run("scaled_dot_attention", layer_tol,
            [=](Tape<double>& t) { return weighted_sum(t, scaled_dot_attention(t, q, k, v), w); },
            {q, k, v});
    }
    {  // multi_head_self_attention
        auto x = random_param({4, 8}, rng, 1.0);
        AttnParams<double> p{random_param({8, 8}, rng), random_param({8, 8}, rng),
                             random_param({8, 8}, rng), random_param({8, 8}, rng), 2};
        auto w = random_tensor({4, 8}, rng);
        run("multi_head_self_attention", layer_tol,
            [=](Tape<double>& t) {
                return weighted_sum(t, multi_head_self_attention(t, x, p), w);
            },
            {x, p.w_q, p.w_k, p.w_v, p.w_o});
    }
    {  // transformer_layer
        auto x = random_param({4, 8}, rng, 1.0);
        LayerParams<double> p = detail::random_layer(rng, 8, 2, 2);
        auto w = random_tensor({4, 8}, rng);
        std::vector<Tensor<double>> watched = {x};
        detail::collect(p, watched);
        run("transformer_layer", layer_tol,
            [=](Tape<double>& t) { return weighted_sum(t, transformer_layer(t, x, p), w); },
            watched);
    }
    {  // cmt_layer
        auto tr = random_param({4, 8}, rng, 1.0);
        auto td = random_param({4, 8}, rng, 1.0);
        CmtParams<double> p;
        p.ln1_r = {Tensor<double>::ones({8}).set_requires_grad(true), random_param({8}, rng, 0.05)};
        p.ln1_d = {Tensor<double>::ones({8}).set_requires_grad(true), random_param({8}, rng, 0.05)};
        p.attn_r = {random_param({8, 8}, rng), random_param({8, 8}, rng),
                    random_param({8, 8}, rng), random_param({8, 8}, rng), 2};
        p.attn_d = {random_param({8, 8}, rng), random_param({8, 8}, rng),
                    random_param({8, 8}, rng), random_param({8, 8}, rng), 2};
        p.ln2_r = {Tensor<double>::ones({8}).set_requires_grad(true), random_param({8}, rng, 0.05)};
        p.ln2_d = {Tensor<double>::ones({8}).set_requires_grad(true), random_param({8}, rng, 0.05)};
        p.mlp_r = {random_param({8, 16}, rng), random_param({16}, rng, 0.05),
                   random_param({16, 8}, rng), random_param({8}, rng, 0.05)};
        p.mlp_d = {random_param({8, 16}, rng), random_param({16}, rng, 0.05),
                   random_param({16, 8}, rng), random_param({8}, rng, 0.05)};
        auto wr = random_tensor({4, 8}, rng);
        auto wd = random_tensor({4, 8}, rng);
        std::vector<Tensor<double>> watched = {tr,         td,         p.attn_r.w_q, p.attn_r.w_k,
                                               p.attn_r.w_v, p.attn_r.w_o, p.attn_d.w_q, p.attn_d.w_k,
                                               p.attn_d.w_v, p.attn_d.w_o, p.mlp_r.w1, p.mlp_r.w2,
                                               p.mlp_d.w1, p.mlp_d.w2};
        run("cmt_layer", layer_tol,
            [=](Tape<double>& t) {
                auto [or_, od_] = cmt_layer(t, tr, td, p);
                return t.add(weighted_sum(t, or_, wr), weighted_sum(t, od_, wd));
            },
            watched);
    }
    {  // patch_task_attention
        auto patches = random_param({4, 8}, rng, 1.0);
        auto task = random_param({1, 8}, rng, 1.0);
        PatchTaskParams<double> p{random_param({8, 8}, rng), random_param({8, 8}, rng),
                                  random_param({8, 8}, rng)};
        auto w = random_tensor({4, 8}, rng);
        run("patch_task_attention", layer_tol,
            [=](Tape<double>& t) {
                return weighted_sum(t, patch_task_attention(t, patches, task, p), w);
            },
            {patches, task, p.w_q, p.w_k, p.w_v});
    }
    {  // t2t_module
        auto tok = random_param({16, 6}, rng, 1.0);  // grid 4x4
        LayerParams<double> p = detail::random_layer(rng, 6, 2, 1);
        const SplitSpec spec{3, 1, 1};
        auto w = random_tensor({4 * 6 * 9}, rng).view({4, 6 * 9});
        std::vector<Tensor<double>> watched = {tok};
        detail::collect(p, watched);
        run("t2t_module", layer_tol,
            [=](Tape<double>& t) {
                auto out = t2t_module(
                    t, TokenSeq<double>{tok, 4, 4},
                    [&p](Tape<double>& tp, const Tensor<double>& x) {
                        return transformer_layer(tp, x, p);
                    },
                    spec);
                return weighted_sum(t, out.tokens, w);
            },
            watched);
    }
    {  // end-to-end toy model
        VstModel<double> model(toy_gradcheck_config(Modality::kRgb, seed));
        auto image = random_tensor({64, 64, 3}, rng, 0.5);
        for (std::int64_t i = 0; i < image.numel(); ++i) image.at(i) = std::abs(image.at(i));
        Tensor<double> gt_sal({64, 64});
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                gt_sal.at(y, x) = (y - 32) * (y - 32) + (x - 32) * (x - 32) < 300 ? 1.0 : 0.0;
        Tensor<double> gt_bnd = sobel_binary(gt_sal);
        std::vector<Tensor<double>> watched;
        for (auto& [name, p] : model.named_params()) watched.push_back(p);
        run("end_to_end_toy", e2e_tol,
            [&model, image, gt_sal, gt_bnd](Tape<double>& t) {
                SaliencyOutput<double> out = model.forward(t, image);
                return total_loss(t, out, gt_sal, gt_bnd).loss;
            },
            watched, e2e_coords_per_tensor);
    }
    return cases;
}

}  // namespace vst
