#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "vst/attention.hpp"
#include "vst/gradcheck.hpp"

using vst::AttnParams;
using vst::CmtParams;
using vst::LayerParams;
using vst::PatchTaskParams;
using vst::Tape;
using vst::Tensor;

namespace {

// Two-loop attention oracle.
Tensor<double> attention_oracle(const Tensor<double>& q, const Tensor<double>& k,
                                const Tensor<double>& v) {
    const int lq = q.dim(0), lk = k.dim(0), dh = q.dim(1);
    Tensor<double> out({lq, v.dim(1)});
    for (int i = 0; i < lq; ++i) {
        std::vector<double> logits(static_cast<size_t>(lk));
        double mx = -1e300;
        for (int j = 0; j < lk; ++j) {
            double acc = 0;
            for (int p = 0; p < dh; ++p) acc += q.at(i, p) * k.at(j, p);
            logits[static_cast<size_t>(j)] = acc / std::sqrt(static_cast<double>(dh));
            mx = std::max(mx, logits[static_cast<size_t>(j)]);
        }
        double denom = 0;
        for (double z : logits) denom += std::exp(z - mx);
        for (int j = 0; j < lk; ++j) {
            const double w = std::exp(logits[static_cast<size_t>(j)] - mx) / denom;
            for (int p = 0; p < v.dim(1); ++p) out.at(i, p) += w * v.at(j, p);
        }
    }
    return out;
}

LayerParams<double> zero_residual_layer(vst::Rng& rng, int dim, int ratio) {
    LayerParams<double> p;
    p.ln1 = {Tensor<double>::ones({dim}), Tensor<double>::zeros({dim})};
    p.ln2 = {Tensor<double>::ones({dim}), Tensor<double>::zeros({dim})};
    p.attn = {testutil::random_tensor<double>({dim, dim}, rng),
              testutil::random_tensor<double>({dim, dim}, rng),
              testutil::random_tensor<double>({dim, dim}, rng), Tensor<double>::zeros({dim, dim}),
              1};
    p.mlp = {testutil::random_tensor<double>({dim, ratio * dim}, rng),
             testutil::random_tensor<double>({ratio * dim}, rng),
             Tensor<double>::zeros({ratio * dim, dim}), Tensor<double>::zeros({dim})};
    return p;
}

Tensor<double> permute_rows(const Tensor<double>& x, const std::vector<int>& perm) {
    Tensor<double> out(x.shape());
    for (int i = 0; i < x.dim(0); ++i)
        for (int j = 0; j < x.dim(1); ++j) out.at(i, j) = x.at(perm[static_cast<size_t>(i)], j);
    return out;
}

}  // namespace

TEST_CASE("scaled dot attention with one key broadcasts the value") {
    vst::Rng rng(1);
    Tape<double> tape;
    auto q = testutil::random_tensor<double>({4, 6}, rng);
    auto k = testutil::random_tensor<double>({1, 6}, rng);
    auto v = testutil::random_tensor<double>({1, 6}, rng);
    Tensor<double> out = scaled_dot_attention(tape, q, k, v);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 6; ++j) CHECK(out.at(i, j) == doctest::Approx(v.at(0, j)));
}

TEST_CASE("orthogonal queries with equal-norm keys average the values") {
    Tape<double> tape;
    Tensor<double> q({1, 4}, {1, 0, 0, 0});
    Tensor<double> k({3, 4}, {0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
    vst::Rng rng(2);
    auto v = testutil::random_tensor<double>({3, 4}, rng);
    Tensor<double> out = scaled_dot_attention(tape, q, k, v);
    for (int j = 0; j < 4; ++j) {
        const double mean = (v.at(0, j) + v.at(1, j) + v.at(2, j)) / 3.0;
        CHECK(out.at(0, j) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("scaled dot attention matches the loop oracle") {
    vst::Rng rng(3);
    Tape<double> tape;
    auto q = testutil::random_tensor<double>({3, 4}, rng);
    auto k = testutil::random_tensor<double>({5, 4}, rng);
    auto v = testutil::random_tensor<double>({5, 4}, rng);
    CHECK(testutil::max_abs_diff(scaled_dot_attention(tape, q, k, v),
                                 attention_oracle(q, k, v)) < 1e-10);
}

TEST_CASE("msa zero-logit case averages rows") {
    vst::Rng rng(4);
    Tape<double> tape;
    const int d = 5;
    Tensor<double> eye({d, d});
    for (int i = 0; i < d; ++i) eye.at(i, i) = 1.0;
    AttnParams<double> p{Tensor<double>::zeros({d, d}), Tensor<double>::zeros({d, d}), eye, eye,
                         1};
    auto x = testutil::random_tensor<double>({6, d}, rng);
    Tensor<double> out = multi_head_self_attention(tape, x, p);
    for (int j = 0; j < d; ++j) {
        double mean = 0;
        for (int i = 0; i < 6; ++i) mean += x.at(i, j);
        mean /= 6;
        for (int i = 0; i < 6; ++i) CHECK(out.at(i, j) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("two heads with block-diagonal weights match the per-head oracle") {
    vst::Rng rng(5);
    Tape<double> tape;
    const int d = 8, dh = 4;
    AttnParams<double> p{testutil::random_tensor<double>({d, d}, rng),
                         testutil::random_tensor<double>({d, d}, rng),
                         testutil::random_tensor<double>({d, d}, rng),
                         testutil::random_tensor<double>({d, d}, rng), 2};
    auto x = testutil::random_tensor<double>({5, d}, rng);
    Tensor<double> out = multi_head_self_attention(tape, x, p);

    // oracle: project, split columns, per-head attention, concat, project
    const Tensor<double> q = testutil::matmul_oracle(x, p.w_q);
    const Tensor<double> k = testutil::matmul_oracle(x, p.w_k);
    const Tensor<double> v = testutil::matmul_oracle(x, p.w_v);
    Tensor<double> merged({5, d});
    for (int h = 0; h < 2; ++h) {
        Tensor<double> qh({5, dh}), kh({5, dh}), vh({5, dh});
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < dh; ++j) {
                qh.at(i, j) = q.at(i, h * dh + j);
                kh.at(i, j) = k.at(i, h * dh + j);
                vh.at(i, j) = v.at(i, h * dh + j);
            }
        Tensor<double> oh = attention_oracle(qh, kh, vh);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < dh; ++j) merged.at(i, h * dh + j) = oh.at(i, j);
    }
    CHECK(testutil::max_abs_diff(out, testutil::matmul_oracle(merged, p.w_o)) < 1e-10);
}

TEST_CASE("msa is row-permutation equivariant") {
    vst::Rng rng(6);
    Tape<double> tape;
    const int d = 8;
    AttnParams<double> p{testutil::random_tensor<double>({d, d}, rng),
                         testutil::random_tensor<double>({d, d}, rng),
                         testutil::random_tensor<double>({d, d}, rng),
                         testutil::random_tensor<double>({d, d}, rng), 2};
    auto x = testutil::random_tensor<double>({5, d}, rng);
    const std::vector<int> perm = {3, 1, 4, 0, 2};
    Tensor<double> a = permute_rows(multi_head_self_attention(tape, x, p), perm);
    Tensor<double> b = multi_head_self_attention(tape, permute_rows(x, perm), p);
    CHECK(testutil::max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("transformer layer reduces to identity with zeroed residual branches") {
    vst::Rng rng(7);
    Tape<double> tape;
    LayerParams<double> p = zero_residual_layer(rng, 6, 2);
    auto x = testutil::random_tensor<double>({4, 6}, rng);
    CHECK(testutil::max_abs_diff(transformer_layer(tape, x, p), x) < 1e-12);
}

TEST_CASE("transformer layer is permutation equivariant end to end") {
    vst::Rng rng(8);
    Tape<double> tape;
    const int d = 8;
    LayerParams<double> p;
    p.ln1 = {testutil::random_tensor<double>({d}, rng, 0.5, 1.5),
             testutil::random_tensor<double>({d}, rng, -0.2, 0.2)};
    p.ln2 = {testutil::random_tensor<double>({d}, rng, 0.5, 1.5),
             testutil::random_tensor<double>({d}, rng, -0.2, 0.2)};
    p.attn = {testutil::random_tensor<double>({d, d}, rng),
              testutil::random_tensor<double>({d, d}, rng),
              testutil::random_tensor<double>({d, d}, rng),
              testutil::random_tensor<double>({d, d}, rng), 2};
    p.mlp = {testutil::random_tensor<double>({d, 3 * d}, rng),
             testutil::random_tensor<double>({3 * d}, rng),
             testutil::random_tensor<double>({3 * d, d}, rng),
             testutil::random_tensor<double>({d}, rng)};
    auto x = testutil::random_tensor<double>({5, d}, rng);
    const std::vector<int> perm = {4, 2, 0, 3, 1};
    Tensor<double> a = permute_rows(transformer_layer(tape, x, p), perm);
    Tensor<double> b = transformer_layer(tape, permute_rows(x, perm), p);
    CHECK(testutil::max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("cross-modality attention collapses to self-attention with tied inputs") {
    vst::Rng rng(9);
    Tape<double> tape;
    const int d = 8;
    AttnParams<double> p{testutil::random_tensor<double>({d, d}, rng),
                         testutil::random_tensor<double>({d, d}, rng),
                         testutil::random_tensor<double>({d, d}, rng),
                         testutil::random_tensor<double>({d, d}, rng), 2};
    auto x = testutil::random_tensor<double>({4, d}, rng);
    auto [out_r, out_d] = cross_modality_attention(tape, x, x, p, p);
    Tensor<double> self = multi_head_self_attention(tape, x, p);
    CHECK(testutil::max_abs_diff(out_r, self) < 1e-6);
    CHECK(testutil::max_abs_diff(out_d, self) < 1e-6);
}

TEST_CASE("cross-modality attention with one token applies the single-key softmax") {
    vst::Rng rng(10);
    Tape<double> tape;
    const int d = 6;
    AttnParams<double> pr{testutil::random_tensor<double>({d, d}, rng),
                          testutil::random_tensor<double>({d, d}, rng),
                          testutil::random_tensor<double>({d, d}, rng),
                          testutil::random_tensor<double>({d, d}, rng), 1};
    AttnParams<double> pd{testutil::random_tensor<double>({d, d}, rng),
                          testutil::random_tensor<double>({d, d}, rng),
                          testutil::random_tensor<double>({d, d}, rng),
                          testutil::random_tensor<double>({d, d}, rng), 1};
    auto tr = testutil::random_tensor<double>({1, d}, rng);
    auto td = testutil::random_tensor<double>({1, d}, rng);
    auto [out_r, out_d] = cross_modality_attention(tape, tr, td, pr, pd);
    // single key: the rgb output is V_d through the rgb output projection
    Tensor<double> vd = testutil::matmul_oracle(td, pd.w_v);
    CHECK(testutil::max_abs_diff(out_r, testutil::matmul_oracle(vd, pr.w_o)) < 1e-12);

    Tensor<double> longer({2, d});
    CHECK_THROWS_AS(cross_modality_attention(tape, tr, longer, pr, pd), vst::ContractError);
}

TEST_CASE("cross-modality attention matches the loop oracle") {
    vst::Rng rng(11);
    Tape<double> tape;
    const int d = 4;
    AttnParams<double> pr{testutil::random_tensor<double>({d, d}, rng),
                          testutil::random_tensor<double>({d, d}, rng),
                          testutil::random_tensor<double>({d, d}, rng),
                          testutil::random_tensor<double>({d, d}, rng), 1};
    AttnParams<double> pd{testutil::random_tensor<double>({d, d}, rng),
                          testutil::random_tensor<double>({d, d}, rng),
                          testutil::random_tensor<double>({d, d}, rng),
                          testutil::random_tensor<double>({d, d}, rng), 1};
    auto tr = testutil::random_tensor<double>({3, d}, rng);
    auto td = testutil::random_tensor<double>({3, d}, rng);
    auto [out_r, out_d] = cross_modality_attention(tape, tr, td, pr, pd);

    const Tensor<double> qr = testutil::matmul_oracle(tr, pr.w_q);
    const Tensor<double> kd = testutil::matmul_oracle(td, pd.w_k);
    const Tensor<double> vd = testutil::matmul_oracle(td, pd.w_v);
    CHECK(testutil::max_abs_diff(
              out_r, testutil::matmul_oracle(attention_oracle(qr, kd, vd), pr.w_o)) < 1e-10);
    const Tensor<double> qd = testutil::matmul_oracle(td, pd.w_q);
    const Tensor<double> kr = testutil::matmul_oracle(tr, pr.w_k);
    const Tensor<double> vr = testutil::matmul_oracle(tr, pr.w_v);
    CHECK(testutil::max_abs_diff(
              out_d, testutil::matmul_oracle(attention_oracle(qd, kr, vr), pd.w_o)) < 1e-10);
}

TEST_CASE("cmt layer identity and symmetry") {
    vst::Rng rng(12);
    Tape<double> tape;
    const int d = 6;
    CmtParams<double> p;
    p.ln1_r = {Tensor<double>::ones({d}), Tensor<double>::zeros({d})};
    p.ln1_d = {Tensor<double>::ones({d}), Tensor<double>::zeros({d})};
    p.ln2_r = {Tensor<double>::ones({d}), Tensor<double>::zeros({d})};
    p.ln2_d = {Tensor<double>::ones({d}), Tensor<double>::zeros({d})};
    p.attn_r = {testutil::random_tensor<double>({d, d}, rng),
                testutil::random_tensor<double>({d, d}, rng),
                testutil::random_tensor<double>({d, d}, rng), Tensor<double>::zeros({d, d}), 1};
    p.attn_d = {testutil::random_tensor<double>({d, d}, rng),
                testutil::random_tensor<double>({d, d}, rng),
                testutil::random_tensor<double>({d, d}, rng), Tensor<double>::zeros({d, d}), 1};
    p.mlp_r = {testutil::random_tensor<double>({d, 2 * d}, rng),
               testutil::random_tensor<double>({2 * d}, rng),
               Tensor<double>::zeros({2 * d, d}), Tensor<double>::zeros({d})};
    p.mlp_d = {testutil::random_tensor<double>({d, 2 * d}, rng),
               testutil::random_tensor<double>({2 * d}, rng),
               Tensor<double>::zeros({2 * d, d}), Tensor<double>::zeros({d})};
    auto tr = testutil::random_tensor<double>({4, d}, rng);
    auto td = testutil::random_tensor<double>({4, d}, rng);
    auto [out_r, out_d] = cmt_layer(tape, tr, td, p);
    CHECK(testutil::max_abs_diff(out_r, tr) < 1e-12);
    CHECK(testutil::max_abs_diff(out_d, td) < 1e-12);

    // identical modalities + tied params keep the streams identical
    p.attn_r.w_o = testutil::random_tensor<double>({d, d}, rng);
    p.attn_d = p.attn_r;
    p.mlp_r.w2 = testutil::random_tensor<double>({2 * d, d}, rng);
    p.mlp_d = p.mlp_r;
    auto [sym_r, sym_d] = cmt_layer(tape, tr, tr, p);
    CHECK(testutil::max_abs_diff(sym_r, sym_d) < 1e-12);
}

TEST_CASE("patch task attention gate behavior") {
    vst::Rng rng(13);
    Tape<double> tape;
    const int d = 8, l = 4;
    auto patches = testutil::random_tensor<double>({l, d}, rng);
    auto task = testutil::random_tensor<double>({1, d}, rng);

    PatchTaskParams<double> zero_q{Tensor<double>::zeros({d, d}),
                                   testutil::random_tensor<double>({d, d}, rng),
                                   testutil::random_tensor<double>({d, d}, rng)};
    Tensor<double> out = patch_task_attention(tape, patches, task, zero_q);
    const Tensor<double> v = testutil::matmul_oracle(task, zero_q.w_v);
    for (int i = 0; i < l; ++i)
        for (int j = 0; j < d; ++j)
            CHECK(out.at(i, j) ==
                  doctest::Approx(0.5 * v.at(0, j) + patches.at(i, j)).epsilon(1e-12));

    // strongly negative logits: key projection scaled by -50 drives the
    // gate to zero and only the residual survives
    Tensor<double> eye({d, d});
    for (int i = 0; i < d; ++i) eye.at(i, i) = 1.0;
    Tensor<double> neg_keys({d, d});
    for (int i = 0; i < d; ++i) neg_keys.at(i, i) = -50.0;
    auto pos_patches = testutil::random_tensor<double>({l, d}, rng, 0.5, 1.5);
    Tensor<double> ones_task = Tensor<double>::ones({1, d});
    PatchTaskParams<double> saturating{eye, neg_keys,
                                       testutil::random_tensor<double>({d, d}, rng)};
    Tensor<double> gated = patch_task_attention(tape, pos_patches, ones_task, saturating);
    for (int i = 0; i < l; ++i)
        for (int j = 0; j < d; ++j)
            CHECK(std::abs(gated.at(i, j) - pos_patches.at(i, j)) < 1e-8);

    Tensor<double> two_rows({2, d});
    CHECK_THROWS_AS(patch_task_attention(tape, patches, two_rows, zero_q), vst::ContractError);
}

TEST_CASE("patch task attention matches the formula oracle and stays in (0,1)") {
    vst::Rng rng(14);
    Tape<double> tape;
    const int d = 8, l = 4;
    auto patches = testutil::random_tensor<double>({l, d}, rng);
    auto task = testutil::random_tensor<double>({1, d}, rng);
    PatchTaskParams<double> p{testutil::random_tensor<double>({d, d}, rng),
                              testutil::random_tensor<double>({d, d}, rng),
                              testutil::random_tensor<double>({d, d}, rng)};
    Tensor<double> out = patch_task_attention(tape, patches, task, p);

    const Tensor<double> q = testutil::matmul_oracle(patches, p.w_q);
    const Tensor<double> k = testutil::matmul_oracle(task, p.w_k);
    const Tensor<double> v = testutil::matmul_oracle(task, p.w_v);
    for (int i = 0; i < l; ++i) {
        double logit = 0;
        for (int j = 0; j < d; ++j) logit += q.at(i, j) * k.at(0, j);
        logit /= std::sqrt(static_cast<double>(d));
        const double gate = 1.0 / (1.0 + std::exp(-logit));
        CHECK(gate > 0.0);
        CHECK(gate < 1.0);
        for (int j = 0; j < d; ++j)
            CHECK(out.at(i, j) ==
                  doctest::Approx(gate * v.at(0, j) + patches.at(i, j)).epsilon(1e-10));
    }
}

TEST_CASE("layer gradients pass 64-bit finite-difference checks") {
    vst::Rng rng(15);
    const int d = 8;
    LayerParams<double> p;
    p.ln1 = {Tensor<double>::ones({d}).set_requires_grad(true),
             testutil::random_tensor<double>({d}, rng, -0.05, 0.05).set_requires_grad(true)};
    p.ln2 = {Tensor<double>::ones({d}).set_requires_grad(true),
             testutil::random_tensor<double>({d}, rng, -0.05, 0.05).set_requires_grad(true)};
    p.attn = {testutil::random_tensor<double>({d, d}, rng, -0.4, 0.4).set_requires_grad(true),
              testutil::random_tensor<double>({d, d}, rng, -0.4, 0.4).set_requires_grad(true),
              testutil::random_tensor<double>({d, d}, rng, -0.4, 0.4).set_requires_grad(true),
              testutil::random_tensor<double>({d, d}, rng, -0.4, 0.4).set_requires_grad(true), 2};
    p.mlp = {testutil::random_tensor<double>({d, 2 * d}, rng, -0.4, 0.4).set_requires_grad(true),
             testutil::random_tensor<double>({2 * d}, rng, -0.05, 0.05).set_requires_grad(true),
             testutil::random_tensor<double>({2 * d, d}, rng, -0.4, 0.4).set_requires_grad(true),
             testutil::random_tensor<double>({d}, rng, -0.05, 0.05).set_requires_grad(true)};
    auto x = testutil::random_tensor<double>({4, d}, rng).set_requires_grad(true);
    auto w = testutil::random_tensor<double>({4, d}, rng);
    const double err = vst::grad_check<double>(
        [&](Tape<double>& t) { return t.sum_all(t.mul(transformer_layer(t, x, p), w)); },
        {x, p.attn.w_q, p.attn.w_k, p.attn.w_v, p.attn.w_o, p.ln1.gamma, p.ln1.beta, p.mlp.w1,
         p.mlp.b1, p.mlp.w2, p.mlp.b2},
        1e-5);
    CHECK(err < 1e-6);
}
