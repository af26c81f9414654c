#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "vst/tape.hpp"
#include "vst/tensor.hpp"

namespace vst {

// Central-difference check of reverse-mode gradients.
//
// `f` evaluates the scalar loss on the given tape, reading the watched
// tensors through their shared buffers; perturbations are applied in
// place and restored. Relative error per coordinate is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8), and the
// maximum over all checked coordinates is returned.
//
// `max_coords_per_tensor` < 0 checks every coordinate; otherwise a
// deterministic stride-based subsample of that many coordinates per
// tensor is used (large end-to-end models). `analytic_scale` is a test
// hook that corrupts the analytic gradients before comparison.
template <typename T>
T grad_check(const std::function<Tensor<T>(Tape<T>&)>& f, std::vector<Tensor<T>> watched, T eps,
             int max_coords_per_tensor = -1, T analytic_scale = T(1)) {
    Tape<T> tape(true);
    Tensor<T> loss = f(tape);
    GradMap<T> grads = tape.backward(loss);

    const auto eval = [&]() {
        Tape<T> t(false);
        return f(t).at(0);
    };

    T worst = T(0);
    for (Tensor<T>& w : watched) {
        const Tensor<T> analytic = grads.get_or_zero(w);
        const std::int64_t n = w.numel();
        std::int64_t stride = 1;
        if (max_coords_per_tensor > 0 && n > max_coords_per_tensor)
            stride = n / max_coords_per_tensor;
        for (std::int64_t i = 0; i < n; i += stride) {
            const T saved = w.at(i);
            w.at(i) = saved + eps;
            const T fp = eval();
            w.at(i) = saved - eps;
            const T fm = eval();
            w.at(i) = saved;
            const T numeric = (fp - fm) / (T(2) * eps);
            const T a = analytic.at(i) * analytic_scale;
            const T denom = std::max(std::max(std::abs(a), std::abs(numeric)), T(1e-8));
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

// Single-input form: checks d f(x) / dx.
template <typename T>
T grad_check(const std::function<Tensor<T>(Tape<T>&, const Tensor<T>&)>& f, Tensor<T> x, T eps) {
    x.set_requires_grad(true);
    return grad_check<T>([&f, x](Tape<T>& tape) { return f(tape, x); }, {x}, eps);
}

}  // namespace vst
