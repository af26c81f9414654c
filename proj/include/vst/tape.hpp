#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vst/tensor.hpp"

namespace vst {

// Gradients of a scalar loss with respect to the requires_grad leaves it
// touched, keyed by tensor id.
template <typename T>
class GradMap {
  public:
    const Tensor<T>* find(const Tensor<T>& param) const {
        auto it = grads_.find(param.id());
        return it == grads_.end() ? nullptr : &it->second;
    }

    Tensor<T> get_or_zero(const Tensor<T>& param) const {
        const Tensor<T>* g = find(param);
        return g ? *g : Tensor<T>::zeros(param.shape());
    }

    size_t size() const { return grads_.size(); }

    void insert(std::uint64_t id, Tensor<T> g) { grads_.emplace(id, std::move(g)); }

  private:
    std::unordered_map<std::uint64_t, Tensor<T>> grads_;
};

// Eager single-use reverse-mode tape. Ops compute the forward value
// immediately and, while recording, push a node whose closure routes the
// output gradient to the node's parents. A tensor participates as a
// differentiable leaf iff it has requires_grad set; results of ops on
// differentiable inputs carry their node handle implicitly.
//
// One tape per model invocation; a tape must not be shared across threads.
template <typename T>
class Tape {
  public:
    explicit Tape(bool recording = true) : recording_(recording), id_(next_tape_id()) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return recording_; }
    size_t node_count() const { return nodes_.size(); }

    using AddGrad = std::function<void(int slot, const Tensor<T>&)>;
    using BackFn = std::function<void(const Tensor<T>& gout, const AddGrad& add)>;

    // ---- elementwise and arithmetic ----

    Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
        require_same_shape("add", a, b);
        Tensor<T> out(a.shape());
        const T* pa = a.data();
        const T* pb = b.data();
        T* po = out.data();
        for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
        record(out, {&a, &b}, [](const Tensor<T>& g, const AddGrad& add) {
            add(0, g);
            add(1, g);
        });
        return out;
    }

    Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
        require_same_shape("sub", a, b);
        Tensor<T> out(a.shape());
        for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) = a.at(i) - b.at(i);
        record(out, {&a, &b}, [](const Tensor<T>& g, const AddGrad& add) {
            add(0, g);
            Tensor<T> neg(g.shape());
            for (std::int64_t i = 0; i < g.numel(); ++i) neg.at(i) = -g.at(i);
            add(1, neg);
        });
        return out;
    }

    Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
        require_same_shape("mul", a, b);
        Tensor<T> out(a.shape());
        for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) = a.at(i) * b.at(i);
        record(out, {&a, &b}, [a, b](const Tensor<T>& g, const AddGrad& add) {
            Tensor<T> ga(g.shape()), gb(g.shape());
            for (std::int64_t i = 0; i < g.numel(); ++i) {
                ga.at(i) = g.at(i) * b.at(i);
                gb.at(i) = g.at(i) * a.at(i);
            }
            add(0, ga);
            add(1, gb);
        });
        return out;
    }

    Tensor<T> scale(const Tensor<T>& a, T s) {
        Tensor<T> out(a.shape());
        for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) = a.at(i) * s;
        record(out, {&a}, [s](const Tensor<T>& g, const AddGrad& add) {
            Tensor<T> ga(g.shape());
            for (std::int64_t i = 0; i < g.numel(); ++i) ga.at(i) = g.at(i) * s;
            add(0, ga);
        });
        return out;
    }

    // ---- linear algebra ----

    Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
        if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
            throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
        const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
        Tensor<T> out({m, n});
        detail::mm_nn(a.data(), b.data(), out.data(), m, k, n);
        record(out, {&a, &b}, [a, b, m, k, n](const Tensor<T>& g, const AddGrad& add) {
            Tensor<T> ga({m, k});
            detail::mm_nt(g.data(), b.data(), ga.data(), m, n, k);
            add(0, ga);
            Tensor<T> gb({k, n});
            detail::mm_tn(a.data(), g.data(), gb.data(), k, m, n);
            add(1, gb);
        });
        return out;
    }

    Tensor<T> transpose(const Tensor<T>& a) {
        if (a.ndim() != 2) throw ShapeError("transpose: expected 2-d, got " + shape_str(a.shape()));
        const int m = a.dim(0), n = a.dim(1);
        Tensor<T> out({n, m});
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
        record(out, {&a}, [m, n](const Tensor<T>& g, const AddGrad& add) {
            Tensor<T> ga({m, n});
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) ga.at(j, i) = g.at(i, j);
            add(0, ga);
        });
        return out;
    }

    // x[l×din]·w[din×dout] with optional bias row broadcast. The only
    // broadcasting in the engine.
    Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias = nullptr) {
        if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(0))
            throw ShapeError("linear: incompatible shapes " + shape_str(x.shape()) + " and " +
                             shape_str(w.shape()));
        const int l = x.dim(0), din = x.dim(1), dout = w.dim(1);
        if (bias && (bias->ndim() != 1 || bias->dim(0) != dout))
            throw ShapeError("linear: bias shape " + shape_str(bias->shape()) +
                             " does not match output dim " + std::to_string(dout));
        Tensor<T> out({l, dout});
        detail::mm_nn(x.data(), w.data(), out.data(), l, din, dout);
        if (bias) {
            const T* pb = bias->data();
            for (int i = 0; i < l; ++i)
                for (int j = 0; j < dout; ++j) out.at(i, j) += pb[j];
        }
        std::vector<const Tensor<T>*> ins = {&x, &w};
        if (bias) ins.push_back(bias);
        Tensor<T> xc = x, wc = w;
        record(out, ins, [xc, wc, l, din, dout](const Tensor<T>& g, const AddGrad& add) {
            Tensor<T> gx({l, din});
            detail::mm_nt(g.data(), wc.data(), gx.data(), l, dout, din);
            add(0, gx);
            Tensor<T> gw({din, dout});
            detail::mm_tn(xc.data(), g.data(), gw.data(), din, l, dout);
            add(1, gw);
            Tensor<T> gb({dout});
            for (int i = 0; i < l; ++i)
                for (int j = 0; j < dout; ++j) gb.at(j) += g.at(i, j);
            add(2, gb);
        });
        return out;
    }

    // ---- nonlinearities ----

    Tensor<T> sigmoid(const Tensor<T>& x) {
        Tensor<T> out(x.shape());
        for (std::int64_t i = 0; i < x.numel(); ++i) {
            const T v = x.at(i);
            out.at(i) = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                                  : std::exp(v) / (T(1) + std::exp(v));
        }
        record(out, {&x}, [out](const Tensor<T>& g, const AddGrad& add) {
            Tensor<T> gx(g.shape());
            for (std::int64_t i = 0; i < g.numel(); ++i) {
                const T y = out.at(i);
                gx.at(i) = g.at(i) * y * (T(1) - y);
            }
            add(0, gx);
        });
        return out;
    }

    Tensor<T> gelu(const Tensor<T>& x) {
        Tensor<T> out(x.shape());
        for (std::int64_t i = 0; i < x.numel(); ++i) out.at(i) = detail::gelu_tanh(x.at(i));
        record(out, {&x}, [x](const Tensor<T>& g, const AddGrad& add) {
            Tensor<T> gx(g.shape());
            for (std::int64_t i = 0; i < g.numel(); ++i)
                gx.at(i) = g.at(i) * detail::gelu_tanh_grad(x.at(i));
            add(0, gx);
        });
        return out;
    }

    // Max-subtracted softmax along `axis` of a 1-d or 2-d tensor.
    Tensor<T> softmax(const Tensor<T>& x, int axis) {
        if (x.ndim() == 1) {
            if (axis != 0) throw ShapeError("softmax: axis " + std::to_string(axis) + " on 1-d");
            return reshape(softmax2(reshape(x, {1, x.dim(0)}), 1), {x.dim(0)});
        }
        if (x.ndim() != 2 || (axis != 0 && axis != 1))
            throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " +
                             shape_str(x.shape()));
        return softmax2(x, axis);
    }

    Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                         T eps) {
        if (x.ndim() != 2) throw ShapeError("layer_norm: expected 2-d, got " + shape_str(x.shape()));
        const int l = x.dim(0), d = x.dim(1);
        if (gamma.ndim() != 1 || gamma.dim(0) != d || beta.ndim() != 1 || beta.dim(0) != d)
            throw ShapeError("layer_norm: parameter dims do not match feature dim " +
                             std::to_string(d));
        Tensor<T> out({l, d});
        Tensor<T> xhat({l, d});
        Tensor<T> inv_std({l});
        for (int i = 0; i < l; ++i) {
            T mean = T(0);
            for (int j = 0; j < d; ++j) mean += x.at(i, j);
            mean /= T(d);
            T var = T(0);
            for (int j = 0; j < d; ++j) {
                const T c = x.at(i, j) - mean;
                var += c * c;
            }
            var /= T(d);
            const T is = T(1) / std::sqrt(var + eps);
            inv_std.at(i) = is;
            for (int j = 0; j < d; ++j) {
                const T xh = (x.at(i, j) - mean) * is;
                xhat.at(i, j) = xh;
                out.at(i, j) = xh * gamma.at(j) + beta.at(j);
            }
        }
        record(out, {&x, &gamma, &beta},
               [xhat, inv_std, gamma, l, d](const Tensor<T>& g, const AddGrad& add) {
                   Tensor<T> gx({l, d});
                   Tensor<T> ggamma({d});
                   Tensor<T> gbeta({d});
                   for (int i = 0; i < l; ++i) {
                       T sum_gg = T(0), sum_ggx = T(0);
                       for (int j = 0; j < d; ++j) {
                           const T gg = g.at(i, j) * gamma.at(j);
                           sum_gg += gg;
                           sum_ggx += gg * xhat.at(i, j);
                           ggamma.at(j) += g.at(i, j) * xhat.at(i, j);
                           gbeta.at(j) += g.at(i, j);
                       }
                       const T inv_d = T(1) / T(d);
                       for (int j = 0; j < d; ++j) {
                           const T gg = g.at(i, j) * gamma.at(j);
                           gx.at(i, j) = inv_std.at(i) *
                                         (gg - inv_d * sum_gg - xhat.at(i, j) * inv_d * sum_ggx);
                       }
                   }
                   add(0, gx);
                   add(1, ggamma);
                   add(2, gbeta);
               });
        return out;
    }

    // ---- shape manipulation ----

    Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
        Tensor<T> out(new_shape, std::vector<T>(x.data(), x.data() + x.numel()));
        Shape old_shape = x.shape();
        record(out, {&x}, [old_shape](const Tensor<T>& g, const AddGrad& add) {
            add(0, g.view(old_shape));
        });
        return out;
    }

    Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
        return concat_axis(parts, 0);
    }

    Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
        return concat_axis(parts, 1);
    }

    Tensor<T> slice_rows(const Tensor<T>& x, int r0, int r1) {
        return slice_axis(x, 0, r0, r1);
    }

    Tensor<T> slice_cols(const Tensor<T>& x, int c0, int c1) {
        return slice_axis(x, 1, c0, c1);
    }

    // ---- reductions and losses ----

    Tensor<T> sum_all(const Tensor<T>& x) {
        Tensor<T> out({1});
        T acc = T(0);
        for (std::int64_t i = 0; i < x.numel(); ++i) acc += x.at(i);
        out.at(0) = acc;
        Shape xs = x.shape();
        record(out, {&x}, [xs](const Tensor<T>& g, const AddGrad& add) {
            add(0, Tensor<T>::full(xs, g.at(0)));
        });
        return out;
    }

    Tensor<T> mean_all(const Tensor<T>& x) {
        const T inv_n = T(1) / T(x.numel());
        return scale(sum_all(x), inv_n);
    }

    // Mean binary cross entropy from probabilities, clamped to
    // [1e-7, 1-1e-7] before the logs. Differentiable in pred only.
    Tensor<T> bce_prob(const Tensor<T>& pred, const Tensor<T>& target) {
        require_same_shape("bce_prob", pred, target);
        const T lo = T(1e-7), hi = T(1) - T(1e-7);
        const std::int64_t n = pred.numel();
        Tensor<T> out({1});
        T acc = T(0);
        for (std::int64_t i = 0; i < n; ++i) {
            const T p = std::min(hi, std::max(lo, pred.at(i)));
            const T g = target.at(i);
            acc += -(g * std::log(p) + (T(1) - g) * std::log(T(1) - p));
        }
        out.at(0) = acc / T(n);
        record(out, {&pred}, [pred, target, lo, hi, n](const Tensor<T>& g, const AddGrad& add) {
            Tensor<T> gp(pred.shape());
            const T gscale = g.at(0) / T(n);
            for (std::int64_t i = 0; i < n; ++i) {
                const T p = pred.at(i);
                if (p < lo || p > hi) {
                    gp.at(i) = T(0);  // clamped region
                    continue;
                }
                const T t = target.at(i);
                gp.at(i) = gscale * (-t / p + (T(1) - t) / (T(1) - p));
            }
            add(0, gp);
        });
        return out;
    }

    // Mean binary cross entropy from logits, the numerically safe form
    // used by the training loss. Differentiable in logits only.
    Tensor<T> bce_logits(const Tensor<T>& logits, const Tensor<T>& target) {
        require_same_shape("bce_logits", logits, target);
        const std::int64_t n = logits.numel();
        Tensor<T> out({1});
        T acc = T(0);
        for (std::int64_t i = 0; i < n; ++i) {
            const T z = logits.at(i);
            const T g = target.at(i);
            acc += std::max(z, T(0)) - z * g + std::log1p(std::exp(-std::abs(z)));
        }
        out.at(0) = acc / T(n);
        record(out, {&logits}, [logits, target, n](const Tensor<T>& g, const AddGrad& add) {
            Tensor<T> gz(logits.shape());
            const T gscale = g.at(0) / T(n);
            for (std::int64_t i = 0; i < n; ++i) {
                const T z = logits.at(i);
                const T s = z >= T(0) ? T(1) / (T(1) + std::exp(-z))
                                      : std::exp(z) / (T(1) + std::exp(z));
                gz.at(i) = gscale * (s - target.at(i));
            }
            add(0, gz);
        });
        return out;
    }

    // ---- custom ops (used by the spatial token machinery) ----

    void record_custom(Tensor<T>& out, const std::vector<const Tensor<T>*>& inputs, BackFn back) {
        record(out, inputs, std::move(back));
    }

    // ---- backward ----

    GradMap<T> backward(const Tensor<T>& loss) {
        if (loss.numel() != 1)
            throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
        if (loss.tape_id_ != id_ || loss.node_ < 0)
            throw ContractError("backward: loss is not a differentiable node of this tape");
        std::vector<Tensor<T>> grads(nodes_.size());
        grads[static_cast<size_t>(loss.node_)] = Tensor<T>::ones(loss.shape());
        for (int i = loss.node_; i >= 0; --i) {
            const Node& node = nodes_[static_cast<size_t>(i)];
            if (!grads[static_cast<size_t>(i)].defined() || !node.back) continue;
            const auto add = [&](int slot, const Tensor<T>& g) {
                if (slot < 0 || slot >= static_cast<int>(node.parents.size())) return;
                const int parent = node.parents[static_cast<size_t>(slot)];
                if (parent < 0) return;
                Tensor<T>& acc = grads[static_cast<size_t>(parent)];
                if (!acc.defined())
                    acc = g.clone();
                else
                    detail::axpy(T(1), g, acc);
            };
            node.back(grads[static_cast<size_t>(i)], add);
        }
        GradMap<T> result;
        for (const auto& [tensor_id, node_idx] : leaf_nodes_) {
            Tensor<T>& g = grads[static_cast<size_t>(node_idx)];
            if (g.defined()) result.insert(tensor_id, std::move(g));
        }
        return result;
    }

  private:
    struct Node {
        std::vector<int> parents;
        BackFn back;  // null for leaves
    };

    static std::uint64_t next_tape_id() {
        static std::atomic<std::uint64_t> counter{1};
        return counter.fetch_add(1, std::memory_order_relaxed);
    }

    static void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
        if (a.shape() != b.shape())
            throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }

    int node_of(const Tensor<T>& t) {
        if (t.tape_id_ == id_ && t.node_ >= 0) return t.node_;
        if (!t.requires_grad()) return -1;
        auto it = leaf_nodes_.find(t.id());
        if (it != leaf_nodes_.end()) return it->second;
        const int idx = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{{}, nullptr});
        leaf_nodes_.emplace(t.id(), idx);
        return idx;
    }

    void record(Tensor<T>& out, const std::vector<const Tensor<T>*>& inputs, BackFn back) {
        if (!recording_) return;
        std::vector<int> parents;
        parents.reserve(inputs.size());
        bool any = false;
        for (const Tensor<T>* in : inputs) {
            const int p = node_of(*in);
            parents.push_back(p);
            any = any || p >= 0;
        }
        if (!any) return;
        const int idx = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{std::move(parents), std::move(back)});
        out.tape_id_ = id_;
        out.node_ = idx;
    }

    Tensor<T> softmax2(const Tensor<T>& x, int axis) {
        const int rows = x.dim(0), cols = x.dim(1);
        Tensor<T> out({rows, cols});
        const auto run = [&](auto get, auto set, int outer, int inner) {
            for (int i = 0; i < outer; ++i) {
                T mx = get(i, 0);
                for (int j = 1; j < inner; ++j) mx = std::max(mx, get(i, j));
                T denom = T(0);
                for (int j = 0; j < inner; ++j) denom += std::exp(get(i, j) - mx);
                for (int j = 0; j < inner; ++j) set(i, j, std::exp(get(i, j) - mx) / denom);
            }
        };
        if (axis == 1) {
            run([&](int i, int j) { return x.at(i, j); },
                [&](int i, int j, T v) { out.at(i, j) = v; }, rows, cols);
        } else {
            run([&](int i, int j) { return x.at(j, i); },
                [&](int i, int j, T v) { out.at(j, i) = v; }, cols, rows);
        }
        record(out, {&x}, [out, axis, rows, cols](const Tensor<T>& g, const AddGrad& add) {
            Tensor<T> gx({rows, cols});
            const int outer = axis == 1 ? rows : cols;
            const int inner = axis == 1 ? cols : rows;
            const auto yv = [&](int i, int j) { return axis == 1 ? out.at(i, j) : out.at(j, i); };
            const auto gv = [&](int i, int j) { return axis == 1 ? g.at(i, j) : g.at(j, i); };
            for (int i = 0; i < outer; ++i) {
                T dot = T(0);
                for (int j = 0; j < inner; ++j) dot += gv(i, j) * yv(i, j);
                for (int j = 0; j < inner; ++j) {
                    const T v = yv(i, j) * (gv(i, j) - dot);
                    if (axis == 1)
                        gx.at(i, j) = v;
                    else
                        gx.at(j, i) = v;
                }
            }
            add(0, gx);
        });
        return out;
    }

    Tensor<T> concat_axis(const std::vector<Tensor<T>>& parts, int axis) {
        if (parts.empty()) throw ShapeError("concat: no inputs");
        for (const auto& p : parts)
            if (p.ndim() != 2) throw ShapeError("concat: expected 2-d inputs");
        const int fixed = axis == 0 ? parts[0].dim(1) : parts[0].dim(0);
        int total = 0;
        for (const auto& p : parts) {
            const int f = axis == 0 ? p.dim(1) : p.dim(0);
            if (f != fixed)
                throw ShapeError("concat: mismatched shape " + shape_str(p.shape()));
            total += axis == 0 ? p.dim(0) : p.dim(1);
        }
        Tensor<T> out(axis == 0 ? Shape{total, fixed} : Shape{fixed, total});
        std::vector<int> offsets;
        int off = 0;
        for (const auto& p : parts) {
            offsets.push_back(off);
            const int span = axis == 0 ? p.dim(0) : p.dim(1);
            if (axis == 0) {
                std::copy(p.data(), p.data() + p.numel(),
                          out.data() + static_cast<size_t>(off) * fixed);
            } else {
                for (int i = 0; i < fixed; ++i)
                    for (int j = 0; j < span; ++j) out.at(i, off + j) = p.at(i, j);
            }
            off += span;
        }
        std::vector<const Tensor<T>*> ins;
        std::vector<int> spans;
        for (const auto& p : parts) {
            ins.push_back(&p);
            spans.push_back(axis == 0 ? p.dim(0) : p.dim(1));
        }
        record(out, ins, [offsets, spans, axis, fixed](const Tensor<T>& g, const AddGrad& add) {
            for (size_t s = 0; s < offsets.size(); ++s) {
                const int off2 = offsets[s], span = spans[s];
                Tensor<T> gp(axis == 0 ? Shape{span, fixed} : Shape{fixed, span});
                if (axis == 0) {
                    std::copy(g.data() + static_cast<size_t>(off2) * fixed,
                              g.data() + static_cast<size_t>(off2 + span) * fixed, gp.data());
                } else {
                    for (int i = 0; i < fixed; ++i)
                        for (int j = 0; j < span; ++j) gp.at(i, j) = g.at(i, off2 + j);
                }
                add(static_cast<int>(s), gp);
            }
        });
        return out;
    }

    Tensor<T> slice_axis(const Tensor<T>& x, int axis, int i0, int i1) {
        if (x.ndim() != 2) throw ShapeError("slice: expected 2-d input");
        const int extent = x.dim(axis);
        if (i0 < 0 || i1 > extent || i0 >= i1)
            throw ShapeError("slice: range [" + std::to_string(i0) + "," + std::to_string(i1) +
                             ") invalid for extent " + std::to_string(extent));
        const int rows = x.dim(0), cols = x.dim(1);
        const int span = i1 - i0;
        Tensor<T> out(axis == 0 ? Shape{span, cols} : Shape{rows, span});
        if (axis == 0) {
            std::copy(x.data() + static_cast<size_t>(i0) * cols,
                      x.data() + static_cast<size_t>(i1) * cols, out.data());
        } else {
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < span; ++j) out.at(i, j) = x.at(i, i0 + j);
        }
        record(out, {&x}, [axis, i0, rows, cols, span](const Tensor<T>& g, const AddGrad& add) {
            Tensor<T> gx({rows, cols});
            if (axis == 0) {
                std::copy(g.data(), g.data() + g.numel(),
                          gx.data() + static_cast<size_t>(i0) * cols);
            } else {
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < span; ++j) gx.at(i, i0 + j) = g.at(i, j);
            }
            add(0, gx);
        });
        return out;
    }

    bool recording_;
    std::uint64_t id_;
    std::vector<Node> nodes_;
    std::unordered_map<std::uint64_t, int> leaf_nodes_;
};

}  // namespace vst
