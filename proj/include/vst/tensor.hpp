#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "vst/errors.hpp"

namespace vst {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) {
        if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

namespace detail {
inline std::uint64_t next_tensor_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

// Dense row-major n-d array. Copies share the underlying buffer and the
// tensor id; the id is what gradient maps and optimizer state key on.
// Mutation after construction is reserved for optimizer updates between
// forward passes.
template <typename T>
class Tensor {
  public:
    Tensor() : id_(0) {}

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<T>>(static_cast<size_t>(shape_numel(shape_)), T(0))),
          id_(detail::next_tensor_id()) {}

    Tensor(Shape shape, std::vector<T> values)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<T>>(std::move(values))),
          id_(detail::next_tensor_id()) {
        if (static_cast<std::int64_t>(data_->size()) != shape_numel(shape_))
            throw ShapeError("value count " + std::to_string(data_->size()) +
                             " does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, T v) {
        Tensor t(std::move(shape));
        std::fill(t.data_->begin(), t.data_->end(), v);
        return t;
    }

    static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }

    static Tensor row(std::initializer_list<T> values) {
        return Tensor({1, static_cast<int>(values.size())}, std::vector<T>(values));
    }

    static Tensor vec(std::initializer_list<T> values) {
        return Tensor({static_cast<int>(values.size())}, std::vector<T>(values));
    }

    bool defined() const { return static_cast<bool>(data_); }
    const Shape& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    std::int64_t numel() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }

    T* data() { return data_->data(); }
    const T* data() const { return data_->data(); }

    T& at(std::int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
    T at(std::int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }
    T& at(int i, int j) { return (*data_)[static_cast<size_t>(i) * dim(1) + j]; }
    T at(int i, int j) const { return (*data_)[static_cast<size_t>(i) * dim(1) + j]; }
    T& at(int i, int j, int k) {
        return (*data_)[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    T at(int i, int j, int k) const {
        return (*data_)[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }

    bool requires_grad() const { return requires_grad_; }
    Tensor& set_requires_grad(bool v) {
        requires_grad_ = v;
        return *this;
    }

    std::uint64_t id() const { return id_; }

    // Deep copy with a fresh buffer and id.
    Tensor clone() const {
        Tensor t(shape_, std::vector<T>(data_->begin(), data_->end()));
        return t;
    }

    // Same buffer viewed under a different shape.
    Tensor view(Shape new_shape) const {
        if (shape_numel(new_shape) != numel())
            throw ShapeError("cannot view " + shape_str(shape_) + " as " + shape_str(new_shape));
        Tensor t(*this);
        t.shape_ = std::move(new_shape);
        t.tape_id_ = 0;
        t.node_ = -1;
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> v(data_->size());
        for (size_t i = 0; i < data_->size(); ++i) v[i] = static_cast<U>((*data_)[i]);
        return Tensor<U>(shape_, std::move(v));
    }

    bool has_non_finite() const {
        for (T v : *data_)
            if (!std::isfinite(static_cast<double>(v))) return true;
        return false;
    }

  private:
    template <typename>
    friend class Tape;

    Shape shape_;
    std::shared_ptr<std::vector<T>> data_;
    bool requires_grad_ = false;
    std::uint64_t id_ = 0;
    // Linkage to the tape that produced this tensor, if any.
    std::uint64_t tape_id_ = 0;
    int node_ = -1;
};

namespace detail {

// Raw kernels shared by forward passes and backward closures. None of
// these touch the tape.

template <typename T>
void mm_nn(const T* a, const T* b, T* out, int m, int k, int n) {
    // Row-parallel: each output row is produced by one thread with a
    // fixed reduction order, so results do not depend on thread count.
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (static_cast<long long>(m) * k * n > 1000000)
#endif
    for (int i = 0; i < m; ++i) {
        T* orow = out + static_cast<size_t>(i) * n;
        std::fill(orow, orow + n, T(0));
        const T* arow = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// out[m×n] = a[k×m]ᵀ · b[k×n]
template <typename T>
void mm_tn(const T* a, const T* b, T* out, int m, int k, int n) {
    std::fill(out, out + static_cast<size_t>(m) * n, T(0));
    for (int p = 0; p < k; ++p) {
        const T* arow = a + static_cast<size_t>(p) * m;
        const T* brow = b + static_cast<size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const T av = arow[i];
            if (av == T(0)) continue;
            T* orow = out + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// out[m×n] = a[m×k] · b[n×k]ᵀ
template <typename T>
void mm_nt(const T* a, const T* b, T* out, int m, int k, int n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (static_cast<long long>(m) * k * n > 1000000)
#endif
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<size_t>(i) * k;
        T* orow = out + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + static_cast<size_t>(j) * k;
            T acc = T(0);
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            orow[j] = acc;
        }
    }
}

template <typename T>
void axpy(T alpha, const Tensor<T>& x, Tensor<T>& y) {
    const T* xs = x.data();
    T* ys = y.data();
    const std::int64_t n = y.numel();
    for (std::int64_t i = 0; i < n; ++i) ys[i] += alpha * xs[i];
}

template <typename T>
T gelu_tanh(T x) {
    const T kSqrt2OverPi = T(0.7978845608028653558798921198687637);
    const T kCoef = T(0.044715);
    return T(0.5) * x * (T(1) + std::tanh(kSqrt2OverPi * (x + kCoef * x * x * x)));
}

template <typename T>
T gelu_tanh_grad(T x) {
    const T kSqrt2OverPi = T(0.7978845608028653558798921198687637);
    const T kCoef = T(0.044715);
    const T u = kSqrt2OverPi * (x + kCoef * x * x * x);
    const T th = std::tanh(u);
    const T sech2 = T(1) - th * th;
    return T(0.5) * (T(1) + th) + T(0.5) * x * sech2 * kSqrt2OverPi * (T(1) + T(3) * kCoef * x * x);
}

}  // namespace detail

}  // namespace vst
