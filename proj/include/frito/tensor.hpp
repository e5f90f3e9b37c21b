#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "frito/errors.hpp"
#include "frito/rng.hpp"

namespace frito {

// Dense row-major tensor, f32 or f64 via the template parameter.
// No strided views; every op produces a fresh contiguous tensor.
template <class T>
class Tensor {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);

public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), T(0)) {}

    Tensor(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_size(shape_) != data_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
        }
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = T(1);
        return t;
    }

    // 2-D literal, convenient in tests.
    static Tensor from_rows(std::initializer_list<std::initializer_list<T>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = rows.begin()->size();
        Tensor t({r, c});
        std::size_t i = 0;
        for (const auto& row : rows) {
            if (row.size() != c) throw ShapeError("ragged row literal");
            for (T v : row) t.data_[i++] = v;
        }
        return t;
    }

    static Tensor random_normal(std::vector<std::size_t> shape, Rng& rng, double sigma = 1.0) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = static_cast<T>(rng.normal() * sigma);
        return t;
    }

    static Tensor random_truncated_normal(std::vector<std::size_t> shape, Rng& rng, double sigma) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = static_cast<T>(rng.truncated_normal(sigma));
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }

    const T* data() const { return data_.data(); }
    T* data() { return data_.data(); }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // 2-D access.
    T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    std::size_t rows() const { return shape_.at(0); }
    std::size_t cols() const { return shape_.at(1); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    static std::string shape_string(const std::vector<std::size_t>& shape) {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << "]";
        return os.str();
    }

    std::string shape_string() const { return shape_string(shape_); }

private:
    static std::size_t checked_size(const std::vector<std::size_t>& shape) {
        if (shape.empty()) throw ShapeError("tensor rank must be >= 1");
        std::size_t n = 1;
        for (std::size_t d : shape) {
            if (d == 0) throw ShapeError("tensor dimensions must be positive");
            n *= d;
        }
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Arithmetic

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require(a.ndim() == 2 && b.ndim() == 2, "matmul expects 2-D operands");
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul inner dimension mismatch: " + a.shape_string() +
                         " x " + b.shape_string());
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor<T> out({m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    // i-k-j order keeps the inner loop contiguous on b and out.
    for (std::size_t i = 0; i < m; ++i) {
        T* orow = po + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T aik = pa[i * k + kk];
            const T* brow = pb + kk * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("add shape mismatch: " + a.shape_string() + " vs " + b.shape_string());
    }
    Tensor<T> out = a;
    T* po = out.data();
    const T* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] += pb[i];
    return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("sub shape mismatch: " + a.shape_string() + " vs " + b.shape_string());
    }
    Tensor<T> out = a;
    T* po = out.data();
    const T* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] -= pb[i];
    return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return out;
}

// out[i][j] = a[i][j] + v[j]
template <class T>
Tensor<T> add_row_vector(const Tensor<T>& a, const Tensor<T>& v) {
    detail::require(a.ndim() == 2 && v.ndim() == 1, "add_row_vector expects 2-D + 1-D");
    detail::require(a.cols() == v.size(), "add_row_vector width mismatch");
    Tensor<T> out = a;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.at(i, j) += v[j];
    return out;
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
    detail::require(a.ndim() == 2, "transpose expects a 2-D tensor");
    Tensor<T> out({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
    return out;
}

// Half-open [begin, end) slice along one axis.
template <class T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end) {
    if (axis >= a.ndim()) throw ShapeError("slice axis out of range");
    if (begin >= end || end > a.dim(axis)) {
        throw ShapeError("slice range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for axis of size " + std::to_string(a.dim(axis)));
    }
    std::vector<std::size_t> out_shape = a.shape();
    out_shape[axis] = end - begin;
    Tensor<T> out(out_shape);

    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (std::size_t i = axis + 1; i < a.ndim(); ++i) inner *= a.dim(i);

    const std::size_t in_stride = a.dim(axis) * inner;
    const std::size_t out_stride = (end - begin) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
        const T* src = a.data() + o * in_stride + begin * inner;
        T* dst = out.data() + o * out_stride;
        std::copy(src, src + out_stride, dst);
    }
    return out;
}

template <class T>
Tensor<T> concat(std::size_t axis, const std::vector<Tensor<T>>& parts) {
    detail::require(!parts.empty(), "concat requires at least one tensor");
    const auto& first = parts.front();
    if (axis >= first.ndim()) throw ShapeError("concat axis out of range");
    std::size_t total = 0;
    for (const auto& p : parts) {
        detail::require(p.ndim() == first.ndim(), "concat rank mismatch");
        for (std::size_t i = 0; i < first.ndim(); ++i) {
            if (i != axis && p.dim(i) != first.dim(i)) {
                throw ShapeError("concat shape mismatch off-axis: " + p.shape_string() +
                                 " vs " + first.shape_string());
            }
        }
        total += p.dim(axis);
    }
    std::vector<std::size_t> out_shape = first.shape();
    out_shape[axis] = total;
    Tensor<T> out(out_shape);

    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= first.dim(i);
    for (std::size_t i = axis + 1; i < first.ndim(); ++i) inner *= first.dim(i);

    const std::size_t out_stride = total * inner;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t p_stride = p.dim(axis) * inner;
        for (std::size_t o = 0; o < outer; ++o) {
            const T* src = p.data() + o * p_stride;
            std::copy(src, src + p_stride, out.data() + o * out_stride + off);
        }
        off += p_stride;
    }
    return out;
}

template <class T>
Tensor<T> concat(std::size_t axis, const Tensor<T>& a, const Tensor<T>& b) {
    return concat(axis, std::vector<Tensor<T>>{a, b});
}

// Argmax along an axis; results in row-major order of the remaining axes.
template <class T>
std::vector<std::size_t> argmax(const Tensor<T>& a, std::size_t axis) {
    if (axis >= a.ndim()) throw ShapeError("argmax axis out of range");
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (std::size_t i = axis + 1; i < a.ndim(); ++i) inner *= a.dim(i);
    const std::size_t n = a.dim(axis);

    std::vector<std::size_t> out(outer * inner, 0);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const T* base = a.data() + o * n * inner + in;
            std::size_t best = 0;
            T best_v = base[0];
            for (std::size_t i = 1; i < n; ++i) {
                const T v = base[i * inner];
                if (v > best_v) {
                    best_v = v;
                    best = i;
                }
            }
            out[o * inner + in] = best;
        }
    }
    return out;
}

template <class T>
std::size_t argmax(const Tensor<T>& a) {
    detail::require(a.ndim() == 1, "argmax() without axis expects a 1-D tensor");
    return argmax(a, 0)[0];
}

// ---------------------------------------------------------------------------
// Nonlinearities

// Exact GELU, x * Phi(x) with the erf formulation.
template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = static_cast<double>(out[i]);
        out[i] = static_cast<T>(0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)));
    }
    return out;
}

// d gelu / dx, used by the hand-written backward passes.
template <class T>
Tensor<T> gelu_grad(const Tensor<T>& a) {
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = static_cast<double>(out[i]);
        const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
        out[i] = static_cast<T>(cdf + x * pdf);
    }
    return out;
}

// Softmax over the last axis with an additive mask over {0, -inf}.
// An entry is visible iff its mask value equals zero; -inf entries are only
// ever compared, never added or exponentiated. Stabilizes by the row max over
// visible entries. Every pass runs full length with uniform per-entry
// arithmetic: the max scan feeds -inf candidates for hidden entries through
// the same compare chain instead of skipping them, and the exponent is
// evaluated for every entry and discarded where masked. Masking consults the
// mask on top of the dense work; it never shortens it.
template <class T>
Tensor<T> masked_softmax(const Tensor<T>& scores, const Tensor<T>& mask) {
    if (!scores.same_shape(mask)) {
        throw ShapeError("masked_softmax shape mismatch: " + scores.shape_string() +
                         " vs " + mask.shape_string());
    }
    const std::size_t n = scores.dim(scores.ndim() - 1);
    const std::size_t rows = scores.size() / n;
    Tensor<T> out = scores;
    const T* pm = mask.data();
    T* po = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* mrow = pm + r * n;
        T* row = po + r * n;
        T max_v = -std::numeric_limits<T>::infinity();
        bool any = false;
        for (std::size_t j = 0; j < n; ++j) {
            const bool vis = mrow[j] == T(0);
            any |= vis;
            const T cand = vis ? row[j] : -std::numeric_limits<T>::infinity();
            max_v = std::max(max_v, cand);
        }
        if (!any) {
            throw MaskError("masked_softmax: fully masked row " + std::to_string(r));
        }
        T sum = T(0);
        for (std::size_t j = 0; j < n; ++j) {
            const T e = std::exp(row[j] - max_v);
            const T kept = mrow[j] == T(0) ? e : T(0);
            row[j] = kept;
            sum += kept;
        }
        const T inv = T(1) / sum;
        for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
    }
    return out;
}

// Plain softmax over the last axis.
template <class T>
Tensor<T> softmax(const Tensor<T>& scores) {
    const std::size_t n = scores.dim(scores.ndim() - 1);
    const std::size_t rows = scores.size() / n;
    Tensor<T> out = scores;
    T* po = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        T* row = po + r * n;
        T max_v = row[0];
        for (std::size_t j = 1; j < n; ++j) max_v = std::max(max_v, row[j]);
        T sum = T(0);
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - max_v);
            sum += row[j];
        }
        const T inv = T(1) / sum;
        for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
    }
    return out;
}

// Per-row layernorm over the last axis with affine gain/bias.
template <class T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
    const std::size_t d = x.dim(x.ndim() - 1);
    detail::require(gain.ndim() == 1 && gain.size() == d, "layernorm gain width mismatch");
    detail::require(bias.ndim() == 1 && bias.size() == d, "layernorm bias width mismatch");
    if (!(eps > T(0))) throw ConfigError("layernorm eps must be positive");
    const std::size_t rows = x.size() / d;
    Tensor<T> out = x;
    T* po = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        T* row = po + r * d;
        T mean = T(0);
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<T>(d);
        T var = T(0);
        for (std::size_t j = 0; j < d; ++j) {
            const T c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<T>(d);
        const T rstd = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) row[j] = (row[j] - mean) * rstd * gain[j] + bias[j];
    }
    return out;
}

// Gradient of layernorm w.r.t. its input; gain/bias gradients accumulate into
// the provided tensors so one call per row batch composes with outer loops.
template <class T>
Tensor<T> layernorm_backward(const Tensor<T>& x, const Tensor<T>& gain, T eps,
                             const Tensor<T>& upstream, Tensor<T>& dgain, Tensor<T>& dbias) {
    const std::size_t d = x.dim(x.ndim() - 1);
    detail::require(upstream.same_shape(x), "layernorm_backward upstream shape mismatch");
    detail::require(dgain.ndim() == 1 && dgain.size() == d, "layernorm_backward dgain mismatch");
    detail::require(dbias.ndim() == 1 && dbias.size() == d, "layernorm_backward dbias mismatch");
    const std::size_t rows = x.size() / d;
    Tensor<T> dx(x.shape());
    const T* px = x.data();
    const T* pu = upstream.data();
    T* pd = dx.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xrow = px + r * d;
        const T* urow = pu + r * d;
        T* drow = pd + r * d;
        T mean = T(0);
        for (std::size_t j = 0; j < d; ++j) mean += xrow[j];
        mean /= static_cast<T>(d);
        T var = T(0);
        for (std::size_t j = 0; j < d; ++j) {
            const T c = xrow[j] - mean;
            var += c * c;
        }
        var /= static_cast<T>(d);
        const T rstd = T(1) / std::sqrt(var + eps);
        T mean_u = T(0), mean_ux = T(0);
        for (std::size_t j = 0; j < d; ++j) {
            const T xhat = (xrow[j] - mean) * rstd;
            const T u = urow[j] * gain[j];
            mean_u += u;
            mean_ux += u * xhat;
            dgain[j] += urow[j] * xhat;
            dbias[j] += urow[j];
        }
        mean_u /= static_cast<T>(d);
        mean_ux /= static_cast<T>(d);
        for (std::size_t j = 0; j < d; ++j) {
            const T xhat = (xrow[j] - mean) * rstd;
            drow[j] = rstd * (urow[j] * gain[j] - mean_u - xhat * mean_ux);
        }
    }
    return dx;
}

template <class T>
bool allclose(const Tensor<T>& a, const Tensor<T>& b, double atol) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])) > atol) return false;
    }
    return true;
}

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
    return m;
}

template <class T>
bool all_finite(const Tensor<T>& a) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i])) return false;
    }
    return true;
}

template <class From, class To>
Tensor<To> cast(const Tensor<From>& a) {
    std::vector<To> data(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) data[i] = static_cast<To>(a[i]);
    return Tensor<To>(a.shape(), std::move(data));
}

}  // namespace frito
