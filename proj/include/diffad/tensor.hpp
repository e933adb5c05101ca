#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "diffad/error.hpp"

namespace diffad {

// Dense row-major tensor of 64-bit floats. Values are immutable from the
// caller's point of view once an operation returns; every op allocates its
// result. Shapes are kept general but the arithmetic below is defined for
// 1-D and 2-D tensors (a 1-D tensor acts as a single row where a matrix is
// expected).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != checked_size(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str());
        }
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor row(std::initializer_list<double> values) {
        return Tensor({values.size()}, std::vector<double>(values));
    }

    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
        std::size_t r = rows.size();
        std::size_t c = r == 0 ? 0 : rows.begin()->size();
        std::vector<double> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw ShapeError("ragged matrix initializer");
            data.insert(data.end(), row.begin(), row.end());
        }
        return Tensor({r, c}, std::move(data));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // 2-D accessors; a 1-D tensor is a single row.
    std::size_t rows() const {
        if (ndim() == 2) return shape_[0];
        if (ndim() == 1) return 1;
        throw ShapeError("rows() needs a 1-D or 2-D tensor, got " + shape_str());
    }
    std::size_t cols() const {
        if (ndim() == 2) return shape_[1];
        if (ndim() == 1) return shape_[0];
        throw ShapeError("cols() needs a 1-D or 2-D tensor, got " + shape_str());
    }

    double& operator[](std::size_t i) { return data_[i]; }
    const double& operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
    const double& operator()(std::size_t i, std::size_t j) const {
        return data_[i * cols() + j];
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
        os << "]";
        return os.str();
    }

private:
    static std::size_t checked_size(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) {
            if (d == 0) throw ShapeError("zero dimension in tensor shape");
            n *= d;
        }
        return shape.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// ============================================================================
// Plain (non-recorded) tensor arithmetic. The autodiff tape wraps these.
// ============================================================================

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2) {
        throw ShapeError("matmul needs 2-D operands, got " + a.shape_str() + " and " +
                         b.shape_str());
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul inner dimensions differ: " + a.shape_str() + " vs " +
                         b.shape_str());
    }
    Tensor out({m, n});
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const double aik = pa[i * k + l];
            if (aik == 0.0) continue;
            const double* brow = pb + l * n;
            double* orow = po + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

inline Tensor transpose(const Tensor& a) {
    if (a.ndim() != 2) throw ShapeError("transpose needs a 2-D tensor");
    Tensor out({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

namespace detail {

// Binary ops accept equal shapes, or a trailing 1-D vector broadcast over
// the rows of a 2-D left operand. No other broadcast exists.
enum class Broadcast { None, RowVector };

inline Broadcast binary_mode(const Tensor& a, const Tensor& b, const char* what) {
    if (a.same_shape(b)) return Broadcast::None;
    if (a.ndim() == 2 && b.ndim() == 1 && b.size() == a.cols()) return Broadcast::RowVector;
    throw ShapeError(std::string(what) + ": incompatible shapes " + a.shape_str() + " and " +
                     b.shape_str());
}

template <typename F>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* what, F&& f) {
    const Broadcast mode = binary_mode(a, b, what);
    Tensor out = a;
    if (mode == Broadcast::None) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
    } else {
        const std::size_t c = a.cols();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i % c]);
    }
    return out;
}

} // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_op(a, b, "add", [](double x, double y) { return x + y; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_op(a, b, "sub", [](double x, double y) { return x - y; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_op(a, b, "mul", [](double x, double y) { return x * y; });
}

inline Tensor scale(const Tensor& a, double c) {
    Tensor out = a;
    for (auto& v : out.data()) v *= c;
    return out;
}

inline Tensor relu(const Tensor& a) {
    Tensor out = a;
    for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

// Exact Phi-based GELU: x * Phi(x) with Phi the standard normal CDF.
inline double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline double gelu_grad_scalar(double x) {
    const double phi_cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
    const double phi_pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return phi_cdf + x * phi_pdf;
}

inline Tensor gelu(const Tensor& a) {
    Tensor out = a;
    for (auto& v : out.data()) v = gelu_scalar(v);
    return out;
}

// Row-wise softmax with max subtraction. Each output row sums to 1.
inline Tensor softmax(const Tensor& x) {
    const std::size_t r = x.rows(), c = x.cols();
    Tensor out = x;
    for (std::size_t i = 0; i < r; ++i) {
        double mx = out[i * c];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, out[i * c + j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double e = std::exp(out[i * c + j] - mx);
            out[i * c + j] = e;
            sum += e;
        }
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= sum;
    }
    return out;
}

// Per-row standardization followed by the affine map gain * xhat + bias.
// Uses the population (1/d) variance.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (eps <= 0.0) throw ContractError("layer_norm: eps must be > 0");
    const std::size_t r = x.rows(), d = x.cols();
    if (gain.size() != d || bias.size() != d) {
        throw ShapeError("layer_norm: gain/bias length must equal row width");
    }
    Tensor out = x;
    for (std::size_t i = 0; i < r; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += x[i * d + j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double dv = x[i * d + j] - mean;
            var += dv * dv;
        }
        var /= static_cast<double>(d);
        const double rstd = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            out[i * d + j] = gain[j] * (x[i * d + j] - mean) * rstd + bias[j];
        }
    }
    return out;
}

inline Tensor colsum(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    Tensor out({c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += a[i * c + j];
    return out;
}

inline double sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return s;
}

inline double squared_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return s;
}

} // namespace diffad
