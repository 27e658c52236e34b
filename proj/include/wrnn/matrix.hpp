#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "wrnn/error.hpp"
#include "wrnn/rng.hpp"

namespace wrnn {

/// Row-major dense matrix of doubles. Vectors are n x 1 matrices or plain
/// spans, depending on the call site.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) throw DataError("ragged matrix initializer");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Matrix column(std::span<const double> values) {
        Matrix m(values.size(), 1);
        std::copy(values.begin(), values.end(), m.data_.begin());
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }
    double operator()(std::size_t r, std::size_t c) const {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    void set_zero() { fill(0.0); }

    bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

    std::string shape_str() const {
        return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
    }

    /// Bitwise equality of shape and contents.
    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DataError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

/// Standard product. Each output entry is a left-to-right dot product, so the
/// result is bit-reproducible.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DataError("matmul: inner dimensions differ, " + a.shape_str() + " * " + b.shape_str());
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
            out(i, j) = acc;
        }
    }
    return out;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

// Vector kernels used by the layers. All sums run in ascending index order.

/// y = W x + b   (b may be empty)
inline void affine(const Matrix& w, std::span<const double> x, std::span<const double> b, std::span<double> y) {
    assert(x.size() == w.cols() && y.size() == w.rows());
    assert(b.empty() || b.size() == w.rows());
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const double* wr = w.data() + i * w.cols();
        double acc = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) acc += wr[k] * x[k];
        y[i] = b.empty() ? acc : acc + b[i];
    }
}

/// dx += W^T d
inline void accumulate_transposed(const Matrix& w, std::span<const double> d, std::span<double> dx) {
    assert(d.size() == w.rows() && dx.size() == w.cols());
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const double di = d[i];
        if (di == 0.0) continue;
        const double* wr = w.data() + i * w.cols();
        for (std::size_t k = 0; k < dx.size(); ++k) dx[k] += wr[k] * di;
    }
}

/// dW += d x^T
inline void accumulate_outer(Matrix& dw, std::span<const double> d, std::span<const double> x) {
    assert(d.size() == dw.rows() && x.size() == dw.cols());
    for (std::size_t i = 0; i < dw.rows(); ++i) {
        const double di = d[i];
        if (di == 0.0) continue;
        double* row = dw.data() + i * dw.cols();
        for (std::size_t k = 0; k < x.size(); ++k) row[k] += di * x[k];
    }
}

inline void add_into(std::span<double> acc, std::span<const double> v) {
    assert(acc.size() == v.size());
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
}

inline void add_into(Matrix& acc, const Matrix& v) {
    require_same_shape(acc, v, "add_into");
    add_into(acc.values(), v.values());
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double sum_squares(std::span<const double> v) { return dot(v, v); }

inline bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Activations

enum class Activation { sigmoid, tanh, relu };

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline double apply(Activation kind, double x) {
    switch (kind) {
        case Activation::sigmoid: return sigmoid(x);
        case Activation::tanh: return std::tanh(x);
        case Activation::relu: return relu(x);
    }
    return x;
}

/// Derivative expressed through the activation output y.
inline double derivative_from_output(Activation kind, double y) {
    switch (kind) {
        case Activation::sigmoid: return y * (1.0 - y);
        case Activation::tanh: return 1.0 - y * y;
        case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
    }
    return 1.0;
}

inline void activate_inplace(Activation kind, std::span<double> v) {
    for (double& x : v) x = apply(kind, x);
}

inline Matrix activate(Activation kind, const Matrix& x) {
    Matrix y = x;
    activate_inplace(kind, y.values());
    return y;
}

/// Max-subtracted softmax.
inline void softmax(std::span<const double> logits, std::span<double> probs) {
    assert(!logits.empty() && logits.size() == probs.size());
    const double mx = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - mx);
        total += probs[i];
    }
    for (double& p : probs) p /= total;
}

inline std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw DataError("softmax: empty input");
    std::vector<double> p(logits.size());
    softmax(logits, p);
    return p;
}

// Initialization

enum class InitScheme { xavier_uniform, zeros };

inline void xavier_fill(Matrix& m, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (double& v : m.values()) v = rng.uniform(-bound, bound);
}

inline Matrix init_matrix(std::size_t rows, std::size_t cols, InitScheme scheme, Rng& rng) {
    if (rows == 0 || cols == 0) throw DataError("init_matrix: zero dimension");
    Matrix m(rows, cols);
    if (scheme == InitScheme::xavier_uniform) xavier_fill(m, rng);
    return m;
}

}  // namespace wrnn
