#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace xling {

// Dense row-major matrix of doubles. The row is the unit of work everywhere
// in this library (one row per token, one row per sample), so rows are
// exposed as spans.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, rows * cols

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    void append_row(std::span<const double> r) {
        if (r.size() != cols) throw std::invalid_argument("append_row: length mismatch");
        data.insert(data.end(), r.begin(), r.end());
        ++rows;
    }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s;
}

// Row-vector convention: y = x * M, with x of length M.rows.
inline std::vector<double> apply_row(std::span<const double> x, const Matrix& m) {
    if (x.size() != m.rows) throw std::invalid_argument("apply_row: dimension mismatch");
    std::vector<double> y(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* mr = m.data.data() + i * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) y[j] += xi * mr[j];
    }
    return y;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: dimension mismatch");
    Matrix c(a.rows, b.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* br = b.data.data() + k * b.cols;
            double* cr = c.data.data() + i * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) cr[j] += aik * br[j];
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& m) {
    Matrix t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
    return t;
}

}  // namespace xling
