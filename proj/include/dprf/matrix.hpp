#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace dprf {

// Row-major dense matrix of doubles. Plain storage; heavy products go
// through Eigen maps inside the translation units that need them.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) {
        assert(r < rows && c < cols);
        return data[r * cols + c];
    }
    double at(std::size_t r, std::size_t c) const {
        assert(r < rows && c < cols);
        return data[r * cols + c];
    }

    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    std::size_t size() const { return data.size(); }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

inline Matrix zeros_like(const Matrix& m) { return Matrix(m.rows, m.cols); }

}  // namespace dprf
