#pragma once

#include <cstddef>
#include <vector>

namespace headshare {

// Dense row-major f64 matrix. Deliberately minimal; everything here runs at
// toy scale and the plain loops keep accumulation order fixed, which the
// determinism guarantees depend on.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool operator==(const Matrix&) const = default;
};

// a (r x k) * b (k x c)
Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b where a is (k x r), b is (k x c)
Matrix matmul_at(const Matrix& a, const Matrix& b);
// a * b^T where a is (r x k), b is (c x k)
Matrix matmul_bt(const Matrix& a, const Matrix& b);

void add_inplace(Matrix& dst, const Matrix& src);
void scale_inplace(Matrix& m, double s);

}  // namespace headshare
