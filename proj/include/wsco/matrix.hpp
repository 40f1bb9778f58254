#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "wsco/check.hpp"
#include "wsco/kernels.hpp"

namespace wsco {

// Dense row-major matrix of doubles. Vectors are 1 x n or n x 1 as convenient.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
        check_config(rows >= 0 && cols >= 0, "Matrix: negative dimension");
    }

    static Matrix from_rows(std::vector<std::vector<double>> rows) {
        const int r = static_cast<int>(rows.size());
        const int c = r > 0 ? static_cast<int>(rows[0].size()) : 0;
        Matrix m(r, c);
        for (int i = 0; i < r; ++i) {
            check_config(static_cast<int>(rows[i].size()) == c, "Matrix: ragged rows");
            for (int j = 0; j < c; ++j) m(i, j) = rows[i][j];
        }
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

    double* row(int i) { return data_.data() + static_cast<std::size_t>(i) * cols_; }
    const double* row(int i) const { return data_.data() + static_cast<std::size_t>(i) * cols_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::vector<double> row_copy(int i) const {
        return {row(i), row(i) + cols_};
    }

    void set_row(int i, const double* src) {
        for (int j = 0; j < cols_; ++j) (*this)(i, j) = src[j];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A^T * B
Matrix matmul_at(const Matrix& a, const Matrix& b);
// C = A * B^T
Matrix matmul_bt(const Matrix& a, const Matrix& b);

double dot(const std::vector<double>& a, const std::vector<double>& b);
double l2_norm(const std::vector<double>& v);

// Cosine similarity with the zero-norm convention cos = 0.
double cosine_similarity(const double* a, const double* b, std::size_t n);
inline double cosine_distance(const double* a, const double* b, std::size_t n) {
    return 1.0 - cosine_similarity(a, b, n);
}

}  // namespace wsco
