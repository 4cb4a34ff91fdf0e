#pragma once

#include <cstddef>
#include <vector>

namespace coea {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. All model parameters and activations use
// this; everything stays in f64 so finite-difference checks are meaningful.
class Matrix {
public:
    Matrix() = default;
    Matrix(size_t rows, size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t size() const { return data_.size(); }

    double& operator()(size_t i, size_t j) { return data_[i * cols_ + j]; }
    double operator()(size_t i, size_t j) const { return data_[i * cols_ + j]; }

    double* row(size_t i) { return data_.data() + i * cols_; }
    const double* row(size_t i) const { return data_.data() + i * cols_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    void fill(double v) { data_.assign(data_.size(), v); }

    bool operator==(const Matrix& o) const = default;

private:
    size_t rows_ = 0;
    size_t cols_ = 0;
    std::vector<double> data_;
};

// out = a * b            (a: m x k, b: k x n)
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
// out = a * b^T          (a: m x k, b: n x k)
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
// out = a^T * b          (a: k x m, b: k x n); accumulates into out when acc
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);

double dot(const double* a, const double* b, size_t n);
void axpy(double alpha, const double* x, double* y, size_t n);  // y += alpha*x

double l2_distance_sq(const double* a, const double* b, size_t n);
double cosine_similarity(const Vec& a, const Vec& b);  // zero vector -> 0

bool all_finite(const Matrix& m);
bool all_finite(const Vec& v);

}  // namespace coea
