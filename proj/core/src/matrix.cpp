#include "coea/matrix.hpp"

#include <cassert>
#include <cmath>

namespace coea {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
    assert(a.cols() == b.rows());
    const size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (out.rows() != m || out.cols() != n) out = Matrix(m, n);
    else out.fill(0.0);
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.row(p);
            for (size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
    assert(a.cols() == b.cols());
    const size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (out.rows() != m || out.cols() != n) out = Matrix(m, n);
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (size_t j = 0; j < n; ++j) orow[j] = dot(arow, b.row(j), k);
    }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
    assert(a.rows() == b.rows());
    const size_t k = a.rows(), m = a.cols(), n = b.cols();
    if (out.rows() != m || out.cols() != n) out = Matrix(m, n);
    else if (!accumulate) out.fill(0.0);
    for (size_t p = 0; p < k; ++p) {
        const double* arow = a.row(p);
        const double* brow = b.row(p);
        for (size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* orow = out.row(i);
            for (size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

double dot(const double* a, const double* b, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double l2_distance_sq(const double* a, const double* b, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double cosine_similarity(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

bool all_finite(const Matrix& m) {
    for (double v : m.raw())
        if (!std::isfinite(v)) return false;
    return true;
}

bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace coea
