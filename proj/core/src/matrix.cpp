#include "lexalign/matrix.hpp"

#include <cmath>
#include <stdexcept>

namespace lexalign {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw std::invalid_argument("Matrix: data size does not match shape");
    }
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != m.cols_) {
            throw std::invalid_argument("Matrix::from_rows: ragged rows");
        }
        for (std::size_t c = 0; c < m.cols_; ++c) m(r, c) = rows[r][c];
    }
    return m;
}

Matrix Matrix::row_vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Matrix(1, n, std::move(values));
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string shape_string(const Matrix& a) {
    return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: shape mismatch " + shape_string(a) + " * " +
                                    shape_string(b));
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    if (out.rows() != n || out.cols() != m) out = Matrix(n, m);
    double* __restrict o = out.data().data();
    const double* __restrict ad = a.data().data();
    const double* __restrict bd = b.data().data();
    std::fill(o, o + n * m, 0.0);
    // i-k-j order keeps the inner loop contiguous over both B and C.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = ad[i * k + kk];
            const double* brow = bd + kk * m;
            double* orow = o + i * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix out;
    matmul(a, b, out);
    return out;
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("matmul_nt: shape mismatch " + shape_string(a) + " * " +
                                    shape_string(b) + "^T");
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    if (out.rows() != n || out.cols() != m) out = Matrix(n, m);
    const double* __restrict ad = a.data().data();
    const double* __restrict bd = b.data().data();
    double* __restrict o = out.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = ad + i * k;
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = bd + j * k;
            double acc = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            o[i * m + j] = acc;
        }
    }
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    Matrix out;
    matmul_nt(a, b, out);
    return out;
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("matmul_tn: shape mismatch " + shape_string(a) + "^T * " +
                                    shape_string(b));
    }
    const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
    if (out.rows() != n || out.cols() != m) out = Matrix(n, m);
    double* __restrict o = out.data().data();
    const double* __restrict ad = a.data().data();
    const double* __restrict bd = b.data().data();
    std::fill(o, o + n * m, 0.0);
    for (std::size_t kk = 0; kk < k; ++kk) {
        const double* arow = ad + kk * n;
        const double* brow = bd + kk * m;
        for (std::size_t i = 0; i < n; ++i) {
            const double av = arow[i];
            double* orow = o + i * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
    return out;
}

double frobenius_norm(const Matrix& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v * v;
    return std::sqrt(acc);
}

double frobenius_distance(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("frobenius_distance: shape mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

std::size_t matrix_rank(Matrix a, double tol) {
    const std::size_t n = a.rows(), m = a.cols();
    std::size_t rank = 0;
    for (std::size_t col = 0; col < m && rank < n; ++col) {
        std::size_t pivot = rank;
        for (std::size_t r = rank + 1; r < n; ++r) {
            if (std::fabs(a(r, col)) > std::fabs(a(pivot, col))) pivot = r;
        }
        if (std::fabs(a(pivot, col)) <= tol) continue;
        if (pivot != rank) {
            for (std::size_t c = 0; c < m; ++c) std::swap(a(pivot, c), a(rank, c));
        }
        const double inv = 1.0 / a(rank, col);
        for (std::size_t r = rank + 1; r < n; ++r) {
            const double f = a(r, col) * inv;
            if (f == 0.0) continue;
            for (std::size_t c = col; c < m; ++c) a(r, c) -= f * a(rank, c);
        }
        ++rank;
    }
    return rank;
}

namespace {

// Solves the symmetric positive-definite system G x = rhs in place (Cholesky).
std::vector<double> solve_spd(Matrix g, std::vector<double> rhs) {
    const std::size_t n = g.rows();
    for (std::size_t j = 0; j < n; ++j) {
        double diag = g(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= g(j, k) * g(j, k);
        if (diag <= 0.0) throw std::runtime_error("least_squares: singular normal equations");
        const double l = std::sqrt(diag);
        g(j, j) = l;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = g(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= g(i, k) * g(j, k);
            g(i, j) = v / l;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        double v = rhs[i];
        for (std::size_t k = 0; k < i; ++k) v -= g(i, k) * rhs[k];
        rhs[i] = v / g(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double v = rhs[ii];
        for (std::size_t k = ii + 1; k < n; ++k) v -= g(k, ii) * rhs[k];
        rhs[ii] = v / g(ii, ii);
    }
    return rhs;
}

}  // namespace

std::vector<double> least_squares(const Matrix& a, const std::vector<double>& y) {
    if (a.rows() != y.size()) {
        throw std::invalid_argument("least_squares: rhs length mismatch");
    }
    const std::size_t n = a.rows(), m = a.cols();
    Matrix ym(n, 1, y);
    if (n >= m) {
        // Overdetermined / square: x = (A^T A)^-1 A^T y.
        Matrix gram, rhs;
        matmul_tn(a, a, gram);
        matmul_tn(a, ym, rhs);
        return solve_spd(gram, rhs.data());
    }
    // Underdetermined: minimum-norm x = A^T (A A^T)^-1 y.
    Matrix gram;
    matmul_nt(a, a, gram);
    std::vector<double> w = solve_spd(gram, y);
    std::vector<double> x(m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) x[j] += a(i, j) * w[i];
    return x;
}

}  // namespace lexalign
