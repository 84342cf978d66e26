#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace lexalign {

/// Dense row-major matrix of doubles. All numerics in this project run in
/// double precision; desk-scale sizes make that cheap and it keeps the
/// gradient checks meaningful.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_rows(const std::vector<std::vector<double>>& rows);
    static Matrix row_vector(std::vector<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double v) { data_.assign(data_.size(), v); }
    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool all_finite() const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// C = A * B. Shapes checked, throws std::invalid_argument on mismatch.
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
Matrix matmul(const Matrix& a, const Matrix& b);

/// C = A * B^T (B stored untransposed, e.g. a V x d codebook).
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// C = A^T * B.
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);

Matrix transpose(const Matrix& a);

double frobenius_norm(const Matrix& a);
double frobenius_distance(const Matrix& a, const Matrix& b);

/// Numerical rank via Gaussian elimination with partial pivoting.
std::size_t matrix_rank(Matrix a, double tol = 1e-9);

/// Minimum-norm least-squares solve of (A x = y) via normal equations on the
/// smaller side. Used by test oracles and the synthetic-data validity checks.
std::vector<double> least_squares(const Matrix& a, const std::vector<double>& y);

std::string shape_string(const Matrix& a);

}  // namespace lexalign
