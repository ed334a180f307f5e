#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace resnet_ntk {

using Vector = std::vector<double>;

// Row-major dense matrix of doubles.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

    static DenseMatrix identity(std::size_t n);
    static DenseMatrix diagonal(std::span<const double> diag);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    DenseMatrix transposed() const;
    bool all_finite() const noexcept;

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

double dot(std::span<const double> a, std::span<const double> b) noexcept;
double norm2(std::span<const double> v) noexcept;
double frobenius_norm(const DenseMatrix& m) noexcept;
// ‖a − b‖_F; shapes must agree.
double frobenius_distance(const DenseMatrix& a, const DenseMatrix& b);

// y = M x
Vector matvec(const DenseMatrix& m, std::span<const double> x);
// y = Mᵀ x
Vector matvec_transposed(const DenseMatrix& m, std::span<const double> x);
DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b);
// A Aᵀ
DenseMatrix gram_of_rows(const DenseMatrix& a);
DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b);
double trace(const DenseMatrix& m);

struct SpectralEstimate {
    double value = 0.0;
    std::size_t iterations_used = 0;
    // Relative eigen-residual ‖Gv − ρv‖/ρ of the Gram operator at exit.
    double residual = 0.0;
    bool converged = false;
};

// Largest singular value by power iteration on the smaller of MᵀM and MMᵀ.
// The Gram matrix is never formed. Starts from the normalized all-ones
// vector; restarts once from a seeded random vector when the iterate
// collapses onto the null space.
SpectralEstimate spectral_norm(const DenseMatrix& m, double tol = 1e-10,
                               std::size_t max_iter = 20000);

struct SymmetricEigen {
    Vector values;       // ascending
    DenseMatrix vectors; // column k is the unit eigenvector of values[k]
};

struct EigenExtremes {
    double min_eig = 0.0;
    double max_eig = 0.0;
};

// Cyclic Jacobi rotations. Input must be symmetric to 1e-12 relative to its
// largest entry; it is symmetrized before rotating.
SymmetricEigen sym_eigen(const DenseMatrix& s);
EigenExtremes sym_eig_extremes(const DenseMatrix& s);

} // namespace resnet_ntk
