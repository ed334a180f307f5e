#include "resnet_ntk/linalg.hpp"

#include "resnet_ntk/errors.hpp"
#include "resnet_ntk/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace resnet_ntk {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw InputError("DenseMatrix: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> diag) {
    DenseMatrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
}

DenseMatrix DenseMatrix::transposed() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

bool DenseMatrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

// Four interleaved partial sums; the summation order is fixed, so results
// are reproducible.
double dot(std::span<const double> a, std::span<const double> b) noexcept {
    const std::size_t n = std::min(a.size(), b.size());
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

double norm2(std::span<const double> v) noexcept { return std::sqrt(dot(v, v)); }

double frobenius_norm(const DenseMatrix& m) noexcept { return norm2(m.values()); }

double frobenius_distance(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw InputError("frobenius_distance: shape mismatch");
    double s = 0.0;
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        s += d * d;
    }
    return std::sqrt(s);
}

Vector matvec(const DenseMatrix& m, std::span<const double> x) {
    if (x.size() != m.cols()) throw InputError("matvec: dimension mismatch");
    Vector y(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) y[r] = dot(m.row(r), x);
    return y;
}

Vector matvec_transposed(const DenseMatrix& m, std::span<const double> x) {
    if (x.size() != m.rows()) throw InputError("matvec_transposed: dimension mismatch");
    Vector y(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double xr = x[r];
        if (xr == 0.0) continue;
        const auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) y[c] += xr * row[c];
    }
    return y;
}

DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) throw InputError("multiply: dimension mismatch");
    DenseMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const auto brow = b.row(k);
            for (std::size_t j = 0; j < out.size(); ++j) out[j] += aik * brow[j];
        }
    }
    return c;
}

DenseMatrix gram_of_rows(const DenseMatrix& a) {
    DenseMatrix g(a.rows(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double v = dot(a.row(i), a.row(j));
            g(i, j) = v;
            g(j, i) = v;
        }
    return g;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw InputError("add: shape mismatch");
    DenseMatrix c = a;
    auto cv = c.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < cv.size(); ++i) cv[i] += bv[i];
    return c;
}

DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw InputError("subtract: shape mismatch");
    DenseMatrix c = a;
    auto cv = c.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < cv.size(); ++i) cv[i] -= bv[i];
    return c;
}

double trace(const DenseMatrix& m) {
    if (m.rows() != m.cols()) throw InputError("trace: matrix not square");
    double t = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) t += m(i, i);
    return t;
}

namespace {

// Applies the Gram operator of the smaller side: MMᵀv when rows ≤ cols,
// otherwise MᵀMv.
Vector apply_gram(const DenseMatrix& m, bool row_side, std::span<const double> v) {
    if (row_side) return matvec(m, matvec_transposed(m, v));
    return matvec_transposed(m, matvec(m, v));
}

void normalize(Vector& v) {
    const double n = norm2(v);
    for (double& x : v) x /= n;
}

} // namespace

SpectralEstimate spectral_norm(const DenseMatrix& m, double tol, std::size_t max_iter) {
    if (m.empty()) throw InputError("spectral_norm: empty matrix");
    if (!(tol > 0.0)) throw InputError("spectral_norm: tolerance must be positive");

    const bool row_side = m.rows() <= m.cols();
    const std::size_t k = row_side ? m.rows() : m.cols();
    Vector v(k, 1.0 / std::sqrt(static_cast<double>(k)));
    bool restarted = false;

    SpectralEstimate est;
    for (std::size_t it = 1; it <= max_iter; ++it) {
        Vector w = apply_gram(m, row_side, v);
        const double rho = dot(v, w);
        const double wnorm = norm2(w);
        est.iterations_used = it;

        if (wnorm == 0.0 || !(rho > 0.0)) {
            if (restarted) {
                // Two independent start vectors annihilated: M is zero.
                est.value = 0.0;
                est.residual = 0.0;
                est.converged = true;
                return est;
            }
            CounterRng rng(0x5eed, Stream::power_restart);
            for (double& x : v) x = rng.normal();
            normalize(v);
            restarted = true;
            continue;
        }

        double r2 = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const double d = w[i] - rho * v[i];
            r2 += d * d;
        }
        est.value = std::sqrt(rho);
        est.residual = std::sqrt(r2) / rho;
        if (est.residual <= tol) {
            est.converged = true;
            return est;
        }
        v = std::move(w);
        for (double& x : v) x /= wnorm;
    }
    est.converged = false;
    return est;
}

SymmetricEigen sym_eigen(const DenseMatrix& s) {
    if (s.rows() != s.cols()) throw InputError("sym_eigen: matrix not square");
    const std::size_t n = s.rows();
    if (n > 4096) throw CapacityError("sym_eigen: size exceeds 4096");

    double scale = 0.0;
    for (double v : s.values()) scale = std::max(scale, std::abs(v));
    const double asym_tol = 1e-12 * std::max(1.0, scale);
    DenseMatrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(s(i, j) - s(j, i)) > asym_tol)
                throw InputError("sym_eigen: matrix is not symmetric (entry " +
                                 std::to_string(i) + "," + std::to_string(j) + ")");
            a(i, j) = 0.5 * (s(i, j) + s(j, i));
        }

    DenseMatrix v = DenseMatrix::identity(n);
    constexpr int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double off = 0.0;
        double diag = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            diag += a(i, i) * a(i, i);
            for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        }
        if (off == 0.0 || off <= 1e-32 * diag) break;

        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double app = a(p, p);
                const double aqq = a(q, q);
                // Rotation angle annihilating a(p, q).
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

    SymmetricEigen out;
    out.values.resize(n);
    out.vectors = DenseMatrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
    }
    return out;
}

EigenExtremes sym_eig_extremes(const DenseMatrix& s) {
    if (s.rows() == 0) throw InputError("sym_eig_extremes: empty matrix");
    const SymmetricEigen e = sym_eigen(s);
    return {e.values.front(), e.values.back()};
}

} // namespace resnet_ntk
