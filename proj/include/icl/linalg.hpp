#pragma once

// Dense row-major matrices, symmetric eigensolvers, PSD square roots and a
// seeded PRNG. Sizes in this project are small (d <= 64, n <= 256),
// so everything is straightforward loops over std::vector<double>.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "icl/error.hpp"

namespace icl {

using Vec = std::vector<double>;

class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Mat(std::size_t rows, std::size_t cols, Vec data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        detail::require(data_.size() == rows_ * cols_, "Mat: entry count must equal rows*cols");
    }
    Mat(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            detail::require(r.size() == cols_, "Mat: ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Mat zeros(std::size_t rows, std::size_t cols) { return Mat(rows, cols); }
    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    static Mat diag(std::span<const double> values) {
        Mat m(values.size(), values.size());
        for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
        return m;
    }
    static Mat diag(std::initializer_list<double> values) {
        return diag(std::span<const double>(values.begin(), values.size()));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * cols_, cols_};
    }

    Vec column(std::size_t j) const {
        Vec c(rows_);
        for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
        return c;
    }
    void set_column(std::size_t j, std::span<const double> c) {
        detail::require(c.size() == rows_, "Mat::set_column: length mismatch");
        for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = c[i];
    }

    Mat& operator+=(const Mat& o) {
        detail::require(rows_ == o.rows_ && cols_ == o.cols_, "Mat +=: shape mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Mat& operator-=(const Mat& o) {
        detail::require(rows_ == o.rows_ && cols_ == o.cols_, "Mat -=: shape mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Mat& operator*=(double s) noexcept {
        for (double& x : data_) x *= s;
        return *this;
    }

    friend bool operator==(const Mat&, const Mat&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vec data_;
};

inline Mat operator+(Mat a, const Mat& b) { return a += b; }
inline Mat operator-(Mat a, const Mat& b) { return a -= b; }
inline Mat operator*(Mat a, double s) { return a *= s; }
inline Mat operator*(double s, Mat a) { return a *= s; }

inline Mat transpose(const Mat& m) {
    Mat t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

inline Mat matmul(const Mat& a, const Mat& b) {
    detail::require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
    Mat c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ci = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto bk = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

/// aᵀ·b without materializing the transpose.
inline Mat matmul_tn(const Mat& a, const Mat& b) {
    detail::require(a.rows() == b.rows(), "matmul_tn: row count mismatch");
    Mat c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto ak = a.row(k);
        auto bk = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            auto ci = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
        }
    }
    return c;
}

inline Vec matvec(const Mat& a, std::span<const double> x) {
    detail::require(a.cols() == x.size(), "matvec: dimension mismatch");
    Vec y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ai = a.row(i);
        y[i] = std::inner_product(ai.begin(), ai.end(), x.begin(), 0.0);
    }
    return y;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    detail::require(a.size() == b.size(), "dot: dimension mismatch");
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline double frobenius_norm(const Mat& m) {
    double s = 0.0;
    for (double x : m.data()) s += x * x;
    return std::sqrt(s);
}

inline double trace(const Mat& m) {
    detail::require(m.square(), "trace: matrix must be square");
    double t = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) t += m(i, i);
    return t;
}

inline bool all_finite(const Mat& m) {
    return std::ranges::all_of(m.data(), [](double x) { return std::isfinite(x); });
}

inline double max_abs(const Mat& m) {
    double s = 0.0;
    for (double x : m.data()) s = std::max(s, std::abs(x));
    return s;
}

/// True when |m_ij - m_ji| <= rel_tol * max|m| for all i, j.
inline bool is_symmetric(const Mat& m, double rel_tol = 1e-12) {
    if (!m.square()) return false;
    const double tol = rel_tol * max_abs(m);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = i + 1; j < m.cols(); ++j)
            if (std::abs(m(i, j) - m(j, i)) > tol) return false;
    return true;
}

// ---------------------------------------------------------------------------
// PRNG
// ---------------------------------------------------------------------------

/// Seeded generator: std::mt19937_64 (bit-exact by the standard) feeding
/// a 53-bit uniform and the basic Box–Muller normal transform. The
/// transforms are written out here rather than taken from <random> because
/// the standard distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_pos() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

    double normal() {
        if (spare_) {
            const double z = *spare_;
            spare_.reset();
            return z;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        return radius * std::cos(angle);
    }

    Vec normal_vec(std::size_t n) {
        Vec v(n);
        for (double& x : v) x = normal();
        return v;
    }

    Mat normal_mat(std::size_t rows, std::size_t cols, double stddev = 1.0) {
        Mat m(rows, cols);
        for (double& x : m.data()) x = stddev * normal();
        return m;
    }

    /// Child generator for an independent stream; depends only on (seed, stream).
    Rng split(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

    static std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
        return splitmix64(splitmix64(seed) ^ (stream * 0xD1B54A32D192ED03ULL + 0x9E3779B97F4A7C15ULL));
    }

private:
    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition
// ---------------------------------------------------------------------------

struct SymEig {
    Mat vectors;  ///< columns are eigenvectors
    Vec values;   ///< sorted descending
};

namespace detail {

inline constexpr double kJacobiTol = 1e-12;
inline constexpr int kJacobiMaxSweeps = 100;

inline void require_symmetric(const Mat& m, const char* who) {
    if (!m.square()) throw ContractViolation(std::string(who) + ": matrix must be square");
    if (!is_symmetric(m, 1e-12)) throw ContractViolation(std::string(who) + ": matrix must be symmetric");
}

}  // namespace detail

/// Cyclic Jacobi. Stops once the off-diagonal Frobenius norm falls to
/// 1e-12 * ||m||_F or after 100 sweeps.
inline SymEig sym_eig_jacobi(const Mat& m) {
    detail::require_symmetric(m, "sym_eig_jacobi");
    const std::size_t n = m.rows();
    Mat a = m;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (m(i, j) + m(j, i));
    Mat v = Mat::identity(n);

    const double target = detail::kJacobiTol * frobenius_norm(a);
    for (int sweep = 0; sweep < detail::kJacobiMaxSweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += 2.0 * a(i, j) * a(i, j);
        if (std::sqrt(off) <= target) break;

        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    if (k == p || k == q) continue;
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = a(p, k) = c * akp - s * akq;
                    a(k, q) = a(q, k) = s * akp + c * akq;
                }
                a(p, p) -= t * apq;
                a(q, q) += t * apq;
                a(p, q) = a(q, p) = 0.0;

                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::ranges::stable_sort(order, [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

    SymEig out{Mat(n, n), Vec(n)};
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
    }
    return out;
}

namespace detail {

inline constexpr int kQlMaxIterations = 100;

/// Householder reduction of a symmetric matrix to tridiagonal form.
/// On return v holds the accumulated orthogonal transform, d the diagonal
/// and e the subdiagonal in e[1..n-1].
inline void householder_tridiagonalize(Mat& v, Vec& d, Vec& e) {
    const std::size_t n = v.rows();
    for (std::size_t j = 0; j < n; ++j) d[j] = v(n - 1, j);
    for (std::size_t i = n - 1; i > 0; --i) {
        double scale = 0.0;
        double h = 0.0;
        for (std::size_t k = 0; k < i; ++k) scale += std::abs(d[k]);
        if (scale == 0.0) {
            e[i] = d[i - 1];
            for (std::size_t j = 0; j < i; ++j) {
                d[j] = v(i - 1, j);
                v(i, j) = 0.0;
                v(j, i) = 0.0;
            }
        } else {
            for (std::size_t k = 0; k < i; ++k) {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            double f = d[i - 1];
            double g = std::sqrt(h);
            if (f > 0) g = -g;
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for (std::size_t j = 0; j < i; ++j) e[j] = 0.0;
            for (std::size_t j = 0; j < i; ++j) {
                f = d[j];
                v(j, i) = f;
                g = e[j] + v(j, j) * f;
                for (std::size_t k = j + 1; k < i; ++k) {
                    g += v(k, j) * d[k];
                    e[k] += v(k, j) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for (std::size_t j = 0; j < i; ++j) {
                e[j] /= h;
                f += e[j] * d[j];
            }
            const double hh = f / (h + h);
            for (std::size_t j = 0; j < i; ++j) e[j] -= hh * d[j];
            for (std::size_t j = 0; j < i; ++j) {
                f = d[j];
                g = e[j];
                for (std::size_t k = j; k < i; ++k) v(k, j) -= (f * e[k] + g * d[k]);
                d[j] = v(i - 1, j);
                v(i, j) = 0.0;
            }
        }
        d[i] = h;
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
        v(n - 1, i) = v(i, i);
        v(i, i) = 1.0;
        const double h = d[i + 1];
        if (h != 0.0) {
            for (std::size_t k = 0; k <= i; ++k) d[k] = v(k, i + 1) / h;
            for (std::size_t j = 0; j <= i; ++j) {
                double g = 0.0;
                for (std::size_t k = 0; k <= i; ++k) g += v(k, i + 1) * v(k, j);
                for (std::size_t k = 0; k <= i; ++k) v(k, j) -= g * d[k];
            }
        }
        for (std::size_t k = 0; k <= i; ++k) v(k, i + 1) = 0.0;
    }
    for (std::size_t j = 0; j < n; ++j) {
        d[j] = v(n - 1, j);
        v(n - 1, j) = 0.0;
    }
    v(n - 1, n - 1) = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on the tridiagonal (d, e). `vt` holds the eigenvector
/// estimates as rows and is rotated along.
inline void tridiagonal_ql(Mat& vt, Vec& d, Vec& e) {
    const std::size_t n = d.size();
    for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;
    const double eps = std::numeric_limits<double>::epsilon();
    double f = 0.0;
    double tst1 = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
        std::size_t m = l;
        while (m < n - 1 && std::abs(e[m]) > eps * tst1) ++m;
        if (m > l) {
            int iter = 0;
            do {
                if (++iter > kQlMaxIterations) throw Error("sym_eig: QL iteration did not converge");
                double g = d[l];
                double p = (d[l + 1] - g) / (2.0 * e[l]);
                double r = std::hypot(p, 1.0);
                if (p < 0) r = -r;
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                const double dl1 = d[l + 1];
                double h = g - d[l];
                for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
                f += h;

                p = d[m];
                double c = 1.0;
                double c2 = c;
                double c3 = c;
                const double el1 = e[l + 1];
                double s = 0.0;
                double s2 = 0.0;
                for (std::size_t ii = m; ii-- > l;) {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[ii];
                    h = c * p;
                    r = std::hypot(p, e[ii]);
                    e[ii + 1] = s * r;
                    s = e[ii] / r;
                    c = p / r;
                    p = c * d[ii] - s * g;
                    d[ii + 1] = h + s * (c * g + s * d[ii]);
                    auto lo = vt.row(ii);
                    auto hi = vt.row(ii + 1);
                    for (std::size_t k = 0; k < n; ++k) {
                        const double t = hi[k];
                        hi[k] = s * lo[k] + c * t;
                        lo[k] = c * lo[k] - s * t;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
            } while (std::abs(e[l]) > eps * tst1);
        }
        d[l] += f;
        e[l] = 0.0;
    }
}

}  // namespace detail

/// Householder tridiagonalization followed by implicit QL. Eigenvalues are
/// sorted descending; eigenvectors are the matching columns.
inline SymEig sym_eig(const Mat& m) {
    detail::require_symmetric(m, "sym_eig");
    const std::size_t n = m.rows();
    if (n == 0) return {Mat(), Vec()};
    Mat v(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) v(i, j) = 0.5 * (m(i, j) + m(j, i));
    Vec d(n);
    Vec e(n);
    detail::householder_tridiagonalize(v, d, e);
    Mat vt = transpose(v);
    detail::tridiagonal_ql(vt, d, e);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::ranges::stable_sort(order, [&](std::size_t x, std::size_t y) { return d[x] > d[y]; });
    SymEig out{Mat(n, n), Vec(n)};
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = d[order[k]];
        auto src = vt.row(order[k]);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = src[i];
    }
    return out;
}

/// U·diag(f(λ))·Uᵀ for a symmetric input.
template <class F>
Mat sym_apply(const SymEig& e, F&& f) {
    const std::size_t n = e.values.size();
    Vec fl(n);
    for (std::size_t k = 0; k < n; ++k) fl[k] = f(e.values[k]);
    Mat out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += e.vectors(i, k) * fl[k] * e.vectors(j, k);
            out(i, j) = out(j, i) = s;
        }
    }
    return out;
}

/// Symmetric square root S (S·Sᵀ = m). Eigenvalues in [-clamp, clamp) are
/// treated as zero; anything below -clamp throws NotPsd.
inline Mat sym_sqrt_psd(const Mat& m, double clamp) {
    const SymEig e = sym_eig(m);
    if (!e.values.empty() && e.values.back() < -clamp)
        throw NotPsd("sym_sqrt_psd: eigenvalue " + std::to_string(e.values.back()) +
                     " below -clamp");
    return sym_apply(e, [clamp](double l) { return l < clamp ? 0.0 : std::sqrt(l); });
}

/// Symmetric inverse square root of a positive definite matrix.
inline Mat sym_inv_sqrt(const Mat& m) {
    const SymEig e = sym_eig(m);
    if (e.values.empty()) return Mat();
    if (!(e.values.back() > 0.0)) throw NotPsd("sym_inv_sqrt: matrix is not positive definite");
    return sym_apply(e, [](double l) { return 1.0 / std::sqrt(l); });
}

/// max |eigenvalue| of a symmetric matrix.
inline double spectral_norm(const Mat& m) {
    const SymEig e = sym_eig(m);
    if (e.values.empty()) return 0.0;
    return std::max(std::abs(e.values.front()), std::abs(e.values.back()));
}

/// Diagonally pivoted Cholesky of a PSD matrix: returns F (n × rank) with
/// F Fᵀ = m up to the discarded trailing pivots. Elimination stops once the
/// largest remaining pivot is at most rel_tol times the largest diagonal.
inline Mat psd_factor(const Mat& m, double rel_tol) {
    detail::require_symmetric(m, "psd_factor");
    const std::size_t n = m.rows();
    Vec pivot(n);
    double top = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        pivot[i] = m(i, i);
        top = std::max(top, pivot[i]);
    }
    std::vector<char> used(n, 0);
    Mat f(n, n);
    std::size_t rank = 0;
    for (; rank < n; ++rank) {
        std::size_t p = n;
        for (std::size_t i = 0; i < n; ++i)
            if (!used[i] && (p == n || pivot[i] > pivot[p])) p = i;
        if (!(pivot[p] > rel_tol * top)) break;
        used[p] = 1;
        const double lpp = std::sqrt(pivot[p]);
        f(p, rank) = lpp;
        const double* fp = f.row(p).data();
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            const double* fi = f.row(i).data();
            double acc = m(i, p);
            for (std::size_t k = 0; k < rank; ++k) acc -= fi[k] * fp[k];
            const double lik = acc / lpp;
            f(i, rank) = lik;
            pivot[i] -= lik * lik;
        }
    }
    Mat out(n, rank);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < rank; ++k) out(i, k) = f(i, k);
    return out;
}

/// Gauss–Jordan with partial pivoting.
inline Mat inverse(const Mat& m) {
    detail::require(m.square(), "inverse: matrix must be square");
    const std::size_t n = m.rows();
    Mat a = m;
    Mat inv = Mat::identity(n);
    const double scale = std::max(max_abs(m), 1e-300);
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
        if (std::abs(a(piv, col)) <= 1e-14 * scale) throw Singular("inverse: matrix is singular");
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(a(piv, j), a(col, j));
                std::swap(inv(piv, j), inv(col, j));
            }
        }
        const double d = a(col, col);
        for (std::size_t j = 0; j < n; ++j) {
            a(col, j) /= d;
            inv(col, j) /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a(r, col);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                a(r, j) -= f * a(col, j);
                inv(r, j) -= f * inv(col, j);
            }
        }
    }
    return inv;
}

/// Haar-distributed orthogonal matrix: Gaussian matrix, Gram–Schmidt QR
/// (twice, for stability), columns sign-fixed so that diag(R) > 0.
inline Mat random_orthogonal(std::size_t d, Rng& rng) {
    detail::require(d >= 1, "random_orthogonal: d must be >= 1");
    Mat g = rng.normal_mat(d, d);
    Mat q(d, d);
    for (std::size_t j = 0; j < d; ++j) {
        Vec col = g.column(j);
        const Vec orig = col;
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t k = 0; k < j; ++k) {
                double proj = 0.0;
                for (std::size_t i = 0; i < d; ++i) proj += q(i, k) * col[i];
                for (std::size_t i = 0; i < d; ++i) col[i] -= proj * q(i, k);
            }
        }
        const double nrm = norm2(col);
        // diag(R)_j = <q_j, g_j>; flipping keeps it positive.
        double rjj = 0.0;
        for (std::size_t i = 0; i < d; ++i) rjj += col[i] * orig[i];
        const double sign = rjj < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < d; ++i) q(i, j) = sign * col[i] / nrm;
    }
    return q;
}

}  // namespace icl
