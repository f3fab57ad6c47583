#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "icl/error.hpp"
#include "icl/linalg.hpp"

namespace icl {

enum class KernelKind { Linear, Relu, Exp };

/// Label-generating similarity K(u, w). Closed set: Linear, Relu, Exp.
struct KernelSpec {
    KernelKind kind = KernelKind::Linear;
    double sigma = 1.0;  ///< Exp bandwidth
    int sign = 1;        ///< Exp sign, ±1

    static KernelSpec linear() { return {KernelKind::Linear, 1.0, 1}; }
    static KernelSpec relu() { return {KernelKind::Relu, 1.0, 1}; }
    static KernelSpec exp(double sigma = 1.0, int sign = 1) {
        detail::require(sigma > 0.0, "KernelSpec::exp: sigma must be positive");
        detail::require(sign == 1 || sign == -1, "KernelSpec::exp: sign must be +1 or -1");
        return {KernelKind::Exp, sigma, sign};
    }

    /// Linear and Exp with sign +1 give positive semidefinite Gram matrices.
    /// Relu and exp(-<u,w>/sigma^2) do not.
    bool psd() const noexcept { return kind == KernelKind::Linear || (kind == KernelKind::Exp && sign == 1); }

    friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

inline std::string_view to_string(KernelKind k) {
    switch (k) {
        case KernelKind::Linear: return "linear";
        case KernelKind::Relu: return "relu";
        case KernelKind::Exp: return "exp";
    }
    return "?";
}

inline std::optional<KernelKind> parse_kernel_kind(std::string_view s) {
    if (s == "linear") return KernelKind::Linear;
    if (s == "relu") return KernelKind::Relu;
    if (s == "exp") return KernelKind::Exp;
    return std::nullopt;
}

/// K as a function of the inner product ⟨u, w⟩.
inline double kernel_of_inner(const KernelSpec& spec, double ip) {
    switch (spec.kind) {
        case KernelKind::Linear: return ip;
        case KernelKind::Relu: return ip > 0.0 ? ip : 0.0;
        case KernelKind::Exp: return std::exp(spec.sign * ip / (spec.sigma * spec.sigma));
    }
    return 0.0;
}

inline double kernel_eval(const KernelSpec& spec, std::span<const double> u, std::span<const double> w) {
    detail::require(u.size() == w.size(), "kernel_eval: dimension mismatch");
    return kernel_of_inner(spec, dot(u, w));
}

struct GramMatrix {
    Mat m;
    KernelSpec spec;
    bool preconditioned = false;
};

/// [m]_ij = K(P x_i, P x_j) over the columns of x, with P = sigma_inv_sqrt
/// when given. Upper triangle computed, lower mirrored.
inline GramMatrix kernel_matrix(const KernelSpec& spec, const Mat& x,
                                const std::optional<Mat>& sigma_inv_sqrt = std::nullopt) {
    Mat u = x;
    if (sigma_inv_sqrt) {
        detail::require(sigma_inv_sqrt->rows() == x.rows() && sigma_inv_sqrt->cols() == x.rows(),
                        "kernel_matrix: preconditioner must be d x d");
        u = matmul(*sigma_inv_sqrt, x);
    }
    const std::size_t n = u.cols();
    Mat ip = matmul_tn(u, u);
    GramMatrix g{Mat(n, n), spec, sigma_inv_sqrt.has_value()};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) g.m(i, j) = g.m(j, i) = kernel_of_inner(spec, ip(i, j));
    return g;
}

/// U|D|Uᵀ: the Gram matrix with eigenvalues replaced by their magnitudes.
inline Mat kmat_plus(const Mat& g) {
    return sym_apply(sym_eig(g), [](double l) { return std::abs(l); });
}

inline Mat kmat_plus(const GramMatrix& g) { return kmat_plus(g.m); }

/// Relative PSD clamp used when taking square roots of Kmat_+.
inline constexpr double kPsdClampRel = 1e-10;

/// Y = S·ξ, S = sqrt(kplus), ξ ~ N(0, I).
inline Vec sample_gp_labels(const Mat& kplus, Rng& rng) {
    const SymEig e = sym_eig(kplus);
    double largest = 0.0;
    for (double l : e.values) largest = std::max(largest, std::abs(l));
    const double clamp = kPsdClampRel * largest;
    if (!e.values.empty() && e.values.back() < -clamp)
        throw NotPsd("sample_gp_labels: covariance has a negative eigenvalue");
    const Mat s = sym_apply(e, [clamp](double l) { return l < clamp ? 0.0 : std::sqrt(l); });
    const Vec xi = rng.normal_vec(kplus.rows());
    return matvec(s, xi);
}

/// Draws Y ~ N(0, Kmat_+(gram)). For PSD kernels Kmat_+ is the Gram matrix
/// itself and a pivoted Cholesky factor F (F Fᵀ = gram) gives Y = F ξ.
/// Otherwise one eigendecomposition gives Y = U (sqrt|D| ⊙ ξ). Both have
/// the law of sample_gp_labels(kmat_plus(gram)); magnitudes below the
/// relative clamp are dropped.
inline Vec sample_kgp_labels(const GramMatrix& gram, Rng& rng) {
    const std::size_t n = gram.m.rows();
    if (gram.spec.psd()) {
        const Mat f = psd_factor(gram.m, kPsdClampRel);
        return matvec(f, rng.normal_vec(f.cols()));
    }
    const SymEig e = sym_eig(gram.m);
    double largest = 0.0;
    for (double l : e.values) largest = std::max(largest, std::abs(l));
    const double clamp = kPsdClampRel * largest;
    const Vec xi = rng.normal_vec(n);
    Vec scaled(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double a = std::abs(e.values[k]);
        scaled[k] = a < clamp ? 0.0 : std::sqrt(a) * xi[k];
    }
    return matvec(e.vectors, scaled);
}

}  // namespace icl
