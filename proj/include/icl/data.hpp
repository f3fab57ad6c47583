#pragma once

// Prompt distributions: covariates x = Σ^{1/2}·ξ with ξ on the sphere, Gaussian,
// or a Gaussian mixture; labels from a K Gaussian process or a random
// two-layer ReLU network; and the masked prompt matrix Z0.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "icl/error.hpp"
#include "icl/kernels.hpp"
#include "icl/linalg.hpp"

namespace icl {

// ---------------------------------------------------------------------------
// Σ distortion
// ---------------------------------------------------------------------------

struct SigmaSpec {
    enum class Kind { Identity, RotatedDiag };
    Kind kind = Kind::Identity;
    Vec diag;                     ///< D, positive entries (RotatedDiag only)
    std::uint64_t rotation_seed = 0;

    static SigmaSpec identity() { return {}; }
    static SigmaSpec rotated_diag(Vec d, std::uint64_t seed) {
        return {Kind::RotatedDiag, std::move(d), seed};
    }

    friend bool operator==(const SigmaSpec&, const SigmaSpec&) = default;
};

/// Σ = UᵀDU with its square root and inverse square root precomputed.
class Sigma {
public:
    Sigma() = default;

    Sigma(const SigmaSpec& spec, std::size_t d) : spec_(spec) {
        detail::require(d >= 1, "Sigma: d must be >= 1");
        if (spec.kind == SigmaSpec::Kind::Identity) {
            sigma_ = half_ = inv_half_ = Mat::identity(d);
            return;
        }
        detail::require(spec.diag.size() == d, "Sigma: diag length must equal d");
        for (double x : spec.diag) detail::require(x > 0.0, "Sigma: diag entries must be positive");
        Rng rng(spec.rotation_seed);
        const Mat u = random_orthogonal(d, rng);
        sigma_ = conjugate(u, spec.diag, [](double x) { return x; });
        half_ = conjugate(u, spec.diag, [](double x) { return std::sqrt(x); });
        inv_half_ = conjugate(u, spec.diag, [](double x) { return 1.0 / std::sqrt(x); });
    }

    const SigmaSpec& spec() const noexcept { return spec_; }
    std::size_t dim() const noexcept { return sigma_.rows(); }
    const Mat& matrix() const noexcept { return sigma_; }
    const Mat& half() const noexcept { return half_; }
    const Mat& inv_half() const noexcept { return inv_half_; }
    bool is_identity() const noexcept { return spec_.kind == SigmaSpec::Kind::Identity; }

private:
    template <class F>
    static Mat conjugate(const Mat& u, const Vec& diag, F f) {
        const std::size_t d = u.rows();
        Mat out(d, d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < d; ++k) s += u(k, i) * f(diag[k]) * u(k, j);
                out(i, j) = s;
            }
        return out;
    }

    SigmaSpec spec_;
    Mat sigma_, half_, inv_half_;
};

// ---------------------------------------------------------------------------
// Covariates and labels
// ---------------------------------------------------------------------------

enum class CovariateKind { SphereIID, GaussianIID, GaussianMixture };

inline std::string_view to_string(CovariateKind k) {
    switch (k) {
        case CovariateKind::SphereIID: return "sphere";
        case CovariateKind::GaussianIID: return "gaussian";
        case CovariateKind::GaussianMixture: return "gmm";
    }
    return "?";
}

inline std::optional<CovariateKind> parse_covariate_kind(std::string_view s) {
    if (s == "sphere") return CovariateKind::SphereIID;
    if (s == "gaussian") return CovariateKind::GaussianIID;
    if (s == "gmm") return CovariateKind::GaussianMixture;
    return std::nullopt;
}

struct CovariateSpec {
    CovariateKind kind = CovariateKind::SphereIID;
    std::size_t num_clusters = 2;
    std::size_t d = 1;
};

enum class LabelKind { KGP, TwoLayerRelu };

inline std::string_view to_string(LabelKind k) {
    return k == LabelKind::KGP ? "kgp" : "relu_net";
}

inline std::optional<LabelKind> parse_label_kind(std::string_view s) {
    if (s == "kgp") return LabelKind::KGP;
    if (s == "relu_net") return LabelKind::TwoLayerRelu;
    return std::nullopt;
}

struct LabelSpec {
    LabelKind kind = LabelKind::KGP;
    KernelSpec kernel = KernelSpec::linear();
    std::size_t hidden = 0;  ///< 0 selects the default width 4d
};

/// d × n_plus_1 covariate matrix, columns Σ^{1/2}·ξ.
inline Mat sample_covariates(const CovariateSpec& spec, const Sigma& sigma, std::size_t n_plus_1,
                             Rng& rng) {
    detail::require(n_plus_1 >= 2, "sample_covariates: need at least two columns");
    detail::require(spec.d >= 1 && sigma.dim() == spec.d, "sample_covariates: dimension mismatch");
    const std::size_t d = spec.d;
    Mat xi(d, n_plus_1);

    switch (spec.kind) {
        case CovariateKind::SphereIID:
            for (std::size_t j = 0; j < n_plus_1; ++j) {
                Vec g;
                double nrm = 0.0;
                do {
                    g = rng.normal_vec(d);
                    nrm = norm2(g);
                } while (nrm == 0.0);
                for (std::size_t i = 0; i < d; ++i) xi(i, j) = g[i] / nrm;
            }
            break;
        case CovariateKind::GaussianIID:
            xi = rng.normal_mat(d, n_plus_1);
            break;
        case CovariateKind::GaussianMixture: {
            detail::require(spec.num_clusters >= 1, "sample_covariates: num_clusters must be >= 1");
            std::vector<Vec> means(spec.num_clusters);
            for (auto& mu : means) mu = rng.normal_vec(d);
            for (std::size_t j = 0; j < n_plus_1; ++j) {
                const std::size_t c =
                    spec.num_clusters == 1
                        ? 0
                        : static_cast<std::size_t>(rng.uniform() * static_cast<double>(spec.num_clusters));
                for (std::size_t i = 0; i < d; ++i) xi(i, j) = means[c][i] + rng.normal();
            }
            break;
        }
    }
    if (sigma.is_identity()) return xi;
    return matmul(sigma.half(), xi);
}

/// Label row for the columns of x (length n+1, query label included).
inline Vec sample_labels(const LabelSpec& spec, const Mat& x, const Sigma& sigma, Rng& rng) {
    detail::require(x.cols() >= 2, "sample_labels: need at least two columns");
    detail::require(sigma.dim() == x.rows(), "sample_labels: Sigma dimension mismatch");
    if (spec.kind == LabelKind::KGP) {
        const auto pre = sigma.is_identity() ? std::nullopt : std::optional<Mat>(sigma.inv_half());
        const GramMatrix g = kernel_matrix(spec.kernel, x, pre);
        return sample_kgp_labels(g, rng);
    }
    const std::size_t d = x.rows();
    const std::size_t m = spec.hidden == 0 ? 4 * d : spec.hidden;
    const Mat theta1 = rng.normal_mat(m, d);
    const Vec theta2 = rng.normal_vec(m);
    const Mat pre = matmul(theta1, x);
    Vec y(x.cols(), 0.0);
    for (std::size_t j = 0; j < x.cols(); ++j)
        for (std::size_t h = 0; h < m; ++h) y[j] += theta2[h] * std::max(0.0, pre(h, j));
    return y;
}

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

/// One in-context instance. z0 carries the labels with the query label
/// zeroed; y keeps every label for loss evaluation.
struct Prompt {
    Mat x;
    Vec y;
    Mat z0;

    std::size_t dim() const noexcept { return x.rows(); }
    std::size_t num_demos() const noexcept { return x.cols() - 1; }
    double query_label() const noexcept { return y.back(); }
};

inline Prompt assemble_prompt(Mat x, Vec y) {
    detail::require(x.cols() >= 1 && y.size() == x.cols(), "assemble_prompt: label count must equal columns");
    const std::size_t d = x.rows();
    const std::size_t cols = x.cols();
    Mat z0(d + 1, cols);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < cols; ++j) z0(i, j) = x(i, j);
    for (std::size_t j = 0; j + 1 < cols; ++j) z0(d, j) = y[j];
    z0(d, cols - 1) = 0.0;
    return {std::move(x), std::move(y), std::move(z0)};
}

/// Prompt distribution: covariates, labels, Σ, and n demonstrations.
struct PromptSampler {
    CovariateSpec covariates;
    LabelSpec labels;
    Sigma sigma;
    std::size_t n = 1;

    Prompt sample(Rng& rng) const {
        Mat x = sample_covariates(covariates, sigma, n + 1, rng);
        Vec y = sample_labels(labels, x, sigma, rng);
        return assemble_prompt(std::move(x), std::move(y));
    }

    std::vector<Prompt> batch(std::size_t count, Rng& rng) const {
        std::vector<Prompt> out;
        out.reserve(count);
        for (std::size_t i = 0; i < count; ++i) out.push_back(sample(rng));
        return out;
    }
};

}  // namespace icl
