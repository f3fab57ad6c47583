#pragma once

// Generalized attention  Z_{l+1} = Z_l + V_l Z_l M h(B_l X_l, C_l X_l)
// with value matrices restricted to V_l = [[A_l, 0], [0, r_l]], in the split
// form
//     X_{l+1} = X_l + A_l X_l M h(B_l X_l, C_l X_l)
//     Y_{l+1} = Y_l + r_l Y_l M h(B_l X_l, C_l X_l).
// M = diag(1, ..., 1, 0) drops the query column as a source.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icl/error.hpp"
#include "icl/kernels.hpp"
#include "icl/linalg.hpp"

namespace icl {

enum class Activation { LinearDot, ReluDot, ExpDot, MaskedSoftmax };

inline constexpr Activation kAllActivations[] = {Activation::LinearDot, Activation::ReluDot,
                                                 Activation::ExpDot, Activation::MaskedSoftmax};

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::LinearDot: return "linear";
        case Activation::ReluDot: return "relu";
        case Activation::ExpDot: return "exp";
        case Activation::MaskedSoftmax: return "softmax";
    }
    return "?";
}

inline std::optional<Activation> parse_activation(std::string_view s) {
    if (s == "linear") return Activation::LinearDot;
    if (s == "relu") return Activation::ReluDot;
    if (s == "exp") return Activation::ExpDot;
    if (s == "softmax") return Activation::MaskedSoftmax;
    return std::nullopt;
}

/// The activation whose entries are K(u_i, w_j) for this kernel, if any.
/// Exp kernels only match ExpDot at sigma = 1, sign = +1.
inline std::optional<Activation> matching_activation(const KernelSpec& k) {
    switch (k.kind) {
        case KernelKind::Linear: return Activation::LinearDot;
        case KernelKind::Relu: return Activation::ReluDot;
        case KernelKind::Exp:
            if (k.sigma == 1.0 && k.sign == 1) return Activation::ExpDot;
            return std::nullopt;
    }
    return std::nullopt;
}

/// exp() arguments above this raise Overflow instead of saturating.
inline constexpr double kExpGuard = 700.0;

namespace detail {

/// h applied to S = UᵀW in place.
inline void apply_activation_inplace(Activation act, Mat& s) {
    const std::size_t cols = s.cols();
    const std::size_t rows = s.rows();
    switch (act) {
        case Activation::LinearDot: return;
        case Activation::ReluDot:
            for (double& v : s.data()) v = v > 0.0 ? v : 0.0;
            return;
        case Activation::ExpDot:
            for (double& v : s.data()) {
                if (v > kExpGuard) throw Overflow("ExpDot: argument " + std::to_string(v) + " exceeds guard");
                v = std::exp(v);
            }
            return;
        case Activation::MaskedSoftmax: {
            // Column-wise softmax over rows 0..rows-2; last row zero.
            const std::size_t n = rows - 1;
            for (std::size_t j = 0; j < cols; ++j) {
                if (n == 0) {
                    s(0, j) = 0.0;
                    continue;
                }
                double mx = s(0, j);
                for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, s(i, j));
                double total = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double e = std::exp(s(i, j) - mx);
                    s(i, j) = e;
                    total += e;
                }
                for (std::size_t i = 0; i < n; ++i) s(i, j) /= total;
                s(n, j) = 0.0;
            }
            return;
        }
    }
}

}  // namespace detail

/// (n+1) × (n+1) attention scores h(U, W) for U, W of shape d × (n+1).
inline Mat activation_apply(Activation act, const Mat& u, const Mat& w) {
    detail::require(u.rows() == w.rows() && u.cols() == w.cols(), "activation_apply: U and W must have the same shape");
    detail::require(u.cols() >= 1, "activation_apply: empty input");
    Mat s = matmul_tn(u, w);
    detail::apply_activation_inplace(act, s);
    return s;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// One layer. `a` empty means the top-left value block is pinned to zero.
struct LayerParams {
    std::optional<Mat> a;
    double r = 0.0;
    Mat b;
    Mat c;

    std::size_t dim() const noexcept { return b.rows(); }

    /// The (d+1) × (d+1) value matrix [[A, 0], [0, r]].
    Mat value_matrix() const {
        const std::size_t d = dim();
        Mat v(d + 1, d + 1);
        if (a)
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j) v(i, j) = (*a)(i, j);
        v(d, d) = r;
        return v;
    }

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct TfParams {
    std::vector<LayerParams> layers;

    std::size_t dim() const noexcept { return layers.empty() ? 0 : layers.front().dim(); }
    std::size_t num_layers() const noexcept { return layers.size(); }
    bool any_full_a() const noexcept {
        for (const auto& l : layers)
            if (l.a) return true;
        return false;
    }

    void validate() const {
        detail::require(!layers.empty(), "TfParams: at least one layer required");
        const std::size_t d = dim();
        for (const auto& l : layers) {
            detail::require(l.b.rows() == d && l.b.cols() == d, "TfParams: B must be d x d in every layer");
            detail::require(l.c.rows() == d && l.c.cols() == d, "TfParams: C must be d x d in every layer");
            if (l.a) detail::require(l.a->rows() == d && l.a->cols() == d, "TfParams: A must be d x d");
        }
    }

    friend bool operator==(const TfParams&, const TfParams&) = default;
};

/// All value matrices zero (ZeroA, r = 0), B = C = I.
inline TfParams zero_params(std::size_t d, std::size_t num_layers, bool full_a = false) {
    TfParams p;
    for (std::size_t l = 0; l < num_layers; ++l) {
        LayerParams lp{std::nullopt, 0.0, Mat::identity(d), Mat::identity(d)};
        if (full_a) lp.a = Mat(d, d);
        p.layers.push_back(std::move(lp));
    }
    return p;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

namespace detail {

/// State entering one layer plus the attention scores it produced.
struct LayerTape {
    Mat x;  ///< X_l, d × N
    Vec y;  ///< Y_l, length N
    Mat w;  ///< (BᵀC) X_l, d × N
    Mat h;  ///< h(B X_l, C X_l), N × N
};

struct Tape {
    std::vector<LayerTape> layers;
    Mat x_out;
    Vec y_out;
};

/// G = BᵀC, the only combination of B and C the scores depend on.
inline Mat score_matrix(const LayerParams& layer) { return matmul_tn(layer.b, layer.c); }

/// h(BX, CX) computed as h applied to S = Xᵀ (G X). `w` receives G X.
/// With `query_column_only` just the last column of h is filled.
inline void attention_scores(Activation act, const Mat& g, const Mat& x, Mat& w, Mat& h,
                             bool query_column_only = false) {
    const std::size_t d = x.rows();
    const std::size_t cols = x.cols();
    w = matmul(g, x);
    h = Mat(cols, cols);
    if (query_column_only) {
        const std::size_t q = cols - 1;
        Mat s(cols, 1);
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t i = 0; i < cols; ++i) s(i, 0) += x(r, i) * w(r, q);
        apply_activation_inplace(act, s);
        for (std::size_t i = 0; i < cols; ++i) h(i, q) = s(i, 0);
        return;
    }
    for (std::size_t r = 0; r < d; ++r) {
        auto xr = x.row(r);
        auto wr = w.row(r);
        for (std::size_t i = 0; i < cols; ++i) {
            const double xv = xr[i];
            double* hi = h.row(i).data();
            for (std::size_t j = 0; j < cols; ++j) hi[j] += xv * wr[j];
        }
    }
    apply_activation_inplace(act, h);
}

/// Runs the split dynamics from (x, y) and records every layer input.
/// With `query_only_output` (sparse parameterization only) the last layer
/// produces the query entry of y_out; the rest of y_out is left stale.
inline Tape run_tape(const TfParams& params, Activation act, Mat x, Vec y, bool query_only_output = false) {
    params.validate();
    const std::size_t d = params.dim();
    require(x.rows() == d, "forward: prompt dimension does not match parameters");
    require(y.size() == x.cols(), "forward: label row length mismatch");
    const std::size_t cols = x.cols();
    const std::size_t n = cols - 1;

    Tape tape;
    tape.layers.reserve(params.layers.size());
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        const LayerParams& layer = params.layers[li];
        const bool partial = query_only_output && li + 1 == params.layers.size() && !params.any_full_a();
        LayerTape lt;
        attention_scores(act, score_matrix(layer), x, lt.w, lt.h, partial);
        const Mat& h = lt.h;

        Vec y_next = y;
        if (partial) {
            for (std::size_t i = 0; i < n; ++i) y_next[n] += layer.r * y[i] * h(i, n);
        } else if (layer.r != 0.0) {
            for (std::size_t i = 0; i < n; ++i) {
                const double yi = layer.r * y[i];
                if (yi == 0.0) continue;
                const double* hi = h.row(i).data();
                for (std::size_t j = 0; j < cols; ++j) y_next[j] += yi * hi[j];
            }
        }

        Mat x_next;
        if (layer.a) {
            // X M h: drop the query column of X as a source.
            Mat xmh(d, cols);
            for (std::size_t r = 0; r < d; ++r) {
                double* out = xmh.row(r).data();
                for (std::size_t i = 0; i < n; ++i) {
                    const double xv = x(r, i);
                    if (xv == 0.0) continue;
                    const double* hi = h.row(i).data();
                    for (std::size_t j = 0; j < cols; ++j) out[j] += xv * hi[j];
                }
            }
            x_next = x + matmul(*layer.a, xmh);
        }

        lt.x = layer.a ? std::move(x) : x;
        lt.y = std::move(y);
        tape.layers.push_back(std::move(lt));
        if (layer.a) x = std::move(x_next);
        y = std::move(y_next);
    }
    tape.x_out = std::move(x);
    tape.y_out = std::move(y);
    return tape;
}

inline Mat stack_z(const Mat& x, std::span<const double> y) {
    Mat z(x.rows() + 1, x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) z(i, j) = x(i, j);
    for (std::size_t j = 0; j < x.cols(); ++j) z(x.rows(), j) = y[j];
    return z;
}

}  // namespace detail

/// Z_0 ... Z_{k+1}; rows 0..d-1 of each are X_l, row d is Y_l.
struct Trajectory {
    std::vector<Mat> zs;

    std::size_t num_states() const noexcept { return zs.size(); }
};

inline Trajectory trajectory_from_tape(const detail::Tape& tape) {
    Trajectory t;
    t.zs.reserve(tape.layers.size() + 1);
    for (const auto& l : tape.layers) t.zs.push_back(detail::stack_z(l.x, l.y));
    t.zs.push_back(detail::stack_z(tape.x_out, tape.y_out));
    return t;
}

/// Runs every layer from the masked prompt matrix z0.
inline Trajectory forward(const TfParams& params, Activation act, const Mat& z0) {
    detail::require(z0.rows() >= 2 && z0.cols() >= 1, "forward: z0 too small");
    const std::size_t d = z0.rows() - 1;
    Mat x(d, z0.cols());
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < z0.cols(); ++j) x(i, j) = z0(i, j);
    auto yrow = z0.row(d);
    Trajectory t = trajectory_from_tape(detail::run_tape(params, act, std::move(x), Vec(yrow.begin(), yrow.end())));
    t.zs.front() = z0;
    return t;
}

/// Same dynamics started from the unmasked Z̄_0 (query label kept).
inline Trajectory forward_unmasked(const TfParams& params, Activation act, const Mat& x, std::span<const double> y_full) {
    detail::require(y_full.size() == x.cols(), "forward_unmasked: label row length mismatch");
    return trajectory_from_tape(detail::run_tape(params, act, x, Vec(y_full.begin(), y_full.end())));
}

/// TF_l = -[Z_l]_{d+1, n+1}.
inline double predict_at_layer(const Trajectory& traj, std::size_t layer) {
    if (layer >= traj.zs.size())
        throw ContractViolation("predict_at_layer: layer " + std::to_string(layer) + " out of range");
    const Mat& z = traj.zs[layer];
    return -z(z.rows() - 1, z.cols() - 1);
}

/// Label estimate for the query at `layer`. The query entry of Z tracks the
/// negated prediction (the in-context loss is ([Z]_{d+1,n+1} + y)^2), so the
/// estimate is TF_l itself.
inline double label_estimate(const Trajectory& traj, std::size_t layer) {
    return predict_at_layer(traj, layer);
}

}  // namespace icl
