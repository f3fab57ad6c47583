#pragma once

// Reference algorithms that never touch the transformer: functional gradient
// descent in representer form, parameter-space least-squares GD, and the
// conditional-Gaussian (Bayes) predictor. Plus the weight construction that
// makes the transformer reproduce functional GD.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "icl/data.hpp"
#include "icl/error.hpp"
#include "icl/kernels.hpp"
#include "icl/linalg.hpp"
#include "icl/transformer.hpp"

namespace icl {

/// f(·) = Σ_i alpha_i K(·, x_i) over the demonstration covariates.
struct FgdState {
    Vec alpha;
    KernelSpec kernel;
    Mat anchors;  ///< d × n

    double operator()(std::span<const double> x) const {
        double f = 0.0;
        for (std::size_t i = 0; i < alpha.size(); ++i) {
            double ip = 0.0;
            for (std::size_t r = 0; r < anchors.rows(); ++r) ip += x[r] * anchors(r, i);
            f += alpha[i] * kernel_of_inner(kernel, ip);
        }
        return f;
    }
};

/// One functional-GD step on L(f) = Σ (f(x_i) - y_i)^2:
/// f <- f + rate · Σ_i (y_i - f(x_i)) K(·, x_i).
inline void fgd_step(FgdState& state, std::span<const double> y_demo, double rate) {
    const std::size_t n = state.alpha.size();
    Vec resid(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec xi = state.anchors.column(i);
        resid[i] = y_demo[i] - state(xi);
    }
    for (std::size_t i = 0; i < n; ++i) state.alpha[i] += rate * resid[i];
}

/// f_0(query) ... f_{k+1}(query) for rates r'_0 ... r'_k, starting at f_0 = 0.
inline Vec fgd_run(const KernelSpec& kernel, const Mat& x_demo, std::span<const double> y_demo,
                   std::span<const double> rates, std::span<const double> query) {
    detail::require(y_demo.size() == x_demo.cols(), "fgd_run: label count must equal demo count");
    detail::require(query.size() == x_demo.rows(), "fgd_run: query dimension mismatch");
    FgdState state{Vec(x_demo.cols(), 0.0), kernel, x_demo};
    Vec out;
    out.reserve(rates.size() + 1);
    out.push_back(state(query));
    for (double rate : rates) {
        fgd_step(state, y_demo, rate);
        out.push_back(state(query));
    }
    return out;
}

/// ⟨θ_l, query⟩ for θ_{l+1} = θ_l - r'_l ∇R(θ_l), R(θ) = ½ Σ (⟨x_i, θ⟩ - y_i)^2.
inline Vec linear_gd_oracle(const Mat& x_demo, std::span<const double> y_demo, std::span<const double> rates,
                            std::span<const double> query) {
    detail::require(y_demo.size() == x_demo.cols(), "linear_gd_oracle: label count must equal demo count");
    detail::require(query.size() == x_demo.rows(), "linear_gd_oracle: query dimension mismatch");
    const std::size_t d = x_demo.rows();
    const std::size_t n = x_demo.cols();
    Vec theta(d, 0.0);
    Vec out;
    out.reserve(rates.size() + 1);
    out.push_back(0.0);
    for (double rate : rates) {
        Vec grad(d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double pred = 0.0;
            for (std::size_t r = 0; r < d; ++r) pred += x_demo(r, i) * theta[r];
            const double res = pred - y_demo[i];
            for (std::size_t r = 0; r < d; ++r) grad[r] += res * x_demo(r, i);
        }
        for (std::size_t r = 0; r < d; ++r) theta[r] -= rate * grad[r];
        out.push_back(dot(theta, query));
    }
    return out;
}

/// V_l = [[0, 0], [0, -r'_l]], B_l = C_l = I.
inline TfParams prop1_params(std::size_t d, std::span<const double> rates) {
    detail::require(d >= 1, "prop1_params: d must be >= 1");
    TfParams p;
    for (double rate : rates)
        p.layers.push_back({std::nullopt, -rate, Mat::identity(d), Mat::identity(d)});
    return p;
}

inline TfParams prop1_params(std::size_t d, std::initializer_list<double> rates) {
    return prop1_params(d, std::span<const double>(rates.begin(), rates.size()));
}

/// Default ridge added to the demo Gram block: 1e-10 · trace / n.
inline double default_jitter(const Mat& gram) {
    return gram.rows() == 0 ? 0.0 : 1e-10 * trace(gram) / static_cast<double>(gram.rows());
}

/// νᵀ (K̂ + jitter·I)^{-1} Ŷ, solved through an eigendecomposition.
/// Relu is rejected: its Gram matrix need not be PSD.
inline double bayes_predict(const KernelSpec& kernel, const Mat& x_demo, std::span<const double> y_demo,
                            std::span<const double> query, std::optional<double> jitter = std::nullopt) {
    if (!kernel.psd()) throw ContractViolation("bayes_predict: kernel is not positive semidefinite");
    detail::require(y_demo.size() == x_demo.cols(), "bayes_predict: label count must equal demo count");
    detail::require(query.size() == x_demo.rows(), "bayes_predict: query dimension mismatch");
    const std::size_t n = x_demo.cols();
    const Mat gram = kernel_matrix(kernel, x_demo).m;
    const double ridge = jitter.value_or(default_jitter(gram));
    detail::require(ridge >= 0.0, "bayes_predict: jitter must be non-negative");

    Vec nu(n);
    for (std::size_t i = 0; i < n; ++i) {
        double ip = 0.0;
        for (std::size_t r = 0; r < x_demo.rows(); ++r) ip += query[r] * x_demo(r, i);
        nu[i] = kernel_of_inner(kernel, ip);
    }

    const SymEig e = sym_eig(gram);
    const double top = e.values.empty() ? 0.0 : std::abs(e.values.front());
    double pred = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double lam = e.values[k] + ridge;
        if (!(lam > 1e-15 * std::max(top, 1e-300)))
            throw Singular("bayes_predict: regularized Gram matrix is singular");
        double un = 0.0;
        double uy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            un += e.vectors(i, k) * nu[i];
            uy += e.vectors(i, k) * y_demo[i];
        }
        pred += un * uy / lam;
    }
    return pred;
}

/// Prompt matrix for demos plus a query with masked label.
inline Mat demo_prompt_matrix(const Mat& x_demo, std::span<const double> y_demo, std::span<const double> query) {
    const std::size_t d = x_demo.rows();
    const std::size_t n = x_demo.cols();
    Mat x(d, n + 1);
    Vec y(n + 1, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < d; ++i) x(i, j) = x_demo(i, j);
        y[j] = y_demo[j];
    }
    x.set_column(n, query);
    return assemble_prompt(std::move(x), std::move(y)).z0;
}

/// Transformer estimates at layers 0..max_layers under prop1_params with the
/// constant rate delta. Requires 0 < delta < 1/λ_max(K̂) and a kernel with a
/// matching activation.
inline Vec neumann_converges(const KernelSpec& kernel, const Mat& x_demo, std::span<const double> y_demo,
                             std::span<const double> query, double delta, std::size_t max_layers) {
    if (!kernel.psd()) throw ContractViolation("neumann_converges: kernel is not positive semidefinite");
    const auto act = matching_activation(kernel);
    if (!act) throw ContractViolation("neumann_converges: kernel has no matching activation");
    detail::require(max_layers >= 1, "neumann_converges: max_layers must be >= 1");
    const double lmax = spectral_norm(kernel_matrix(kernel, x_demo).m);
    detail::require(delta > 0.0 && delta * lmax < 1.0, "neumann_converges: need 0 < delta < 1/lambda_max");

    const Vec rates(max_layers, delta);
    const Trajectory t = forward(prop1_params(x_demo.rows(), rates), *act, demo_prompt_matrix(x_demo, y_demo, query));
    Vec out(t.num_states());
    for (std::size_t l = 0; l < t.num_states(); ++l) out[l] = label_estimate(t, l);
    return out;
}

}  // namespace icl
