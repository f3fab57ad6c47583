#pragma once

// Randomized property checks bundled by the `verify` command. Each returns
// the worst error seen and the tolerance it is held to.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icl/config.hpp"
#include "icl/data.hpp"
#include "icl/funcgd.hpp"
#include "icl/kernels.hpp"
#include "icl/linalg.hpp"
#include "icl/train.hpp"
#include "icl/transformer.hpp"

namespace icl {

struct CheckResult {
    enum class Status { Pass, Fail, Skipped };
    std::string name;
    Status status = Status::Pass;
    double max_error = 0.0;
    double tolerance = 0.0;
    std::string note;

    static CheckResult measured(std::string name, double err, double tol) {
        return {std::move(name), err <= tol ? Status::Pass : Status::Fail, err, tol, {}};
    }
    static CheckResult skipped(std::string name, std::string why) {
        return {std::move(name), Status::Skipped, 0.0, 0.0, std::move(why)};
    }
};

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

inline Mat random_unit_columns(std::size_t d, std::size_t cols, Rng& rng) {
    CovariateSpec spec{CovariateKind::SphereIID, 1, d};
    return sample_covariates(spec, Sigma(SigmaSpec::identity(), d), cols, rng);
}

/// Entrywise N(0, scale^2) parameters; the A block uses kAScale so that the
/// covariate rows stay O(1) through several ExpDot layers.
inline constexpr double kAScale = 0.02;

inline TfParams random_params(std::size_t d, std::size_t layers, bool full_a, double scale, Rng& rng) {
    TfParams p;
    for (std::size_t l = 0; l < layers; ++l) {
        LayerParams lp;
        if (full_a) lp.a = rng.normal_mat(d, d, kAScale);
        lp.r = scale * rng.normal();
        lp.b = rng.normal_mat(d, d, scale);
        lp.c = rng.normal_mat(d, d, scale);
        p.layers.push_back(std::move(lp));
    }
    return p;
}

/// Prompts with unit-sphere covariates and i.i.d. N(0,1) labels.
inline std::vector<Prompt> random_batch(std::size_t d, std::size_t n, std::size_t count, Rng& rng) {
    std::vector<Prompt> out;
    for (std::size_t k = 0; k < count; ++k) out.push_back(assemble_prompt(random_unit_columns(d, n + 1, rng), rng.normal_vec(n + 1)));
    return out;
}

/// Random invertible matrix with condition number at most max_cond:
/// U diag(s) Vᵀ with singular values log-uniform in [1, max_cond].
inline Mat random_invertible(std::size_t d, double max_cond, Rng& rng) {
    const Mat u = random_orthogonal(d, rng);
    const Mat v = random_orthogonal(d, rng);
    Vec s(d);
    for (double& x : s) x = std::exp(rng.uniform() * std::log(max_cond));
    if (d > 1) {
        s[0] = 1.0;
        s[d - 1] = max_cond;
    }
    return matmul(matmul(u, Mat::diag(s)), transpose(v));
}

/// Smallest |[(B X_l)ᵀ (C X_l)]_ij| over all layers and prompts.
inline double min_abs_score(const TfParams& params, Activation act, std::span<const Prompt> batch) {
    double best = INFINITY;
    for (const Prompt& p : batch) {
        Vec y = p.y;
        y.back() = 0.0;
        const detail::Tape tape = detail::run_tape(params, act, p.x, std::move(y));
        for (std::size_t l = 0; l < params.layers.size(); ++l) {
            const Mat s = matmul_tn(matmul(params.layers[l].b, tape.layers[l].x), matmul(params.layers[l].c, tape.layers[l].x));
            for (double v : s.data()) best = std::min(best, std::abs(v));
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Individual checks
// ---------------------------------------------------------------------------

/// Transformer under prop1_params vs functional GD at every layer.
inline CheckResult check_prop1_equivalence(const KernelSpec& kernel, Activation act, std::size_t instances, Rng& rng) {
    const auto match = matching_activation(kernel);
    if (!match || *match != act) return CheckResult::skipped("prop1_equivalence", "skipped: no matching kernel");
    double worst = 0.0;
    for (std::size_t t = 0; t < instances; ++t) {
        const std::size_t d = 1 + rng.next_u64() % 6;
        const std::size_t n = 1 + rng.next_u64() % 12;
        const std::size_t k = rng.next_u64() % 7;
        Vec rates(k + 1);
        for (double& r : rates) r = rng.uniform() - 0.5;
        const Mat x = random_unit_columns(d, n + 1, rng);
        const Vec y = rng.normal_vec(n + 1);
        Mat x_demo(d, n);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < n; ++j) x_demo(i, j) = x(i, j);
        const Vec query = x.column(n);
        const Vec y_demo(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n));
        const Trajectory traj = forward(prop1_params(d, rates), act, assemble_prompt(x, y).z0);
        const Vec oracle = fgd_run(kernel, x_demo, y_demo, rates, query);
        for (std::size_t l = 0; l < oracle.size(); ++l)
            worst = std::max(worst, std::abs(label_estimate(traj, l) - oracle[l]));
    }
    return CheckResult::measured("prop1_equivalence", worst, 1e-9);
}

inline CheckResult check_trace_form(Activation act, bool full_a, std::size_t instances, Rng& rng) {
    double worst = 0.0;
    for (std::size_t t = 0; t < instances; ++t) {
        const std::size_t d = 1 + rng.next_u64() % 5;
        const std::size_t n = 1 + rng.next_u64() % 8;
        const TfParams p = random_params(d, 1 + rng.next_u64() % 4, full_a, 0.5, rng);
        const auto batch = random_batch(d, n, 4, rng);
        const double a = icl_loss(p, act, batch);
        const double b = loss_trace_form(p, act, batch);
        worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(a)));
    }
    return CheckResult::measured(std::string("trace_form_identity_") + (full_a ? "full" : "sparse"), worst, 1e-9);
}

/// Max over tensors of ||analytic - fd|| / (1e-8 + ||fd||).
inline double gradient_rel_error(const ParamGrads& analytic, const ParamGrads& fd) {
    const auto ga = tensors(analytic);
    const auto gf = tensors(fd);
    double worst = 0.0;
    for (std::size_t t = 0; t < ga.size(); ++t) {
        double diff = 0.0;
        double ref = 0.0;
        for (std::size_t k = 0; k < ga[t].size(); ++k) {
            diff += (ga[t][k] - gf[t][k]) * (ga[t][k] - gf[t][k]);
            ref += gf[t][k] * gf[t][k];
        }
        worst = std::max(worst, std::sqrt(diff) / (1e-8 + std::sqrt(ref)));
    }
    return worst;
}

inline CheckResult check_gradients(Activation act, bool full_a, std::size_t instances, Rng& rng) {
    double worst = 0.0;
    for (std::size_t t = 0; t < instances; ++t) {
        TfParams p;
        std::vector<Prompt> batch;
        do {
            const std::size_t d = 1 + rng.next_u64() % 4;
            const std::size_t n = 1 + rng.next_u64() % 6;
            p = random_params(d, 1 + rng.next_u64() % 3, full_a, 0.7, rng);
            batch = random_batch(d, n, 3, rng);
        } while (act == Activation::ReluDot && min_abs_score(p, act, batch) < 1e-6);
        worst = std::max(worst, gradient_rel_error(grad_analytic(p, act, batch), grad_fd(p, act, batch)));
    }
    return CheckResult::measured(std::string("gradient_check_") + (full_a ? "full" : "sparse"), worst, 1e-5);
}

/// h(SᵀU, S⁻¹W) = h(U, W) for invertible S.
inline CheckResult check_activation_invariance(Activation act, std::size_t instances, Rng& rng) {
    double worst = 0.0;
    for (std::size_t t = 0; t < instances; ++t) {
        const std::size_t d = 1 + rng.next_u64() % 5;
        const std::size_t cols = 2 + rng.next_u64() % 8;
        const Mat u = rng.normal_mat(d, cols, 0.5);
        const Mat w = rng.normal_mat(d, cols, 0.5);
        const Mat s = random_invertible(d, 1e3, rng);
        const Mat base = activation_apply(act, u, w);
        const Mat moved = activation_apply(act, matmul_tn(s, u), matmul(inverse(s), w));
        worst = std::max(worst, max_abs(moved - base));
    }
    return CheckResult::measured("activation_invariance", worst, 1e-9);
}

/// icl_loss unchanged under (B, C) -> (ΛᵀB, Λ⁻¹C).
inline CheckResult check_reparameterization(Activation act, std::size_t instances, Rng& rng) {
    double worst = 0.0;
    for (std::size_t t = 0; t < instances; ++t) {
        const std::size_t d = 1 + rng.next_u64() % 5;
        const TfParams p = random_params(d, 1 + rng.next_u64() % 3, rng.uniform() < 0.5, 0.5, rng);
        const auto batch = random_batch(d, 1 + rng.next_u64() % 8, 4, rng);
        TfParams q = p;
        for (auto& l : q.layers) {
            const Mat lam = random_invertible(d, 1e2, rng);
            l.b = matmul_tn(lam, l.b);
            l.c = matmul(inverse(lam), l.c);
        }
        const double a = icl_loss(p, act, batch);
        const double b = icl_loss(q, act, batch);
        worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(a)));
    }
    return CheckResult::measured("reparameterization_invariance", worst, 1e-9);
}

/// Kmat_+ is PSD, idempotent, and a fixed point on PSD Gram matrices.
inline std::vector<CheckResult> check_kmat_plus(const PromptSampler& sampler, std::size_t instances, Rng& rng) {
    double worst_neg = 0.0;
    double worst_idem = 0.0;
    double worst_fixed = 0.0;
    const bool psd = sampler.labels.kernel.psd();
    for (std::size_t t = 0; t < instances; ++t) {
        const Mat x = sample_covariates(sampler.covariates, sampler.sigma, sampler.n + 1, rng);
        const auto pre = sampler.sigma.is_identity() ? std::nullopt : std::optional<Mat>(sampler.sigma.inv_half());
        const GramMatrix g = kernel_matrix(sampler.labels.kernel, x, pre);
        const Mat kp = kmat_plus(g);
        const double scale = 1.0 + frobenius_norm(g.m);
        worst_neg = std::max(worst_neg, -sym_eig(kp).values.back() / scale);
        worst_idem = std::max(worst_idem, max_abs(kmat_plus(kp) - kp) / scale);
        if (psd) worst_fixed = std::max(worst_fixed, max_abs(kp - g.m) / scale);
    }
    std::vector<CheckResult> out;
    out.push_back(CheckResult::measured("kmat_plus_psd", std::max(worst_neg, 0.0), 1e-10));
    out.push_back(CheckResult::measured("kmat_plus_idempotent", worst_idem, 1e-9));
    if (psd) out.push_back(CheckResult::measured("kmat_plus_fixed_point", worst_fixed, 1e-9));
    else out.push_back(CheckResult::skipped("kmat_plus_fixed_point", "skipped: kernel is not PSD"));
    return out;
}

/// Masked softmax equals column-normalized ExpDot over rows 1..n.
inline CheckResult check_softmax_exp(std::size_t instances, Rng& rng) {
    double worst = 0.0;
    for (std::size_t t = 0; t < instances; ++t) {
        const std::size_t d = 1 + rng.next_u64() % 5;
        const std::size_t cols = 2 + rng.next_u64() % 10;
        const Mat u = rng.normal_mat(d, cols, 0.7);
        const Mat w = rng.normal_mat(d, cols, 0.7);
        const Mat sm = activation_apply(Activation::MaskedSoftmax, u, w);
        const Mat ex = activation_apply(Activation::ExpDot, u, w);
        for (std::size_t j = 0; j < cols; ++j) {
            double tau = 0.0;
            for (std::size_t i = 0; i + 1 < cols; ++i) tau += ex(i, j);
            for (std::size_t i = 0; i + 1 < cols; ++i) worst = std::max(worst, std::abs(sm(i, j) - ex(i, j) / tau));
            worst = std::max(worst, std::abs(sm(cols - 1, j)));
        }
    }
    return CheckResult::measured("softmax_exp_relation", worst, 1e-12);
}

/// One demo set with query for the Bayes convergence checks.
struct BayesInstance {
    Mat x_demo;
    Vec y_demo;
    Vec query;
    Mat gram;
    double lambda_max = 0.0;
};

/// Sphere covariates with GP labels, resampled until the nonzero spectrum
/// of the demo Gram block has condition number at most max_cond.
inline BayesInstance sample_bayes_instance(const KernelSpec& kernel, std::size_t d, std::size_t n, double max_cond,
                                           Rng& rng) {
    while (true) {
        const Mat x = random_unit_columns(d, n + 1, rng);
        BayesInstance b;
        b.x_demo = Mat(d, n);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < n; ++j) b.x_demo(i, j) = x(i, j);
        b.gram = kernel_matrix(kernel, b.x_demo).m;
        const SymEig e = sym_eig(b.gram);
        b.lambda_max = e.values.front();
        double lmin_nz = b.lambda_max;
        for (double l : e.values)
            if (l > 1e-10 * b.lambda_max) lmin_nz = l;
        if (b.lambda_max / lmin_nz > max_cond) continue;
        const Vec y = sample_kgp_labels(kernel_matrix(kernel, x), rng);
        b.y_demo = Vec(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n));
        b.query = x.column(n);
        return b;
    }
}

/// max |1 - δλ| over the eigenvalues λ of gram above 1e-10·λ_max. Zero
/// eigenvalues are excluded: their directions never enter the estimate.
inline double contraction_ratio(const Mat& gram, double delta) {
    const SymEig e = sym_eig(gram);
    const double top = std::abs(e.values.front());
    double worst = 0.0;
    for (double l : e.values)
        if (std::abs(l) > 1e-10 * top) worst = std::max(worst, std::abs(1.0 - delta * l));
    return worst;
}

/// Least-squares slope of log(errors[l]) against l, exponentiated, over the
/// layers whose error lies in (floor, ceiling_rel · errors[0]). Returns NaN
/// when fewer than two layers qualify.
inline double fit_geometric_ratio(std::span<const double> errors, double floor = 1e-12, double ceiling_rel = 1e-3) {
    if (errors.empty()) return NAN;
    const double ceiling = ceiling_rel * errors.front();
    double sl = 0.0, sv = 0.0, sll = 0.0, slv = 0.0;
    std::size_t count = 0;
    for (std::size_t l = 0; l < errors.size(); ++l) {
        const double e = errors[l];
        if (!(e > floor && e < ceiling)) continue;
        const double lf = static_cast<double>(l);
        const double v = std::log(e);
        sl += lf;
        sv += v;
        sll += lf * lf;
        slv += lf * v;
        ++count;
    }
    if (count < 2) return NAN;
    const double c = static_cast<double>(count);
    return std::exp((c * slv - sl * sv) / (c * sll - sl * sl));
}

struct BayesConvergence {
    double final_error = 0.0;   ///< worst |estimate - bayes| after all layers
    double worst_ratio_gap = 0.0;  ///< worst |fitted - predicted| / predicted
};

/// Transformer with constant rate δ = 0.5/λ_max run for `layers` layers on
/// `instances` well-conditioned GP instances, compared with bayes_predict.
inline BayesConvergence measure_bayes_convergence(const KernelSpec& kernel, std::size_t instances, std::size_t layers,
                                                  Rng& rng) {
    BayesConvergence out;
    for (std::size_t t = 0; t < instances; ++t) {
        const BayesInstance b = sample_bayes_instance(kernel, 3, 8, 50.0, rng);
        const double delta = 0.5 / b.lambda_max;
        const Vec est = neumann_converges(kernel, b.x_demo, b.y_demo, b.query, delta, layers);
        const double target = bayes_predict(kernel, b.x_demo, b.y_demo, b.query);
        Vec err(est.size());
        for (std::size_t l = 0; l < est.size(); ++l) err[l] = std::abs(est[l] - target);
        out.final_error = std::max(out.final_error, err.back());
        const double predicted = contraction_ratio(b.gram, delta);
        // The jitter in bayes_predict leaves a small constant bias; fit only
        // the layers well above it.
        const double fitted = fit_geometric_ratio(err, std::max(1e-12, 10.0 * err.back()));
        // A fit needs a decaying tail; a degenerate instance counts as a miss.
        const double gap = std::isnan(fitted) ? INFINITY : std::abs(fitted - predicted) / predicted;
        out.worst_ratio_gap = std::max(out.worst_ratio_gap, gap);
    }
    return out;
}

/// Bayes convergence as a verify check: final error within 1e-6.
inline CheckResult check_bayes_convergence(const KernelSpec& kernel, std::size_t instances, std::size_t layers, Rng& rng) {
    if (!kernel.psd()) return CheckResult::skipped("bayes_convergence", "skipped: kernel is not PSD");
    if (!matching_activation(kernel)) return CheckResult::skipped("bayes_convergence", "skipped: no matching kernel");
    return CheckResult::measured("bayes_convergence", measure_bayes_convergence(kernel, instances, layers, rng).final_error,
                                 1e-6);
}

/// The bundle run by `verify` for one configuration.
inline std::vector<CheckResult> run_verification(const ExperimentConfig& c) {
    Rng rng(Rng::mix_seed(c.seed, 77));
    const bool full = c.parameterization == Parameterization::Full;
    std::vector<CheckResult> out;
    out.push_back(check_prop1_equivalence(c.kernel, c.activation, 200, rng));
    out.push_back(check_trace_form(c.activation, full, 100, rng));
    out.push_back(check_gradients(c.activation, full, 20, rng));
    out.push_back(check_activation_invariance(c.activation, 100, rng));
    out.push_back(check_reparameterization(c.activation, 50, rng));
    out.push_back(check_softmax_exp(100, rng));
    ExperimentConfig small = c;
    small.n = std::min<std::size_t>(c.n, 30);
    for (auto& r : check_kmat_plus(make_sampler(small, 0), 100, rng)) out.push_back(std::move(r));
    out.push_back(check_bayes_convergence(c.kernel, 5, 2000, rng));
    return out;
}

inline bool all_passed(const std::vector<CheckResult>& results) {
    return std::ranges::none_of(results, [](const CheckResult& r) { return r.status == CheckResult::Status::Fail; });
}

}  // namespace icl
