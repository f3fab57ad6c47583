#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "icl/config.hpp"
#include "icl/data.hpp"
#include "icl/error.hpp"
#include "icl/linalg.hpp"
#include "icl/transformer.hpp"

namespace icl {

// ---------------------------------------------------------------------------
// Batch parallelism
// ---------------------------------------------------------------------------

/// Prompts are processed in fixed chunks whose partial sums are reduced in
/// chunk order, so results do not depend on the number of worker threads.
inline constexpr std::size_t kPromptChunk = 64;

namespace detail {
inline std::atomic<unsigned>& worker_thread_setting() {
    static std::atomic<unsigned> n{1};
    return n;
}
}  // namespace detail

/// Threads used for per-prompt work inside one loss or gradient call.
inline void set_worker_threads(unsigned n) { detail::worker_thread_setting() = std::max(1u, n); }
inline unsigned worker_threads() { return detail::worker_thread_setting(); }

namespace detail {

/// Calls fn(chunk) for chunk in [0, chunks), on up to worker_threads() threads.
template <class F>
void for_each_chunk(std::size_t chunks, F&& fn) {
    const std::size_t threads = std::min<std::size_t>(worker_threads(), chunks);
    if (threads <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) fn(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        try {
            for (std::size_t c; (c = next.fetch_add(1)) < chunks;) fn(c);
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

inline std::size_t chunk_count(std::size_t items) { return (items + kPromptChunk - 1) / kPromptChunk; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Mean over prompts of ([Z_{k+1}]_{d+1,n+1} + y_{n+1})^2.
inline double icl_loss(const TfParams& params, Activation act, std::span<const Prompt> batch) {
    detail::require(!batch.empty(), "icl_loss: empty batch");
    params.validate();
    Vec partial(detail::chunk_count(batch.size()), 0.0);
    detail::for_each_chunk(partial.size(), [&](std::size_t c) {
        const std::size_t end = std::min(batch.size(), (c + 1) * kPromptChunk);
        for (std::size_t k = c * kPromptChunk; k < end; ++k) {
            const Prompt& p = batch[k];
            Vec y = p.y;
            y.back() = 0.0;
            const detail::Tape tape = detail::run_tape(params, act, p.x, std::move(y), true);
            const double e = tape.y_out.back() + p.query_label();
            partial[c] += e * e;
        }
    });
    double total = 0.0;
    for (double x : partial) total += x;
    return total * (1.0 / static_cast<double>(batch.size()));
}

/// Mean over prompts of tr((I-M) Ȳᵀ Ȳ (I-M)), Ȳ the last row of the
/// trajectory started from the unmasked prompt.
inline double loss_trace_form(const TfParams& params, Activation act, std::span<const Prompt> batch) {
    detail::require(!batch.empty(), "loss_trace_form: empty batch");
    double total = 0.0;
    for (const Prompt& p : batch) {
        const detail::Tape tape = detail::run_tape(params, act, p.x, p.y);
        const Vec& ybar = tape.y_out;
        const std::size_t cols = ybar.size();
        double tr = 0.0;
        for (std::size_t i = 0; i < cols; ++i) {
            const double keep = (i + 1 == cols) ? 1.0 : 0.0;  // (I - M)_ii
            tr += keep * ybar[i] * ybar[i] * keep;
        }
        total += tr;
    }
    return total / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

struct LayerGrads {
    std::optional<Mat> da;
    double dr = 0.0;
    Mat db;
    Mat dc;
};

struct ParamGrads {
    std::vector<LayerGrads> layers;

    static ParamGrads zeros_like(const TfParams& p) {
        ParamGrads g;
        for (const auto& l : p.layers) {
            LayerGrads lg;
            if (l.a) lg.da = Mat(l.a->rows(), l.a->cols());
            lg.db = Mat(l.b.rows(), l.b.cols());
            lg.dc = Mat(l.c.rows(), l.c.cols());
            g.layers.push_back(std::move(lg));
        }
        return g;
    }
};

/// Parameter tensors in a fixed order: per layer A (if present), r, B, C.
inline std::vector<std::span<double>> tensors(TfParams& p) {
    std::vector<std::span<double>> out;
    for (auto& l : p.layers) {
        if (l.a) out.push_back(l.a->data());
        out.emplace_back(&l.r, 1);
        out.push_back(l.b.data());
        out.push_back(l.c.data());
    }
    return out;
}

inline std::vector<std::span<double>> tensors(ParamGrads& g) {
    std::vector<std::span<double>> out;
    for (auto& l : g.layers) {
        if (l.da) out.push_back(l.da->data());
        out.emplace_back(&l.dr, 1);
        out.push_back(l.db.data());
        out.push_back(l.dc.data());
    }
    return out;
}

inline std::vector<std::span<const double>> tensors(const ParamGrads& g) {
    std::vector<std::span<const double>> out;
    for (const auto& l : g.layers) {
        if (l.da) out.push_back(l.da->data());
        out.emplace_back(&l.dr, 1);
        out.push_back(l.db.data());
        out.push_back(l.dc.data());
    }
    return out;
}

namespace detail {

/// Accumulates d(scale · (y_out[n] + target)^2)/dθ into `g` for one prompt.
/// Scores are S = Xᵀ G X with G = BᵀC, so the pass goes through dG and then
/// dB = C dGᵀ, dC = B dG.
inline void backprop_prompt(const TfParams& params, Activation act, const Tape& tape, double target, double scale,
                            ParamGrads& g) {
    const std::size_t d = params.dim();
    const std::size_t cols = tape.y_out.size();
    const std::size_t n = cols - 1;
    const bool track_x = params.any_full_a();

    Vec gy(cols, 0.0);
    gy[n] = 2.0 * scale * (tape.y_out[n] + target);
    Mat gx = track_x ? Mat(d, cols) : Mat();
    // While only gy[n] is nonzero and X is fixed, every adjoint below is
    // supported on the query column alone.
    bool query_only = !track_x;

    Mat gh(cols, cols);
    Vec rowdot(n);
    Mat t(d, cols);
    Mat dg(d, d);
    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const LayerParams& layer = params.layers[li];
        const LayerTape& lt = tape.layers[li];
        const Mat& h = lt.h;
        const Mat& x = lt.x;
        const Vec& y = lt.y;
        LayerGrads& lg = g.layers[li];

        // Y' = Y + r (Y M) h
        for (std::size_t i = 0; i < n; ++i) {
            const double* hi = h.row(i).data();
            if (query_only) {
                rowdot[i] = hi[n] * gy[n];
                continue;
            }
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) acc += hi[j] * gy[j];
            rowdot[i] = acc;
        }
        double dr = 0.0;
        for (std::size_t i = 0; i < n; ++i) dr += y[i] * rowdot[i];
        lg.dr += dr;

        std::fill(gh.data().begin(), gh.data().end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double ryi = layer.r * y[i];
            if (ryi == 0.0) continue;
            double* ghi = gh.row(i).data();
            if (query_only) ghi[n] = ryi * gy[n];
            else
                for (std::size_t j = 0; j < cols; ++j) ghi[j] = ryi * gy[j];
        }
        if (layer.r != 0.0)
            for (std::size_t i = 0; i < n; ++i) gy[i] += layer.r * rowdot[i];

        Mat gx_prev;
        if (track_x) {
            gx_prev = gx;
            if (layer.a) {
                const Mat& a = *layer.a;
                // X' = X + A (X M h)
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
                for (std::size_t r = 0; r < d; ++r)
                    for (std::size_t s = 0; s < d; ++s) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < cols; ++j) acc += gx(r, j) * xmh(s, j);
                        (*lg.da)(r, s) += acc;
                    }
                const Mat at_gx = matmul_tn(a, gx);  // Aᵀ gx, d × N
                for (std::size_t r = 0; r < d; ++r) {
                    const double* gr = at_gx.row(r).data();
                    for (std::size_t i = 0; i < n; ++i) {
                        const double xv = x(r, i);
                        double* ghi = gh.row(i).data();
                        if (xv != 0.0)
                            for (std::size_t j = 0; j < cols; ++j) ghi[j] += xv * gr[j];
                        const double* hi = h.row(i).data();
                        double acc = 0.0;
                        for (std::size_t j = 0; j < cols; ++j) acc += gr[j] * hi[j];
                        gx_prev(r, i) += acc;
                    }
                }
            }
        }

        // Through the activation: gs = dh/ds applied to gh (in place).
        Mat& gs = gh;
        switch (act) {
            case Activation::LinearDot: break;
            case Activation::ReluDot:
                for (std::size_t k = 0; k < gs.size(); ++k)
                    if (!(h.data()[k] > 0.0)) gs.data()[k] = 0.0;
                break;
            case Activation::ExpDot:
                for (std::size_t k = 0; k < gs.size(); ++k) gs.data()[k] *= h.data()[k];
                break;
            case Activation::MaskedSoftmax:
                for (std::size_t j = query_only ? n : 0; j < cols; ++j) {
                    double inner = 0.0;
                    for (std::size_t i = 0; i < n; ++i) inner += h(i, j) * gs(i, j);
                    for (std::size_t i = 0; i < n; ++i) gs(i, j) = h(i, j) * (gs(i, j) - inner);
                    gs(n, j) = 0.0;
                }
                break;
        }

        // S = Xᵀ G X: T = X gs, dG = T Xᵀ.
        std::fill(t.data().begin(), t.data().end(), 0.0);
        for (std::size_t r = 0; r < d; ++r) {
            const double* xr = x.row(r).data();
            double* tr = t.row(r).data();
            for (std::size_t i = 0; i < cols; ++i) {
                const double xv = xr[i];
                const double* gsi = gs.row(i).data();
                if (query_only) tr[n] += xv * gsi[n];
                else
                    for (std::size_t j = 0; j < cols; ++j) tr[j] += xv * gsi[j];
            }
        }
        for (std::size_t r = 0; r < d; ++r) {
            const double* tr = t.row(r).data();
            for (std::size_t s2 = 0; s2 < d; ++s2) {
                if (query_only) {
                    dg(r, s2) = tr[n] * x(s2, n);
                    continue;
                }
                const double* xs = x.row(s2).data();
                double acc = 0.0;
                for (std::size_t j = 0; j < cols; ++j) acc += tr[j] * xs[j];
                dg(r, s2) = acc;
            }
        }
        lg.db += matmul(layer.c, transpose(dg));
        lg.dc += matmul(layer.b, dg);

        if (track_x) {
            // dS/dX: gs Wᵀ on the left factor, Gᵀ T on the right factor.
            const Mat& w = lt.w;
            for (std::size_t r = 0; r < d; ++r) {
                const double* wr = w.row(r).data();
                for (std::size_t i = 0; i < cols; ++i) {
                    const double* gsi = gs.row(i).data();
                    double acc = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) acc += gsi[j] * wr[j];
                    gx_prev(r, i) += acc;
                }
            }
            gx_prev += matmul_tn(score_matrix(layer), t);
            gx = std::move(gx_prev);
        }
        query_only = false;
    }
}

}  // namespace detail

struct LossAndGrad {
    double loss = 0.0;
    ParamGrads grads;
};

/// icl_loss and its exact gradient by reverse accumulation through the
/// stored per-layer states. ReluDot uses derivative 0 at the kink.
inline LossAndGrad loss_and_grad(const TfParams& params, Activation act, std::span<const Prompt> batch) {
    detail::require(!batch.empty(), "grad_analytic: empty batch");
    params.validate();
    const double scale = 1.0 / static_cast<double>(batch.size());
    const std::size_t chunks = detail::chunk_count(batch.size());
    std::vector<LossAndGrad> partial(chunks, LossAndGrad{0.0, ParamGrads::zeros_like(params)});
    detail::for_each_chunk(chunks, [&](std::size_t c) {
        const std::size_t end = std::min(batch.size(), (c + 1) * kPromptChunk);
        for (std::size_t k = c * kPromptChunk; k < end; ++k) {
            const Prompt& p = batch[k];
            Vec y = p.y;
            y.back() = 0.0;
            const detail::Tape tape = detail::run_tape(params, act, p.x, std::move(y), true);
            const double e = tape.y_out.back() + p.query_label();
            partial[c].loss += e * e;
            detail::backprop_prompt(params, act, tape, p.query_label(), scale, partial[c].grads);
        }
    });
    LossAndGrad out = std::move(partial.front());
    for (std::size_t c = 1; c < chunks; ++c) {
        out.loss += partial[c].loss;
        auto dst = tensors(out.grads);
        const auto src = tensors(std::as_const(partial[c].grads));
        for (std::size_t t = 0; t < dst.size(); ++t)
            for (std::size_t i = 0; i < dst[t].size(); ++i) dst[t][i] += src[t][i];
    }
    out.loss *= scale;
    return out;
}

inline ParamGrads grad_analytic(const TfParams& params, Activation act, std::span<const Prompt> batch) {
    return loss_and_grad(params, act, batch).grads;
}

/// Central differences with per-coordinate step h·(1 + |θ|).
inline ParamGrads grad_fd(const TfParams& params, Activation act, std::span<const Prompt> batch, double h = 1e-5) {
    detail::require(h > 0.0, "grad_fd: h must be positive");
    ParamGrads g = ParamGrads::zeros_like(params);
    TfParams work = params;
    auto wt = tensors(work);
    auto gt = tensors(g);
    for (std::size_t t = 0; t < wt.size(); ++t) {
        for (std::size_t k = 0; k < wt[t].size(); ++k) {
            const double orig = wt[t][k];
            const double step = h * (1.0 + std::abs(orig));
            wt[t][k] = orig + step;
            const double up = icl_loss(work, act, batch);
            wt[t][k] = orig - step;
            const double down = icl_loss(work, act, batch);
            wt[t][k] = orig;
            gt[t][k] = (up - down) / (2.0 * step);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<Vec> first_moment;
    std::vector<Vec> second_moment;
    std::size_t step_count = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_params(const TfParams& p, double lr) {
        AdamState s;
        s.lr = lr;
        TfParams copy = p;
        for (auto t : tensors(copy)) {
            s.first_moment.emplace_back(t.size(), 0.0);
            s.second_moment.emplace_back(t.size(), 0.0);
        }
        return s;
    }
};

/// Rescales each gradient tensor to norm <= clip (Frobenius), or clamps
/// each entry to [-clip, clip] (elementwise).
inline void clip_gradients(ParamGrads& g, double clip, ClipMode mode = ClipMode::Frobenius) {
    detail::require(clip > 0.0, "clip_gradients: clip must be positive");
    for (auto t : tensors(g)) {
        if (mode == ClipMode::Elementwise) {
            for (double& x : t) x = std::clamp(x, -clip, clip);
            continue;
        }
        double sq = 0.0;
        for (double x : t) sq += x * x;
        const double nrm = std::sqrt(sq);
        if (nrm > clip) {
            const double s = clip / nrm;
            for (double& x : t) x *= s;
        }
    }
}

/// Clip, then one bias-corrected Adam update.
inline TfParams adam_step(AdamState& state, TfParams params, ParamGrads grads, double clip,
                          ClipMode mode = ClipMode::Frobenius) {
    clip_gradients(grads, clip, mode);
    auto pt = tensors(params);
    const auto gt = tensors(std::as_const(grads));
    detail::require(pt.size() == gt.size() && pt.size() == state.first_moment.size(), "adam_step: shape mismatch");
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t k = 0; k < pt.size(); ++k) {
        detail::require(pt[k].size() == gt[k].size() && pt[k].size() == state.first_moment[k].size(),
                        "adam_step: tensor size mismatch");
        Vec& m = state.first_moment[k];
        Vec& v = state.second_moment[k];
        for (std::size_t i = 0; i < pt[k].size(); ++i) {
            const double gi = gt[k][i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            pt[k][i] -= state.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
        }
    }
    return params;
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

/// min_α ||m - αI||_F / ||m||_F, attained at α = trace(m)/d.
inline double dist_to_identity(const Mat& m) {
    detail::require(m.square(), "dist_to_identity: matrix must be square");
    const double nrm = frobenius_norm(m);
    detail::require(nrm > 0.0, "dist_to_identity: zero matrix");
    const double alpha = trace(m) / static_cast<double>(m.rows());
    Mat diff = m;
    for (std::size_t i = 0; i < m.rows(); ++i) diff(i, i) -= alpha;
    return frobenius_norm(diff) / nrm;
}

/// Σ^{1/2} Bᵀ C Σ^{1/2} for one layer.
inline Mat preconditioned_bc(const LayerParams& l, const Sigma& sigma) {
    return matmul(matmul(sigma.half(), matmul_tn(l.b, l.c)), sigma.half());
}

// ---------------------------------------------------------------------------
// Training driver
// ---------------------------------------------------------------------------

struct HistoryRecord {
    std::size_t step = 0;
    double train_loss = 0.0;
    double eval_loss = 0.0;
    Vec dist_bc;
    std::optional<Vec> dist_a;  ///< empty under the sparse parameterization
};

struct RunHistory {
    std::vector<HistoryRecord> records;
    TfParams final_params;
    std::size_t num_layers = 0;
};

/// Seed streams derived from (config seed, run index).
struct RunSeeds {
    std::uint64_t base;
    std::uint64_t rotation() const { return Rng::mix_seed(base, 1); }
    std::uint64_t init() const { return Rng::mix_seed(base, 2); }
    std::uint64_t train_data() const { return Rng::mix_seed(base, 3); }
    std::uint64_t eval_data() const { return Rng::mix_seed(base, 4); }

    static RunSeeds of(const ExperimentConfig& c, std::size_t run) { return {Rng::mix_seed(c.seed, 1000 + run)}; }
};

inline SigmaSpec resolve_sigma(const ExperimentConfig& c, std::size_t run) {
    if (c.sigma == SigmaSpec::Kind::Identity) return SigmaSpec::identity();
    return SigmaSpec::rotated_diag(c.sigma_diag, c.sigma_rotation_seed.value_or(RunSeeds::of(c, run).rotation()));
}

inline PromptSampler make_sampler(const ExperimentConfig& c, std::size_t run) {
    PromptSampler s;
    s.covariates = {c.covariates, c.clusters, c.d};
    s.labels = {c.labels, c.kernel, c.hidden};
    s.sigma = Sigma(resolve_sigma(c, run), c.d);
    s.n = c.n;
    return s;
}

/// Entrywise N(0, scale^2) parameters; A only under the full parameterization.
inline TfParams init_params(const ExperimentConfig& c, Rng& rng) {
    const double s = c.init_scale();
    TfParams p;
    for (std::size_t l = 0; l < c.layers; ++l) {
        LayerParams lp;
        if (c.parameterization == Parameterization::Full) lp.a = rng.normal_mat(c.d, c.d, s);
        lp.r = s * rng.normal();
        lp.b = rng.normal_mat(c.d, c.d, s);
        lp.c = rng.normal_mat(c.d, c.d, s);
        p.layers.push_back(std::move(lp));
    }
    return p;
}

inline constexpr double kDivergenceGuard = 1e6;

/// One training run: Gaussian init, minibatch resampled every
/// `resample_every` steps, per-tensor clipping, Adam. Records loss and Dist
/// diagnostics at step 0, every `eval_every` steps, and after the last step.
inline RunHistory run_training(const ExperimentConfig& c, std::size_t run = 0) {
    const RunSeeds seeds = RunSeeds::of(c, run);
    const PromptSampler sampler = make_sampler(c, run);
    const TrainingConfig& tc = c.training;

    Rng init_rng(seeds.init());
    TfParams params = init_params(c, init_rng);
    AdamState adam = AdamState::for_params(params, tc.lr);

    Rng eval_rng(seeds.eval_data());
    const std::vector<Prompt> eval_batch = sampler.batch(tc.eval_batch, eval_rng);
    Rng data_rng(seeds.train_data());
    std::vector<Prompt> batch;

    RunHistory hist;
    hist.num_layers = c.layers;
    auto record = [&](std::size_t step, double train_loss) {
        HistoryRecord r;
        r.step = step;
        r.train_loss = train_loss;
        r.eval_loss = icl_loss(params, c.activation, eval_batch);
        for (const auto& l : params.layers) r.dist_bc.push_back(dist_to_identity(preconditioned_bc(l, sampler.sigma)));
        if (params.any_full_a()) {
            Vec da;
            for (const auto& l : params.layers) da.push_back(dist_to_identity(*l.a));
            r.dist_a = std::move(da);
        }
        hist.records.push_back(std::move(r));
    };
    auto guard = [](std::size_t step, double loss) {
        if (!std::isfinite(loss) || loss > kDivergenceGuard) throw Diverged(step, loss);
    };

    for (std::size_t step = 0; step < tc.steps; ++step) {
        if (step % tc.resample_every == 0) batch = sampler.batch(tc.batch, data_rng);
        LossAndGrad lg = loss_and_grad(params, c.activation, batch);
        guard(step, lg.loss);
        if (step % tc.eval_every == 0) record(step, lg.loss);
        if (tc.cosine_decay)
            adam.lr = tc.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(tc.steps)));
        params = adam_step(adam, std::move(params), std::move(lg.grads), tc.clip, tc.clip_mode);
    }
    const double final_loss = icl_loss(params, c.activation, batch);
    guard(tc.steps, final_loss);
    record(tc.steps, final_loss);
    hist.final_params = std::move(params);
    return hist;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string history_csv_header(std::size_t num_layers) {
    std::string h = "step,train_loss,eval_loss";
    for (std::size_t l = 0; l < num_layers; ++l) h += ",dist_BC_layer" + std::to_string(l);
    for (std::size_t l = 0; l < num_layers; ++l) h += ",dist_A_layer" + std::to_string(l);
    return h;
}

inline void write_history_csv(std::ostream& out, const RunHistory& h) {
    out << history_csv_header(h.num_layers) << "\n";
    for (const auto& r : h.records) {
        out << r.step << "," << detail::fmt_real(r.train_loss) << "," << detail::fmt_real(r.eval_loss);
        for (double x : r.dist_bc) out << "," << detail::fmt_real(x);
        for (std::size_t l = 0; l < h.num_layers; ++l) {
            out << ",";
            if (r.dist_a) out << detail::fmt_real((*r.dist_a)[l]);
        }
        out << "\n";
    }
}

inline double median(Vec v) {
    detail::require(!v.empty(), "median: empty input");
    std::ranges::sort(v);
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Per-record medians across runs that share a step schedule.
inline RunHistory median_history(std::span<const RunHistory> runs) {
    detail::require(!runs.empty(), "median_history: no runs");
    RunHistory out;
    out.num_layers = runs.front().num_layers;
    const std::size_t count = runs.front().records.size();
    for (const auto& r : runs)
        detail::require(r.records.size() == count && r.num_layers == out.num_layers, "median_history: runs disagree in shape");
    for (std::size_t k = 0; k < count; ++k) {
        HistoryRecord rec;
        rec.step = runs.front().records[k].step;
        auto med = [&](auto get) {
            Vec v;
            for (const auto& r : runs) v.push_back(get(r.records[k]));
            return median(std::move(v));
        };
        rec.train_loss = med([](const HistoryRecord& r) { return r.train_loss; });
        rec.eval_loss = med([](const HistoryRecord& r) { return r.eval_loss; });
        for (std::size_t l = 0; l < out.num_layers; ++l)
            rec.dist_bc.push_back(med([l](const HistoryRecord& r) { return r.dist_bc[l]; }));
        if (runs.front().records[k].dist_a) {
            Vec da;
            for (std::size_t l = 0; l < out.num_layers; ++l)
                da.push_back(med([l](const HistoryRecord& r) { return (*r.dist_a)[l]; }));
            rec.dist_a = std::move(da);
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

}  // namespace icl
