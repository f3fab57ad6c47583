#pragma once

// The verify / train / sweep commands behind the `icl` executable. Each
// writes into <out>/<command>-<config hash>-s<seed>/ and returns a process
// exit status: 0 success, 1 check or divergence failure, 2 config error.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "icl/checks.hpp"
#include "icl/config.hpp"
#include "icl/funcgd.hpp"
#include "icl/train.hpp"

namespace icl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct CommandOptions {
    std::filesystem::path out_root = "out";
    std::size_t jobs = 1;
    std::ostream* log = &std::cerr;
};

namespace detail {

inline std::string hex16(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::filesystem::path prepare_output_dir(const std::string& command, const ExperimentConfig& c,
                                                const CommandOptions& opt) {
    const auto dir = opt.out_root / (command + "-" + hex16(config_hash(c)) + "-s" + std::to_string(c.seed));
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "config.resolved") << serialize(c);
    return dir;
}

/// Runs fn(i) for i in [0, count) on up to `jobs` threads. The first
/// exception is rethrown after all workers stop.
template <class F>
void run_parallel(std::size_t count, std::size_t jobs, F&& fn) {
    const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex m;
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(m);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Per-prompt threads left over once `jobs` independent tasks run.
inline unsigned leftover_threads(std::size_t jobs) {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    return std::max(1u, hw / static_cast<unsigned>(std::max<std::size_t>(jobs, 1)));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

inline void write_verify_report(std::ostream& out, const std::vector<CheckResult>& results) {
    for (const auto& r : results) {
        out << r.name << ": ";
        switch (r.status) {
            case CheckResult::Status::Skipped: out << r.note << "\n"; continue;
            case CheckResult::Status::Pass: out << "PASS"; break;
            case CheckResult::Status::Fail: out << "FAIL"; break;
        }
        out << " max_error=" << detail::fmt_real(r.max_error) << " tolerance=" << r.tolerance << "\n";
    }
    out << (all_passed(results) ? "all checks passed\n" : "some checks failed\n");
}

inline int cmd_verify(const ExperimentConfig& c, const CommandOptions& opt) {
    const auto dir = detail::prepare_output_dir("verify", c, opt);
    const auto results = run_verification(c);
    std::ofstream report(dir / "report.txt");
    write_verify_report(report, results);
    write_verify_report(*opt.log, results);
    return all_passed(results) ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline int cmd_train(const ExperimentConfig& c, const CommandOptions& opt) {
    const auto dir = detail::prepare_output_dir("train", c, opt);
    const std::size_t runs = c.training.runs;
    std::vector<std::optional<RunHistory>> hist(runs);
    std::vector<std::string> failures(runs);
    set_worker_threads(detail::leftover_threads(std::min(opt.jobs, runs)));
    detail::run_parallel(runs, opt.jobs, [&](std::size_t run) {
        try {
            hist[run] = run_training(c, run);
            std::ofstream out(dir / ("run" + std::to_string(run) + ".csv"));
            write_history_csv(out, *hist[run]);
        } catch (const Diverged& e) {
            failures[run] = "run " + std::to_string(run) + " diverged at step " + std::to_string(e.step()) +
                            " (loss " + detail::fmt_real(e.loss()) + ")";
        }
    });

    std::ofstream report(dir / "report.txt");
    bool ok = true;
    std::vector<RunHistory> done;
    for (std::size_t run = 0; run < runs; ++run) {
        if (!failures[run].empty()) {
            ok = false;
            report << failures[run] << "\n";
            *opt.log << failures[run] << "\n";
            continue;
        }
        const auto& last = hist[run]->records.back();
        report << "run " << run << ": final_train_loss=" << detail::fmt_real(last.train_loss)
               << " final_eval_loss=" << detail::fmt_real(last.eval_loss) << "\n";
        done.push_back(std::move(*hist[run]));
    }
    if (!ok) return kExitFailure;
    std::ofstream med(dir / "median.csv");
    write_history_csv(med, median_history(done));
    *opt.log << "wrote " << runs + 1 << " CSV files to " << dir.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepCell {
    KernelKind kernel;
    Activation activation;
    std::size_t n;
    std::size_t layers;
    std::size_t run;
};

struct SweepRow {
    SweepCell cell;
    double final_eval_loss = NAN;
    std::optional<double> bayes_eval_loss;
};

inline std::vector<SweepCell> sweep_cells(const ExperimentConfig& c) {
    const std::vector<KernelKind> kernels =
        c.sweep.kernel_values.empty() ? std::vector<KernelKind>{c.kernel.kind} : c.sweep.kernel_values;
    const std::vector<std::size_t> layers =
        c.sweep.layers_values.empty() ? std::vector<std::size_t>{c.layers} : c.sweep.layers_values;
    std::vector<SweepCell> cells;
    for (KernelKind k : kernels)
        for (Activation a : c.sweep.activation_values)
            for (std::size_t n : c.sweep.n_values)
                for (std::size_t l : layers)
                    for (std::size_t run = 0; run < c.training.runs; ++run) cells.push_back({k, a, n, l, run});
    return cells;
}

/// The experiment config of one sweep cell.
inline ExperimentConfig cell_config(const ExperimentConfig& c, const SweepCell& cell) {
    ExperimentConfig cc = c;
    if (cell.kernel != c.kernel.kind) cc.kernel = KernelSpec{cell.kernel, 1.0, 1};
    cc.activation = cell.activation;
    cc.n = cell.n;
    cc.layers = cell.layers;
    return cc;
}

/// Mean squared error of the Bayes predictor on a batch of prompts. Inputs
/// go through Σ^{-1/2} first, matching the label law.
inline double bayes_loss(const KernelSpec& kernel, const Sigma& sigma, std::span<const Prompt> batch) {
    double total = 0.0;
    for (const Prompt& p : batch) {
        const Mat u = sigma.is_identity() ? p.x : matmul(sigma.inv_half(), p.x);
        const std::size_t n = p.num_demos();
        Mat xd(u.rows(), n);
        for (std::size_t i = 0; i < u.rows(); ++i)
            for (std::size_t j = 0; j < n; ++j) xd(i, j) = u(i, j);
        const Vec q = u.column(n);
        const double e = bayes_predict(kernel, xd, std::span<const double>(p.y.data(), n), q) - p.query_label();
        total += e * e;
    }
    return total / static_cast<double>(batch.size());
}

inline std::string sweep_csv_header() {
    return "kernel,activation,n,layers,run,final_eval_loss,log10_loss,bayes_eval_loss";
}

inline void write_sweep_row(std::ostream& out, const SweepRow& r) {
    out << to_string(r.cell.kernel) << "," << to_string(r.cell.activation) << "," << r.cell.n << "," << r.cell.layers
        << "," << r.cell.run << "," << detail::fmt_real(r.final_eval_loss) << ","
        << detail::fmt_real(std::log10(r.final_eval_loss)) << ",";
    if (r.bayes_eval_loss) out << detail::fmt_real(*r.bayes_eval_loss);
    out << "\n";
}

inline int cmd_sweep(const ExperimentConfig& c, const CommandOptions& opt) {
    if (c.sweep.n_values.empty() || c.sweep.activation_values.empty()) {
        *opt.log << "sweep: n_values and activation_values must be nonempty\n";
        return kExitUsage;
    }
    const auto dir = detail::prepare_output_dir("sweep", c, opt);
    const auto cells = sweep_cells(c);
    std::vector<SweepRow> rows(cells.size());
    std::vector<std::string> failures(cells.size());
    set_worker_threads(detail::leftover_threads(std::min(opt.jobs, cells.size())));
    detail::run_parallel(cells.size(), opt.jobs, [&](std::size_t i) {
        const ExperimentConfig cc = cell_config(c, cells[i]);
        rows[i].cell = cells[i];
        try {
            const RunHistory h = run_training(cc, cells[i].run);
            rows[i].final_eval_loss = h.records.back().eval_loss;
        } catch (const Diverged& e) {
            failures[i] = "cell " + std::to_string(i) + " diverged at step " + std::to_string(e.step());
            return;
        }
        if (cc.kernel.psd()) {
            // Same held-out prompts the training run evaluates on.
            const PromptSampler sampler = make_sampler(cc, cells[i].run);
            Rng eval_rng(RunSeeds::of(cc, cells[i].run).eval_data());
            const auto eval_batch = sampler.batch(cc.training.eval_batch, eval_rng);
            rows[i].bayes_eval_loss = bayes_loss(cc.kernel, sampler.sigma, eval_batch);
        }
    });

    std::ofstream out(dir / "sweep.csv");
    out << sweep_csv_header() << "\n";
    bool ok = true;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!failures[i].empty()) {
            ok = false;
            *opt.log << failures[i] << "\n";
            continue;
        }
        write_sweep_row(out, rows[i]);
    }
    *opt.log << "wrote " << dir.string() << "/sweep.csv\n";
    return ok ? kExitOk : kExitFailure;
}

}  // namespace icl
