#pragma once

// Experiment configuration. Text format, one setting per line:
//
//     # comment
//     seed = 7
//     model.d = 5
//     data.sigma_diag = 1, 1, 0.25, 2.25, 1
//
// Keys are dotted (section.name), lists are comma separated, blank lines and
// '#' comments are ignored. Every key is optional; unknown keys are errors.
// serialize() writes every key in a fixed order and parse(serialize(c)) == c.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "icl/data.hpp"
#include "icl/error.hpp"
#include "icl/kernels.hpp"
#include "icl/transformer.hpp"

namespace icl {

class ConfigError : public Error {
public:
    ConfigError(std::size_t line, std::string key, const std::string& msg)
        : Error(format(line, key, msg)), line_(line), key_(std::move(key)) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& key() const noexcept { return key_; }

private:
    static std::string format(std::size_t line, const std::string& key, const std::string& msg) {
        std::string s = "config";
        if (line > 0) s += " line " + std::to_string(line);
        if (!key.empty()) s += " field '" + key + "'";
        return s + ": " + msg;
    }

    std::size_t line_;
    std::string key_;
};

enum class Parameterization { Sparse, Full };
enum class ClipMode { Frobenius, Elementwise };

struct TrainingConfig {
    std::size_t steps = 3000;
    std::size_t batch = 2048;
    std::size_t resample_every = 10;
    double lr = 1e-3;
    double clip = 0.01;
    ClipMode clip_mode = ClipMode::Frobenius;
    bool cosine_decay = false;
    std::size_t runs = 3;
    std::size_t eval_every = 100;
    std::size_t eval_batch = 8192;
    std::optional<double> init_scale;  ///< empty: 0.1/sqrt(d)

    friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

struct SweepConfig {
    std::vector<std::size_t> n_values;
    std::vector<Activation> activation_values;
    std::vector<KernelKind> kernel_values;   ///< empty: the data kernel only
    std::vector<std::size_t> layers_values;  ///< empty: model.layers only

    friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::size_t d = 5;
    std::size_t n = 30;
    std::size_t layers = 3;
    Activation activation = Activation::LinearDot;
    Parameterization parameterization = Parameterization::Sparse;

    KernelSpec kernel = KernelSpec::linear();
    CovariateKind covariates = CovariateKind::SphereIID;
    std::size_t clusters = 2;
    LabelKind labels = LabelKind::KGP;
    std::size_t hidden = 0;
    SigmaSpec::Kind sigma = SigmaSpec::Kind::Identity;
    Vec sigma_diag;
    std::optional<std::uint64_t> sigma_rotation_seed;  ///< empty: drawn per run

    TrainingConfig training;
    SweepConfig sweep{{2, 4, 6, 8, 10, 12}, {Activation::LinearDot, Activation::ReluDot, Activation::ExpDot, Activation::MaskedSoftmax}, {}, {}};

    double init_scale() const { return training.init_scale.value_or(0.1 / std::sqrt(static_cast<double>(d))); }

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> out;
    if (trim(s).empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto comma = s.find(',', start);
        out.push_back(trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

struct FieldParser {
    std::size_t line;
    std::string key;

    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(line, key, msg); }

    std::uint64_t u64(std::string_view v) const {
        std::uint64_t out = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc() || p != v.data() + v.size()) fail("expected a non-negative integer, got '" + std::string(v) + "'");
        return out;
    }
    std::size_t count(std::string_view v) const {
        const auto x = u64(v);
        if (x == 0) fail("must be positive");
        return static_cast<std::size_t>(x);
    }
    double real(std::string_view v) const {
        std::string s(v);
        std::istringstream in(s);
        in.imbue(std::locale::classic());
        double x = 0.0;
        in >> x;
        if (!in || !in.eof() || !std::isfinite(x)) fail("expected a finite number, got '" + s + "'");
        return x;
    }
    bool boolean(std::string_view v) const {
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        fail("expected true or false");
    }
    Activation activation(std::string_view v) const {
        auto a = parse_activation(v);
        if (!a) fail("unknown activation '" + std::string(v) + "' (linear, relu, exp, softmax)");
        return *a;
    }
    KernelKind kernel(std::string_view v) const {
        auto k = parse_kernel_kind(v);
        if (!k) fail("unknown kernel '" + std::string(v) + "' (linear, relu, exp)");
        return *k;
    }
};

/// Shortest text that parses back to exactly x.
inline std::string fmt_real(double x) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

}  // namespace detail

/// Applies one `key = value` setting; `line` is only used in diagnostics.
inline void apply_setting(ExperimentConfig& c, const std::string& key, std::string_view value, std::size_t line = 0) {
    const detail::FieldParser f{line, key};
    const auto v = detail::trim(value);

    if (key == "seed") c.seed = f.u64(v);
    else if (key == "model.d") c.d = f.count(v);
    else if (key == "model.n") c.n = f.count(v);
    else if (key == "model.layers") c.layers = f.count(v);
    else if (key == "model.activation") c.activation = f.activation(v);
    else if (key == "model.parameterization") {
        if (v == "sparse") c.parameterization = Parameterization::Sparse;
        else if (v == "full") c.parameterization = Parameterization::Full;
        else f.fail("expected sparse or full");
    } else if (key == "data.kernel") c.kernel.kind = f.kernel(v);
    else if (key == "data.kernel_sigma") {
        c.kernel.sigma = f.real(v);
        if (!(c.kernel.sigma > 0.0)) f.fail("must be positive");
    } else if (key == "data.kernel_sign") {
        const double s = f.real(v);
        if (s != 1.0 && s != -1.0) f.fail("must be 1 or -1");
        c.kernel.sign = static_cast<int>(s);
    } else if (key == "data.covariates") {
        auto k = parse_covariate_kind(v);
        if (!k) f.fail("expected sphere, gaussian or gmm");
        c.covariates = *k;
    } else if (key == "data.clusters") c.clusters = f.count(v);
    else if (key == "data.labels") {
        auto k = parse_label_kind(v);
        if (!k) f.fail("expected kgp or relu_net");
        c.labels = *k;
    } else if (key == "data.hidden") c.hidden = static_cast<std::size_t>(f.u64(v));
    else if (key == "data.sigma") {
        if (v == "identity") c.sigma = SigmaSpec::Kind::Identity;
        else if (v == "rotated") c.sigma = SigmaSpec::Kind::RotatedDiag;
        else f.fail("expected identity or rotated");
    } else if (key == "data.sigma_diag") {
        c.sigma_diag.clear();
        for (auto item : detail::split_list(v)) {
            const double x = f.real(item);
            if (!(x > 0.0)) f.fail("entries must be positive");
            c.sigma_diag.push_back(x);
        }
    } else if (key == "data.sigma_rotation_seed") {
        if (v == "auto") c.sigma_rotation_seed.reset();
        else c.sigma_rotation_seed = f.u64(v);
    } else if (key == "training.steps") c.training.steps = f.count(v);
    else if (key == "training.batch") c.training.batch = f.count(v);
    else if (key == "training.resample_every") c.training.resample_every = f.count(v);
    else if (key == "training.lr") {
        c.training.lr = f.real(v);
        if (!(c.training.lr > 0.0)) f.fail("must be positive");
    } else if (key == "training.clip") {
        c.training.clip = f.real(v);
        if (!(c.training.clip > 0.0)) f.fail("must be positive");
    } else if (key == "training.clip_mode") {
        if (v == "frobenius") c.training.clip_mode = ClipMode::Frobenius;
        else if (v == "elementwise") c.training.clip_mode = ClipMode::Elementwise;
        else f.fail("expected frobenius or elementwise");
    } else if (key == "training.cosine_decay") c.training.cosine_decay = f.boolean(v);
    else if (key == "training.runs") c.training.runs = f.count(v);
    else if (key == "training.eval_every") c.training.eval_every = f.count(v);
    else if (key == "training.eval_batch") c.training.eval_batch = f.count(v);
    else if (key == "training.init_scale") {
        if (v == "auto") c.training.init_scale.reset();
        else {
            c.training.init_scale = f.real(v);
            if (!(*c.training.init_scale > 0.0)) f.fail("must be positive");
        }
    } else if (key == "sweep.n_values") {
        c.sweep.n_values.clear();
        for (auto item : detail::split_list(v)) c.sweep.n_values.push_back(f.count(item));
    } else if (key == "sweep.activation_values") {
        c.sweep.activation_values.clear();
        for (auto item : detail::split_list(v)) c.sweep.activation_values.push_back(f.activation(item));
    } else if (key == "sweep.kernel_values") {
        c.sweep.kernel_values.clear();
        for (auto item : detail::split_list(v)) c.sweep.kernel_values.push_back(f.kernel(item));
    } else if (key == "sweep.layers_values") {
        c.sweep.layers_values.clear();
        for (auto item : detail::split_list(v)) c.sweep.layers_values.push_back(f.count(item));
    } else {
        throw ConfigError(line, key, "unknown key");
    }
}

/// Cross-field checks; throws ConfigError naming the offending field.
inline void validate(const ExperimentConfig& c) {
    if (c.sigma == SigmaSpec::Kind::RotatedDiag && c.sigma_diag.size() != c.d)
        throw ConfigError(0, "data.sigma_diag", "needs exactly model.d = " + std::to_string(c.d) + " entries");
    if (c.covariates == CovariateKind::GaussianMixture && c.clusters == 0)
        throw ConfigError(0, "data.clusters", "must be positive");
    if (c.kernel.kind != KernelKind::Exp && (c.kernel.sigma != 1.0 || c.kernel.sign != 1))
        throw ConfigError(0, "data.kernel_sigma", "bandwidth and sign apply to the exp kernel only");
}

inline ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig c;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(line_no, "", "expected 'key = value'");
        const std::string key(detail::trim(line.substr(0, eq)));
        if (key.empty()) throw ConfigError(line_no, "", "missing key");
        apply_setting(c, key, line.substr(eq + 1), line_no);
    }
    validate(c);
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(0, "", "cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// Applies `key=value` overrides, then re-validates.
inline void apply_overrides(ExperimentConfig& c, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError(0, o, "override must be key=value");
        apply_setting(c, std::string(detail::trim(std::string_view(o).substr(0, eq))), std::string_view(o).substr(eq + 1));
    }
    validate(c);
}

inline std::string serialize(const ExperimentConfig& c) {
    using detail::fmt_real;
    std::ostringstream o;
    auto join = [](const auto& items, auto fn) {
        std::string s;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (i) s += ", ";
            s += fn(items[i]);
        }
        return s;
    };
    o << "seed = " << c.seed << "\n";
    o << "model.d = " << c.d << "\n";
    o << "model.n = " << c.n << "\n";
    o << "model.layers = " << c.layers << "\n";
    o << "model.activation = " << to_string(c.activation) << "\n";
    o << "model.parameterization = " << (c.parameterization == Parameterization::Full ? "full" : "sparse") << "\n";
    o << "data.kernel = " << to_string(c.kernel.kind) << "\n";
    o << "data.kernel_sigma = " << fmt_real(c.kernel.sigma) << "\n";
    o << "data.kernel_sign = " << c.kernel.sign << "\n";
    o << "data.covariates = " << to_string(c.covariates) << "\n";
    o << "data.clusters = " << c.clusters << "\n";
    o << "data.labels = " << to_string(c.labels) << "\n";
    o << "data.hidden = " << c.hidden << "\n";
    o << "data.sigma = " << (c.sigma == SigmaSpec::Kind::RotatedDiag ? "rotated" : "identity") << "\n";
    o << "data.sigma_diag = " << join(c.sigma_diag, fmt_real) << "\n";
    o << "data.sigma_rotation_seed = "
      << (c.sigma_rotation_seed ? std::to_string(*c.sigma_rotation_seed) : std::string("auto")) << "\n";
    o << "training.steps = " << c.training.steps << "\n";
    o << "training.batch = " << c.training.batch << "\n";
    o << "training.resample_every = " << c.training.resample_every << "\n";
    o << "training.lr = " << fmt_real(c.training.lr) << "\n";
    o << "training.clip = " << fmt_real(c.training.clip) << "\n";
    o << "training.clip_mode = " << (c.training.clip_mode == ClipMode::Elementwise ? "elementwise" : "frobenius") << "\n";
    o << "training.cosine_decay = " << (c.training.cosine_decay ? "true" : "false") << "\n";
    o << "training.runs = " << c.training.runs << "\n";
    o << "training.eval_every = " << c.training.eval_every << "\n";
    o << "training.eval_batch = " << c.training.eval_batch << "\n";
    o << "training.init_scale = " << (c.training.init_scale ? fmt_real(*c.training.init_scale) : std::string("auto")) << "\n";
    o << "sweep.n_values = " << join(c.sweep.n_values, [](std::size_t x) { return std::to_string(x); }) << "\n";
    o << "sweep.activation_values = "
      << join(c.sweep.activation_values, [](Activation a) { return std::string(to_string(a)); }) << "\n";
    o << "sweep.kernel_values = "
      << join(c.sweep.kernel_values, [](KernelKind k) { return std::string(to_string(k)); }) << "\n";
    o << "sweep.layers_values = " << join(c.sweep.layers_values, [](std::size_t x) { return std::to_string(x); }) << "\n";
    return o.str();
}

/// FNV-1a over the serialized config.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : serialize(c)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace icl
