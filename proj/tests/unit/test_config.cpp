#include <gtest/gtest.h>

#include "icl/config.hpp"

using icl::ConfigError;
using icl::ExperimentConfig;

TEST(Config, EmptyTextGivesDefaults) {
    const auto c = icl::parse_config("");
    EXPECT_EQ(c, ExperimentConfig{});
    EXPECT_EQ(c.d, 5u);
    EXPECT_EQ(c.n, 30u);
    EXPECT_EQ(c.layers, 3u);
    EXPECT_EQ(c.training.batch, 2048u);
    EXPECT_EQ(c.training.resample_every, 10u);
    EXPECT_EQ(c.training.clip, 0.01);
    EXPECT_EQ(c.training.lr, 1e-3);
    EXPECT_EQ(c.training.runs, 3u);
    EXPECT_EQ(c.training.eval_batch, 8192u);
    EXPECT_DOUBLE_EQ(c.init_scale(), 0.1 / std::sqrt(5.0));
}

TEST(Config, ParsesSettingsAndComments) {
    const auto c = icl::parse_config(R"(
# stationary point run
seed = 7
model.d = 5         # trailing comment
model.activation = softmax
model.parameterization = full
data.kernel = exp
data.sigma = rotated
data.sigma_diag = 1, 1, 0.25, 2.25, 1
training.clip_mode = elementwise
training.cosine_decay = true
sweep.n_values = 2, 4
sweep.activation_values = linear, relu
)");
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.activation, icl::Activation::MaskedSoftmax);
    EXPECT_EQ(c.parameterization, icl::Parameterization::Full);
    EXPECT_EQ(c.kernel, icl::KernelSpec::exp());
    EXPECT_EQ(c.sigma, icl::SigmaSpec::Kind::RotatedDiag);
    EXPECT_EQ(c.sigma_diag, (icl::Vec{1, 1, 0.25, 2.25, 1}));
    EXPECT_EQ(c.training.clip_mode, icl::ClipMode::Elementwise);
    EXPECT_TRUE(c.training.cosine_decay);
    EXPECT_EQ(c.sweep.n_values, (std::vector<std::size_t>{2, 4}));
    EXPECT_EQ(c.sweep.activation_values.size(), 2u);
}

TEST(Config, ErrorsNameLineAndField) {
    try {
        icl::parse_config("seed = 1\nmodel.d = zero\n");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_EQ(e.key(), "model.d");
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
    EXPECT_THROW(icl::parse_config("model.d = 0"), ConfigError);
    EXPECT_THROW(icl::parse_config("bogus.key = 1"), ConfigError);
    EXPECT_THROW(icl::parse_config("no equals sign"), ConfigError);
    EXPECT_THROW(icl::parse_config("model.activation = tanh"), ConfigError);
    EXPECT_THROW(icl::parse_config("data.kernel = rbf"), ConfigError);
    EXPECT_THROW(icl::parse_config("training.lr = -1"), ConfigError);
    EXPECT_THROW(icl::parse_config("data.sigma = rotated\ndata.sigma_diag = 1, 2"), ConfigError);
    EXPECT_THROW(icl::parse_config("data.kernel_sigma = 2"), ConfigError);
    EXPECT_THROW(icl::parse_config("training.cosine_decay = maybe"), ConfigError);
}

TEST(Config, RoundTrip) {
    ExperimentConfig c;
    c.seed = 123456789012345ULL;
    c.d = 4;
    c.kernel = icl::KernelSpec::exp(0.7, -1);
    c.sigma = icl::SigmaSpec::Kind::RotatedDiag;
    c.sigma_diag = {1.0 / 3.0, 2, 0.1, 7};
    c.sigma_rotation_seed = 99;
    c.training.lr = 0.1 + 0.2;
    c.training.init_scale = 1e-3 / 7.0;
    c.sweep.kernel_values = {icl::KernelKind::Relu, icl::KernelKind::Linear};
    c.sweep.layers_values = {1, 2, 3};
    c.sweep.n_values.clear();
    const auto text = icl::serialize(c);
    EXPECT_EQ(icl::parse_config(text), c);
    EXPECT_EQ(icl::serialize(icl::parse_config(text)), text);
    EXPECT_EQ(icl::parse_config(icl::serialize(ExperimentConfig{})), ExperimentConfig{});
}

TEST(Config, Overrides) {
    auto c = icl::parse_config("model.n = 10");
    icl::apply_overrides(c, {"model.n=12", "training.steps = 5"});
    EXPECT_EQ(c.n, 12u);
    EXPECT_EQ(c.training.steps, 5u);
    EXPECT_THROW(icl::apply_overrides(c, {"model.n"}), ConfigError);
    EXPECT_THROW(icl::apply_overrides(c, {"data.sigma=rotated"}), ConfigError);
}

TEST(Config, HashTracksContent) {
    ExperimentConfig a;
    ExperimentConfig b;
    EXPECT_EQ(icl::config_hash(a), icl::config_hash(b));
    b.training.steps += 1;
    EXPECT_NE(icl::config_hash(a), icl::config_hash(b));
}

TEST(Config, MissingFile) {
    EXPECT_THROW(icl::load_config("/nonexistent/path.cfg"), ConfigError);
}
