#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "icl/commands.hpp"

namespace fs = std::filesystem;

namespace {

class Commands : public ::testing::Test {
protected:
    void SetUp() override {
        root_ = fs::temp_directory_path() /
                ("icl_cmd_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(root_);
        fs::create_directories(root_);
        opt_.out_root = root_;
        opt_.log = &log_;
    }
    void TearDown() override { fs::remove_all(root_); }

    static icl::ExperimentConfig smoke() { return icl::load_config(std::string(ICL_CONFIG_DIR) + "/smoke.cfg"); }

    fs::path only_subdir() const {
        std::vector<fs::path> dirs;
        for (const auto& e : fs::directory_iterator(root_))
            if (e.is_directory()) dirs.push_back(e.path());
        EXPECT_EQ(dirs.size(), 1u);
        return dirs.empty() ? root_ : dirs.front();
    }

    fs::path root_;
    std::ostringstream log_;
    icl::CommandOptions opt_;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

std::size_t csv_files(const fs::path& dir) {
    std::size_t count = 0;
    for (const auto& e : fs::directory_iterator(dir)) count += e.path().extension() == ".csv";
    return count;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(ICL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_F(Commands, VerifyPassesAndWritesReport) {
    auto c = smoke();
    c.activation = icl::Activation::ReluDot;
    EXPECT_EQ(icl::cmd_verify(c, opt_), icl::kExitOk) << log_.str();
    const auto dir = only_subdir();
    EXPECT_EQ(dir.filename().string().rfind("verify-", 0), 0u);
    const auto report = slurp(dir / "report.txt");
    EXPECT_NE(report.find("prop1_equivalence: PASS"), std::string::npos) << report;
    EXPECT_NE(report.find("all checks passed"), std::string::npos);
    EXPECT_EQ(icl::parse_config(slurp(dir / "config.resolved")), c);
}

TEST_F(Commands, VerifySoftmaxSkipsConstruction) {
    auto c = smoke();
    c.activation = icl::Activation::MaskedSoftmax;
    c.kernel = icl::KernelSpec::exp();
    EXPECT_EQ(icl::cmd_verify(c, opt_), icl::kExitOk) << log_.str();
    const auto report = slurp(only_subdir() / "report.txt");
    EXPECT_NE(report.find("prop1_equivalence: skipped: no matching kernel"), std::string::npos) << report;
}

TEST_F(Commands, TrainWritesRunsPlusMedian) {
    const auto c = smoke();
    ASSERT_EQ(c.training.runs, 3u);
    EXPECT_EQ(icl::cmd_train(c, opt_), icl::kExitOk) << log_.str();
    const auto dir = only_subdir();
    EXPECT_EQ(csv_files(dir), 4u);
    for (const char* name : {"run0.csv", "run1.csv", "run2.csv", "median.csv"}) {
        const auto lines = lines_of(dir / name);
        ASSERT_FALSE(lines.empty()) << name;
        EXPECT_EQ(lines.front(), icl::history_csv_header(c.layers));
        EXPECT_EQ(lines.size(), 1u + c.training.steps / c.training.eval_every + 1u);
        for (std::size_t k = 1; k < lines.size(); ++k) {
            EXPECT_EQ(std::count(lines[k].begin(), lines[k].end(), ','), 2 + 2 * static_cast<long>(c.layers));
            EXPECT_EQ(lines[k].substr(lines[k].size() - 2), ",,") << "dist_A columns must be empty";
        }
    }
}

TEST_F(Commands, TrainIsByteIdenticalAcrossInvocations) {
    auto c = smoke();
    c.training.runs = 2;
    ASSERT_EQ(icl::cmd_train(c, opt_), icl::kExitOk);
    const auto dir = only_subdir();
    const auto first = slurp(dir / "run1.csv") + slurp(dir / "median.csv");
    opt_.jobs = 2;
    ASSERT_EQ(icl::cmd_train(c, opt_), icl::kExitOk);
    EXPECT_EQ(slurp(dir / "run1.csv") + slurp(dir / "median.csv"), first);
}

TEST_F(Commands, TrainFullParameterizationFillsDistA) {
    auto c = smoke();
    c.parameterization = icl::Parameterization::Full;
    c.training.runs = 1;
    ASSERT_EQ(icl::cmd_train(c, opt_), icl::kExitOk);
    const auto lines = lines_of(only_subdir() / "run0.csv");
    for (std::size_t k = 1; k < lines.size(); ++k) EXPECT_NE(lines[k].back(), ',');
}

TEST_F(Commands, TrainReportsDivergence) {
    auto c = smoke();
    c.activation = icl::Activation::LinearDot;
    c.training.runs = 1;
    c.training.lr = 5.0;
    c.training.clip = 1e6;
    c.training.init_scale = 3.0;
    c.training.steps = 200;
    EXPECT_EQ(icl::cmd_train(c, opt_), icl::kExitFailure);
    EXPECT_NE(log_.str().find("diverged at step"), std::string::npos);
}

TEST(SweepCells, CountsCells) {
    icl::ExperimentConfig c;
    c.sweep.n_values = {2, 4, 6, 8, 10, 12};
    c.training.runs = 3;
    EXPECT_EQ(icl::sweep_cells(c).size(), 72u);
    c.sweep.kernel_values = {icl::KernelKind::Linear, icl::KernelKind::Relu};
    c.sweep.layers_values = {1, 2};
    EXPECT_EQ(icl::sweep_cells(c).size(), 288u);
}

TEST(SweepCells, CellConfig) {
    icl::ExperimentConfig c;
    c.kernel = icl::KernelSpec::exp(2.0);
    const auto same = icl::cell_config(c, {icl::KernelKind::Exp, icl::Activation::ReluDot, 4, 2, 0});
    EXPECT_EQ(same.kernel, c.kernel);
    EXPECT_EQ(same.activation, icl::Activation::ReluDot);
    EXPECT_EQ(same.n, 4u);
    EXPECT_EQ(same.layers, 2u);
    const auto other = icl::cell_config(c, {icl::KernelKind::Relu, icl::Activation::ReluDot, 4, 2, 0});
    EXPECT_EQ(other.kernel, icl::KernelSpec::relu());
}

TEST_F(Commands, SweepWritesLongCsv) {
    auto c = smoke();
    c.kernel = icl::KernelSpec::linear();
    c.training.runs = 1;
    EXPECT_EQ(icl::cmd_sweep(c, opt_), icl::kExitOk) << log_.str();
    const auto lines = lines_of(only_subdir() / "sweep.csv");
    ASSERT_EQ(lines.size(), 1u + 2u * 2u);
    EXPECT_EQ(lines.front(), "kernel,activation,n,layers,run,final_eval_loss,log10_loss,bayes_eval_loss");
    for (std::size_t k = 1; k < lines.size(); ++k) {
        EXPECT_EQ(std::count(lines[k].begin(), lines[k].end(), ','), 7);
        EXPECT_NE(lines[k].back(), ',') << "linear kernel rows carry a Bayes loss";
    }
}

TEST_F(Commands, SweepReluKernelLeavesBayesEmpty) {
    auto c = smoke();
    c.training.runs = 1;
    c.sweep.n_values = {3};
    EXPECT_EQ(icl::cmd_sweep(c, opt_), icl::kExitOk);
    const auto lines = lines_of(only_subdir() / "sweep.csv");
    ASSERT_EQ(lines.size(), 3u);
    bool saw_relu = false;
    for (std::size_t k = 1; k < lines.size(); ++k) {
        EXPECT_EQ(lines[k].back(), ',');
        saw_relu |= lines[k].rfind("relu,relu,", 0) == 0;
    }
    EXPECT_TRUE(saw_relu);
}

TEST_F(Commands, SweepRejectsEmptyLists) {
    auto c = smoke();
    c.sweep.activation_values.clear();
    EXPECT_EQ(icl::cmd_sweep(c, opt_), icl::kExitUsage);
    c = smoke();
    c.sweep.n_values.clear();
    EXPECT_EQ(icl::cmd_sweep(c, opt_), icl::kExitUsage);
}

TEST(SweepRow, BayesFieldEmptyWhenAbsent) {
    std::ostringstream out;
    icl::write_sweep_row(out, {{icl::KernelKind::Relu, icl::Activation::ReluDot, 4, 3, 1}, 0.01, std::nullopt});
    EXPECT_EQ(out.str(), "relu,relu,4,3,1,0.01,-2,\n");
}

TEST(BayesLoss, PerfectOnNoiselessLinearQuery) {
    // One demo along the query direction determines the linear GP label.
    const icl::Sigma sigma(icl::SigmaSpec::identity(), 2);
    const std::vector<icl::Prompt> batch{icl::assemble_prompt(icl::Mat{{1, 2}, {0, 0}}, icl::Vec{1.5, 3.0})};
    EXPECT_NEAR(icl::bayes_loss(icl::KernelSpec::linear(), sigma, batch), 0.0, 1e-12);
}

class Cli : public Commands {};

TEST_F(Cli, ExitCodes) {
    const std::string cfg = std::string(ICL_CONFIG_DIR) + "/smoke.cfg";
    const std::string out = " --out " + root_.string();
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli(""), 2);
    EXPECT_EQ(run_cli("train" + out), 2);
    EXPECT_EQ(run_cli("train --config /nonexistent.cfg" + out), 2);
    const auto bad = root_ / "bad.cfg";
    std::ofstream(bad) << "model.d = five\n";
    EXPECT_EQ(run_cli("verify --config " + bad.string() + out), 2);
    EXPECT_EQ(run_cli("sweep --config " + cfg + out + " --override sweep.activation_values="), 2);
    EXPECT_EQ(run_cli("train --config " + cfg + out + " --override bogus=1"), 2);
    EXPECT_EQ(run_cli("train --config " + cfg + out + " --override training.runs=1 --jobs 1"), 0);
}
