#include <gtest/gtest.h>

#include <cmath>

#include "icl/data.hpp"
#include "icl/kernels.hpp"

using icl::KernelKind;
using icl::KernelSpec;
using icl::Mat;
using icl::Rng;
using icl::Vec;

namespace {

const KernelSpec kAllKernels[] = {KernelSpec::linear(), KernelSpec::relu(), KernelSpec::exp(), KernelSpec::exp(2.0, -1)};

Mat random_symmetric(std::size_t n, Rng& rng) {
    Mat m = rng.normal_mat(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) m(i, j) = m(j, i);
    return m;
}

double min_eigenvalue(const Mat& m) { return icl::sym_eig(m).values.back(); }

}  // namespace

TEST(KernelEval, Examples) {
    EXPECT_EQ(icl::kernel_eval(KernelSpec::linear(), Vec{1, 0, 0}, Vec{0, 1, 0}), 0.0);
    EXPECT_EQ(icl::kernel_eval(KernelSpec::relu(), Vec{1, 0}, Vec{-1, 0}), 0.0);
    EXPECT_NEAR(icl::kernel_eval(KernelSpec::exp(), Vec{1, 0}, Vec{1, 0}), 2.718281828, 1e-9);
    EXPECT_NEAR(icl::kernel_eval(KernelSpec::exp(2.0, -1), Vec{2, 0}, Vec{1, 0}), std::exp(-0.5), 1e-15);
    EXPECT_THROW(icl::kernel_eval(KernelSpec::linear(), Vec{1, 0}, Vec{1}), icl::ContractViolation);
}

TEST(KernelSpec, ConstructionAndNames) {
    EXPECT_THROW(KernelSpec::exp(0.0), icl::ContractViolation);
    EXPECT_THROW(KernelSpec::exp(1.0, 0), icl::ContractViolation);
    EXPECT_TRUE(KernelSpec::linear().psd());
    EXPECT_TRUE(KernelSpec::exp().psd());
    EXPECT_FALSE(KernelSpec::relu().psd());
    EXPECT_FALSE(KernelSpec::exp(1.0, -1).psd());
    for (auto k : {KernelKind::Linear, KernelKind::Relu, KernelKind::Exp})
        EXPECT_EQ(icl::parse_kernel_kind(icl::to_string(k)), k);
    EXPECT_FALSE(icl::parse_kernel_kind("rbf").has_value());
}

TEST(NegativeExpKernel, IsNotPsd) {
    const Mat x{{1, -1}, {0, 0}};
    EXPECT_LT(min_eigenvalue(icl::kernel_matrix(KernelSpec::exp(1.0, -1), x).m), -0.1);
}

TEST(KernelMatrix, Examples) {
    EXPECT_EQ(icl::kernel_matrix(KernelSpec::linear(), Mat{{1, 0}, {0, 1}}).m, Mat::identity(2));
    const auto g = icl::kernel_matrix(KernelSpec::linear(), Mat{{2}, {0}}, Mat::diag({0.5, 1}));
    EXPECT_EQ(g.m, (Mat{{1}}));
    EXPECT_TRUE(g.preconditioned);
    EXPECT_EQ(icl::kernel_matrix(KernelSpec::relu(), Mat{{1, -1}}).m, Mat::identity(2));
    EXPECT_THROW(icl::kernel_matrix(KernelSpec::linear(), Mat(2, 3), Mat::identity(3)), icl::ContractViolation);
}

TEST(KernelMatrix, RotationalInvariance) {
    Rng rng(21);
    const std::size_t d = 4;
    const icl::Sigma sigma(icl::SigmaSpec::rotated_diag({1, 0.5, 2, 1.5}, 3), d);
    for (const auto& spec : kAllKernels) {
        for (int t = 0; t < 100; ++t) {
            const Mat x = rng.normal_mat(d, 7, 0.3);
            const Mat u = icl::random_orthogonal(d, rng);
            const Mat t_map = icl::matmul(icl::matmul(sigma.half(), u), sigma.inv_half());
            const Mat a = icl::kernel_matrix(spec, icl::matmul(t_map, x), sigma.inv_half()).m;
            const Mat b = icl::kernel_matrix(spec, x, sigma.inv_half()).m;
            ASSERT_LE(icl::max_abs(a - b), 1e-9);
        }
    }
}

TEST(KmatPlus, Examples) {
    const Mat psd{{2, 1}, {1, 2}};
    EXPECT_LE(icl::max_abs(icl::kmat_plus(psd) - psd), 1e-14);
    EXPECT_LE(icl::max_abs(icl::kmat_plus(Mat{{0, 1}, {1, 0}}) - Mat::identity(2)), 1e-14);
    EXPECT_LE(icl::max_abs(icl::kmat_plus(Mat{{-3}}) - Mat{{3}}), 1e-15);
}

TEST(KmatPlus, IdempotentAndPsd) {
    Rng rng(22);
    for (int t = 0; t < 1000; ++t) {
        const Mat m = random_symmetric(1 + static_cast<std::size_t>(t % 9), rng);
        const Mat p = icl::kmat_plus(m);
        ASSERT_GE(min_eigenvalue(p), -1e-10);
        ASSERT_LE(icl::max_abs(icl::kmat_plus(p) - p), 1e-9);
    }
}

TEST(KmatPlus, FixesPsdGramMatrices) {
    Rng rng(23);
    for (const auto& spec : {KernelSpec::linear(), KernelSpec::exp()}) {
        const Mat x = rng.normal_mat(3, 9, 0.6);
        const Mat g = icl::kernel_matrix(spec, x).m;
        EXPECT_LE(icl::max_abs(icl::kmat_plus(g) - g), 1e-9 * (1.0 + icl::max_abs(g)));
    }
}

TEST(SampleGpLabels, ZeroCovariance) {
    Rng rng(24);
    const Vec y = icl::sample_gp_labels(Mat(3, 3), rng);
    for (double v : y) EXPECT_EQ(v, 0.0);
}

TEST(SampleGpLabels, IdentityVariance) {
    Rng rng(25);
    const int draws = 100000;
    Vec s2(3, 0.0);
    for (int t = 0; t < draws; ++t) {
        const Vec y = icl::sample_gp_labels(Mat::identity(3), rng);
        for (std::size_t i = 0; i < 3; ++i) s2[i] += y[i] * y[i] / draws;
    }
    for (double v : s2) {
        EXPECT_GE(v, 0.97);
        EXPECT_LE(v, 1.03);
    }
}

TEST(SampleGpLabels, PerfectlyCorrelated) {
    Rng rng(26);
    for (int t = 0; t < 100; ++t) {
        const Vec y = icl::sample_gp_labels(Mat{{1, 1}, {1, 1}}, rng);
        ASSERT_NEAR(y[0], y[1], 1e-12);
    }
}

TEST(SampleGpLabels, RejectsIndefinite) {
    Rng rng(27);
    EXPECT_THROW(icl::sample_gp_labels(Mat{{0, 1}, {1, 0}}, rng), icl::NotPsd);
}

// The fast sampler must have covariance kmat_plus(gram) for every kernel.
TEST(SampleKgpLabels, CovarianceMatchesKmatPlus) {
    Rng data_rng(28);
    const Mat x = icl::random_orthogonal(4, data_rng);
    Mat cols(4, 6);
    for (std::size_t j = 0; j < 6; ++j)
        for (std::size_t i = 0; i < 4; ++i) cols(i, j) = x(i, j % 4) * (j < 4 ? 1.0 : 0.5) + (j >= 4 ? 0.3 : 0.0);
    for (const auto& spec : kAllKernels) {
        const auto g = icl::kernel_matrix(spec, cols);
        const Mat target = icl::kmat_plus(g);
        const int draws = 100000;
        Mat cov(6, 6);
        Rng rng(29);
        for (int t = 0; t < draws; ++t) {
            const Vec y = icl::sample_kgp_labels(g, rng);
            for (std::size_t i = 0; i < 6; ++i)
                for (std::size_t j = 0; j < 6; ++j) cov(i, j) += y[i] * y[j] / draws;
        }
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j) {
                if (std::abs(target(i, j)) <= 0.1) continue;
                EXPECT_LE(std::abs(cov(i, j) - target(i, j)), 0.05 * std::abs(target(i, j)))
                    << icl::to_string(spec.kind) << " entry " << i << "," << j;
            }
    }
}
