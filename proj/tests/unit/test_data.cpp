#include <gtest/gtest.h>

#include <cmath>

#include "icl/data.hpp"

using icl::CovariateKind;
using icl::CovariateSpec;
using icl::KernelSpec;
using icl::LabelKind;
using icl::LabelSpec;
using icl::Mat;
using icl::Rng;
using icl::Sigma;
using icl::SigmaSpec;
using icl::Vec;

TEST(Sigma, Identity) {
    const Sigma s(SigmaSpec::identity(), 3);
    EXPECT_TRUE(s.is_identity());
    EXPECT_EQ(s.matrix(), Mat::identity(3));
}

TEST(Sigma, RotatedDiagFactorsAreConsistent) {
    const Sigma s(SigmaSpec::rotated_diag({1, 1, 0.25, 2.25, 1}, 9), 5);
    EXPECT_FALSE(s.is_identity());
    EXPECT_TRUE(icl::is_symmetric(s.matrix(), 1e-12));
    EXPECT_LE(icl::max_abs(icl::matmul(s.half(), s.inv_half()) - Mat::identity(5)), 1e-10);
    EXPECT_LE(icl::max_abs(icl::matmul(s.half(), s.half()) - s.matrix()), 1e-10);
    EXPECT_NEAR(icl::trace(s.matrix()), 5.5, 1e-12);
    const auto e = icl::sym_eig(s.matrix());
    EXPECT_NEAR(e.values.front(), 2.25, 1e-10);
    EXPECT_NEAR(e.values.back(), 0.25, 1e-10);
}

TEST(Sigma, RejectsBadSpecs) {
    EXPECT_THROW(Sigma(SigmaSpec::rotated_diag({1, 1}, 0), 3), icl::ContractViolation);
    EXPECT_THROW(Sigma(SigmaSpec::rotated_diag({1, 0}, 0), 2), icl::ContractViolation);
}

TEST(Covariates, SphereColumnsAreUnit) {
    Rng rng(31);
    const Mat x = icl::sample_covariates({CovariateKind::SphereIID, 2, 4}, Sigma(SigmaSpec::identity(), 4), 50, rng);
    ASSERT_EQ(x.rows(), 4u);
    ASSERT_EQ(x.cols(), 50u);
    for (std::size_t j = 0; j < 50; ++j) EXPECT_NEAR(icl::norm2(x.column(j)), 1.0, 1e-12);
}

TEST(Covariates, DistortedSphereUndoesToUnit) {
    Rng rng(32);
    const Sigma s(SigmaSpec::rotated_diag({4, 1}, 1), 2);
    const Mat x = icl::sample_covariates({CovariateKind::SphereIID, 2, 2}, s, 50, rng);
    const Mat u = icl::matmul(s.inv_half(), x);
    for (std::size_t j = 0; j < 50; ++j) EXPECT_NEAR(icl::norm2(u.column(j)), 1.0, 1e-12);
}

TEST(Covariates, GaussianMixtureCentersOnClusterMean) {
    // With one cluster each prompt is mu + N(0, I): the within-prompt column
    // mean minus the pooled mean of all columns should have variance 1/cols.
    Rng rng(33);
    const std::size_t cols = 100;
    const int prompts = 1000;
    double max_z = 0.0;
    for (int p = 0; p < prompts; ++p) {
        const Mat x = icl::sample_covariates({CovariateKind::GaussianMixture, 1, 2}, Sigma(SigmaSpec::identity(), 2), cols, rng);
        for (std::size_t i = 0; i < 2; ++i) {
            double m = 0.0;
            double s2 = 0.0;
            for (std::size_t j = 0; j < cols; ++j) m += x(i, j) / cols;
            for (std::size_t j = 0; j < cols; ++j) s2 += (x(i, j) - m) * (x(i, j) - m) / (cols - 1);
            // Within-prompt spread is the N(0, 1) noise alone.
            max_z = std::max(max_z, std::abs(s2 - 1.0) / std::sqrt(2.0 / (cols - 1)));
        }
    }
    EXPECT_LT(max_z, 5.0);
}

TEST(Covariates, GaussianMixtureMeansAreStandardNormal) {
    Rng rng(34);
    const int prompts = 100000;
    double s = 0.0;
    double s2 = 0.0;
    for (int p = 0; p < prompts; ++p) {
        const Mat x = icl::sample_covariates({CovariateKind::GaussianMixture, 1, 1}, Sigma(SigmaSpec::identity(), 1), 2, rng);
        const double m = 0.5 * (x(0, 0) + x(0, 1));  // mu + N(0, 1/2)
        s += m / prompts;
        s2 += m * m / prompts;
    }
    EXPECT_LT(std::abs(s), 3.0 * std::sqrt(1.5 / prompts));
    EXPECT_NEAR(s2, 1.5, 0.03);
}

TEST(Covariates, RejectsBadShapes) {
    Rng rng(35);
    EXPECT_THROW(icl::sample_covariates({CovariateKind::SphereIID, 2, 3}, Sigma(SigmaSpec::identity(), 2), 4, rng),
                 icl::ContractViolation);
    EXPECT_THROW(icl::sample_covariates({CovariateKind::SphereIID, 2, 2}, Sigma(SigmaSpec::identity(), 2), 1, rng),
                 icl::ContractViolation);
}

TEST(Labels, DuplicatedColumnGivesEqualLabels) {
    Rng rng(36);
    const Mat x{{0.6, 0.6}, {0.8, 0.8}};
    for (int t = 0; t < 50; ++t) {
        const Vec y = icl::sample_labels({LabelKind::KGP, KernelSpec::linear(), 0}, x, Sigma(SigmaSpec::identity(), 2), rng);
        ASSERT_NEAR(y[0], y[1], 1e-12);
    }
}

TEST(Labels, ReluNetZeroColumn) {
    Rng rng(37);
    const Mat x{{0, 1}, {0, 2}};
    for (int t = 0; t < 20; ++t)
        EXPECT_EQ(icl::sample_labels({LabelKind::TwoLayerRelu, KernelSpec::linear(), 0}, x, Sigma(SigmaSpec::identity(), 2), rng)[0], 0.0);
}

TEST(Labels, KgpCovarianceMatchesKmatPlus) {
    Rng data_rng(38);
    const Sigma sigma(SigmaSpec::identity(), 3);
    const Mat x = icl::sample_covariates({CovariateKind::SphereIID, 2, 3}, sigma, 5, data_rng);
    for (const auto& kernel : {KernelSpec::linear(), KernelSpec::relu(), KernelSpec::exp()}) {
        const Mat target = icl::kmat_plus(icl::kernel_matrix(kernel, x));
        Rng rng(39);
        const int draws = 100000;
        Mat cov(5, 5);
        for (int t = 0; t < draws; ++t) {
            const Vec y = icl::sample_labels({LabelKind::KGP, kernel, 0}, x, sigma, rng);
            for (std::size_t i = 0; i < 5; ++i)
                for (std::size_t j = 0; j < 5; ++j) cov(i, j) += y[i] * y[j] / draws;
        }
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j)
                if (std::abs(target(i, j)) > 0.1)
                    EXPECT_LE(std::abs(cov(i, j) - target(i, j)), 0.05 * std::abs(target(i, j)))
                        << icl::to_string(kernel.kind) << " entry " << i << "," << j;
    }
}

TEST(Labels, ReluNetRotationInvariance) {
    Rng data_rng(40);
    const std::size_t d = 3;
    const Sigma sigma(SigmaSpec::identity(), d);
    const Mat x = data_rng.normal_mat(d, 4);
    const Mat ux = icl::matmul(icl::random_orthogonal(d, data_rng), x);
    const int draws = 100000;
    auto moments = [&](const Mat& cols, std::uint64_t seed, Mat& cov, Mat& cov_sq) {
        Rng rng(seed);
        for (int t = 0; t < draws; ++t) {
            const Vec y = icl::sample_labels({LabelKind::TwoLayerRelu, KernelSpec::linear(), 0}, cols, sigma, rng);
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t j = 0; j < 4; ++j) {
                    cov(i, j) += y[i] * y[j] / draws;
                    cov_sq(i, j) += y[i] * y[j] * y[i] * y[j] / draws;
                }
        }
    };
    Mat c1(4, 4), q1(4, 4), c2(4, 4), q2(4, 4);
    moments(x, 41, c1, q1);
    moments(ux, 42, c2, q2);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            const double se = std::sqrt((q1(i, j) - c1(i, j) * c1(i, j) + q2(i, j) - c2(i, j) * c2(i, j)) / draws);
            EXPECT_LE(std::abs(c1(i, j) - c2(i, j)), 3.0 * se) << i << "," << j;
        }
}

TEST(Prompt, MaskingExample) {
    const auto p = icl::assemble_prompt(Mat{{1, 0, 0}, {0, 1, 0}}, Vec{3, 4, 5});
    ASSERT_EQ(p.z0.rows(), 3u);
    ASSERT_EQ(p.z0.cols(), 3u);
    EXPECT_EQ(p.z0(2, 0), 3.0);
    EXPECT_EQ(p.z0(2, 1), 4.0);
    EXPECT_EQ(p.z0(2, 2), 0.0);
    EXPECT_EQ(p.query_label(), 5.0);
    EXPECT_EQ(p.num_demos(), 2u);
    EXPECT_EQ(p.dim(), 2u);
    EXPECT_THROW(icl::assemble_prompt(Mat(2, 3), Vec{1, 2}), icl::ContractViolation);
}

TEST(Prompt, SamplerInvariants) {
    const icl::PromptSampler sampler{{CovariateKind::GaussianIID, 2, 3},
                                     {LabelKind::KGP, KernelSpec::exp(), 0},
                                     Sigma(SigmaSpec::rotated_diag({1, 2, 0.5}, 4), 3),
                                     6};
    Rng rng(43);
    for (const auto& p : sampler.batch(50, rng)) {
        ASSERT_EQ(p.z0.rows(), 4u);
        ASSERT_EQ(p.z0.cols(), 7u);
        EXPECT_EQ(p.z0(3, 6), 0.0);
        for (std::size_t j = 0; j < 7; ++j) {
            for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(p.z0(i, j), p.x(i, j));
            if (j < 6) EXPECT_EQ(p.z0(3, j), p.y[j]);
        }
    }
}

TEST(Prompt, SamplerIsDeterministic) {
    const icl::PromptSampler sampler{{CovariateKind::SphereIID, 2, 3},
                                     {LabelKind::KGP, KernelSpec::relu(), 0},
                                     Sigma(SigmaSpec::identity(), 3),
                                     5};
    Rng a(44);
    Rng b(44);
    const auto pa = sampler.batch(10, a);
    const auto pb = sampler.batch(10, b);
    for (std::size_t k = 0; k < 10; ++k) {
        EXPECT_EQ(pa[k].x, pb[k].x);
        EXPECT_EQ(pa[k].y, pb[k].y);
    }
}
