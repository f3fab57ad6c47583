// Walks through the library: a transformer built from functional-GD weights
// tracks the kernel-regression iterates and approaches the Bayes predictor,
// then a small model is trained from random initialization.

#include <cstdio>

#include "icl/checks.hpp"
#include "icl/funcgd.hpp"
#include "icl/train.hpp"

int main() {
    icl::Rng rng(2024);
    const icl::KernelSpec kernel = icl::KernelSpec::exp();
    const auto inst = icl::sample_bayes_instance(kernel, 3, 8, 50.0, rng);
    const double delta = 0.5 / inst.lambda_max;

    const icl::Vec est = icl::neumann_converges(kernel, inst.x_demo, inst.y_demo, inst.query, delta, 400);
    const icl::Vec rates(400, delta);
    const icl::Vec fgd = icl::fgd_run(kernel, inst.x_demo, inst.y_demo, rates, inst.query);
    const double bayes = icl::bayes_predict(kernel, inst.x_demo, inst.y_demo, inst.query);
    std::printf("layer  transformer   functional-GD  |estimate - bayes|\n");
    for (std::size_t l : {0u, 1u, 2u, 5u, 10u, 50u, 100u, 400u})
        std::printf("%5zu  %+.9f  %+.9f  %.3e\n", l, est[l], fgd[l], std::abs(est[l] - bayes));
    std::printf("bayes  %+.9f\n\n", bayes);

    icl::ExperimentConfig c;
    c.d = 3;
    c.n = 10;
    c.layers = 2;
    c.kernel = icl::KernelSpec::relu();
    c.activation = icl::Activation::ReluDot;
    c.training.steps = 300;
    c.training.batch = 256;
    c.training.eval_every = 50;
    c.training.eval_batch = 1024;
    const icl::RunHistory h = icl::run_training(c);
    std::printf("step  eval_loss  dist_BC_layer0  dist_BC_layer1\n");
    for (const auto& r : h.records)
        std::printf("%4zu  %.5f    %.4f          %.4f\n", r.step, r.eval_loss, r.dist_bc[0], r.dist_bc[1]);
    return 0;
}
