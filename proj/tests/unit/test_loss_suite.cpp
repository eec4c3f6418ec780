// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "openviga/errors.hpp"
#include "openviga/loss_suite.hpp"
#include "test_support.hpp"

using namespace openviga;
using namespace openviga::loss;

namespace {

/// Two layers: x and 2x.
class ScaledIdentity final : public FeatureExtractor {
public:
    std::string name() const override { return "scaled-identity"; }
    std::vector<std::string> layers() const override { return {"x", "2x"}; }
    std::vector<torch::Tensor> features(const torch::Tensor& x) const override { return {x, 2 * x}; }
};

/// Smooth nonlinear double-precision plugin for gradient checks.
class TanhConv final : public FeatureExtractor {
public:
    TanhConv() {
        torch::manual_seed(99);
        w_ = torch::randn({4, 3, 3, 3}, torch::kFloat64) * 0.3;
    }
    std::string name() const override { return "tanh-conv"; }
    std::vector<std::string> layers() const override { return {"pixels", "conv"}; }
    std::vector<torch::Tensor> features(const torch::Tensor& x) const override {
        return {x, torch::tanh(torch::conv2d(x, w_, {}, 1, 1))};
    }

private:
    torch::Tensor w_;
};

torch::Tensor rnd(std::vector<int64_t> shape, int seed) {
    torch::manual_seed(seed);
    return torch::randn(shape, torch::kFloat64);
}

double v(const torch::Tensor& t) { return t.item<double>(); }

}  // namespace

// --- closed forms --------------------------------------------------------------------------

TEST(Reconstruction, IdentityIsZero) {
    auto x = rnd({2, 3, 8, 8}, 1);
    LossWeights w;
    RandomConvFeatures phi;
    EXPECT_EQ(v(reconstruction_loss(x.to(torch::kFloat32), x.to(torch::kFloat32), w, &phi)), 0.0);
}

TEST(Reconstruction, UnitOffsetWithoutPerceptual) {
    auto x = rnd({2, 3, 8, 8}, 2);
    LossWeights w;
    w.lambda_perceptual = 0.0;
    EXPECT_NEAR(v(reconstruction_loss(x + 1, x, w, nullptr)), 2.2, 1e-6);
}

TEST(Reconstruction, TermByTermOracle) {
    auto x = rnd({2, 3, 8, 8}, 3);
    auto y = rnd({2, 3, 8, 8}, 4);
    LossWeights w;
    ScaledIdentity phi;
    const double l1 = v((y - x).abs().mean());
    const double l2 = v((y - x).pow(2).mean());
    const double perceptual = l2 + v((2 * y - 2 * x).pow(2).mean());
    EXPECT_NEAR(v(reconstruction_loss(y, x, w, &phi)), 0.2 * l1 + 2.0 * l2 + 1.0 * perceptual, 1e-9);
}

TEST(Perceptual, IdentityPluginIsMse) {
    auto x = rnd({1, 3, 5, 5}, 5), y = rnd({1, 3, 5, 5}, 6);
    IdentityFeatures phi;
    EXPECT_NEAR(v(perceptual_loss(y, x, phi)), v((y - x).pow(2).mean()), 1e-12);
    EXPECT_EQ(v(perceptual_loss(x, x, phi)), 0.0);
}

TEST(Perceptual, TwoLayerLinearPluginIsFiveTimesMse) {
    auto x = rnd({1, 3, 5, 5}, 7), y = rnd({1, 3, 5, 5}, 8);
    ScaledIdentity phi;
    EXPECT_NEAR(v(perceptual_loss(y, x, phi)), 5.0 * v((y - x).pow(2).mean()), 1e-12);
}

TEST(Codebook, OffsetClosedForm) {
    auto z = rnd({2, 4, 3, 3}, 9), delta = rnd({2, 4, 3, 3}, 10);
    EXPECT_EQ(v(codebook_loss(z, z, 0.25)), 0.0);
    EXPECT_NEAR(v(codebook_loss(z, z + delta, 0.25)), 1.25 * v(delta.pow(2).mean()), 1e-12);
}

TEST(Ssl, CosineCases) {
    auto t = rnd({2, 5, 6}, 11);
    EXPECT_NEAR(v(ssl_loss(3.0 * t, t)), 0.0, 1e-12);
    EXPECT_NEAR(v(ssl_loss(-t, t)), 2.0, 1e-12);
    // orthogonal per position: swap and negate pairs of coordinates
    auto a = torch::zeros({1, 4, 2}, torch::kFloat64);
    auto b = torch::zeros({1, 4, 2}, torch::kFloat64);
    auto r = rnd({4, 2}, 12);
    a[0] = r;
    b[0] = torch::stack({-r.select(1, 1), r.select(1, 0)}, 1);
    EXPECT_NEAR(v(ssl_loss(a, b)), 1.0, 1e-12);
}

TEST(Adversarial, GeneratorCases) {
    EXPECT_NEAR(v(generator_loss(torch::full({2, 1, 8, 8}, 0.5))), -0.5, 1e-7);
    EXPECT_EQ(v(generator_loss(torch::zeros({2, 1, 8, 8}))), 0.0);
    auto mixed = rnd({3, 1, 8, 8}, 13);
    EXPECT_NEAR(v(generator_loss(mixed)), -v(mixed.mean()), 1e-12);
}

TEST(Adversarial, HingeTriple) {
    auto ones = torch::ones({2, 1, 8, 8});
    EXPECT_NEAR(v(discriminator_loss(ones, -ones)), 0.0, 1e-7);
    EXPECT_NEAR(v(discriminator_loss(0 * ones, 0 * ones)), 1.0, 1e-7);
    EXPECT_NEAR(v(discriminator_loss(-ones, ones)), 2.0, 1e-7);
}

TEST(Total, WeightedSumPastGate) {
    LossWeights w;
    w.adversarial_start_step = 5;
    LossComponents c;
    c.reconstruction = c.codebook = c.ssl = c.generator = torch::ones({}, torch::kFloat64);
    EXPECT_NEAR(v(total_loss(c, w, 5)), 3.1, 1e-6);
    auto gated = w;
    gated.lambda_generator = 0.0;
    EXPECT_EQ(v(total_loss(c, w, 4)), v(total_loss(c, gated, 4)));
    EXPECT_NEAR(v(total_loss(c, w, 4)), 2.1, 1e-6);
}

TEST(Total, AblationTogglesDropOneTerm) {
    LossWeights w;
    w.adversarial_start_step = 0;
    LossComponents c;
    c.reconstruction = torch::tensor(1.0, torch::kFloat64);
    c.codebook = torch::tensor(10.0, torch::kFloat64);
    c.ssl = torch::tensor(100.0, torch::kFloat64);
    c.generator = torch::tensor(1000.0, torch::kFloat64);
    const double full = v(total_loss(c, w, 0));
    EXPECT_NEAR(full, 1 + 10 + 10 + 1000, 1e-9);
    EXPECT_NEAR(v(total_loss(c, w.without(LossTerm::kSsl), 0)), full - 10, 1e-9);
    EXPECT_NEAR(v(total_loss(c, w.without(LossTerm::kGenerator), 0)), full - 1000, 1e-9);
    EXPECT_NEAR(v(total_loss(c, w.without(LossTerm::kCodebook), 0)), full - 10, 1e-9);
    const auto act = active_terms(w.without(LossTerm::kPerceptual), 0);
    EXPECT_FALSE(act.perceptual);
    EXPECT_TRUE(act.ssl && act.codebook && act.generator);
}

TEST(Total, ErrorsNameTheComponent) {
    LossWeights w;
    w.adversarial_start_step = 0;
    LossComponents c;
    c.reconstruction = torch::tensor(1.0);
    c.codebook = torch::tensor(std::numeric_limits<double>::quiet_NaN());
    c.ssl = c.generator = torch::tensor(1.0);
    try {
        total_loss(c, w, 0);
        FAIL() << "NaN accepted";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("codebook"), std::string::npos);
    }
    c.codebook = torch::tensor(1.0);
    c.ssl = torch::Tensor();
    EXPECT_THROW(total_loss(c, w, 0), ConfigError);
}

// --- gradient checks --------------------------------------------------------------------------

TEST(Gradients, PixelAndPerceptualTerms) {
    auto x = rnd({1, 3, 4, 4}, 20);
    TanhConv phi;
    LossWeights w;
    auto check = [&](const std::function<torch::Tensor(const torch::Tensor&)>& f) {
        auto y = rnd({1, 3, 4, 4}, 21).requires_grad_(true);
        f(y).backward();
        return test_support::max_relative_fd_error(f, y, y.grad());
    };
    EXPECT_LT(check([&](const torch::Tensor& y) { return pixel_l1(y, x); }), 1e-4);
    EXPECT_LT(check([&](const torch::Tensor& y) { return pixel_l2(y, x); }), 1e-4);
    EXPECT_LT(check([&](const torch::Tensor& y) { return perceptual_loss(y, x, phi); }), 1e-4);
    EXPECT_LT(check([&](const torch::Tensor& y) { return reconstruction_loss(y, x, w, &phi); }), 1e-4);
}

TEST(Gradients, CodebookRowsWithCommitmentFrozen) {
    auto z_tilde = rnd({2, 3, 2, 2}, 22);
    auto z = rnd({2, 3, 2, 2}, 23).requires_grad_(true);
    codebook_loss(z, z_tilde, 0.25).backward();
    // with sg(z) in the commitment term only the first term depends on z
    auto f = [&](const torch::Tensor& zz) { return (z_tilde - zz).pow(2).mean(); };
    EXPECT_LT(test_support::max_relative_fd_error(f, z, z.grad()), 1e-4);
    auto zt = z_tilde.clone().requires_grad_(true);
    codebook_loss(z.detach(), zt, 0.25).backward();
    auto g = [&](const torch::Tensor& t) { return 0.25 * (t - z.detach()).pow(2).mean(); };
    EXPECT_LT(test_support::max_relative_fd_error(g, zt, zt.grad()), 1e-4);
}

TEST(Gradients, SslAndAdversarial) {
    auto teacher = rnd({2, 3, 5}, 24);
    auto a = rnd({2, 3, 5}, 25).requires_grad_(true);
    ssl_loss(a, teacher).backward();
    EXPECT_LT(test_support::max_relative_fd_error([&](const torch::Tensor& t) { return ssl_loss(t, teacher); }, a,
                                                  a.grad()),
              1e-4);

    auto fake = rnd({2, 1, 3, 3}, 26).requires_grad_(true);
    generator_loss(fake).backward();
    EXPECT_LT(test_support::max_relative_fd_error([](const torch::Tensor& t) { return generator_loss(t); }, fake,
                                                  fake.grad()),
              1e-4);

    // keep logits away from the hinge kinks at +-1
    auto real = (rnd({2, 1, 3, 3}, 27) * 0.3).requires_grad_(true);
    auto fk = (rnd({2, 1, 3, 3}, 28) * 0.3).requires_grad_(true);
    discriminator_loss(real, fk).backward();
    EXPECT_LT(test_support::max_relative_fd_error(
                  [&](const torch::Tensor& t) { return discriminator_loss(t, fk.detach()); }, real, real.grad()),
              1e-4);
    EXPECT_LT(test_support::max_relative_fd_error(
                  [&](const torch::Tensor& t) { return discriminator_loss(real.detach(), t); }, fk, fk.grad()),
              1e-4);
}

TEST(Plugins, DeterministicFromSeed) {
    RandomConvFeatures a(7), b(7), c(8);
    auto x = torch::rand({1, 3, 16, 16});
    EXPECT_TRUE(torch::equal(a.features(x).back(), b.features(x).back()));
    EXPECT_FALSE(torch::equal(a.features(x).back(), c.features(x).back()));
    RandomPatchTeacher t(4, 6);
    EXPECT_EQ(t.features(x).sizes(), (std::vector<int64_t>{1, 16, 6}));
}
