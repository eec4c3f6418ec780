// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "openviga/loss_suite.hpp"

#include "openviga/errors.hpp"
#include "openviga/tensor_utils.hpp"

namespace F = torch::nn::functional;

namespace openviga::loss {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (!a.sizes().equals(b.sizes())) {
        throw DimensionError(std::string(what) + ": argument shapes differ");
    }
}

void require_finite(const torch::Tensor& t, const char* name) {
    if (t.defined() && !torch::isfinite(t).all().item<bool>()) {
        throw NumericalError(std::string("loss component '") + name + "' is not finite");
    }
}

}  // namespace

// --- plugins ------------------------------------------------------------------------

RandomConvFeatures::RandomConvFeatures(std::uint64_t seed, std::vector<int> widths) : seed_(seed) {
    auto gen = make_generator(seed);
    int in = 3;
    for (int w : widths) {
        const double scale = std::sqrt(2.0 / (in * 9));
        weights_.push_back(torch::randn({w, in, 3, 3}, gen) * scale);
        in = w;
    }
}

std::string RandomConvFeatures::name() const { return "random-conv-" + std::to_string(seed_); }

std::vector<std::string> RandomConvFeatures::layers() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < weights_.size(); ++i) names.push_back("conv" + std::to_string(i + 1));
    return names;
}

std::vector<torch::Tensor> RandomConvFeatures::features(const torch::Tensor& x) const {
    std::vector<torch::Tensor> out;
    auto h = x;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        h = torch::relu(F::conv2d(h, weights_[i], F::Conv2dFuncOptions().padding(1)));
        out.push_back(h);
        if (i + 1 < weights_.size() && h.size(2) >= 2 && h.size(3) >= 2) h = F::avg_pool2d(h, F::AvgPool2dFuncOptions(2));
    }
    return out;
}

RandomPatchTeacher::RandomPatchTeacher(int patch, int dim, std::uint64_t seed)
    : patch_(patch), dim_(dim), seed_(seed) {
    if (patch < 4 || patch % 4 != 0) throw ConfigError("teacher patch size must be a multiple of 4");
    if (dim < 1) throw ConfigError("teacher dimension must be positive");
    auto gen = make_generator(seed);
    projection_ = torch::randn({48, dim}, gen) / std::sqrt(48.0);
}

std::string RandomPatchTeacher::name() const {
    return "random-patch-" + std::to_string(dim_) + "-" + std::to_string(seed_);
}

torch::Tensor RandomPatchTeacher::features(const torch::Tensor& x) const {
    if (x.dim() != 4 || x.size(2) % patch_ != 0 || x.size(3) % patch_ != 0) {
        throw DimensionError("teacher input must be [B, 3, H, W] with H, W divisible by the patch size");
    }
    torch::NoGradGuard guard;
    const int64_t b = x.size(0), h = x.size(2) / patch_, w = x.size(3) / patch_;
    auto pooled = F::avg_pool2d(x, F::AvgPool2dFuncOptions(patch_ / 4));  // [B, 3, 4h, 4w]
    auto patches = pooled.reshape({b, 3, h, 4, w, 4}).permute({0, 2, 4, 1, 3, 5}).reshape({b, h * w, 48});
    return patches.matmul(projection_);
}

// --- terms ------------------------------------------------------------------------------

torch::Tensor pixel_l1(const torch::Tensor& x_hat, const torch::Tensor& x) {
    require_same_shape(x_hat, x, "pixel_l1");
    return (x_hat - x).abs().mean();
}

torch::Tensor pixel_l2(const torch::Tensor& x_hat, const torch::Tensor& x) {
    require_same_shape(x_hat, x, "pixel_l2");
    return (x_hat - x).pow(2).mean();
}

torch::Tensor perceptual_loss(const torch::Tensor& x_hat, const torch::Tensor& x, const FeatureExtractor& phi) {
    require_same_shape(x_hat, x, "perceptual_loss");
    if (phi.layers().empty()) throw ConfigError("feature extractor '" + phi.name() + "' declares no layers");
    const auto a = phi.features(x_hat);
    const auto b = phi.features(x);
    if (a.size() != phi.layers().size() || b.size() != a.size()) {
        throw ConfigError("feature extractor '" + phi.name() + "' returned the wrong number of layers");
    }
    auto total = torch::zeros({}, x_hat.options());
    for (std::size_t l = 0; l < a.size(); ++l) total = total + (a[l] - b[l]).pow(2).mean();
    return total;
}

ReconstructionTerms reconstruction_terms(const torch::Tensor& x_hat, const torch::Tensor& x, const LossWeights& w,
                                         const FeatureExtractor* phi) {
    ReconstructionTerms t;
    t.l1 = pixel_l1(x_hat, x);
    t.l2 = pixel_l2(x_hat, x);
    t.total = w.lambda_l1 * t.l1 + w.lambda_l2 * t.l2;
    if (w.lambda_perceptual > 0.0) {
        if (!phi) throw ConfigError("perceptual weight is positive but no feature extractor is configured");
        t.perceptual = perceptual_loss(x_hat, x, *phi);
        t.total = t.total + w.lambda_perceptual * t.perceptual;
    }
    return t;
}

torch::Tensor reconstruction_loss(const torch::Tensor& x_hat, const torch::Tensor& x, const LossWeights& w,
                                  const FeatureExtractor* phi) {
    return reconstruction_terms(x_hat, x, w, phi).total;
}

torch::Tensor codebook_loss(const torch::Tensor& z, const torch::Tensor& z_tilde, double beta) {
    require_same_shape(z, z_tilde, "codebook_loss");
    const auto embedding = (z_tilde.detach() - z).pow(2).mean();
    const auto commitment = (z_tilde - z.detach()).pow(2).mean();
    return embedding + beta * commitment;
}

torch::Tensor ssl_loss(const torch::Tensor& adapted, const torch::Tensor& teacher, double eps) {
    if (adapted.size(-1) != teacher.size(-1)) {
        throw ConfigError("adapter output dim " + std::to_string(adapted.size(-1)) + " does not match teacher dim " +
                          std::to_string(teacher.size(-1)));
    }
    require_same_shape(adapted, teacher, "ssl_loss");
    const auto dot = (adapted * teacher).sum(-1);
    const auto norms = adapted.norm(2, -1) * teacher.norm(2, -1);
    return (1.0 - dot / norms.clamp_min(eps)).mean();
}

torch::Tensor generator_loss(const torch::Tensor& fake_logits) { return -fake_logits.mean(); }

torch::Tensor discriminator_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits) {
    return 0.5 * (torch::relu(1.0 - real_logits).mean() + torch::relu(1.0 + fake_logits).mean());
}

// --- composition --------------------------------------------------------------------------

ActiveTerms active_terms(const LossWeights& w, long step) {
    return {w.lambda_perceptual > 0.0, w.lambda_codebook > 0.0, w.lambda_ssl > 0.0,
            w.effective_weight(LossTerm::kGenerator, step) > 0.0};
}

torch::Tensor total_loss(const LossComponents& c, const LossWeights& w, long step) {
    if (!c.reconstruction.defined()) throw ConfigError("reconstruction component is required");
    require_finite(c.reconstruction, "reconstruction");
    auto total = c.reconstruction;
    auto add = [&](const torch::Tensor& term, double weight, const char* name) {
        if (weight == 0.0) return;
        if (!term.defined()) throw ConfigError(std::string("component '") + name + "' has positive weight but is missing");
        require_finite(term, name);
        total = total + weight * term;
    };
    add(c.codebook, w.effective_weight(LossTerm::kCodebook, step), "codebook");
    add(c.ssl, w.effective_weight(LossTerm::kSsl, step), "ssl");
    add(c.generator, w.effective_weight(LossTerm::kGenerator, step), "generator");
    return total;
}

}  // namespace openviga::loss
