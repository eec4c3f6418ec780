// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "openviga/config.hpp"

namespace openviga::loss {

/// Feature network with an ordered list of layer activations. Used by the
/// perceptual loss and by LPIPS.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::string name() const = 0;
    virtual std::vector<std::string> layers() const = 0;
    /// One activation per declared layer for a [B, 3, H, W] batch.
    virtual std::vector<torch::Tensor> features(const torch::Tensor& x) const = 0;
};

/// Self-supervised teacher producing one feature vector per latent position.
class Teacher {
public:
    virtual ~Teacher() = default;
    virtual std::string name() const = 0;
    virtual int dim() const = 0;
    /// [B, 3, H, W] -> [B, n, dim()] with n = latent positions.
    virtual torch::Tensor features(const torch::Tensor& x) const = 0;
};

/// phi(x) = x, a single layer.
class IdentityFeatures final : public FeatureExtractor {
public:
    std::string name() const override { return "identity"; }
    std::vector<std::string> layers() const override { return {"pixels"}; }
    std::vector<torch::Tensor> features(const torch::Tensor& x) const override { return {x}; }
};

/// Frozen random convolution stack (conv-relu-pool per layer). Weights are
/// a pure function of the seed.
class RandomConvFeatures final : public FeatureExtractor {
public:
    explicit RandomConvFeatures(std::uint64_t seed = 7, std::vector<int> widths = {16, 32, 64});
    std::string name() const override;
    std::vector<std::string> layers() const override;
    std::vector<torch::Tensor> features(const torch::Tensor& x) const override;

private:
    std::uint64_t seed_;
    std::vector<torch::Tensor> weights_;
};

/// Average-pools each latent patch to 4x4 and projects it with a fixed
/// random matrix to `dim` features.
class RandomPatchTeacher final : public Teacher {
public:
    RandomPatchTeacher(int patch, int dim, std::uint64_t seed = 11);
    std::string name() const override;
    int dim() const override { return dim_; }
    torch::Tensor features(const torch::Tensor& x) const override;

private:
    int patch_;
    int dim_;
    std::uint64_t seed_;
    torch::Tensor projection_;  // [3 * 16, dim]
};

// --- individual terms ------------------------------------------------------------

torch::Tensor pixel_l1(const torch::Tensor& x_hat, const torch::Tensor& x);
torch::Tensor pixel_l2(const torch::Tensor& x_hat, const torch::Tensor& x);
/// Sum over layers of the mean squared feature difference.
torch::Tensor perceptual_loss(const torch::Tensor& x_hat, const torch::Tensor& x, const FeatureExtractor& phi);

struct ReconstructionTerms {
    torch::Tensor l1, l2, perceptual;  // perceptual undefined when its weight is 0
    torch::Tensor total;
};

ReconstructionTerms reconstruction_terms(const torch::Tensor& x_hat, const torch::Tensor& x, const LossWeights& w,
                                         const FeatureExtractor* phi);
/// lambda1 * L1 + lambda2 * L2 + lambda' * perceptual. phi may be null when lambda' = 0.
torch::Tensor reconstruction_loss(const torch::Tensor& x_hat, const torch::Tensor& x, const LossWeights& w,
                                  const FeatureExtractor* phi);

/// mean((sg(z_tilde) - z)^2) + beta * mean((z_tilde - sg(z))^2)
torch::Tensor codebook_loss(const torch::Tensor& z, const torch::Tensor& z_tilde, double beta);

/// Mean over positions of 1 - cos(teacher, adapted), denominator max(|a||b|, eps).
/// Both are [B, n, D] (or [n, D]).
torch::Tensor ssl_loss(const torch::Tensor& adapted, const torch::Tensor& teacher, double eps = 1e-8);

torch::Tensor generator_loss(const torch::Tensor& fake_logits);
torch::Tensor discriminator_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits);

// --- composition --------------------------------------------------------------------

struct LossComponents {
    torch::Tensor reconstruction;
    torch::Tensor codebook;
    torch::Tensor ssl;
    torch::Tensor generator;
};

/// Which terms must be evaluated at `step` (weight > 0, generator gated).
struct ActiveTerms {
    bool perceptual, codebook, ssl, generator;
};
ActiveTerms active_terms(const LossWeights& w, long step);

/// J_rec + lambda_CB J_CB + lambda_SSL J_SSL + lambda_G J_G, with lambda_G = 0
/// before the adversarial start step. Terms with zero effective weight may be
/// left undefined. A non-finite component raises NumericalError naming it.
torch::Tensor total_loss(const LossComponents& c, const LossWeights& w, long step);

}  // namespace openviga::loss
