// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <vector>

#include "openviga/config.hpp"
#include "openviga/layers.hpp"
#include "openviga/tensor_utils.hpp"

namespace openviga::vq {

// Tensors follow torch layout: frames [B, 3, H, W], latent grids
// [B, d, h, w], index grids [B, h, w] (int64).

class EncoderImpl : public torch::nn::Module {
public:
    explicit EncoderImpl(const AutoencoderConfig& config);
    torch::Tensor forward(const torch::Tensor& x);

private:
    layers::Conv conv_in{nullptr};
    torch::nn::ModuleList down;
    layers::ResBlock mid{nullptr};
    layers::Norm norm_out{nullptr};
    layers::Conv conv_out{nullptr};
};
TORCH_MODULE(Encoder);

/// Mirrors the encoder with nearest-neighbour upsampling and a tanh output.
/// Works on [B, d, T, h, w] clips after layers::inflate_all().
class DecoderImpl : public torch::nn::Module {
public:
    explicit DecoderImpl(const AutoencoderConfig& config);
    torch::Tensor forward(const torch::Tensor& z);

private:
    layers::Conv conv_in{nullptr};
    layers::ResBlock mid{nullptr};
    torch::nn::ModuleList up;
    layers::Norm norm_out{nullptr};
    layers::Conv conv_out{nullptr};
};
TORCH_MODULE(Decoder);

struct Quantized {
    torch::Tensor z;        // codebook rows, [B, d, h, w]; carries gradient to the codebook only
    torch::Tensor indices;  // [B, h, w]
};

class QuantizerImpl : public torch::nn::Module {
public:
    QuantizerImpl(int codebook_size, int code_dim);
    /// Nearest codebook row per position; ties go to the lowest index.
    Quantized forward(const torch::Tensor& z_tilde);
    /// Codebook rows for an index grid, [B, d, h, w].
    torch::Tensor lookup(const torch::Tensor& indices) const;

    torch::Tensor codebook;  // [K, d]
};
TORCH_MODULE(Quantizer);

/// Nearest-neighbour indices of rows of `latents` [n, d] against `codebook`
/// [K, d], computed with explicit squared differences in double precision.
torch::Tensor nearest_indices(const torch::Tensor& latents, const torch::Tensor& codebook);

/// Forward value z, gradient copied unchanged to z_tilde; z gets none.
torch::Tensor straight_through(const torch::Tensor& z_tilde, const torch::Tensor& z);

struct EncodeResult {
    torch::Tensor z_tilde;    // encoder output
    torch::Tensor quantized;  // codebook rows (gradient to the codebook)
    torch::Tensor z_st;       // straight-through tokens fed to the decoder
    torch::Tensor indices;
};

class VQAutoencoderImpl : public torch::nn::Module {
public:
    explicit VQAutoencoderImpl(AutoencoderConfig config);

    torch::Tensor encode(const torch::Tensor& frames);
    Quantized quantize(const torch::Tensor& z_tilde);
    /// encode + quantize + straight-through in one pass.
    EncodeResult tokenize(const torch::Tensor& frames);
    torch::Tensor decode(const torch::Tensor& latents);
    torch::Tensor decode_indices(const torch::Tensor& indices);
    torch::Tensor transcode(const torch::Tensor& frames);
    /// SSL adapter FC(teacher_dim) over tokens: [B, d, h, w] -> [B, n, teacher_dim].
    torch::Tensor adapt(const torch::Tensor& tokens);

    std::vector<IndexGrid> index_frames(std::span<const data::Frame> frames);

    const AutoencoderConfig& config() const { return config_; }

    Encoder encoder{nullptr};
    Quantizer quantizer{nullptr};
    Decoder decoder{nullptr};
    torch::nn::Linear ssl_adapter{nullptr};

private:
    void check_frames(const torch::Tensor& frames) const;
    void check_latents(const torch::Tensor& latents) const;
    AutoencoderConfig config_;
};
TORCH_MODULE(VQAutoencoder);

/// Patch discriminator. The baseline has three stride-2 stages followed by
/// two k4/s1 convolutions (30x30 patches at 256 px). Our variant keeps adding
/// k4/s2 stages until the map reaches `patch_grid` (8x8 at 256 px), then a
/// size-preserving k3 head. Normalization is GroupNorm.
class PatchDiscriminatorImpl : public torch::nn::Module {
public:
    PatchDiscriminatorImpl(const DiscriminatorConfig& config, int input_size);
    /// [B, 3, H, W] -> [B, 1, g, g]; inflated: [B, 3, T, H, W] -> [B, 1, T, g, g].
    torch::Tensor forward(const torch::Tensor& x);
    /// Logit grid side for the configured input size.
    int grid_side() const { return grid_side_; }
    int input_size() const { return input_size_; }

private:
    torch::nn::ModuleList stages;
    int input_size_;
    int grid_side_;
};
TORCH_MODULE(PatchDiscriminator);

/// Logit grid side produced for a given layout without building the network.
int discriminator_grid_side(const DiscriminatorConfig& config, int input_size);

}  // namespace openviga::vq
