// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "openviga/config.hpp"
#include "openviga/loss_suite.hpp"
#include "openviga/vq_autoencoder.hpp"

namespace openviga::vdec {

/// Temporal kernel extent per convolution. Overrides are keyed by a
/// parameter-path prefix such as "up.0" or "conv_out".
struct InflationSpec {
    int temporal_extent = 3;
    std::map<std::string, int> overrides;

    static InflationSpec from_config(const InflationConfig& config);
    int extent_for(const std::string& layer_path) const;
    void validate() const;
};

/// Copy of a 2-D module with every convolution centrally inflated.
vq::Decoder inflate_decoder(const vq::Decoder& decoder2d, const AutoencoderConfig& config, const InflationSpec& spec);
vq::PatchDiscriminator inflate_discriminator(const vq::PatchDiscriminator& disc2d, const AutoencoderConfig& config,
                                             const InflationSpec& spec);

/// Window of three consecutive latent grids, [B, d, 3, h, w].
class VideoDecoderImpl : public torch::nn::Module {
public:
    VideoDecoderImpl(const vq::Decoder& decoder2d, const AutoencoderConfig& config, const InflationSpec& spec);
    /// [B, d, 3, h, w] quantized latents -> [B, 3, 3, H, W] frames (channels, time, H, W).
    torch::Tensor forward(const torch::Tensor& window);
    /// Center frame of every window, [B, 3, H, W]; each window is decoded on
    /// its own so the result is independent of the batch composition.
    torch::Tensor decode_center(const torch::Tensor& window);

    vq::Decoder decoder{nullptr};

private:
    AutoencoderConfig config_;
};
TORCH_MODULE(VideoDecoder);

/// [d, h, w] latents -> [1, d, 3, h, w] window.
torch::Tensor make_window(const torch::Tensor& previous, const torch::Tensor& current, const torch::Tensor& next);

/// Sliding three-frame decoder with one frame of latency. Frame t is emitted
/// when grid t+1 arrives (or on finish()); boundary windows replicate the
/// first or last grid.
class StreamDecoder {
public:
    explicit StreamDecoder(VideoDecoder model);

    /// Feeds one [d, h, w] latent grid; returns the frame that became ready.
    std::optional<torch::Tensor> push(const torch::Tensor& latents);
    /// Flushes the final frame.
    std::optional<torch::Tensor> finish();

    long consumed() const { return consumed_; }
    long emitted() const { return emitted_; }

private:
    torch::Tensor decode(const torch::Tensor& prev, const torch::Tensor& cur, const torch::Tensor& next);
    VideoDecoder model_;
    std::deque<torch::Tensor> ring_;  // at most 3 grids
    long consumed_ = 0;
    long emitted_ = 0;
    bool finished_ = false;
};

/// All frames of a sequence of [d, h, w] latent grids, [L, 3, H, W].
torch::Tensor stream_decode(VideoDecoder& model, const std::vector<torch::Tensor>& latents);

struct VdecLossTerms {
    torch::Tensor reconstruction;  // sum over the three frames
    torch::Tensor generator;       // undefined while gated
    torch::Tensor total;
};

/// Sum over tau of J_rec(x_hat_tau, x_tau) plus lambda_G * J_G on the 3-D
/// logits of the generated triplet (gated by the adversarial start step).
/// x_hat and x are [B, 3, 3, H, W].
VdecLossTerms vdec_loss(const torch::Tensor& x_hat, const torch::Tensor& x, const LossWeights& w,
                        const loss::FeatureExtractor* phi, const torch::Tensor& fake_logits, long step);

}  // namespace openviga::vdec
