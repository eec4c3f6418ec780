// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "openviga/video_decoder.hpp"

#include "openviga/errors.hpp"

namespace openviga::vdec {

InflationSpec InflationSpec::from_config(const InflationConfig& config) {
    InflationSpec spec{config.temporal_extent, config.overrides};
    spec.validate();
    return spec;
}

int InflationSpec::extent_for(const std::string& layer_path) const {
    int extent = temporal_extent;
    std::size_t best = 0;
    for (const auto& [prefix, value] : overrides) {
        const bool match = layer_path.compare(0, prefix.size(), prefix) == 0 &&
                           (layer_path.size() == prefix.size() || layer_path[prefix.size()] == '.');
        if (match && prefix.size() >= best) {
            best = prefix.size();
            extent = value;
        }
    }
    return extent;
}

void InflationSpec::validate() const {
    if (temporal_extent < 1 || temporal_extent % 2 == 0) {
        throw ConfigError("temporal extent must be odd, got " + std::to_string(temporal_extent));
    }
    for (const auto& [prefix, value] : overrides) {
        if (value < 1 || value % 2 == 0) {
            throw ConfigError("temporal extent for '" + prefix + "' must be odd, got " + std::to_string(value));
        }
    }
}

vq::Decoder inflate_decoder(const vq::Decoder& decoder2d, const AutoencoderConfig& config, const InflationSpec& spec) {
    spec.validate();
    vq::Decoder out(config);
    layers::copy_state(*out, *decoder2d);
    layers::inflate_all(*out, [&](const std::string& path) { return spec.extent_for(path); });
    return out;
}

vq::PatchDiscriminator inflate_discriminator(const vq::PatchDiscriminator& disc2d, const AutoencoderConfig& config,
                                             const InflationSpec& spec) {
    spec.validate();
    vq::PatchDiscriminator out(config.discriminator, config.input_size);
    layers::copy_state(*out, *disc2d);
    layers::inflate_all(*out, [&](const std::string& path) { return spec.extent_for(path); });
    return out;
}

VideoDecoderImpl::VideoDecoderImpl(const vq::Decoder& decoder2d, const AutoencoderConfig& config,
                                   const InflationSpec& spec)
    : config_(config) {
    decoder = register_module("decoder", inflate_decoder(decoder2d, config, spec));
}

torch::Tensor VideoDecoderImpl::forward(const torch::Tensor& window) {
    const int g = config_.grid_size();
    if (window.dim() != 5 || window.size(1) != config_.code_dim || window.size(2) != 3 || window.size(3) != g ||
        window.size(4) != g) {
        throw DimensionError("video decoder expects [B, " + std::to_string(config_.code_dim) + ", 3, " +
                             std::to_string(g) + ", " + std::to_string(g) + "] windows");
    }
    return decoder(window);
}

torch::Tensor VideoDecoderImpl::decode_center(const torch::Tensor& window) {
    // one window at a time: results do not depend on what else is in the batch
    std::vector<torch::Tensor> frames;
    for (int64_t i = 0; i < window.size(0); ++i) frames.push_back(forward(window.slice(0, i, i + 1)).select(2, 1));
    return torch::cat(frames);
}

torch::Tensor make_window(const torch::Tensor& previous, const torch::Tensor& current, const torch::Tensor& next) {
    return torch::stack({previous, current, next}, 1).unsqueeze(0);
}

// --- streaming ----------------------------------------------------------------------------

StreamDecoder::StreamDecoder(VideoDecoder model) : model_(std::move(model)) {}

torch::Tensor StreamDecoder::decode(const torch::Tensor& prev, const torch::Tensor& cur, const torch::Tensor& next) {
    torch::NoGradGuard guard;
    ++emitted_;
    return model_->decode_center(make_window(prev, cur, next))[0];
}

std::optional<torch::Tensor> StreamDecoder::push(const torch::Tensor& latents) {
    if (finished_) throw ParameterError("stream already finished");
    if (latents.dim() != 3) throw DimensionError("stream decoder takes [d, h, w] latent grids");
    ring_.push_back(latents);
    if (ring_.size() > 3) ring_.pop_front();
    ++consumed_;
    if (consumed_ == 1) return std::nullopt;
    if (consumed_ == 2) return decode(ring_[0], ring_[0], ring_[1]);
    return decode(ring_[0], ring_[1], ring_[2]);
}

std::optional<torch::Tensor> StreamDecoder::finish() {
    if (finished_ || consumed_ == 0) return std::nullopt;
    finished_ = true;
    const auto& last = ring_.back();
    const auto& before = ring_.size() >= 2 ? ring_[ring_.size() - 2] : last;
    return decode(before, last, last);
}

torch::Tensor stream_decode(VideoDecoder& model, const std::vector<torch::Tensor>& latents) {
    if (latents.empty()) throw ParameterError("stream_decode needs at least one grid");
    StreamDecoder stream(model);
    std::vector<torch::Tensor> frames;
    for (const auto& z : latents) {
        if (auto f = stream.push(z)) frames.push_back(*f);
    }
    if (auto f = stream.finish()) frames.push_back(*f);
    return torch::stack(frames);
}

// --- loss ------------------------------------------------------------------------------------

VdecLossTerms vdec_loss(const torch::Tensor& x_hat, const torch::Tensor& x, const LossWeights& w,
                        const loss::FeatureExtractor* phi, const torch::Tensor& fake_logits, long step) {
    if (x_hat.dim() != 5 || !x_hat.sizes().equals(x.sizes()) || x_hat.size(2) != 3) {
        throw DimensionError("vdec_loss expects two [B, 3, 3, H, W] triplets");
    }
    VdecLossTerms t;
    t.reconstruction = torch::zeros({}, x_hat.options());
    for (int tau = 0; tau < 3; ++tau) {
        t.reconstruction = t.reconstruction + loss::reconstruction_loss(x_hat.select(2, tau), x.select(2, tau), w, phi);
    }
    loss::LossComponents c;
    c.reconstruction = t.reconstruction;
    if (w.effective_weight(LossTerm::kGenerator, step) > 0.0) {
        if (!fake_logits.defined()) throw ConfigError("adversarial term active but no discriminator logits given");
        t.generator = loss::generator_loss(fake_logits);
        c.generator = t.generator;
    }
    LossWeights video_weights = w;
    video_weights.lambda_codebook = 0.0;
    video_weights.lambda_ssl = 0.0;
    t.total = loss::total_loss(c, video_weights, step);
    return t;
}

}  // namespace openviga::vdec
