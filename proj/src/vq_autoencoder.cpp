// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "openviga/vq_autoencoder.hpp"

#include <algorithm>
#include <numeric>

#include "openviga/errors.hpp"

namespace openviga::vq {

using layers::Conv;
using layers::Norm;
using layers::ResBlock;

namespace {

std::string shape_of(const torch::Tensor& t) {
    std::string s = "[";
    for (int64_t i = 0; i < t.dim(); ++i) s += (i ? ", " : "") + std::to_string(t.size(i));
    return s + "]";
}

class DownLevelImpl : public torch::nn::Module {
public:
    DownLevelImpl(int in_ch, int out_ch, int blocks, int groups) {
        for (int i = 0; i < blocks; ++i) res->push_back(ResBlock(in_ch, in_ch, groups));
        register_module("res", res);
        downsample = register_module("downsample", Conv(in_ch, out_ch, 3, 2, 1));
    }
    torch::Tensor forward(torch::Tensor x) {
        for (auto& m : *res) x = m->as<layers::ResBlockImpl>()->forward(x);
        return downsample(x);
    }
    torch::nn::ModuleList res;
    Conv downsample{nullptr};
};
TORCH_MODULE(DownLevel);

class UpLevelImpl : public torch::nn::Module {
public:
    UpLevelImpl(int in_ch, int out_ch, int blocks, int groups) {
        conv = register_module("conv", Conv(in_ch, out_ch, 3));
        for (int i = 0; i < blocks; ++i) res->push_back(ResBlock(out_ch, out_ch, groups));
        register_module("res", res);
    }
    torch::Tensor forward(torch::Tensor x) {
        x = conv(layers::upsample2x(x));
        for (auto& m : *res) x = m->as<layers::ResBlockImpl>()->forward(x);
        return x;
    }
    Conv conv{nullptr};
    torch::nn::ModuleList res;
};
TORCH_MODULE(UpLevel);

// Straight-through: forward is z exactly, backward hands the incoming
// gradient to z_tilde and nothing to z.
class StraightThroughFn : public torch::autograd::Function<StraightThroughFn> {
public:
    static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& z_tilde,
                                 const torch::Tensor& z) {
        (void)ctx;
        (void)z_tilde;
        return z.detach().clone();
    }
    static torch::autograd::variable_list backward(torch::autograd::AutogradContext* ctx,
                                                   torch::autograd::variable_list grads) {
        (void)ctx;
        return {grads[0], torch::Tensor()};
    }
};

}  // namespace

// --- encoder / decoder ---------------------------------------------------------

EncoderImpl::EncoderImpl(const AutoencoderConfig& c) {
    const auto& ch = c.channels;
    conv_in = register_module("conv_in", Conv(3, ch[0], 3));
    for (int i = 0; i < c.levels(); ++i) down->push_back(DownLevel(ch[i], ch[i + 1], c.res_blocks, c.norm_groups));
    register_module("down", down);
    mid = register_module("mid", ResBlock(ch.back(), ch.back(), c.norm_groups));
    norm_out = register_module("norm_out", Norm(c.norm_groups, ch.back()));
    conv_out = register_module("conv_out", Conv(ch.back(), c.code_dim, 3));
}

torch::Tensor EncoderImpl::forward(const torch::Tensor& x) {
    auto h = conv_in(x);
    for (auto& m : *down) h = m->as<DownLevelImpl>()->forward(h);
    h = mid(h);
    return conv_out(torch::silu(norm_out(h)));
}

DecoderImpl::DecoderImpl(const AutoencoderConfig& c) {
    const auto& ch = c.channels;
    conv_in = register_module("conv_in", Conv(c.code_dim, ch.back(), 3));
    mid = register_module("mid", ResBlock(ch.back(), ch.back(), c.norm_groups));
    for (int i = c.levels() - 1; i >= 0; --i) up->push_back(UpLevel(ch[i + 1], ch[i], c.res_blocks, c.norm_groups));
    register_module("up", up);
    norm_out = register_module("norm_out", Norm(c.norm_groups, ch[0]));
    conv_out = register_module("conv_out", Conv(ch[0], 3, 3));
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& z) {
    auto h = mid(conv_in(z));
    for (auto& m : *up) h = m->as<UpLevelImpl>()->forward(h);
    return torch::tanh(conv_out(torch::silu(norm_out(h))));
}

// --- quantizer ---------------------------------------------------------------------

torch::Tensor nearest_indices(const torch::Tensor& latents, const torch::Tensor& codebook) {
    if (codebook.dim() != 2 || codebook.size(0) == 0) throw ConfigError("codebook is empty");
    if (latents.dim() != 2 || latents.size(1) != codebook.size(1)) {
        throw DimensionError("latent dim " + shape_of(latents) + " does not match codebook " + shape_of(codebook));
    }
    torch::NoGradGuard guard;
    const auto cb = codebook.detach().to(torch::kFloat64);
    const auto z = latents.detach().to(torch::kFloat64);
    const int64_t n = z.size(0), k = cb.size(0), d = cb.size(1);
    // bound the [chunk, K, d] difference tensor to ~8M doubles
    const int64_t chunk = std::max<int64_t>(1, (int64_t{8} << 20) / std::max<int64_t>(1, k * d));
    std::vector<torch::Tensor> parts;
    for (int64_t start = 0; start < n; start += chunk) {
        const auto rows = z.slice(0, start, std::min(n, start + chunk));
        const auto dist = (rows.unsqueeze(1) - cb.unsqueeze(0)).pow(2).sum(-1);
        parts.push_back(dist.argmin(1));
    }
    return parts.empty() ? torch::empty({0}, torch::kInt64) : torch::cat(parts);
}

torch::Tensor straight_through(const torch::Tensor& z_tilde, const torch::Tensor& z) {
    if (!z_tilde.sizes().equals(z.sizes())) {
        throw DimensionError("straight_through shapes differ: " + shape_of(z_tilde) + " vs " + shape_of(z));
    }
    return StraightThroughFn::apply(z_tilde, z);
}

QuantizerImpl::QuantizerImpl(int codebook_size, int code_dim) {
    if (codebook_size < 1) throw ConfigError("codebook is empty");
    const double bound = 1.0 / codebook_size;
    codebook = register_parameter("codebook", torch::empty({codebook_size, code_dim}).uniform_(-bound, bound));
}

Quantized QuantizerImpl::forward(const torch::Tensor& z_tilde) {
    if (z_tilde.dim() != 4 || z_tilde.size(1) != codebook.size(1)) {
        throw DimensionError("quantizer expects [B, " + std::to_string(codebook.size(1)) + ", h, w], got " +
                             shape_of(z_tilde));
    }
    const auto b = z_tilde.size(0), d = z_tilde.size(1), h = z_tilde.size(2), w = z_tilde.size(3);
    const auto flat = z_tilde.permute({0, 2, 3, 1}).reshape({b * h * w, d});
    const auto idx = nearest_indices(flat, codebook).reshape({b, h, w});
    return {lookup(idx), idx};
}

torch::Tensor QuantizerImpl::lookup(const torch::Tensor& indices) const {
    if (indices.dim() != 3) throw DimensionError("index grid must be [B, h, w], got " + shape_of(indices));
    if (indices.numel() > 0 && (indices.min().item<int64_t>() < 0 || indices.max().item<int64_t>() >= codebook.size(0))) {
        throw ParameterError("codebook index out of range");
    }
    return codebook.index_select(0, indices.reshape({-1}).to(torch::kInt64))
        .reshape({indices.size(0), indices.size(1), indices.size(2), codebook.size(1)})
        .permute({0, 3, 1, 2});
}

// --- autoencoder ------------------------------------------------------------------------

VQAutoencoderImpl::VQAutoencoderImpl(AutoencoderConfig config) : config_(std::move(config)) {
    config_.validate();
    encoder = register_module("encoder", Encoder(config_));
    quantizer = register_module("quantizer", Quantizer(config_.codebook_size, config_.code_dim));
    decoder = register_module("decoder", Decoder(config_));
    ssl_adapter = register_module("ssl_adapter", torch::nn::Linear(config_.code_dim, config_.teacher_dim));
}

void VQAutoencoderImpl::check_frames(const torch::Tensor& frames) const {
    const int s = config_.input_size;
    if (frames.dim() != 4 || frames.size(1) != 3 || frames.size(2) != s || frames.size(3) != s) {
        throw DimensionError("expected frames [B, 3, " + std::to_string(s) + ", " + std::to_string(s) + "], got " +
                             shape_of(frames));
    }
}

void VQAutoencoderImpl::check_latents(const torch::Tensor& latents) const {
    const int g = config_.grid_size();
    if (latents.dim() != 4 || latents.size(1) != config_.code_dim || latents.size(2) != g || latents.size(3) != g) {
        throw DimensionError("expected latents [B, " + std::to_string(config_.code_dim) + ", " + std::to_string(g) +
                             ", " + std::to_string(g) + "], got " + shape_of(latents));
    }
}

torch::Tensor VQAutoencoderImpl::encode(const torch::Tensor& frames) {
    check_frames(frames);
    return encoder(frames);
}

Quantized VQAutoencoderImpl::quantize(const torch::Tensor& z_tilde) {
    check_latents(z_tilde);
    return quantizer(z_tilde);
}

EncodeResult VQAutoencoderImpl::tokenize(const torch::Tensor& frames) {
    auto z_tilde = encode(frames);
    auto q = quantizer(z_tilde);
    auto z_st = straight_through(z_tilde, q.z);
    return {z_tilde, q.z, z_st, q.indices};
}

torch::Tensor VQAutoencoderImpl::decode(const torch::Tensor& latents) {
    check_latents(latents);
    return decoder(latents);
}

torch::Tensor VQAutoencoderImpl::decode_indices(const torch::Tensor& indices) {
    return decode(quantizer->lookup(indices));
}

torch::Tensor VQAutoencoderImpl::transcode(const torch::Tensor& frames) {
    return decode(quantize(encode(frames)).z);
}

torch::Tensor VQAutoencoderImpl::adapt(const torch::Tensor& tokens) {
    check_latents(tokens);
    return ssl_adapter(tokens.flatten(2).transpose(1, 2));
}

std::vector<IndexGrid> VQAutoencoderImpl::index_frames(std::span<const data::Frame> frames) {
    torch::NoGradGuard guard;
    std::vector<IndexGrid> out;
    constexpr std::size_t kBatch = 32;
    for (std::size_t start = 0; start < frames.size(); start += kBatch) {
        const auto part = frames.subspan(start, std::min(kBatch, frames.size() - start));
        auto grids = to_index_grids(quantize(encode(to_tensor(part))).indices);
        out.insert(out.end(), grids.begin(), grids.end());
    }
    return out;
}

// --- discriminator ----------------------------------------------------------------------

namespace {

class DiscStageImpl : public torch::nn::Module {
public:
    DiscStageImpl(int in_ch, int out_ch, int kernel, int stride, int padding, int groups, bool activation) {
        conv = register_module("conv", Conv(in_ch, out_ch, kernel, stride, padding));
        if (groups > 0) norm = register_module("norm", Norm(groups, out_ch));
        activation_ = activation;
    }
    torch::Tensor forward(torch::Tensor x) {
        x = conv(x);
        if (norm) x = norm(x);
        return activation_ ? torch::leaky_relu(x, 0.2) : x;
    }
    Conv conv{nullptr};
    Norm norm{nullptr};

private:
    bool activation_ = true;
};
TORCH_MODULE(DiscStage);

int log2_exact(int v) {
    int l = 0;
    while ((1 << l) < v) ++l;
    return l;
}

int group_count(int channels) { return std::gcd(channels, 32); }

}  // namespace

int discriminator_grid_side(const DiscriminatorConfig& config, int input_size) {
    if (config.variant == DiscriminatorVariant::kOurs) return config.patch_grid;
    // three k4/s2/p1 stages halve the size, two k4/s1/p1 convs remove one pixel each
    return input_size / 8 - 2;
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const DiscriminatorConfig& config, int input_size)
    : input_size_(input_size), grid_side_(discriminator_grid_side(config, input_size)) {
    if (grid_side_ < 1) throw ConfigError("discriminator input too small");
    auto width = [&](int stage) { return std::min(config.max_channels, config.base_channels << stage); };
    int in_ch = 3;
    if (config.variant == DiscriminatorVariant::kBaseline) {
        for (int s = 0; s < 3; ++s) {
            stages->push_back(DiscStage(in_ch, width(s), 4, 2, 1, s == 0 ? 0 : group_count(width(s)), true));
            in_ch = width(s);
        }
        stages->push_back(DiscStage(in_ch, width(3), 4, 1, 1, group_count(width(3)), true));
        stages->push_back(DiscStage(width(3), 1, 4, 1, 1, 0, false));
    } else {
        if (input_size % config.patch_grid != 0) throw ConfigError("patch_grid must divide the input size");
        const int downs = log2_exact(input_size / config.patch_grid);
        for (int s = 0; s < downs; ++s) {
            stages->push_back(DiscStage(in_ch, width(s), 4, 2, 1, s == 0 ? 0 : group_count(width(s)), true));
            in_ch = width(s);
        }
        stages->push_back(DiscStage(in_ch, width(downs), 3, 1, 1, group_count(width(downs)), true));
        stages->push_back(DiscStage(width(downs), 1, 3, 1, 1, 0, false));
    }
    register_module("stages", stages);
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x) {
    const int spatial = static_cast<int>(x.dim()) - 2;
    if (x.dim() < 4 || x.size(1) != 3 || x.size(spatial) != input_size_ || x.size(spatial + 1) != input_size_) {
        throw DimensionError("discriminator expects " + std::to_string(input_size_) + " px input, got " +
                             shape_of(x));
    }
    auto h = x;
    for (auto& m : *stages) h = m->as<DiscStageImpl>()->forward(h);
    return h;
}

}  // namespace openviga::vq
