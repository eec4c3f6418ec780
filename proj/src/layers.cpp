// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "openviga/layers.hpp"

#include "openviga/errors.hpp"

namespace F = torch::nn::functional;

namespace openviga::layers {

torch::Tensor fold_time(const torch::Tensor& x) {
    const auto b = x.size(0), c = x.size(1), t = x.size(2), h = x.size(3), w = x.size(4);
    return x.permute({0, 2, 1, 3, 4}).reshape({b * t, c, h, w});
}

torch::Tensor unfold_time(const torch::Tensor& x, int64_t batch, int64_t time) {
    return x.reshape({batch, time, x.size(1), x.size(2), x.size(3)}).permute({0, 2, 1, 3, 4});
}

ConvImpl::ConvImpl(int in_channels, int out_channels, int kernel, int stride, int padding, bool with_bias)
    : stride_(stride), padding_(padding < 0 ? kernel / 2 : padding) {
    auto w = torch::empty({out_channels, in_channels, kernel, kernel});
    torch::nn::init::kaiming_uniform_(w, std::sqrt(5.0));
    weight = register_parameter("weight", w);
    if (with_bias) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel * kernel));
        bias = register_parameter("bias", torch::empty({out_channels}).uniform_(-bound, bound));
    }
}

torch::Tensor ConvImpl::forward(const torch::Tensor& x) {
    if (!inflated()) {
        if (x.dim() != 4) throw DimensionError("2-D convolution expects [B, C, H, W]");
        return F::conv2d(x, weight, F::Conv2dFuncOptions().bias(bias).stride(stride_).padding(padding_));
    }
    if (x.dim() != 5) throw DimensionError("inflated convolution expects [B, C, T, H, W]");
    const int64_t tp = temporal_extent_ / 2;
    return F::conv3d(x, weight,
                     F::Conv3dFuncOptions()
                         .bias(bias)
                         .stride({1, stride_, stride_})
                         .padding(std::vector<int64_t>{tp, padding_, padding_}));
}

void ConvImpl::inflate(int temporal_extent) {
    if (inflated()) throw ConfigError("convolution is already inflated");
    if (temporal_extent < 1 || temporal_extent % 2 == 0) {
        throw ConfigError("temporal extent must be odd, got " + std::to_string(temporal_extent));
    }
    torch::NoGradGuard guard;
    auto w3 = torch::zeros({weight.size(0), weight.size(1), temporal_extent, weight.size(2), weight.size(3)},
                           weight.options());
    w3.select(2, temporal_extent / 2).copy_(weight);
    weight.set_data(w3);
    temporal_extent_ = temporal_extent;
}

NormImpl::NormImpl(int groups, int channels) {
    norm = register_module("norm", torch::nn::GroupNorm(torch::nn::GroupNormOptions(groups, channels).eps(1e-6)));
}

torch::Tensor NormImpl::forward(const torch::Tensor& x) {
    if (x.dim() == 5) {
        return unfold_time(norm->forward(fold_time(x)), x.size(0), x.size(2));
    }
    return norm->forward(x);
}

ResBlockImpl::ResBlockImpl(int in_channels, int out_channels, int groups) {
    norm1 = register_module("norm1", Norm(groups, in_channels));
    conv1 = register_module("conv1", Conv(in_channels, out_channels, 3));
    norm2 = register_module("norm2", Norm(groups, out_channels));
    conv2 = register_module("conv2", Conv(out_channels, out_channels, 3));
    if (in_channels != out_channels) {
        skip = register_module("skip", Conv(in_channels, out_channels, 1));
    }
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
    auto h = conv1(torch::silu(norm1(x)));
    h = conv2(torch::silu(norm2(h)));
    return (skip ? skip(x) : x) + h;
}

torch::Tensor upsample2x(const torch::Tensor& x) {
    if (x.dim() == 5) {
        return unfold_time(upsample2x(fold_time(x)), x.size(0), x.size(2));
    }
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kNearest));
}

namespace {

void visit(torch::nn::Module& module, const std::string& prefix,
           const std::function<void(const std::string&, ConvImpl&)>& fn) {
    if (auto* conv = dynamic_cast<ConvImpl*>(&module)) {
        fn(prefix, *conv);
    }
    for (auto& item : module.named_children()) {
        visit(*item.value(), prefix.empty() ? item.key() : prefix + "." + item.key(), fn);
    }
}

}  // namespace

void for_each_conv(torch::nn::Module& module, const std::function<void(const std::string&, ConvImpl&)>& fn) {
    visit(module, "", fn);
}

void inflate_all(torch::nn::Module& module, const std::function<int(const std::string&)>& extent_for) {
    for_each_conv(module, [&](const std::string& path, ConvImpl& conv) { conv.inflate(extent_for(path)); });
}

void copy_state(torch::nn::Module& dst, const torch::nn::Module& src) {
    torch::NoGradGuard guard;
    auto src_params = src.named_parameters(true);
    for (auto& item : dst.named_parameters(true)) {
        const auto* s = src_params.find(item.key());
        if (!s) throw ConfigError("missing parameter " + item.key());
        if (!s->sizes().equals(item.value().sizes())) throw DimensionError("shape mismatch for " + item.key());
        item.value().copy_(*s);
    }
    auto src_buffers = src.named_buffers(true);
    for (auto& item : dst.named_buffers(true)) {
        const auto* s = src_buffers.find(item.key());
        if (!s) throw ConfigError("missing buffer " + item.key());
        item.value().copy_(*s);
    }
}

int64_t parameter_count(const torch::nn::Module& module) {
    int64_t total = 0;
    for (const auto& p : module.parameters(true)) total += p.numel();
    return total;
}

}  // namespace openviga::layers
