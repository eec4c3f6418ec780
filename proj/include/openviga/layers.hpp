// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <functional>
#include <string>

namespace openviga::layers {

// Convolution and normalization blocks shared by the image decoder, its
// temporally inflated video version and the discriminators. Every block
// accepts [B, C, H, W] images and, once inflated, [B, C, T, H, W] clips.

/// [B, C, T, H, W] -> [B*T, C, H, W]
torch::Tensor fold_time(const torch::Tensor& x);
/// [B*T, C, H, W] -> [B, C, T, H, W]
torch::Tensor unfold_time(const torch::Tensor& x, int64_t batch, int64_t time);

/// Square-kernel convolution whose weight is 4-D until inflate() turns it
/// into a 5-D kernel. The parameter names stay `weight` and `bias`.
class ConvImpl : public torch::nn::Module {
public:
    ConvImpl(int in_channels, int out_channels, int kernel, int stride = 1, int padding = -1, bool bias = true);

    torch::Tensor forward(const torch::Tensor& x);

    /// Central inflation: 2-D weights go to the temporal center, zeros elsewhere.
    void inflate(int temporal_extent);
    int temporal_extent() const { return temporal_extent_; }
    bool inflated() const { return temporal_extent_ > 0; }

    torch::Tensor weight;
    torch::Tensor bias;

private:
    int stride_;
    int padding_;
    int temporal_extent_ = 0;
};
TORCH_MODULE(Conv);

/// GroupNorm applied frame by frame on clips (affine shared over time).
class NormImpl : public torch::nn::Module {
public:
    NormImpl(int groups, int channels);
    torch::Tensor forward(const torch::Tensor& x);
    torch::nn::GroupNorm norm{nullptr};
};
TORCH_MODULE(Norm);

class ResBlockImpl : public torch::nn::Module {
public:
    ResBlockImpl(int in_channels, int out_channels, int groups);
    torch::Tensor forward(const torch::Tensor& x);

    Norm norm1{nullptr}, norm2{nullptr};
    Conv conv1{nullptr}, conv2{nullptr};
    Conv skip{nullptr};
};
TORCH_MODULE(ResBlock);

/// Nearest-neighbour x2 spatial upsampling; time is left alone.
torch::Tensor upsample2x(const torch::Tensor& x);

/// Calls fn on every Conv in `module`, with its dotted path.
void for_each_conv(torch::nn::Module& module, const std::function<void(const std::string&, ConvImpl&)>& fn);

/// Inflates every Conv; `extent_for(path)` gives the temporal extent per layer.
void inflate_all(torch::nn::Module& module, const std::function<int(const std::string&)>& extent_for);

/// Copies parameters and buffers by name. Shapes must match exactly.
void copy_state(torch::nn::Module& dst, const torch::nn::Module& src);

int64_t parameter_count(const torch::nn::Module& module);

}  // namespace openviga::layers
