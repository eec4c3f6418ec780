// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <span>
#include <vector>

#include "openviga/data_pipeline.hpp"

namespace openviga {

/// Codebook indices of one frame, row-major over the latent grid.
struct IndexGrid {
    int height = 0;
    int width = 0;
    std::vector<std::int32_t> indices;

    std::size_t size() const { return indices.size(); }
    bool operator==(const IndexGrid&) const = default;
};

/// [3, H, W] float tensor of a frame.
torch::Tensor to_tensor(const data::Frame& frame);
/// [B, 3, H, W] batch.
torch::Tensor to_tensor(std::span<const data::Frame> frames);
/// Inverse of to_tensor for a [3, H, W] tensor; values are clamped to [-1, 1].
data::Frame to_frame(const torch::Tensor& chw);
std::vector<data::Frame> to_frames(const torch::Tensor& bchw);

/// [B, h, w] int64 tensor to grids and back.
std::vector<IndexGrid> to_index_grids(const torch::Tensor& indices);
torch::Tensor to_index_tensor(std::span<const IndexGrid> grids);

/// Deterministic CPU generator seeded from a 64-bit value.
torch::Generator make_generator(std::uint64_t seed);

/// Scalar value of a one-element tensor as double.
inline double item(const torch::Tensor& t) { return t.item<double>(); }

}  // namespace openviga
