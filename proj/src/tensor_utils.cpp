// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "openviga/tensor_utils.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include "openviga/errors.hpp"

namespace openviga {

torch::Tensor to_tensor(const data::Frame& frame) {
    auto values = frame.values();
    return torch::from_blob(const_cast<float*>(values.data()), {3, frame.height(), frame.width()}, torch::kFloat32)
        .clone();
}

torch::Tensor to_tensor(std::span<const data::Frame> frames) {
    if (frames.empty()) throw DimensionError("cannot batch zero frames");
    std::vector<torch::Tensor> items;
    items.reserve(frames.size());
    for (const auto& f : frames) {
        if (f.height() != frames[0].height() || f.width() != frames[0].width()) {
            throw DimensionError("frames in a batch must share one shape");
        }
        items.push_back(to_tensor(f));
    }
    return torch::stack(items);
}

data::Frame to_frame(const torch::Tensor& chw) {
    if (chw.dim() != 3 || chw.size(0) != 3) throw DimensionError("expected a [3, H, W] tensor");
    auto t = chw.detach().to(torch::kFloat32).clamp(-1.0, 1.0).contiguous();
    std::vector<float> values(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
    return data::Frame(static_cast<int>(t.size(1)), static_cast<int>(t.size(2)), std::move(values));
}

std::vector<data::Frame> to_frames(const torch::Tensor& bchw) {
    if (bchw.dim() != 4) throw DimensionError("expected a [B, 3, H, W] tensor");
    std::vector<data::Frame> out;
    out.reserve(bchw.size(0));
    for (int64_t b = 0; b < bchw.size(0); ++b) out.push_back(to_frame(bchw[b]));
    return out;
}

std::vector<IndexGrid> to_index_grids(const torch::Tensor& indices) {
    if (indices.dim() != 3) throw DimensionError("expected a [B, h, w] index tensor");
    auto t = indices.detach().to(torch::kInt32).contiguous();
    const int h = static_cast<int>(t.size(1));
    const int w = static_cast<int>(t.size(2));
    std::vector<IndexGrid> out;
    for (int64_t b = 0; b < t.size(0); ++b) {
        const auto* p = t[b].data_ptr<std::int32_t>();
        out.push_back({h, w, std::vector<std::int32_t>(p, p + h * w)});
    }
    return out;
}

torch::Tensor to_index_tensor(std::span<const IndexGrid> grids) {
    if (grids.empty()) throw DimensionError("cannot batch zero index grids");
    const int h = grids[0].height;
    const int w = grids[0].width;
    auto out = torch::empty({static_cast<int64_t>(grids.size()), h, w}, torch::kInt64);
    auto acc = out.accessor<int64_t, 3>();
    for (std::size_t b = 0; b < grids.size(); ++b) {
        const auto& g = grids[b];
        if (g.height != h || g.width != w || g.indices.size() != static_cast<std::size_t>(h * w)) {
            throw DimensionError("index grids in a batch must share one shape");
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) acc[b][y][x] = g.indices[y * w + x];
        }
    }
    return out;
}

torch::Generator make_generator(std::uint64_t seed) {
    return at::make_generator<at::CPUGeneratorImpl>(seed);
}

}  // namespace openviga
