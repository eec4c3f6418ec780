// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>

#include "openviga/config.hpp"

namespace test_support {

/// Removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("openviga_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::filesystem::path golden_path(const std::string& name) {
    return std::filesystem::path(OPENVIGA_GOLDEN_DIR) / name;
}

/// Central finite difference of a scalar function over every entry of `x`
/// (double precision), compared against `analytic` with a relative tolerance.
inline double max_relative_fd_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, torch::Tensor x,
                                    const torch::Tensor& analytic, double h = 1e-6) {
    x = x.detach().clone().to(torch::kFloat64);
    auto flat = x.view({-1});
    auto grad = analytic.detach().to(torch::kFloat64).reshape({-1});
    double worst = 0.0;
    for (int64_t i = 0; i < flat.numel(); ++i) {
        const double orig = flat[i].item<double>();
        flat[i] = orig + h;
        const double up = f(x).item<double>();
        flat[i] = orig - h;
        const double down = f(x).item<double>();
        flat[i] = orig;
        const double fd = (up - down) / (2 * h);
        const double g = grad[i].item<double>();
        const double denom = std::max({std::abs(fd), std::abs(g), 1e-3});
        worst = std::max(worst, std::abs(fd - g) / denom);
    }
    return worst;
}

/// Smallest configs that still exercise every code path.
inline openviga::AutoencoderConfig tiny_autoencoder() {
    openviga::AutoencoderConfig a;
    a.input_size = 16;
    a.compression_factor = 4;
    a.codebook_size = 8;
    a.code_dim = 4;
    a.channels = {8, 8, 8};
    a.res_blocks = 1;
    a.norm_groups = 4;
    a.teacher_dim = 6;
    a.discriminator.base_channels = 8;
    a.discriminator.max_channels = 16;
    a.discriminator.patch_grid = 2;
    return a;
}

inline openviga::WorldModelConfig tiny_world_model() {
    openviga::WorldModelConfig w;
    w.image_vocab = 17;
    w.text_vocab = 11;
    w.tokens_per_frame = 4;
    w.depth = 2;
    w.heads = 2;
    w.model_dim = 16;
    w.ffn_dim = 24;
    w.context_length = 96;
    w.lora.rank = 4;
    w.lora.alpha = 8.0;
    return w;
}

}  // namespace test_support
