// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "openviga/config.hpp"
#include "openviga/tensor_utils.hpp"

namespace openviga::wm {

// --- text prompt -------------------------------------------------------------------

class TextCodec {
public:
    virtual ~TextCodec() = default;
    virtual std::string name() const = 0;
    virtual int vocab_size() const = 0;
    virtual std::vector<std::int32_t> encode(const std::string& text) const = 0;
};

/// One token per UTF-8 byte (vocabulary 256).
class ByteCodec final : public TextCodec {
public:
    std::string name() const override { return "bytes"; }
    int vocab_size() const override { return 256; }
    std::vector<std::int32_t> encode(const std::string& text) const override;
};

std::vector<std::int32_t> frame_text_prompt(const std::string& prompt, const TextCodec& codec);

// --- framing ----------------------------------------------------------------------------

/// Marker closing every frame block in the image token stream.
inline constexpr std::int32_t kEndOfImage = 0;

/// Per frame: (index + 1) for each grid entry, then one end-of-image marker.
std::vector<std::int32_t> frame_indices(std::span<const IndexGrid> grids);

enum class UnframeMode { kStrict, kLenient };

struct UnframeResult {
    std::vector<IndexGrid> grids;
    long repairs = 0;
};

/// Inverse of frame_indices. Strict mode throws StructuralError with the
/// 1-based position of the first violation. Lenient mode forces block
/// boundaries, maps stray markers to index 0, fills a truncated last block
/// with index 0, and counts every changed or filled position.
UnframeResult unframe_indices(std::span<const std::int32_t> sequence, int grid_height, int grid_width,
                              UnframeMode mode);

struct FramedSequence {
    std::vector<std::int32_t> text;
    std::vector<std::int32_t> image;
    int frame_count = 0;
    int tokens_per_frame = 0;
};

FramedSequence frame_sequence(std::vector<std::int32_t> text, std::span<const IndexGrid> grids);

// --- LoRA layers ------------------------------------------------------------------------

/// y = x W^T + (alpha / r) * (x A^T) B^T. B starts at zero.
class LoraLinearImpl : public torch::nn::Module {
public:
    LoraLinearImpl(int in_features, int out_features, const LoraConfig& lora);
    torch::Tensor forward(const torch::Tensor& x);
    bool adapted() const { return lora_a.defined(); }

    torch::Tensor weight;  // [out, in]
    torch::Tensor lora_a;  // [r, in]
    torch::Tensor lora_b;  // [out, r]

private:
    double scale_ = 0.0;
};
TORCH_MODULE(LoraLinear);

/// Embedding rows plus (alpha / r) * A[ids] B, with A [V, r] and B [r, D] = 0.
class LoraEmbeddingImpl : public torch::nn::Module {
public:
    LoraEmbeddingImpl(int vocab, int dim, const LoraConfig& lora);
    torch::Tensor forward(const torch::Tensor& ids);
    bool adapted() const { return lora_a.defined(); }

    torch::Tensor weight;
    torch::Tensor lora_a;
    torch::Tensor lora_b;

private:
    double scale_ = 0.0;
};
TORCH_MODULE(LoraEmbedding);

class RMSNormImpl : public torch::nn::Module {
public:
    RMSNormImpl(int dim, double eps);
    torch::Tensor forward(const torch::Tensor& x);
    torch::Tensor weight;

private:
    double eps_;
};
TORCH_MODULE(RMSNorm);

/// Key/value tensors of all blocks for the positions processed so far.
struct KVCache {
    std::vector<torch::Tensor> keys;
    std::vector<torch::Tensor> values;
    int64_t length = 0;
};

class BlockImpl : public torch::nn::Module {
public:
    BlockImpl(const WorldModelConfig& config);
    /// x: [B, S, D] at absolute positions start .. start+S-1.
    torch::Tensor forward(const torch::Tensor& x, int64_t start, const torch::Tensor& cos, const torch::Tensor& sin,
                          torch::Tensor* cache_k, torch::Tensor* cache_v);

    RMSNorm attn_norm{nullptr}, ffn_norm{nullptr};
    LoraLinear wq{nullptr}, wk{nullptr}, wv{nullptr}, wo{nullptr};
    LoraLinear w_gate{nullptr}, w_up{nullptr}, w_down{nullptr};

private:
    int heads_;
    int head_dim_;
};
TORCH_MODULE(Block);

struct ParameterReport {
    int64_t total = 0;
    int64_t trainable = 0;
    int64_t adapter = 0;
    int64_t norm = 0;
    double trainable_fraction() const { return total ? static_cast<double>(trainable) / total : 0.0; }
};

/// Decoder-only transformer (RMSNorm, rotary attention, SwiGLU) over a
/// joint token space: ids below text_vocab are text, the rest are image
/// tokens shifted by text_vocab. The head predicts image tokens only.
class WorldModelImpl : public torch::nn::Module {
public:
    explicit WorldModelImpl(WorldModelConfig config);

    /// [B, L] joint ids -> [B, L, K+1] logits; position s predicts token s+1.
    torch::Tensor forward(const torch::Tensor& tokens);
    /// Same as forward for the new tokens, reusing and extending `cache`.
    torch::Tensor forward_cached(const torch::Tensor& tokens, KVCache& cache);

    /// BOS + text + shifted image ids, [B, 1 + M + L].
    torch::Tensor join(std::span<const std::int32_t> text, const torch::Tensor& image) const;
    /// Teacher-forced rows for the image part: [B, L, K+1], row j predicts image[j].
    torch::Tensor image_logits(std::span<const std::int32_t> text, const torch::Tensor& image);

    std::vector<torch::Tensor> trainable_parameters() const;
    /// Dotted names of the parameters that must stay fixed during adaptation.
    std::vector<std::string> frozen_parameter_names() const;
    ParameterReport parameter_report() const;

    const WorldModelConfig& config() const { return config_; }

    LoraEmbedding text_embedding{nullptr};
    LoraEmbedding image_embedding{nullptr};
    torch::nn::ModuleList blocks;
    RMSNorm norm_out{nullptr};
    LoraLinear head{nullptr};

private:
    torch::Tensor embed(const torch::Tensor& tokens);
    torch::Tensor run(const torch::Tensor& tokens, int64_t start, KVCache* cache);
    WorldModelConfig config_;
    torch::Tensor rope_cos_, rope_sin_;
};
TORCH_MODULE(WorldModel);

/// Parameter counts from the configuration alone (no allocation).
ParameterReport analytic_parameter_report(const WorldModelConfig& config);

/// Teacher-forced cross entropy, mean over positions of -log(max(p, 1e-12)).
torch::Tensor wm_ce_loss(const torch::Tensor& logits, const torch::Tensor& targets);

/// Fraction of positions whose argmax equals the target.
double top1_accuracy(const torch::Tensor& logits, const torch::Tensor& targets);

// --- sampling -------------------------------------------------------------------------------

/// Restrict to the k most probable entries (ties: lowest index), renormalize
/// and draw by inverse CDF. k = 1 returns the argmax without drawing.
int top_k_sample(std::span<const double> row, int k, std::mt19937_64& rng);

struct GenerationRequest {
    std::vector<std::int32_t> text;
    std::vector<IndexGrid> initial;
    int predicted_frames = 14;
    int top_k = 1000;
    std::uint64_t seed = 0;
    StructureMode structure_mode = StructureMode::kFree;
    bool use_cache = true;
};

struct GenerationResult {
    std::vector<IndexGrid> grids;        // the N predicted frames
    std::vector<std::int32_t> sampled;   // N * n' image tokens as drawn
    long repairs = 0;
    long iterations = 0;
};

GenerationResult generate(WorldModel& model, const GenerationRequest& request);

}  // namespace openviga::wm
