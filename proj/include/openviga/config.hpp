// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace openviga {

enum class DiscriminatorVariant {
    kBaseline,  // original patch layout: 3 stride-2 stages + 2 stride-1 k4 convs
    kOurs,      // stride-2 stages down to a fixed patch grid (8x8 = 64 patches)
};

struct DiscriminatorConfig {
    DiscriminatorVariant variant = DiscriminatorVariant::kOurs;
    int base_channels = 64;
    int max_channels = 512;
    int patch_grid = 8;
};

struct AutoencoderConfig {
    int input_size = 256;
    int compression_factor = 16;
    int codebook_size = 8192;  // K
    int code_dim = 64;         // d
    /// Channel width per resolution level, from input resolution down to the
    /// latent grid; size must be log2(compression_factor) + 1.
    std::vector<int> channels = {128, 128, 256, 256, 512};
    int res_blocks = 2;
    int norm_groups = 32;
    int teacher_dim = 384;
    DiscriminatorConfig discriminator;

    int levels() const;
    int grid_size() const { return input_size / compression_factor; }
    int tokens_per_frame() const { return grid_size() * grid_size(); }
    void validate() const;
};

enum class LossTerm { kL1, kL2, kPerceptual, kCodebook, kSsl, kGenerator };

const char* to_string(LossTerm term);

struct LossWeights {
    double lambda_l1 = 0.2;
    double lambda_l2 = 2.0;
    double lambda_perceptual = 1.0;
    double lambda_codebook = 1.0;
    double lambda_ssl = 0.1;
    double lambda_generator = 1.0;
    double beta = 0.25;
    long adversarial_start_step = 20000;

    double weight(LossTerm term) const;
    /// Weight actually applied at `step`: the generator weight is zero before
    /// the adversarial start step.
    double effective_weight(LossTerm term, long step) const;
    bool adversarial_active(long step) const { return step >= adversarial_start_step; }
    /// Ablation helper: the same weights with one term switched off.
    LossWeights without(LossTerm term) const;
    void validate() const;
};

struct LoraConfig {
    bool enabled = true;
    int rank = 64;
    double alpha = 16.0;
    bool linear = true;
    bool embedding = true;
};

struct WorldModelConfig {
    int image_vocab = 8193;   // K + 1, index 0 is the end-of-image marker
    int text_vocab = 32001;   // text ids plus a begin-of-sequence id
    int tokens_per_frame = 256;
    int depth = 32;
    int heads = 32;
    int model_dim = 4096;
    int ffn_dim = 11008;
    int context_length = 8192;
    double rope_theta = 10000.0;
    double norm_eps = 1e-5;
    /// Store frozen weights as bfloat16; trainable ones stay float32.
    bool frozen_bfloat16 = false;
    LoraConfig lora;

    int bos_id() const { return text_vocab - 1; }
    int frame_stride() const { return tokens_per_frame + 1; }
    void validate() const;
};

struct InflationConfig {
    int temporal_extent = 3;
    /// Per-layer overrides keyed by parameter-path prefix.
    std::map<std::string, int> overrides;
};

struct ScheduleConfig {
    long warmup_steps = 2000;
    double peak_lr = 5e-5;
    long decay_steps = 150000;
    double final_lr = 5e-7;
    long total_steps = 200000;

    void validate() const;
};

struct OptimizerConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.01;
    /// Parameters whose path contains any of these substrings get no decay.
    std::vector<std::string> no_decay = {"norm", "embed", "bias", "codebook"};
    double grad_clip = 1.0;
};

struct TrainingConfig {
    int batch_size = 8;
    ScheduleConfig schedule;
    OptimizerConfig optimizer;
    LossWeights loss;
    long checkpoint_interval = 1000;
    long log_interval = 1;
    long validation_interval = 0;
    double discriminator_lr_scale = 1.0;
};

struct DataConfig {
    std::string manifest;
    double target_fps = 4.0;
    double image_fps = 4.0;
    double scale = 0.5;
    int crop = 256;
    int workers = 1;
    int initial_frames = 2;     // T
    int predicted_frames = 14;  // N
    std::string prompt = "You are a helpful assistant. USER: Generate a video of driving vehicles. ASSISTANT: <VISION>";
};

enum class StructureMode { kFree, kForced };

struct SamplingConfig {
    int top_k = 1000;
    StructureMode structure_mode = StructureMode::kFree;
    bool kv_cache = true;
};

enum class MmdEstimator { kUnbiased, kBiased };

struct MetricConfig {
    double cmmd_bandwidth = 10.0;
    MmdEstimator cmmd_estimator = MmdEstimator::kUnbiased;
    int ssim_window = 11;
    double ssim_sigma = 1.5;
    double ssim_k1 = 0.01;
    double ssim_k2 = 0.03;
    std::vector<double> ms_ssim_weights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    int frame_count = 14;
    int feature_seed = 1234;
};

struct PathConfig {
    std::string tokenizer;
    std::string world_model;
    std::string video_decoder;
    std::string out = "runs";
};

enum class Stage { kTokenizer, kWorldModel, kVideoDecoder };

Stage parse_stage(const std::string& name);
const char* to_string(Stage stage);

struct RunConfig {
    std::string preset = "paper-scale";
    Stage stage = Stage::kTokenizer;
    std::uint64_t seed = 0;
    DataConfig data;
    AutoencoderConfig autoencoder;
    WorldModelConfig world_model;
    InflationConfig inflation;
    TrainingConfig tok;
    TrainingConfig wm;
    TrainingConfig vdec;
    SamplingConfig sampling;
    MetricConfig metrics;
    PathConfig paths;

    static RunConfig preset_config(const std::string& name);
    /// Loads a YAML file on top of the preset named by its `preset` key
    /// (or `fallback_preset`). Unknown keys are configuration errors.
    static RunConfig load(const std::filesystem::path& path, const std::string& fallback_preset = "desk-scale");
    static RunConfig parse(const std::string& yaml_text, const std::string& fallback_preset = "desk-scale");

    const TrainingConfig& training(Stage s) const;
    TrainingConfig& training(Stage s);

    std::string to_yaml() const;
    /// SHA-256 of the canonical YAML rendering.
    std::string hash() const;
    void validate() const;
};

RunConfig desk_scale_config();
RunConfig paper_scale_config();

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace openviga
