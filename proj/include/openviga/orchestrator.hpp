// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "openviga/config.hpp"
#include "openviga/data_pipeline.hpp"
#include "openviga/eval_metrics.hpp"
#include "openviga/loss_suite.hpp"
#include "openviga/video_decoder.hpp"
#include "openviga/vq_autoencoder.hpp"
#include "openviga/world_model.hpp"

namespace openviga::train {

/// Linear warmup to the peak, cosine decay to the final rate, then hold.
double lr_at(long step, const ScheduleConfig& schedule);

/// AdamW with two groups: decayed parameters and the ones whose name matches
/// an entry of `config.no_decay`.
std::unique_ptr<torch::optim::AdamW> make_adamw(const std::vector<std::pair<std::string, torch::Tensor>>& named,
                                                const OptimizerConfig& config, double lr);
void set_lr(torch::optim::Optimizer& optimizer, double lr);

// --- default plugins ---------------------------------------------------------------------

std::unique_ptr<loss::FeatureExtractor> make_perceptual(const RunConfig& cfg);
std::unique_ptr<loss::Teacher> make_teacher(const RunConfig& cfg);
data::PipelineConfig pipeline_config(const RunConfig& cfg, double fps);

// --- training ----------------------------------------------------------------------------

struct StepRecord {
    long step = 0;
    double lr = 0.0;
    std::map<std::string, double> values;  // active loss terms and diagnostics
};

/// Tab-separated step log with a fixed column list; absent values print as "-".
class StepLog {
public:
    StepLog(const std::filesystem::path& path, std::vector<std::string> columns, bool append);
    void write(const StepRecord& record);

    static std::vector<StepRecord> read(const std::filesystem::path& path);

private:
    std::filesystem::path path_;
    std::vector<std::string> columns_;
};

struct TrainOptions {
    std::filesystem::path out_dir;
    /// Resume from this checkpoint directory (same configuration required).
    std::optional<std::filesystem::path> resume;
    /// Stop after this many total steps (a checkpoint is written there).
    std::optional<long> stop_after;
    std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
    long steps = 0;
    std::filesystem::path checkpoint;
    std::vector<StepRecord> log;
    /// Stage-specific quality measured on a fixed batch before and after.
    double initial_metric = 0.0;
    double final_metric = 0.0;
    std::string metric_name;
};

/// Generator step then discriminator step per batch, adversarial terms gated.
/// Checkpoint modules: "tok", "disc"; optimizers "gen", "disc".
TrainResult train_tokenizer(const RunConfig& cfg, const TrainOptions& options);
/// Teacher-forced cross entropy over LoRA and norm parameters only.
/// Requires cfg.paths.tokenizer. Checkpoint module "wm".
TrainResult train_world_model(const RunConfig& cfg, const TrainOptions& options);
/// Inflated decoder against a frozen tokenizer with a 3-D discriminator.
/// Requires cfg.paths.tokenizer. Checkpoint modules "vdec", "disc3d".
TrainResult train_video_decoder(const RunConfig& cfg, const TrainOptions& options);

// --- model loading --------------------------------------------------------------------------

vq::VQAutoencoder load_tokenizer(const RunConfig& cfg, const std::filesystem::path& checkpoint);
wm::WorldModel load_world_model(const RunConfig& cfg, const std::filesystem::path& checkpoint);
/// A missing checkpoint path yields the freshly inflated tokenizer decoder.
vdec::VideoDecoder load_video_decoder(const RunConfig& cfg, const vq::VQAutoencoder& tok,
                                      const std::filesystem::path& checkpoint);

struct Pipeline {
    vq::VQAutoencoder tok{nullptr};
    wm::WorldModel wm{nullptr};
    vdec::VideoDecoder vdec{nullptr};
    std::map<std::string, std::string> checkpoint_hashes;
};

/// Loads the three checkpoints named in cfg.paths.
Pipeline load_pipeline(const RunConfig& cfg);

// --- generation -----------------------------------------------------------------------------

struct VideoRequest {
    std::vector<data::Frame> initial;  // T preprocessed frames
    int predicted_frames = 14;
    int top_k = 1000;
    std::uint64_t seed = 0;
    StructureMode structure_mode = StructureMode::kFree;
    /// Lenient parsing fails once repairs exceed this count (negative: unlimited).
    long repair_budget = -1;
};

struct VideoResult {
    std::vector<data::Frame> frames;  // the N predicted frames
    std::vector<IndexGrid> grids;
    long repairs = 0;
};

VideoResult generate_video(const RunConfig& cfg, Pipeline& pipeline, const VideoRequest& request);

/// generate_video plus PNG export and a run manifest in `out_dir`.
struct ExportedVideo {
    VideoResult result;
    std::vector<std::filesystem::path> files;
    std::filesystem::path manifest;
};
ExportedVideo generate_and_export(const RunConfig& cfg, Pipeline& pipeline, const VideoRequest& request,
                                  const std::filesystem::path& out_dir);

// --- evaluation -------------------------------------------------------------------------------

struct EvalOptions {
    int max_clips = 16;
    std::vector<int> top_ks;  // empty: cfg.sampling.top_k
    bool transcoding = true;
    std::string variant = "openviga";
};

/// Image metrics of transcoded frames against the originals.
std::vector<metrics::MetricReport> evaluate_transcoding(const RunConfig& cfg, vq::VQAutoencoder& tok,
                                                        std::span<const data::Frame> frames,
                                                        const std::string& variant);

/// Generation metrics (PSNR, SSIM, MS-SSIM, LPIPS, FID, CMMD, FVD) over the
/// N predicted frames of validation windows, one block per top-k value.
std::vector<metrics::MetricReport> evaluate(const RunConfig& cfg, Pipeline& pipeline, const EvalOptions& options);

// --- sweeps ---------------------------------------------------------------------------------

enum class SweepAxis { kTopK, kLossToggles, kDiscriminator };

SweepAxis parse_sweep_axis(const std::string& name);

struct SweepOptions {
    SweepAxis axis = SweepAxis::kTopK;
    std::filesystem::path out_dir;
    std::vector<int> top_ks = {1, 5, 10, 50, 200, 1000};
    /// Tokenizer steps per training leg (0: the configured total).
    long leg_steps = 0;
    int max_clips = 8;
};

struct SweepResult {
    std::vector<metrics::MetricReport> reports;
    std::vector<std::string> legs;
    std::map<std::string, std::string> failures;  // leg -> error message
    std::filesystem::path report_path;
};

/// Runs every leg of the axis; a failing leg is recorded and skipped.
SweepResult run_sweep(const RunConfig& cfg, const SweepOptions& options);

}  // namespace openviga::train
