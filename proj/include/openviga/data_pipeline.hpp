// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace openviga::data {

/// 8-bit RGB image as read from disk, row-major interleaved (HWC).
struct RawFrame {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;
    std::string source_id;
    long timestamp_index = 0;

    static RawFrame make(int height, int width, std::vector<std::uint8_t> pixels,
                         std::string source_id = {}, long timestamp_index = 0);

    std::uint8_t at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

/// Normalized image, planar CHW, every value in [-1, 1].
class Frame {
public:
    Frame() = default;
    /// Throws DimensionError on a size mismatch and ParameterError when a
    /// value falls outside [-1, 1] or is not finite.
    Frame(int height, int width, std::vector<float> chw);

    int height() const { return height_; }
    int width() const { return width_; }
    std::span<const float> values() const { return values_; }
    float at(int c, int y, int x) const {
        return values_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
    }
    bool operator==(const Frame&) const = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<float> values_;
};

enum class Split { kTrain, kVal, kTest };

Split parse_split(const std::string& name);
const char* to_string(Split split);

struct VideoClip {
    std::vector<Frame> frames;
    double fps = 4.0;
    Split split = Split::kTrain;
    std::string clip_id;

    /// Checks non-empty, uniform frame shape and fps > 0.
    void validate() const;
};

struct ManifestRecord {
    std::string clip_path;
    Split split = Split::kTrain;
    double source_fps = 30.0;
};

/// Newline-delimited `<relative-path>\t<split>\t<source_fps>` records.
struct DatasetManifest {
    std::filesystem::path root;
    std::vector<ManifestRecord> records;

    static DatasetManifest load(const std::filesystem::path& path);
    static DatasetManifest parse(const std::string& text, std::filesystem::path root);
    void save(const std::filesystem::path& path) const;
    std::string to_text() const;
    void validate() const;
};

// --- frame-rate and resolution streamlining ---------------------------------

/// Source indices kept when resampling `count` frames from `source_fps` to
/// `target_fps`: floor(j * source / target) for j < floor(count * target / source).
std::vector<std::size_t> subsample_indices(std::size_t count, double source_fps, double target_fps);

template <typename T>
std::vector<T> subsample_clip(const std::vector<T>& frames, double source_fps, double target_fps) {
    std::vector<T> out;
    for (std::size_t i : subsample_indices(frames.size(), source_fps, target_fps)) {
        out.push_back(frames[i]);
    }
    return out;
}

/// Bilinear resampling with half-pixel centers (align_corners = false) and no
/// antialiasing prefilter. Source coordinate for output pixel o is
/// (o + 0.5) * in / out - 0.5, clamped to the valid range.
/// Returns HWC floats on the 0..255 scale.
std::vector<float> resize_bilinear(const RawFrame& raw, int out_height, int out_width);

struct PreprocessConfig {
    double scale = 0.5;
    int crop = 256;
};

/// Downscale, center crop and map v to v / 127.5 - 1.
Frame preprocess_image(const RawFrame& raw, const PreprocessConfig& config = {});

/// Inverse normalization: round(clamp(v, -1, 1) * 127.5 + 127.5).
RawFrame denormalize(const Frame& frame);

// --- image files -------------------------------------------------------------

RawFrame read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RawFrame& frame);
/// Writes frame_00000.png, frame_00001.png, ... into `dir`.
std::vector<std::filesystem::path> export_frames(const std::filesystem::path& dir,
                                                 std::span<const Frame> frames);
/// Frames of a clip directory in filename order.
std::vector<RawFrame> read_clip_frames(const std::filesystem::path& dir);

// --- synthetic corpus -------------------------------------------------------

struct SynthSpec {
    int count = 8;
    int width = 160;
    int height = 128;
    int frames = 128;
    std::uint64_t seed = 0;
    double source_fps = 30.0;
    double val_fraction = 0.25;
};

/// Writes `count` moving-square clips plus `manifest.tsv` into `out_dir`.
DatasetManifest generate_synthetic_corpus(const std::filesystem::path& out_dir, const SynthSpec& spec);

/// One synthetic clip in memory (same content as the files written above).
std::vector<RawFrame> synthesize_clip(const SynthSpec& spec, int clip_index);

// --- sample streams ----------------------------------------------------------

struct PipelineConfig {
    double target_fps = 4.0;
    PreprocessConfig preprocess;
    int workers = 1;
};

/// Loads, subsamples and preprocesses every clip of `split`. Clips are
/// processed by `config.workers` threads; the result order is manifest order
/// regardless of the worker count.
std::vector<VideoClip> prepare_clips(const DatasetManifest& manifest, Split split,
                                     const PipelineConfig& config);

enum class SampleMode { kImage, kVideo3, kVideoWindow };

struct WindowParams {
    SampleMode mode = SampleMode::kImage;
    int window = 1;   // frames per sample: 1, 3 or T+N
    int stride = 1;   // start-frame step inside a clip
};

WindowParams image_window();
WindowParams video3_window(int stride = 1);
/// Non-overlapping (T+N)-frame windows.
WindowParams video_window(int initial_frames, int predicted_frames);

struct SampleRef {
    std::size_t clip = 0;
    std::size_t start = 0;
    bool operator==(const SampleRef&) const = default;
};

/// Deterministic, seeded enumeration of training windows.
class SampleStream {
public:
    SampleStream(std::shared_ptr<const std::vector<VideoClip>> clips, WindowParams params,
                 std::uint64_t seed);

    std::size_t size() const { return refs_.size(); }
    const WindowParams& params() const { return params_; }
    const std::vector<VideoClip>& clips() const { return *clips_; }
    /// Clips that were too short for the window.
    const std::vector<std::string>& skipped() const { return skipped_; }

    /// Window refs in manifest order.
    const std::vector<SampleRef>& ordered() const { return refs_; }
    /// Seeded permutation of the windows for `epoch`.
    std::vector<SampleRef> epoch_order(std::size_t epoch) const;
    /// The `index`-th sample of the infinite shuffled stream.
    SampleRef at(std::size_t index) const;
    std::vector<Frame> materialize(const SampleRef& ref) const;

private:
    std::shared_ptr<const std::vector<VideoClip>> clips_;
    WindowParams params_;
    std::uint64_t seed_;
    std::vector<SampleRef> refs_;
    std::vector<std::string> skipped_;
};

SampleStream make_samples(const DatasetManifest& manifest, Split split, const PipelineConfig& config,
                          const WindowParams& params, std::uint64_t seed);

}  // namespace openviga::data
