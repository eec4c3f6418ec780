// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "openviga/data_pipeline.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "openviga/errors.hpp"
#include "openviga/log.hpp"

namespace openviga::data {

namespace fs = std::filesystem;

RawFrame RawFrame::make(int height, int width, std::vector<std::uint8_t> pixels, std::string source_id,
                        long timestamp_index) {
    if (height <= 0 || width <= 0) {
        throw DimensionError("raw frame must have positive height and width");
    }
    if (pixels.size() != static_cast<std::size_t>(height) * width * 3) {
        throw DimensionError("raw frame pixel buffer does not match " + std::to_string(height) + "x" +
                             std::to_string(width) + "x3");
    }
    return RawFrame{height, width, std::move(pixels), std::move(source_id), timestamp_index};
}

Frame::Frame(int height, int width, std::vector<float> chw)
    : height_(height), width_(width), values_(std::move(chw)) {
    if (height <= 0 || width <= 0) {
        throw DimensionError("frame must have positive height and width");
    }
    if (values_.size() != static_cast<std::size_t>(height) * width * 3) {
        throw DimensionError("frame buffer does not match 3x" + std::to_string(height) + "x" +
                             std::to_string(width));
    }
    for (float v : values_) {
        if (!std::isfinite(v) || v < -1.0f || v > 1.0f) {
            throw ParameterError("frame value " + std::to_string(v) + " outside [-1, 1]");
        }
    }
}

Split parse_split(const std::string& name) {
    if (name == "train") return Split::kTrain;
    if (name == "val") return Split::kVal;
    if (name == "test") return Split::kTest;
    throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

const char* to_string(Split split) {
    switch (split) {
        case Split::kTrain: return "train";
        case Split::kVal: return "val";
        case Split::kTest: return "test";
    }
    return "?";
}

void VideoClip::validate() const {
    if (frames.empty()) {
        throw DimensionError("video clip '" + clip_id + "' has no frames");
    }
    if (!(fps > 0.0)) {
        throw ParameterError("video clip '" + clip_id + "' has non-positive fps");
    }
    for (const auto& f : frames) {
        if (f.height() != frames.front().height() || f.width() != frames.front().width()) {
            throw DimensionError("video clip '" + clip_id + "' mixes frame shapes");
        }
    }
}

// --- manifest ------------------------------------------------------------------

DatasetManifest DatasetManifest::parse(const std::string& text, fs::path root) {
    DatasetManifest manifest;
    manifest.root = std::move(root);
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> fields;
        std::size_t begin = 0;
        for (;;) {
            auto tab = line.find('\t', begin);
            fields.push_back(line.substr(begin, tab - begin));
            if (tab == std::string::npos) break;
            begin = tab + 1;
        }
        if (fields.size() != 3) {
            throw ConfigError("manifest line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
        }
        ManifestRecord record;
        record.clip_path = fields[0];
        record.split = parse_split(fields[1]);
        try {
            record.source_fps = std::stod(fields[2]);
        } catch (const std::exception&) {
            throw ConfigError("manifest line " + std::to_string(line_no) + ": bad fps '" + fields[2] + "'");
        }
        manifest.records.push_back(std::move(record));
    }
    manifest.validate();
    return manifest;
}

DatasetManifest DatasetManifest::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path.parent_path());
}

std::string DatasetManifest::to_text() const {
    std::ostringstream out;
    for (const auto& r : records) {
        out << r.clip_path << '\t' << to_string(r.split) << '\t' << r.source_fps << '\n';
    }
    return out.str();
}

void DatasetManifest::save(const fs::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write manifest " + path.string());
    }
    out << to_text();
}

void DatasetManifest::validate() const {
    std::set<std::string> seen;
    for (const auto& r : records) {
        if (r.clip_path.empty()) {
            throw ConfigError("manifest record with empty clip path");
        }
        if (!seen.insert(r.clip_path).second) {
            throw ConfigError("duplicate clip path in manifest: " + r.clip_path);
        }
        if (!(r.source_fps > 0.0)) {
            throw ConfigError("non-positive source fps for " + r.clip_path);
        }
    }
}

// --- streamlining ------------------------------------------------------------

std::vector<std::size_t> subsample_indices(std::size_t count, double source_fps, double target_fps) {
    if (!(target_fps > 0.0) || !(source_fps > 0.0)) {
        throw ParameterError("frame rates must be positive");
    }
    if (target_fps > source_fps) {
        throw ParameterError("invalid rate: target fps " + std::to_string(target_fps) + " exceeds source fps " +
                             std::to_string(source_fps));
    }
    // floor that treats values within rounding error of an integer as that integer
    auto robust_floor = [](double x) {
        const double r = std::round(x);
        return static_cast<std::size_t>(std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x)) ? r : std::floor(x));
    };
    const auto out_len = robust_floor(static_cast<double>(count) * target_fps / source_fps);
    std::vector<std::size_t> indices;
    indices.reserve(out_len);
    for (std::size_t j = 0; j < out_len; ++j) {
        auto idx = robust_floor(static_cast<double>(j) * source_fps / target_fps);
        indices.push_back(std::min(idx, count - 1));
    }
    return indices;
}

namespace {

// Bilinear samples for output rows [top, top + rows) and columns
// [left, left + cols) of a virtual out_height x out_width resize.
std::vector<float> resample_region(const RawFrame& raw, int out_height, int out_width, int top, int left, int rows,
                                   int cols) {
    const double sy_scale = static_cast<double>(raw.height) / out_height;
    const double sx_scale = static_cast<double>(raw.width) / out_width;

    struct Tap {
        int i0, i1;
        float w;
    };
    auto taps = [](int o, double scale, int in) {
        double src = (o + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        int i0 = static_cast<int>(src);
        int i1 = std::min(i0 + 1, in - 1);
        return Tap{i0, i1, static_cast<float>(src - i0)};
    };

    std::vector<Tap> xs(cols);
    for (int c = 0; c < cols; ++c) xs[c] = taps(left + c, sx_scale, raw.width);

    std::vector<float> out(static_cast<std::size_t>(rows) * cols * 3);
    for (int r = 0; r < rows; ++r) {
        const Tap ty = taps(top + r, sy_scale, raw.height);
        for (int c = 0; c < cols; ++c) {
            const Tap& tx = xs[c];
            for (int ch = 0; ch < 3; ++ch) {
                const float p00 = raw.at(ty.i0, tx.i0, ch);
                const float p01 = raw.at(ty.i0, tx.i1, ch);
                const float p10 = raw.at(ty.i1, tx.i0, ch);
                const float p11 = raw.at(ty.i1, tx.i1, ch);
                const float top_row = p00 + (p01 - p00) * tx.w;
                const float bottom_row = p10 + (p11 - p10) * tx.w;
                const float v = top_row + (bottom_row - top_row) * ty.w;
                out[(static_cast<std::size_t>(r) * cols + c) * 3 + ch] = std::clamp(v, 0.0f, 255.0f);
            }
        }
    }
    return out;
}

}  // namespace

std::vector<float> resize_bilinear(const RawFrame& raw, int out_height, int out_width) {
    if (out_height <= 0 || out_width <= 0) {
        throw DimensionError("resize target must be positive");
    }
    return resample_region(raw, out_height, out_width, 0, 0, out_height, out_width);
}

Frame preprocess_image(const RawFrame& raw, const PreprocessConfig& config) {
    if (!(config.scale > 0.0) || config.crop <= 0) {
        throw ParameterError("preprocess scale and crop must be positive");
    }
    const int scaled_h = static_cast<int>(std::floor(raw.height * config.scale + 1e-9));
    const int scaled_w = static_cast<int>(std::floor(raw.width * config.scale + 1e-9));
    if (scaled_h < config.crop) {
        throw DimensionError("height: scaled height " + std::to_string(scaled_h) + " smaller than crop " +
                             std::to_string(config.crop));
    }
    if (scaled_w < config.crop) {
        throw DimensionError("width: scaled width " + std::to_string(scaled_w) + " smaller than crop " +
                             std::to_string(config.crop));
    }
    const int top = (scaled_h - config.crop) / 2;
    const int left = (scaled_w - config.crop) / 2;
    const auto hwc = resample_region(raw, scaled_h, scaled_w, top, left, config.crop, config.crop);

    const std::size_t plane = static_cast<std::size_t>(config.crop) * config.crop;
    std::vector<float> chw(plane * 3);
    for (std::size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < 3; ++c) {
            chw[c * plane + p] = hwc[p * 3 + c] / 127.5f - 1.0f;
        }
    }
    return Frame(config.crop, config.crop, std::move(chw));
}

RawFrame denormalize(const Frame& frame) {
    const int h = frame.height();
    const int w = frame.width();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<std::uint8_t> pixels(plane * 3);
    auto values = frame.values();
    for (std::size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < 3; ++c) {
            const float v = std::clamp(values[c * plane + p], -1.0f, 1.0f);
            pixels[p * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 127.5f + 127.5f));
        }
    }
    return RawFrame::make(h, w, std::move(pixels));
}

// --- PNG ------------------------------------------------------------------------

RawFrame read_png(const fs::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw IoError("cannot read png " + path.string() + ": " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError("cannot decode png " + path.string() + ": " + image.message);
    }
    return RawFrame::make(static_cast<int>(image.height), static_cast<int>(image.width), std::move(pixels),
                          path.string());
}

void write_png(const fs::path& path, const RawFrame& frame) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(frame.width);
    image.height = static_cast<png_uint_32>(frame.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, frame.pixels.data(), 0, nullptr)) {
        throw IoError("cannot write png " + path.string() + ": " + image.message);
    }
}

std::vector<fs::path> export_frames(const fs::path& dir, std::span<const Frame> frames) {
    fs::create_directories(dir);
    std::vector<fs::path> written;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%05zu.png", i);
        written.push_back(dir / name);
        write_png(written.back(), denormalize(frames[i]));
    }
    return written;
}

namespace {

std::vector<fs::path> list_frame_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw IoError("clip directory not found: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

std::vector<RawFrame> read_clip_frames(const fs::path& dir) {
    std::vector<RawFrame> frames;
    long index = 0;
    for (const auto& file : list_frame_files(dir)) {
        frames.push_back(read_png(file));
        frames.back().timestamp_index = index++;
    }
    return frames;
}

// --- synthetic moving squares ----------------------------------------------------

std::vector<RawFrame> synthesize_clip(const SynthSpec& spec, int clip_index) {
    if (spec.width <= 0 || spec.height <= 0 || spec.frames <= 0) {
        throw ParameterError("synthetic clip dimensions must be positive");
    }
    std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(clip_index) + 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const int side = std::max(2, spec.height / 4);
    const std::array<std::uint8_t, 3> background{static_cast<std::uint8_t>(20 + 40 * unit(rng)),
                                                 static_cast<std::uint8_t>(20 + 40 * unit(rng)),
                                                 static_cast<std::uint8_t>(40 + 60 * unit(rng))};
    const std::array<std::uint8_t, 3> color{static_cast<std::uint8_t>(150 + 105 * unit(rng)),
                                            static_cast<std::uint8_t>(100 + 155 * unit(rng)),
                                            static_cast<std::uint8_t>(60 + 120 * unit(rng))};
    double x = unit(rng) * (spec.width - side);
    double y = unit(rng) * (spec.height - side);
    const double speed = 0.6 + 0.8 * unit(rng);
    const double angle = unit(rng) * 2.0 * 3.14159265358979323846;
    double vx = speed * std::cos(angle);
    double vy = speed * std::sin(angle);

    std::vector<RawFrame> frames;
    frames.reserve(spec.frames);
    for (int t = 0; t < spec.frames; ++t) {
        std::vector<std::uint8_t> pixels(static_cast<std::size_t>(spec.width) * spec.height * 3);
        const int sx = static_cast<int>(std::lround(x));
        const int sy = static_cast<int>(std::lround(y));
        for (int r = 0; r < spec.height; ++r) {
            // darker road band in the lower half
            const int shade = r > spec.height / 2 ? -15 : 0;
            for (int c = 0; c < spec.width; ++c) {
                const bool inside = r >= sy && r < sy + side && c >= sx && c < sx + side;
                for (int ch = 0; ch < 3; ++ch) {
                    const int base = inside ? color[ch] : std::max(0, background[ch] + shade);
                    pixels[(static_cast<std::size_t>(r) * spec.width + c) * 3 + ch] = static_cast<std::uint8_t>(base);
                }
            }
        }
        frames.push_back(RawFrame::make(spec.height, spec.width, std::move(pixels),
                                        "synth_" + std::to_string(clip_index), t));
        x += vx;
        y += vy;
        if (x < 0 || x > spec.width - side) {
            vx = -vx;
            x = std::clamp(x, 0.0, static_cast<double>(spec.width - side));
        }
        if (y < 0 || y > spec.height - side) {
            vy = -vy;
            y = std::clamp(y, 0.0, static_cast<double>(spec.height - side));
        }
    }
    return frames;
}

DatasetManifest generate_synthetic_corpus(const fs::path& out_dir, const SynthSpec& spec) {
    if (spec.count <= 0) {
        throw ParameterError("synthetic corpus needs at least one clip");
    }
    fs::create_directories(out_dir);
    DatasetManifest manifest;
    manifest.root = out_dir;
    const int val_count = static_cast<int>(std::floor(spec.count * spec.val_fraction));
    for (int i = 0; i < spec.count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "clip_%04d", i);
        const fs::path clip_dir = out_dir / name;
        fs::create_directories(clip_dir);
        const auto frames = synthesize_clip(spec, i);
        for (std::size_t t = 0; t < frames.size(); ++t) {
            char file[32];
            std::snprintf(file, sizeof(file), "frame_%05zu.png", t);
            write_png(clip_dir / file, frames[t]);
        }
        const Split split = i >= spec.count - val_count ? Split::kVal : Split::kTrain;
        manifest.records.push_back({name, split, spec.source_fps});
    }
    manifest.save(out_dir / "manifest.tsv");
    return manifest;
}

// --- sample streams ------------------------------------------------------------------

namespace {

VideoClip prepare_one(const DatasetManifest& manifest, const ManifestRecord& record, const PipelineConfig& config) {
    const auto files = list_frame_files(manifest.root / record.clip_path);
    VideoClip clip;
    clip.fps = config.target_fps;
    clip.split = record.split;
    clip.clip_id = record.clip_path;
    for (std::size_t idx : subsample_indices(files.size(), record.source_fps, config.target_fps)) {
        RawFrame raw = read_png(files[idx]);
        raw.timestamp_index = static_cast<long>(idx);
        clip.frames.push_back(preprocess_image(raw, config.preprocess));
    }
    return clip;
}

}  // namespace

std::vector<VideoClip> prepare_clips(const DatasetManifest& manifest, Split split, const PipelineConfig& config) {
    std::vector<const ManifestRecord*> selected;
    for (const auto& r : manifest.records) {
        if (r.split == split) selected.push_back(&r);
    }
    std::vector<VideoClip> clips(selected.size());
    const int workers = std::max(1, std::min<int>(config.workers, static_cast<int>(selected.size())));
    if (workers <= 1) {
        for (std::size_t i = 0; i < selected.size(); ++i) clips[i] = prepare_one(manifest, *selected[i], config);
    } else {
        // Each worker fills a disjoint set of slots, so the merged order is
        // the manifest order.
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < selected.size(); i += workers) {
                        clips[i] = prepare_one(manifest, *selected[i], config);
                    }
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    std::vector<VideoClip> non_empty;
    for (auto& clip : clips) {
        if (clip.frames.empty()) {
            log::warn("clip ", clip.clip_id, " has no frames after subsampling; skipped");
            continue;
        }
        non_empty.push_back(std::move(clip));
    }
    return non_empty;
}

WindowParams image_window() { return {SampleMode::kImage, 1, 1}; }

WindowParams video3_window(int stride) { return {SampleMode::kVideo3, 3, stride}; }

WindowParams video_window(int initial_frames, int predicted_frames) {
    const int window = initial_frames + predicted_frames;
    return {SampleMode::kVideoWindow, window, window};
}

SampleStream::SampleStream(std::shared_ptr<const std::vector<VideoClip>> clips, WindowParams params,
                           std::uint64_t seed)
    : clips_(std::move(clips)), params_(params), seed_(seed) {
    if (params_.window <= 0 || params_.stride <= 0) {
        throw ParameterError("window and stride must be positive");
    }
    if (params_.mode == SampleMode::kImage && params_.window != 1) {
        throw ParameterError("image samples use a window of 1");
    }
    if (params_.mode == SampleMode::kVideo3 && params_.window != 3) {
        throw ParameterError("video3 samples use a window of 3");
    }
    for (std::size_t c = 0; c < clips_->size(); ++c) {
        const auto& clip = (*clips_)[c];
        const auto len = clip.frames.size();
        if (len < static_cast<std::size_t>(params_.window)) {
            log::warn("clip ", clip.clip_id, " has ", len, " frames, shorter than window ", params_.window,
                      "; skipped");
            skipped_.push_back(clip.clip_id);
            continue;
        }
        for (std::size_t start = 0; start + params_.window <= len; start += params_.stride) {
            refs_.push_back({c, start});
        }
    }
}

std::vector<SampleRef> SampleStream::epoch_order(std::size_t epoch) const {
    std::vector<SampleRef> order = refs_;
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
    std::mt19937_64 rng(seq);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng() % i]);
    }
    return order;
}

SampleRef SampleStream::at(std::size_t index) const {
    if (refs_.empty()) {
        throw ParameterError("sample stream is empty");
    }
    return epoch_order(index / refs_.size())[index % refs_.size()];
}

std::vector<Frame> SampleStream::materialize(const SampleRef& ref) const {
    const auto& frames = (*clips_).at(ref.clip).frames;
    return {frames.begin() + static_cast<long>(ref.start),
            frames.begin() + static_cast<long>(ref.start + params_.window)};
}

SampleStream make_samples(const DatasetManifest& manifest, Split split, const PipelineConfig& config,
                          const WindowParams& params, std::uint64_t seed) {
    manifest.validate();
    auto clips = std::make_shared<const std::vector<VideoClip>>(prepare_clips(manifest, split, config));
    return SampleStream(std::move(clips), params, seed);
}

}  // namespace openviga::data
