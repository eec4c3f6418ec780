// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "openviga/config.hpp"
#include "openviga/data_pipeline.hpp"
#include "openviga/errors.hpp"
#include "openviga/loss_suite.hpp"

namespace openviga::metrics {

// Reference metrics work on the 8-bit values of denormalized frames and
// average over batch items.

/// 10 log10(255^2 / MSE), capped at 99 dB.
double psnr(const data::RawFrame& a, const data::RawFrame& b);
double psnr(const data::Frame& a, const data::Frame& b);

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double peak = 255.0;

    static SsimOptions from_config(const MetricConfig& config);
};

/// Gaussian-windowed SSIM over the valid region, averaged over channels.
double ssim(const data::RawFrame& a, const data::RawFrame& b, const SsimOptions& options = {});
double ssim(const data::Frame& a, const data::Frame& b, const SsimOptions& options = {});

/// Multi-scale SSIM; one scale per weight, 2x2 average pooling between
/// scales. Negative per-scale terms are clamped to 0 before exponentiation.
double ms_ssim(const data::Frame& a, const data::Frame& b, std::span<const double> weights,
               const SsimOptions& options = {});
/// Smallest image side accepted by ms_ssim for the given scale count.
int ms_ssim_min_size(int scales, int window);

/// Sum over layers of weight_l * spatial mean of squared differences of
/// channel-normalized features.
double lpips(const data::Frame& a, const data::Frame& b, const loss::FeatureExtractor& phi,
             std::span<const double> layer_weights);

template <typename Fn>
double batch_mean(std::span<const data::Frame> a, std::span<const data::Frame> b, Fn&& fn);

// --- distributional metrics ---------------------------------------------------------

/// Feature rows, one per item.
using FeatureSet = Eigen::MatrixXd;

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2).
double frechet_distance(const FeatureSet& a, const FeatureSet& b);
inline double fid(const FeatureSet& a, const FeatureSet& b) { return frechet_distance(a, b); }

/// Squared MMD with k(x, y) = exp(-|x - y|^2 / (2 sigma^2)).
double cmmd(const FeatureSet& a, const FeatureSet& b, double bandwidth,
            MmdEstimator estimator = MmdEstimator::kUnbiased);

class ImageEmbedder {
public:
    virtual ~ImageEmbedder() = default;
    virtual std::string name() const = 0;
    virtual int dim() const = 0;
    virtual Eigen::VectorXd embed(const data::Frame& frame) const = 0;
};

class VideoEmbedder {
public:
    virtual ~VideoEmbedder() = default;
    virtual std::string name() const = 0;
    virtual int dim() const = 0;
    virtual Eigen::VectorXd embed(std::span<const data::Frame> clip) const = 0;
};

/// 8x8 average-pooled pixels through a fixed random tanh projection.
class RandomImageEmbedder final : public ImageEmbedder {
public:
    RandomImageEmbedder(int dim, std::uint64_t seed);
    std::string name() const override;
    int dim() const override { return static_cast<int>(projection_.rows()); }
    Eigen::VectorXd embed(const data::Frame& frame) const override;

private:
    std::uint64_t seed_;
    Eigen::MatrixXd projection_;  // [dim, 192]
};

/// Per-frame image embeddings summarized as [mean over frames, mean
/// absolute frame-to-frame change].
class RandomVideoEmbedder final : public VideoEmbedder {
public:
    RandomVideoEmbedder(int frame_dim, std::uint64_t seed);
    std::string name() const override;
    int dim() const override { return 2 * frames_.dim(); }
    Eigen::VectorXd embed(std::span<const data::Frame> clip) const override;

private:
    RandomImageEmbedder frames_;
};

FeatureSet embed_frames(const ImageEmbedder& embedder, std::span<const data::Frame> frames);
/// Clips are truncated to their first `frame_count` frames; shorter clips raise LengthError.
FeatureSet embed_clips(const VideoEmbedder& embedder, const std::vector<std::vector<data::Frame>>& clips,
                       int frame_count);

double fvd(const std::vector<std::vector<data::Frame>>& clips_a, const std::vector<std::vector<data::Frame>>& clips_b,
           const VideoEmbedder& embedder, int frame_count);

// --- reports ----------------------------------------------------------------------------

struct MetricReport {
    std::string metric;
    double value = 0.0;
    std::optional<int> frame_count;
    long samples = 0;
    std::string extractor = "none";
    std::string config_hash;
    std::string variant;
    std::optional<int> top_k;

    /// Metric name with its frame-count subscript, e.g. FVD_14.
    std::string label() const;
    std::string to_line() const;
    static MetricReport parse_line(const std::string& line);
};

/// Writes `# ` header lines, one report per line, then a summary table
/// (metric rows by variant/top-k columns) as comment lines.
void write_report(const std::filesystem::path& path, const std::vector<MetricReport>& reports,
                  const std::vector<std::string>& header);
std::vector<MetricReport> read_report(const std::filesystem::path& path);
std::string summary_table(const std::vector<MetricReport>& reports);

// --- template ---------------------------------------------------------------------------

template <typename Fn>
double batch_mean(std::span<const data::Frame> a, std::span<const data::Frame> b, Fn&& fn) {
    if (a.size() != b.size() || a.empty()) throw DimensionError("batch_mean: mismatched or empty batches");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += fn(a[i], b[i]);
    return sum / static_cast<double>(a.size());
}

}  // namespace openviga::metrics
