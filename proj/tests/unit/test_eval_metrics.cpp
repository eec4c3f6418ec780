// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "openviga/eval_metrics.hpp"
#include "test_support.hpp"

using namespace openviga;
using namespace openviga::metrics;

namespace {

data::RawFrame constant_raw(int h, int w, std::uint8_t v) {
    return data::RawFrame::make(h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w * 3, v));
}

data::RawFrame noise_raw(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::uint8_t> px(static_cast<std::size_t>(h) * w * 3);
    for (auto& p : px) p = static_cast<std::uint8_t>(rng() % 256);
    return data::RawFrame::make(h, w, std::move(px));
}

data::Frame noise_frame(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> v(static_cast<std::size_t>(h) * w * 3);
    for (auto& x : v) x = u(rng);
    return data::Frame(h, w, std::move(v));
}

data::Frame constant_frame(int h, int w, float value) {
    return data::Frame(h, w, std::vector<float>(static_cast<std::size_t>(h) * w * 3, value));
}

/// Direct double loop over every window placement, no separable filtering.
double reference_ssim(const data::RawFrame& a, const data::RawFrame& b, int win = 11, double sigma = 1.5) {
    std::vector<double> g(static_cast<std::size_t>(win) * win);
    double gs = 0.0;
    const double c = (win - 1) / 2.0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j)
            gs += g[i * win + j] = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2 * sigma * sigma));
    for (auto& v : g) v /= gs;
    const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
    double total = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
        double sum = 0.0;
        int count = 0;
        for (int y = 0; y + win <= a.height; ++y) {
            for (int x = 0; x + win <= a.width; ++x) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        const double wgt = g[i * win + j];
                        const double va = a.at(y + i, x + j, ch), vb = b.at(y + i, x + j, ch);
                        ma += wgt * va;
                        mb += wgt * vb;
                        saa += wgt * va * va;
                        sbb += wgt * vb * vb;
                        sab += wgt * va * vb;
                    }
                const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
                sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
                ++count;
            }
        }
        total += sum / count;
    }
    return total / 3.0;
}

Eigen::MatrixXd gaussian_rows(int n, int d, double mean, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(mean, 1.0);
    Eigen::MatrixXd m(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = normal(rng);
    return m;
}

/// One-dimensional clip summary: mean pixel value over the clip.
class MeanPixelVideo final : public VideoEmbedder {
public:
    std::string name() const override { return "mean-pixel"; }
    int dim() const override { return 1; }
    Eigen::VectorXd embed(std::span<const data::Frame> clip) const override {
        double s = 0.0;
        long n = 0;
        for (const auto& f : clip)
            for (float v : f.values()) {
                s += v;
                ++n;
            }
        return Eigen::VectorXd::Constant(1, s / n);
    }
};

}  // namespace

TEST(Psnr, ClosedForms) {
    EXPECT_DOUBLE_EQ(psnr(constant_raw(8, 8, 100), constant_raw(8, 8, 100)), 99.0);
    EXPECT_NEAR(psnr(constant_raw(8, 8, 100), constant_raw(8, 8, 101)), 20.0 * std::log10(255.0), 1e-9);
    EXPECT_NEAR(psnr(constant_raw(8, 8, 100), constant_raw(8, 8, 102)), 42.1102, 1e-4);
    EXPECT_NEAR(20.0 * std::log10(255.0), 48.1308, 1e-4);
    EXPECT_THROW(psnr(constant_raw(8, 8, 1), constant_raw(8, 9, 1)), DimensionError);
}

TEST(Psnr, BatchMeanIsOrderFree) {
    std::vector<data::Frame> a, b;
    for (int i = 0; i < 5; ++i) {
        a.push_back(noise_frame(8, 8, i));
        b.push_back(noise_frame(8, 8, 100 + i));
    }
    auto p = [](const data::Frame& x, const data::Frame& y) { return psnr(x, y); };
    const double forward = batch_mean(std::span<const data::Frame>(a), std::span<const data::Frame>(b), p);
    std::reverse(a.begin(), a.end());
    std::reverse(b.begin(), b.end());
    EXPECT_NEAR(batch_mean(std::span<const data::Frame>(a), std::span<const data::Frame>(b), p), forward, 1e-12);
}

TEST(Ssim, MatchesDirectReference) {
    const auto a = noise_raw(20, 24, 1);
    const auto b = noise_raw(20, 24, 2);
    EXPECT_NEAR(ssim(a, b), reference_ssim(a, b), 1e-6);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);

    // mirrored around mid-grey: strongly anti-correlated
    auto inv = a;
    for (auto& p : inv.pixels) p = static_cast<std::uint8_t>(255 - p);
    const double s = ssim(a, inv);
    EXPECT_LT(s, 0.0);
    EXPECT_NEAR(s, reference_ssim(a, inv), 1e-6);
    EXPECT_THROW(ssim(noise_raw(8, 8, 3), noise_raw(8, 8, 4)), DimensionError);
}

TEST(MsSsim, IdentityAndSizeChecks) {
    const auto a = noise_frame(48, 48, 5);
    const std::vector<double> three = {0.0448, 0.2856, 0.3001};
    EXPECT_NEAR(ms_ssim(a, a, three), 1.0, 1e-12);
    const double v = ms_ssim(a, noise_frame(48, 48, 6), three);
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
    EXPECT_EQ(ms_ssim_min_size(5, 11), 176);
    const std::vector<double> five = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    EXPECT_THROW(ms_ssim(a, a, five), DimensionError);
    // single scale reduces to SSIM
    const std::vector<double> one = {1.0};
    const auto b = noise_frame(48, 48, 7);
    EXPECT_NEAR(ms_ssim(a, b, one), std::max(0.0, ssim(a, b)), 1e-12);
}

TEST(Lpips, IdentitySymmetryAndClosedForm) {
    loss::IdentityFeatures phi;
    const std::vector<double> w = {0.5};
    const auto a = noise_frame(8, 8, 8), b = noise_frame(8, 8, 9);
    EXPECT_NEAR(lpips(a, a, phi, w), 0.0, 1e-12);
    EXPECT_NEAR(lpips(a, b, phi, w), lpips(b, a, phi, w), 1e-12);
    // unit channel vectors (1,1,1)/sqrt3 and its negation: squared distance 4
    EXPECT_NEAR(lpips(constant_frame(4, 4, 0.5f), constant_frame(4, 4, -0.5f), phi, w), 0.5 * 4.0, 1e-6);
    const std::vector<double> wrong = {0.5, 0.5};
    EXPECT_THROW(lpips(a, b, phi, wrong), ConfigError);
}

TEST(Fid, ClosedFormsAndSymmetry) {
    const auto a = gaussian_rows(20000, 1, 0.0, 1);
    const auto b = gaussian_rows(20000, 1, 1.0, 2);
    EXPECT_NEAR(fid(a, b), 1.0, 0.05);
    EXPECT_NEAR(fid(a, a), 0.0, 1e-6);
    const auto x = gaussian_rows(200, 6, 0.0, 3), y = gaussian_rows(150, 6, 0.3, 4);
    EXPECT_NEAR(fid(x, y), fid(y, x), 1e-9);
    EXPECT_THROW(fid(x.topRows(1), y), ParameterError);
    EXPECT_THROW(fid(x, y.leftCols(5)), DimensionError);
}

TEST(Fid, RotationInvariant) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto x = gaussian_rows(100, 5, 0.0, 10 + s), y = gaussian_rows(80, 5, 0.5, 20 + s);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian_rows(5, 5, 0.0, 30 + s));
        const Eigen::MatrixXd q = qr.householderQ();
        EXPECT_NEAR(fid(x * q, y * q), fid(x, y), 1e-4);
    }
}

TEST(Cmmd, PointMassesAndPermutation) {
    const double sigma = 2.0, dist = 3.0;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4, 2);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(5, 2);
    b.col(0).setConstant(dist);
    const double expected = 2.0 - 2.0 * std::exp(-dist * dist / (2 * sigma * sigma));
    EXPECT_NEAR(cmmd(a, b, sigma), expected, 1e-12);
    EXPECT_NEAR(cmmd(a, b, sigma, MmdEstimator::kBiased), expected, 1e-12);

    const auto x = gaussian_rows(30, 3, 0.0, 5), y = gaussian_rows(25, 3, 1.0, 6);
    EXPECT_NEAR(cmmd(x, x, sigma, MmdEstimator::kBiased), 0.0, 1e-12);
    EXPECT_NEAR(cmmd(x, y, sigma), cmmd(y, x, sigma), 1e-12);
    Eigen::MatrixXd xr = x.colwise().reverse();
    EXPECT_NEAR(cmmd(xr, y, sigma), cmmd(x, y, sigma), 1e-12);
    EXPECT_THROW(cmmd(x.topRows(1), y, sigma), ParameterError);
    EXPECT_THROW(cmmd(x, y, 0.0), ConfigError);
}

TEST(Fvd, ReducesToFidAndChecksLength) {
    std::vector<std::vector<data::Frame>> a, b;
    for (int i = 0; i < 6; ++i) {
        std::vector<data::Frame> ca, cb;
        for (int t = 0; t < 16; ++t) {
            ca.push_back(noise_frame(4, 4, 1000 * i + t));
            cb.push_back(constant_frame(4, 4, 0.05f * i + 0.01f * t));
        }
        a.push_back(ca);
        b.push_back(cb);
    }
    MeanPixelVideo toy;
    const double v = fvd(a, b, toy, 14);
    EXPECT_NEAR(v, fid(embed_clips(toy, a, 14), embed_clips(toy, b, 14)), 1e-12);
    EXPECT_NEAR(fvd(a, a, toy, 14), 0.0, 1e-9);
    EXPECT_NEAR(fvd(b, a, toy, 14), v, 1e-12);
    a[2].resize(10);
    EXPECT_THROW(fvd(a, b, toy, 14), LengthError);

    RandomVideoEmbedder video(8, 3);
    EXPECT_EQ(video.dim(), 16);
    EXPECT_NEAR(fvd(b, b, video, 14), 0.0, 1e-6);
}

TEST(Embedders, DeterministicFromSeed) {
    RandomImageEmbedder a(16, 1), b(16, 1), c(16, 2);
    const auto f = noise_frame(16, 16, 1);
    EXPECT_EQ(a.embed(f), b.embed(f));
    EXPECT_NE(a.embed(f), c.embed(f));
    EXPECT_NE(a.name(), c.name());
}

TEST(Reports, LineRoundTripAndSubscript) {
    MetricReport r;
    r.metric = "FVD";
    r.value = 123.456;
    r.frame_count = 14;
    r.samples = 8;
    r.extractor = "random-video";
    r.variant = "openviga";
    r.top_k = 1000;
    EXPECT_EQ(r.label(), "FVD_14");
    const auto back = MetricReport::parse_line(r.to_line());
    EXPECT_EQ(back.label(), "FVD_14");
    EXPECT_DOUBLE_EQ(back.value, 123.456);
    EXPECT_EQ(back.top_k, 1000);
    EXPECT_THROW(MetricReport::parse_line("value=1"), ParameterError);
    EXPECT_THROW(MetricReport::parse_line("metric=a value=1 bogus=2"), ParameterError);

    test_support::TempDir dir;
    MetricReport psnr_row;
    psnr_row.metric = "PSNR";
    psnr_row.value = 30.0;
    write_report(dir.path() / "r.txt", {r, psnr_row}, {"config=abc"});
    const auto read = read_report(dir.path() / "r.txt");
    ASSERT_EQ(read.size(), 2u);
    EXPECT_EQ(read[1].metric, "PSNR");
    EXPECT_NE(summary_table({r, psnr_row}).find("FVD_14"), std::string::npos);
}
