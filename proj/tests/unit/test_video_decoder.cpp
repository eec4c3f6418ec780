// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "openviga/errors.hpp"
#include "openviga/layers.hpp"
#include "openviga/video_decoder.hpp"
#include "test_support.hpp"

using namespace openviga;
using namespace openviga::vdec;

namespace {

struct Fixture {
    AutoencoderConfig cfg = test_support::tiny_autoencoder();
    vq::VQAutoencoder ae{nullptr};
    VideoDecoder vdec{nullptr};

    Fixture() {
        torch::manual_seed(21);
        ae = vq::VQAutoencoder(cfg);
        ae->eval();
        vdec = VideoDecoder(ae->decoder, cfg, InflationSpec{});
        vdec->eval();
    }

    torch::Tensor grid(int seed) {
        torch::manual_seed(seed);
        const int g = cfg.grid_size();
        return ae->quantizer->lookup(torch::randint(0, cfg.codebook_size, {1, g, g}, torch::kInt64))[0];
    }
};

int64_t kernel_count(torch::nn::Module& m) {
    int64_t n = 0;
    layers::for_each_conv(m, [&](const std::string&, layers::ConvImpl& c) { n += c.weight.numel(); });
    return n;
}

}  // namespace

TEST(Inflation, CenterFrameMatchesImageDecoder) {
    Fixture f;
    torch::NoGradGuard guard;
    for (int s = 0; s < 20; ++s) {
        const auto g = f.grid(100 + s);
        const auto image = f.ae->decoder(g.unsqueeze(0));
        const auto same = f.vdec->decode_center(make_window(g, g, g));
        ASSERT_LT((same - image).abs().max().item<double>(), 1e-5) << s;
        const auto mixed = f.vdec->decode_center(make_window(f.grid(500 + s), g, f.grid(900 + s)));
        ASSERT_LT((mixed - image).abs().max().item<double>(), 1e-5) << s;
    }
}

TEST(Inflation, ParameterArithmetic) {
    Fixture f;
    const int64_t kernels2d = kernel_count(*f.ae->decoder);
    const int64_t total2d = layers::parameter_count(*f.ae->decoder);
    EXPECT_EQ(kernel_count(*f.vdec->decoder), 3 * kernels2d);
    EXPECT_EQ(layers::parameter_count(*f.vdec->decoder), total2d + 2 * kernels2d);

    InflationSpec five{5, {}};
    auto wide = inflate_decoder(f.ae->decoder, f.cfg, five);
    EXPECT_EQ(kernel_count(*wide), 5 * kernels2d);
}

TEST(Inflation, PointKernelBecomesTemporalDelta) {
    layers::Conv conv(2, 2, 1);
    {
        torch::NoGradGuard guard;
        conv->weight.copy_(torch::eye(2).reshape({2, 2, 1, 1}));
        conv->bias.zero_();
    }
    conv->inflate(3);
    ASSERT_EQ(conv->weight.sizes(), (std::vector<int64_t>{2, 2, 3, 1, 1}));
    auto expected = torch::zeros({2, 2, 3, 1, 1});
    expected.select(2, 1).copy_(torch::eye(2).reshape({2, 2, 1, 1}));
    EXPECT_TRUE(torch::equal(conv->weight.detach(), expected));
}

TEST(Inflation, OverridesAndValidation) {
    Fixture f;
    InflationSpec spec{3, {{"conv_out", 1}, {"up", 5}}};
    EXPECT_EQ(spec.extent_for("conv_out"), 1);
    EXPECT_EQ(spec.extent_for("up.0.conv1"), 5);
    EXPECT_EQ(spec.extent_for("upper"), 3);
    EXPECT_EQ(spec.extent_for("mid.conv1"), 3);
    auto dec = inflate_decoder(f.ae->decoder, f.cfg, spec);
    layers::for_each_conv(*dec, [&](const std::string& path, layers::ConvImpl& c) {
        EXPECT_EQ(c.temporal_extent(), spec.extent_for(path)) << path;
    });
    EXPECT_THROW((InflationSpec{2, {}}.validate()), ConfigError);
    EXPECT_THROW((InflationSpec{3, {{"mid", 4}}}.validate()), ConfigError);
    EXPECT_THROW(inflate_decoder(f.ae->decoder, f.cfg, InflationSpec{4, {}}), ConfigError);
}

TEST(VideoDecoder, ShapesRangeAndDeterminism) {
    Fixture f;
    torch::NoGradGuard guard;
    const auto w = make_window(f.grid(1), f.grid(2), f.grid(3));
    const auto out = f.vdec(w);
    EXPECT_EQ(out.sizes(), (std::vector<int64_t>{1, 3, 3, 16, 16}));
    EXPECT_LE(out.abs().max().item<double>(), 1.0);
    EXPECT_TRUE(torch::equal(out, f.vdec(w)));
    EXPECT_THROW(f.vdec(w.select(2, 0)), DimensionError);
    EXPECT_THROW(f.vdec(torch::cat({w, w}, 2)), DimensionError);
}

TEST(Streaming, CountsAndReplicatedBoundaries) {
    Fixture f;
    torch::NoGradGuard guard;
    std::vector<torch::Tensor> grids;
    for (int i = 0; i < 16; ++i) grids.push_back(f.grid(40 + i));
    const auto frames = stream_decode(f.vdec, grids);
    ASSERT_EQ(frames.size(0), 16);
    for (int t = 0; t < 16; ++t) {
        const auto& prev = grids[std::max(t - 1, 0)];
        const auto& next = grids[std::min(t + 1, 15)];
        const auto single = f.vdec->decode_center(make_window(prev, grids[t], next))[0];
        ASSERT_TRUE(torch::equal(frames[t], single)) << t;
    }
    std::vector<torch::Tensor> windows;
    for (int t = 1; t < 15; ++t) windows.push_back(make_window(grids[t - 1], grids[t], grids[t + 1]));
    const auto batch = f.vdec->decode_center(torch::cat(windows));
    for (int t = 1; t < 15; ++t) {
        ASSERT_TRUE(torch::equal(frames[t], batch[t - 1]))
            << t << " max diff " << (frames[t] - batch[t - 1]).abs().max().item<double>();
    }

    const auto one = stream_decode(f.vdec, {grids[0]});
    ASSERT_EQ(one.size(0), 1);
    EXPECT_TRUE(torch::equal(one[0], f.vdec->decode_center(make_window(grids[0], grids[0], grids[0]))[0]));
    EXPECT_THROW(stream_decode(f.vdec, {}), ParameterError);
}

TEST(Streaming, ChokeFeedLatencyIsOneGrid) {
    Fixture f;
    StreamDecoder stream(f.vdec);
    // grids are handed over only when the harness decides; frame t must be out
    // once grid t+1 is in, before grid t+2 exists
    for (int k = 1; k <= 10; ++k) {
        const auto ready = stream.push(f.grid(k));
        EXPECT_EQ(stream.consumed(), k);
        EXPECT_EQ(stream.emitted(), k - 1);
        EXPECT_EQ(ready.has_value(), k >= 2);
    }
    EXPECT_TRUE(stream.finish().has_value());
    EXPECT_EQ(stream.emitted(), 10);
    EXPECT_FALSE(stream.finish().has_value());
    EXPECT_THROW(stream.push(f.grid(11)), ParameterError);
}

TEST(Discriminator3d, MatchesImageDiscriminatorOnStaticClips) {
    Fixture f;
    torch::manual_seed(31);
    vq::PatchDiscriminator d2(f.cfg.discriminator, f.cfg.input_size);
    d2->eval();
    auto d3 = inflate_discriminator(d2, f.cfg, InflationSpec{});
    d3->eval();
    torch::NoGradGuard guard;
    const auto frame = torch::rand({2, 3, 16, 16}) * 2 - 1;
    const auto clip = frame.unsqueeze(2).expand({2, 3, 3, 16, 16}).contiguous();
    const auto logits3 = d3(clip);
    const auto logits2 = d2(frame);
    ASSERT_EQ(logits3.size(2), 3);
    for (int t = 0; t < 3; ++t) EXPECT_LT((logits3.select(2, t) - logits2).abs().max().item<double>(), 1e-5);
}

TEST(VdecLoss, ZeroAtIdentityAndTermOracle) {
    LossWeights w;
    w.adversarial_start_step = 0;
    const auto x = torch::rand({2, 3, 3, 16, 16}) * 2 - 1;
    const auto zeros = torch::zeros({2, 1, 3, 2, 2});
    auto pixels_only = w;
    pixels_only.lambda_perceptual = 0.0;
    const auto same = vdec_loss(x, x, pixels_only, nullptr, zeros, 5);
    EXPECT_EQ(same.total.item<double>(), 0.0);

    loss::RandomConvFeatures phi;
    const auto y = torch::rand({2, 3, 3, 16, 16}) * 2 - 1;
    const auto logits = torch::randn({2, 1, 3, 2, 2});
    const auto t = vdec_loss(y, x, w, &phi, logits, 5);
    double expected = 0.0;
    for (int tau = 0; tau < 3; ++tau)
        expected += loss::reconstruction_loss(y.select(2, tau), x.select(2, tau), w, &phi).item<double>();
    EXPECT_NEAR(t.reconstruction.item<double>(), expected, 1e-5);
    EXPECT_NEAR(t.total.item<double>(), expected - logits.mean().item<double>(), 1e-5);

    w.adversarial_start_step = 10;
    const auto gated = vdec_loss(y, x, w, &phi, torch::Tensor(), 9);
    EXPECT_FALSE(gated.generator.defined());
    EXPECT_NEAR(gated.total.item<double>(), expected, 1e-5);
    EXPECT_THROW(vdec_loss(y, x, w, &phi, torch::Tensor(), 10), ConfigError);
    EXPECT_THROW(vdec_loss(y.select(2, 0), x.select(2, 0), w, &phi, logits, 10), DimensionError);
}
