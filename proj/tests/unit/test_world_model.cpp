// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "openviga/errors.hpp"
#include "openviga/world_model.hpp"
#include "test_support.hpp"

using namespace openviga;
using namespace openviga::wm;

namespace {

std::vector<IndexGrid> random_grids(int count, int h, int w, int codebook, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<IndexGrid> out;
    for (int f = 0; f < count; ++f) {
        IndexGrid g{h, w, {}};
        for (int i = 0; i < h * w; ++i) g.indices.push_back(static_cast<std::int32_t>(rng() % codebook));
        out.push_back(g);
    }
    return out;
}

/// Brute-force count of positions lenient parsing must change or fill.
long scan_repairs(const std::vector<std::int32_t>& seq, std::size_t n) {
    const std::size_t stride = n + 1;
    const std::size_t padded = (seq.size() + stride - 1) / stride * stride;
    long repairs = 0;
    for (std::size_t p = 1; p <= padded; ++p) {
        if (p > seq.size()) {
            ++repairs;
        } else if (p % stride == 0) {
            repairs += seq[p - 1] != 0;
        } else {
            repairs += seq[p - 1] == 0;
        }
    }
    return repairs;
}

torch::Tensor ids_tensor(const std::vector<int64_t>& ids) { return torch::tensor(ids, torch::kInt64).unsqueeze(0); }

}  // namespace

// --- framing ------------------------------------------------------------------------------------

TEST(Framing, FullScaleLengths) {
    const auto two = frame_indices(random_grids(2, 16, 16, 8192, 1));
    ASSERT_EQ(two.size(), 514u);
    EXPECT_EQ(two[256], 0);
    EXPECT_EQ(two[513], 0);
    const auto sixteen = frame_indices(random_grids(16, 16, 16, 8192, 2));
    ASSERT_EQ(sixteen.size(), 4112u);
    for (std::size_t p = 1; p <= sixteen.size(); ++p) {
        if (p % 257 == 0) {
            ASSERT_EQ(sixteen[p - 1], 0);
        } else {
            ASSERT_GE(sixteen[p - 1], 1);
            ASSERT_LE(sixteen[p - 1], 8192);
        }
    }
}

TEST(Framing, RoundTrip) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto grids = random_grids(1 + seed % 5, 3, 4, 16, seed);
        const auto back = unframe_indices(frame_indices(grids), 3, 4, UnframeMode::kStrict);
        EXPECT_EQ(back.grids, grids);
        EXPECT_EQ(back.repairs, 0);
    }
}

TEST(Framing, StrictReportsPosition) {
    auto seq = frame_indices(random_grids(2, 16, 16, 8192, 3));
    seq[199] = 0;
    try {
        unframe_indices(seq, 16, 16, UnframeMode::kStrict);
        FAIL() << "violation accepted";
    } catch (const StructuralError& e) {
        EXPECT_EQ(e.position(), 200);
        EXPECT_NE(std::string(e.what()).find("200"), std::string::npos);
    }
    seq = frame_indices(random_grids(2, 16, 16, 8192, 3));
    seq[256] = 5;
    try {
        unframe_indices(seq, 16, 16, UnframeMode::kStrict);
        FAIL() << "missing marker accepted";
    } catch (const StructuralError& e) {
        EXPECT_EQ(e.position(), 257);
    }
    seq.pop_back();
    EXPECT_THROW(unframe_indices(seq, 16, 16, UnframeMode::kStrict), StructuralError);
}

TEST(Framing, LenientRepairsMatchScan) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 300; ++trial) {
        const int frames = 1 + static_cast<int>(rng() % 4);
        auto seq = frame_indices(random_grids(frames, 2, 3, 16, rng()));
        const int edits = static_cast<int>(rng() % 6);
        for (int e = 0; e < edits; ++e) {
            const auto p = rng() % seq.size();
            seq[p] = (rng() % 3 == 0) ? 0 : static_cast<std::int32_t>(1 + rng() % 16);
        }
        if (rng() % 3 == 0) seq.resize(seq.size() - rng() % 7);
        if (seq.empty()) continue;
        const auto parsed = unframe_indices(seq, 2, 3, UnframeMode::kLenient);
        EXPECT_EQ(parsed.repairs, scan_repairs(seq, 6)) << "trial " << trial;
        EXPECT_EQ(parsed.grids.size(), (seq.size() + 6) / 7);
        for (const auto& g : parsed.grids)
            for (auto i : g.indices) EXPECT_TRUE(i >= 0 && i < 16);
    }
}

TEST(Prompt, ByteCodec) {
    ByteCodec codec;
    EXPECT_TRUE(frame_text_prompt("", codec).empty());
    const std::string prompt = desk_scale_config().data.prompt;
    const auto ids = frame_text_prompt(prompt, codec);
    EXPECT_EQ(ids.size(), prompt.size());
    EXPECT_EQ(ids, frame_text_prompt(prompt, codec));
}

// --- model --------------------------------------------------------------------------------------

TEST(WorldModel, LoraStartsAtBase) {
    auto cfg = test_support::tiny_world_model();
    torch::manual_seed(5);
    WorldModel adapted(cfg);
    auto base_cfg = cfg;
    base_cfg.lora.enabled = false;
    WorldModel base(base_cfg);
    {
        torch::NoGradGuard guard;
        auto src = adapted->named_parameters(true);
        for (auto& item : base->named_parameters(true)) item.value().copy_(src[item.key()]);
    }
    auto ids = ids_tensor({10, 1, 2, 3, 11, 12, 13, 14, 15, 11});
    EXPECT_LT((adapted(ids) - base(ids)).abs().max().item<double>(), 1e-6);
}

TEST(WorldModel, TrainableMaskIsAdapterPlusNorm) {
    const auto cfg = test_support::tiny_world_model();
    WorldModel model(cfg);
    std::set<std::string> trainable, declared;
    int64_t count = 0, total = 0;
    for (const auto& item : model->named_parameters(true)) {
        total += item.value().numel();
        if (item.value().requires_grad()) {
            trainable.insert(item.key());
            count += item.value().numel();
        }
        const auto& k = item.key();
        if (k.find("lora_") != std::string::npos || k.find("norm") != std::string::npos) declared.insert(k);
    }
    EXPECT_EQ(trainable, declared);

    // hand count for d=16, f=24, r=4, V_text=11, V_img=17, depth 2
    const int64_t d = 16, f = 24, r = 4, vt = 11, vi = 17, depth = 2;
    const int64_t per_block_lora = 4 * (r * d + d * r) + 2 * (r * d + f * r) + (r * f + d * r);
    const int64_t lora = depth * per_block_lora + (vt * r + r * d) + (vi * r + r * d) + (r * d + vi * r);
    const int64_t norms = depth * 2 * d + d;
    EXPECT_EQ(count, lora + norms);
    const auto report = model->parameter_report();
    EXPECT_EQ(report.trainable, lora + norms);
    EXPECT_EQ(report.total, total);
    const auto analytic = analytic_parameter_report(cfg);
    EXPECT_EQ(analytic.total, report.total);
    EXPECT_EQ(analytic.trainable, report.trainable);
    EXPECT_EQ(model->frozen_parameter_names().size() + trainable.size(), model->named_parameters(true).size());
}

TEST(WorldModel, FullScaleTrainableFraction) {
    const auto report = analytic_parameter_report(paper_scale_config().world_model);
    // reported, not asserted tightly: ~2.4% of ~6.8B
    EXPECT_GT(report.trainable_fraction(), 0.020);
    EXPECT_LT(report.trainable_fraction(), 0.028);
    EXPECT_GT(report.total, 6'500'000'000LL);
    EXPECT_LT(report.total, 7'200'000'000LL);
}

TEST(WorldModel, RejectsInvalidRank) {
    auto cfg = test_support::tiny_world_model();
    cfg.lora.rank = 16;
    EXPECT_THROW(WorldModel{cfg}, ConfigError);
}

TEST(WorldModel, SuffixEditInvariance) {
    torch::manual_seed(8);
    WorldModel model(test_support::tiny_world_model());
    torch::NoGradGuard guard;
    const std::vector<int64_t> ids = {10, 3, 4, 5, 12, 13, 14, 15, 11, 20, 21, 22, 23, 11, 16};
    const auto reference = model(ids_tensor(ids));
    for (std::size_t p = 0; p < ids.size(); ++p) {
        auto edited = ids;
        edited[p] = ids[p] == 12 ? 13 : 12;
        const auto out = model(ids_tensor(edited));
        if (p > 0) {
            ASSERT_TRUE(torch::equal(out.slice(1, 0, p), reference.slice(1, 0, p))) << "edit at " << p;
        }
        ASSERT_FALSE(torch::equal(out.slice(1, p, p + 1), reference.slice(1, p, p + 1))) << "edit at " << p;
    }
    const auto probs = torch::softmax(reference.to(torch::kFloat64), -1).sum(-1);
    EXPECT_LT((probs - 1.0).abs().max().item<double>(), 1e-5);
}

TEST(WorldModel, CachedForwardMatchesFull) {
    torch::manual_seed(9);
    WorldModel model(test_support::tiny_world_model());
    torch::NoGradGuard guard;
    const auto ids = ids_tensor({10, 3, 4, 12, 13, 14, 15, 11, 20, 21});
    const auto full = model(ids);
    KVCache cache;
    auto first = model->forward_cached(ids.slice(1, 0, 4), cache);
    std::vector<torch::Tensor> rows = {first};
    for (int64_t i = 4; i < ids.size(1); ++i) rows.push_back(model->forward_cached(ids.slice(1, i, i + 1), cache));
    EXPECT_LT((torch::cat(rows, 1) - full).abs().max().item<double>(), 1e-5);
    EXPECT_EQ(cache.length, ids.size(1));
}

TEST(WorldModel, GoldenLogitsAreReproducible) {
    auto run = [] {
        torch::manual_seed(1234);
        WorldModel model(test_support::tiny_world_model());
        torch::NoGradGuard guard;
        return model(ids_tensor({10, 0, 1, 2, 11, 12, 13, 14, 15, 11}));
    };
    const auto a = run();
    const auto b = run();
    EXPECT_TRUE(torch::equal(a, b));
    EXPECT_EQ(a.sizes(), (std::vector<int64_t>{1, 10, 17}));
}

TEST(WorldModel, ImageLogitsAlignWithTargets) {
    torch::manual_seed(10);
    const auto cfg = test_support::tiny_world_model();
    WorldModel model(cfg);
    torch::NoGradGuard guard;
    const std::vector<std::int32_t> text = {1, 2, 3};
    const auto image = torch::tensor({{5, 6, 7, 8, 0}}, torch::kInt64);
    const auto logits = model->image_logits(text, image);
    ASSERT_EQ(logits.sizes(), (std::vector<int64_t>{1, 5, 17}));
    const auto joined = model->join(text, image);
    EXPECT_EQ(joined[0][0].item<int64_t>(), cfg.bos_id());
    EXPECT_EQ(joined[0][4].item<int64_t>(), 5 + cfg.text_vocab);
    const auto full = model(joined);
    // row j of the image logits comes from the position just before image[j]
    EXPECT_TRUE(torch::equal(logits[0][0], full[0][3]));
    EXPECT_TRUE(torch::equal(logits[0][4], full[0][7]));
}

TEST(WorldModel, BfloatFrozenWeightsRun) {
    auto cfg = test_support::tiny_world_model();
    cfg.frozen_bfloat16 = true;
    torch::manual_seed(11);
    WorldModel model(cfg);
    EXPECT_EQ(model->blocks[0]->as<BlockImpl>()->wq->weight.scalar_type(), torch::kBFloat16);
    EXPECT_EQ(model->blocks[0]->as<BlockImpl>()->wq->lora_a.scalar_type(), torch::kFloat32);
    const auto out = model(ids_tensor({10, 1, 12, 13}));
    EXPECT_TRUE(torch::isfinite(out).all().item<bool>());
    out.sum().backward();
    EXPECT_FALSE(model->blocks[0]->as<BlockImpl>()->wq->weight.grad().defined());
}

// --- loss and accuracy --------------------------------------------------------------------------

TEST(WmLoss, ClosedForms) {
    auto targets = torch::tensor({{3, 0, 16}}, torch::kInt64);
    auto onehot = torch::zeros({1, 3, 17});
    for (int i = 0; i < 3; ++i) onehot[0][i][targets[0][i].item<int64_t>()] = 100.0;
    EXPECT_NEAR(wm_ce_loss(onehot, targets).item<double>(), 0.0, 1e-9);
    EXPECT_NEAR(wm_ce_loss(torch::zeros({1, 3, 17}), targets).item<double>(), std::log(17.0), 1e-6);
    EXPECT_DOUBLE_EQ(top1_accuracy(onehot, targets), 1.0);
}

TEST(WmLoss, MatchesPositionwiseNll) {
    torch::manual_seed(12);
    auto logits = torch::randn({2, 6, 17}, torch::kFloat64);
    auto targets = torch::randint(0, 17, {2, 6}, torch::kInt64);
    double sum = 0.0;
    for (int b = 0; b < 2; ++b)
        for (int s = 0; s < 6; ++s) {
            double z = 0.0;
            for (int k = 0; k < 17; ++k) z += std::exp(logits[b][s][k].item<double>());
            sum += -(logits[b][s][targets[b][s].item<int64_t>()].item<double>() - std::log(z));
        }
    EXPECT_NEAR(wm_ce_loss(logits, targets).item<double>(), sum / 12.0, 1e-9);
}

// --- sampling -----------------------------------------------------------------------------------

TEST(TopK, ArgmaxAndTies) {
    std::mt19937_64 rng(0);
    const std::vector<double> row = {0.1, 0.4, 0.4, 0.1};
    EXPECT_EQ(top_k_sample(row, 1, rng), 1);
    EXPECT_THROW(top_k_sample(row, 0, rng), ParameterError);
    EXPECT_THROW(top_k_sample(row, 5, rng), ParameterError);
}

TEST(TopK, SupportContainment) {
    std::mt19937_64 gen(3);
    for (int k : {1, 5, 10, 50, 200, 1000}) {
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<double> row(1024);
            double total = 0.0;
            for (auto& p : row) total += (p = std::exponential_distribution<double>(1.0)(gen));
            for (auto& p : row) p /= total;
            std::vector<int> order(row.size());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return row[a] > row[b]; });
            const std::set<int> allowed(order.begin(), order.begin() + k);
            std::mt19937_64 rng(trial);
            for (int draw = 0; draw < 2000; ++draw) ASSERT_TRUE(allowed.count(top_k_sample(row, k, rng))) << k;
        }
    }
}

TEST(TopK, RenormalizedFrequencies) {
    const std::vector<double> row = {0.5, 0.3, 0.2};
    std::mt19937_64 rng(2025);
    int counts[3] = {0, 0, 0};
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) ++counts[top_k_sample(row, 2, rng)];
    EXPECT_EQ(counts[2], 0);
    EXPECT_NEAR(counts[0] / double(draws), 0.625, 0.01);
    EXPECT_NEAR(counts[1] / double(draws), 0.375, 0.01);
}

TEST(TopK, FullVocabularyChiSquare) {
    std::vector<double> row(17);
    for (int i = 0; i < 17; ++i) row[i] = (i + 1) / 153.0;
    std::mt19937_64 rng(44);
    std::vector<int> counts(17, 0);
    const int draws = 50000;
    for (int i = 0; i < draws; ++i) ++counts[top_k_sample(row, 17, rng)];
    double chi2 = 0.0;
    for (int i = 0; i < 17; ++i) {
        const double e = draws * row[i];
        chi2 += (counts[i] - e) * (counts[i] - e) / e;
    }
    EXPECT_LT(chi2, 39.25);  // 16 dof, p = 0.001
}

// --- generation ---------------------------------------------------------------------------------

TEST(Generate, IterationCountAndStrictParse) {
    auto cfg = test_support::tiny_world_model();
    torch::manual_seed(13);
    WorldModel model(cfg);
    GenerationRequest req;
    req.text = {1, 2, 3};
    req.initial = random_grids(2, 2, 2, 16, 1);
    req.predicted_frames = 14;
    req.top_k = 5;
    req.seed = 1;
    req.structure_mode = StructureMode::kForced;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        req.seed = seed;
        const auto out = generate(model, req);
        EXPECT_EQ(out.iterations, 14 * 5);
        EXPECT_EQ(out.grids.size(), 14u);
        EXPECT_EQ(out.repairs, 0);
        EXPECT_NO_THROW(unframe_indices(out.sampled, 2, 2, UnframeMode::kStrict));
    }
    req.structure_mode = StructureMode::kFree;
    const auto free = generate(model, req);
    EXPECT_EQ(free.iterations, 14 * 5);
    EXPECT_EQ(free.repairs, scan_repairs(free.sampled, 4));
}

TEST(Generate, FullScaleFramingIterations) {
    auto cfg = test_support::tiny_world_model();
    cfg.tokens_per_frame = 256;
    cfg.context_length = 1 + 3 + 16 * 257;
    cfg.depth = 1;
    torch::manual_seed(14);
    WorldModel model(cfg);
    GenerationRequest req;
    req.text = {1, 2, 3};
    req.initial = random_grids(2, 16, 16, 16, 2);
    req.predicted_frames = 14;
    req.top_k = 1;
    const auto out = generate(model, req);
    EXPECT_EQ(out.iterations, 3598);
    EXPECT_EQ(out.sampled.size(), 3598u);
}

TEST(Generate, GreedyIgnoresSeedAndCacheIsExact) {
    auto cfg = test_support::tiny_world_model();
    torch::manual_seed(15);
    WorldModel model(cfg);
    GenerationRequest req;
    req.text = {4, 5};
    req.initial = random_grids(2, 2, 2, 16, 3);
    req.predicted_frames = 6;
    req.top_k = 1;
    req.seed = 1;
    const auto a = generate(model, req);
    req.seed = 999;
    const auto b = generate(model, req);
    EXPECT_EQ(a.sampled, b.sampled);
    req.use_cache = false;
    const auto c = generate(model, req);
    EXPECT_EQ(a.sampled, c.sampled);
    req.top_k = 5;
    req.use_cache = true;
    req.seed = 7;
    EXPECT_EQ(generate(model, req).sampled, generate(model, req).sampled);
}

TEST(Generate, ContextOverflowIsLengthError) {
    auto cfg = test_support::tiny_world_model();
    cfg.context_length = 40;
    WorldModel model(cfg);
    GenerationRequest req;
    req.initial = random_grids(2, 2, 2, 16, 4);
    req.predicted_frames = 14;
    req.top_k = 1;
    EXPECT_THROW(generate(model, req), LengthError);
}
