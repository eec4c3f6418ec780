// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "openviga/checkpoint.hpp"
#include "openviga/errors.hpp"
#include "openviga/vq_autoencoder.hpp"
#include "test_support.hpp"

using namespace openviga;
using namespace openviga::ckpt;

namespace {

struct TwoLayer : torch::nn::Module {
    TwoLayer() {
        fc1 = register_module("fc1", torch::nn::Linear(4, 3));
        fc2 = register_module("fc2", torch::nn::Linear(3, 2));
    }
    torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};

}  // namespace

TEST(Manifest, TextRoundTripAndRequire) {
    Manifest m;
    m.set("stage", "tok");
    m.set("step", "42");
    m.set("config_hash", "abc");
    const auto back = Manifest::parse(m.to_text());
    EXPECT_EQ(back.entries, m.entries);
    EXPECT_EQ(back.get("step"), "42");
    EXPECT_THROW(back.get("missing"), ConfigError);
    EXPECT_NO_THROW(back.require("stage", "tok"));
    try {
        back.require("stage", "wm");
        FAIL() << "mismatch accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("stage"), std::string::npos);
    }
}

TEST(Checkpoint, ModuleAndOptimizerRoundTrip) {
    test_support::TempDir dir;
    torch::manual_seed(1);
    vq::VQAutoencoder a(test_support::tiny_autoencoder());
    torch::optim::AdamW opt(a->parameters(), torch::optim::AdamWOptions(1e-3));
    a->tokenize(torch::rand({1, 3, 16, 16})).z_st.sum().backward();
    opt.step();

    Writer w;
    w.add_module("tok", *a);
    w.add_optimizer("gen", opt);
    w.manifest().set("stage", "tok");
    const auto path = w.write(dir.path() / "ck");

    torch::manual_seed(2);
    vq::VQAutoencoder b(test_support::tiny_autoencoder());
    EXPECT_NE(module_hash(*a), module_hash(*b));
    Reader r(path);
    r.load_module("tok", *b);
    EXPECT_EQ(module_hash(*a), module_hash(*b));
    EXPECT_EQ(r.manifest().get("stage"), "tok");
    EXPECT_EQ(r.manifest().get("module.tok.hash"), module_hash(*a));

    torch::optim::AdamW opt_b(b->parameters(), torch::optim::AdamWOptions(1e-3));
    r.load_optimizer("gen", opt_b);
    // identical moments: one more identical step keeps the modules identical
    for (auto* o : {&opt, &opt_b}) o->zero_grad();
    a->tokenize(torch::ones({1, 3, 16, 16}) * 0.1).z_st.sum().backward();
    b->tokenize(torch::ones({1, 3, 16, 16}) * 0.1).z_st.sum().backward();
    opt.step();
    opt_b.step();
    EXPECT_EQ(module_hash(*a), module_hash(*b));
}

TEST(Checkpoint, DetectsCorruptionAndMismatch) {
    test_support::TempDir dir;
    TwoLayer m;
    Writer w;
    w.add_module("m", m);
    const auto path = w.write(dir.path() / "ck");
    {
        std::fstream f(path / "weights.pt", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-20, std::ios::end);
        f.put('\x5a');
    }
    EXPECT_THROW(Reader{path}, IoError);
    EXPECT_THROW(Reader{dir.path() / "absent"}, IoError);

    const auto good = w.write(dir.path() / "ck2");
    Reader r(good);
    torch::nn::Linear other(4, 3);
    EXPECT_THROW(r.load_module("m", *other), ConfigError);
    EXPECT_THROW(r.load_module("nope", m), ConfigError);
}

TEST(Import, RenamedArraysAndReport) {
    test_support::TempDir dir;
    TwoLayer src;
    torch::serialize::OutputArchive out;
    out.write("encoder.layer1.weight", src.fc1->weight.detach());
    out.write("encoder.layer1.bias", src.fc1->bias.detach());
    out.write("fc2.weight", src.fc2->weight.detach());
    out.write("extra", torch::zeros({1}));
    out.save_to((dir.path() / "ext.pt").string());
    {
        std::ofstream t(dir.path() / "rename.tsv");
        t << "# external\tours\n";
        t << "encoder.layer1.weight\tfc1.weight\n";
        t << "encoder.layer1.bias\tfc1.bias\n";
    }
    const auto table = read_rename_table(dir.path() / "rename.tsv");
    EXPECT_EQ(table.size(), 2u);

    TwoLayer dst;
    const auto rep = import_named_arrays(dst, dir.path() / "ext.pt", table);
    EXPECT_EQ(rep.loaded.size(), 3u);
    EXPECT_EQ(rep.missing, std::vector<std::string>{"fc2.bias"});
    EXPECT_EQ(rep.unused, std::vector<std::string>{"extra"});
    EXPECT_TRUE(torch::equal(dst.fc1->weight, src.fc1->weight));
    EXPECT_TRUE(torch::equal(dst.fc2->weight, src.fc2->weight));

    torch::serialize::OutputArchive bad;
    bad.write("fc1.weight", torch::zeros({2, 2}));
    bad.save_to((dir.path() / "bad.pt").string());
    EXPECT_THROW(import_named_arrays(dst, dir.path() / "bad.pt"), DimensionError);

    std::ofstream(dir.path() / "broken.tsv") << "no tab here\n";
    EXPECT_THROW(read_rename_table(dir.path() / "broken.tsv"), ConfigError);
}
