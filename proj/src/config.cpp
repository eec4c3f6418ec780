// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "openviga/config.hpp"

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "openviga/errors.hpp"

namespace openviga {

// --- validation ------------------------------------------------------------------

int AutoencoderConfig::levels() const {
    int levels = 0;
    for (int f = compression_factor; f > 1; f /= 2) ++levels;
    return levels;
}

void AutoencoderConfig::validate() const {
    if (compression_factor < 1 || (compression_factor & (compression_factor - 1)) != 0) {
        throw ConfigError("compression_factor must be a power of two");
    }
    if (input_size <= 0 || input_size % compression_factor != 0) {
        throw ConfigError("input_size " + std::to_string(input_size) + " not divisible by compression_factor " +
                          std::to_string(compression_factor));
    }
    if (codebook_size < 1) throw ConfigError("codebook_size must be positive");
    if (code_dim < 1) throw ConfigError("code_dim must be positive");
    if (static_cast<int>(channels.size()) != levels() + 1) {
        throw ConfigError("autoencoder.channels needs log2(compression_factor) + 1 = " + std::to_string(levels() + 1) +
                          " entries");
    }
    for (int c : channels) {
        if (c <= 0 || c % norm_groups != 0) {
            throw ConfigError("channel width " + std::to_string(c) + " not divisible by norm_groups");
        }
    }
    if (res_blocks < 0) throw ConfigError("res_blocks must be >= 0");
    if (teacher_dim < 1) throw ConfigError("teacher_dim must be positive");
    const auto& d = discriminator;
    if (d.base_channels < 1 || d.max_channels < d.base_channels) {
        throw ConfigError("discriminator channel widths invalid");
    }
    if (d.variant == DiscriminatorVariant::kOurs) {
        if (d.patch_grid < 1 || input_size % d.patch_grid != 0) {
            throw ConfigError("discriminator patch_grid must divide input_size");
        }
        const int ratio = input_size / d.patch_grid;
        if ((ratio & (ratio - 1)) != 0) {
            throw ConfigError("input_size / patch_grid must be a power of two");
        }
    } else if (input_size < 32) {
        throw ConfigError("baseline discriminator needs input_size >= 32");
    }
}

const char* to_string(LossTerm term) {
    switch (term) {
        case LossTerm::kL1: return "l1";
        case LossTerm::kL2: return "l2";
        case LossTerm::kPerceptual: return "perceptual";
        case LossTerm::kCodebook: return "codebook";
        case LossTerm::kSsl: return "ssl";
        case LossTerm::kGenerator: return "generator";
    }
    return "?";
}

double LossWeights::weight(LossTerm term) const {
    switch (term) {
        case LossTerm::kL1: return lambda_l1;
        case LossTerm::kL2: return lambda_l2;
        case LossTerm::kPerceptual: return lambda_perceptual;
        case LossTerm::kCodebook: return lambda_codebook;
        case LossTerm::kSsl: return lambda_ssl;
        case LossTerm::kGenerator: return lambda_generator;
    }
    return 0.0;
}

double LossWeights::effective_weight(LossTerm term, long step) const {
    if (term == LossTerm::kGenerator && !adversarial_active(step)) {
        return 0.0;
    }
    return weight(term);
}

LossWeights LossWeights::without(LossTerm term) const {
    LossWeights w = *this;
    switch (term) {
        case LossTerm::kL1: w.lambda_l1 = 0; break;
        case LossTerm::kL2: w.lambda_l2 = 0; break;
        case LossTerm::kPerceptual: w.lambda_perceptual = 0; break;
        case LossTerm::kCodebook: w.lambda_codebook = 0; break;
        case LossTerm::kSsl: w.lambda_ssl = 0; break;
        case LossTerm::kGenerator: w.lambda_generator = 0; break;
    }
    return w;
}

void LossWeights::validate() const {
    for (double v : {lambda_l1, lambda_l2, lambda_perceptual, lambda_codebook, lambda_ssl, lambda_generator, beta}) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw ConfigError("loss weights must be finite and non-negative");
        }
    }
    if (adversarial_start_step < 0) throw ConfigError("adversarial_start_step must be >= 0");
}

void WorldModelConfig::validate() const {
    if (image_vocab < 2) throw ConfigError("image_vocab must hold the marker and at least one code");
    if (text_vocab < 2) throw ConfigError("text_vocab too small");
    if (tokens_per_frame < 1) throw ConfigError("tokens_per_frame must be positive");
    if (depth < 1 || heads < 1 || model_dim < 1 || ffn_dim < 1) {
        throw ConfigError("world model dimensions must be positive");
    }
    if (model_dim % heads != 0) {
        throw ConfigError("model_dim " + std::to_string(model_dim) + " not divisible by heads " +
                          std::to_string(heads));
    }
    if ((model_dim / heads) % 2 != 0) throw ConfigError("head dimension must be even for rotary embeddings");
    if (context_length < 2) throw ConfigError("context_length too small");
    if (lora.enabled) {
        if (lora.rank < 1) throw ConfigError("LoRA rank must be >= 1");
        if (lora.rank >= model_dim) throw ConfigError("LoRA rank must be smaller than model_dim");
        if (!(lora.alpha > 0.0)) throw ConfigError("LoRA alpha must be positive");
    }
}

void ScheduleConfig::validate() const {
    if (warmup_steps < 0 || decay_steps < 0 || total_steps < 1) {
        throw ConfigError("schedule step counts must be non-negative (total positive)");
    }
    if (warmup_steps + decay_steps > total_steps) {
        throw ConfigError("schedule: warmup + decay exceeds total steps");
    }
    if (!(final_lr > 0.0) || !(peak_lr >= final_lr)) {
        throw ConfigError("schedule: need peak_lr >= final_lr > 0");
    }
}

Stage parse_stage(const std::string& name) {
    if (name == "tok") return Stage::kTokenizer;
    if (name == "wm") return Stage::kWorldModel;
    if (name == "vdec") return Stage::kVideoDecoder;
    throw ConfigError("unknown stage '" + name + "' (expected tok, wm or vdec)");
}

const char* to_string(Stage stage) {
    switch (stage) {
        case Stage::kTokenizer: return "tok";
        case Stage::kWorldModel: return "wm";
        case Stage::kVideoDecoder: return "vdec";
    }
    return "?";
}

const TrainingConfig& RunConfig::training(Stage s) const {
    switch (s) {
        case Stage::kTokenizer: return tok;
        case Stage::kWorldModel: return wm;
        case Stage::kVideoDecoder: return vdec;
    }
    return tok;
}

TrainingConfig& RunConfig::training(Stage s) {
    return const_cast<TrainingConfig&>(static_cast<const RunConfig&>(*this).training(s));
}

void RunConfig::validate() const {
    autoencoder.validate();
    world_model.validate();
    if (world_model.image_vocab != autoencoder.codebook_size + 1) {
        throw ConfigError("world_model.image_vocab must equal autoencoder.codebook_size + 1");
    }
    if (world_model.tokens_per_frame != autoencoder.tokens_per_frame()) {
        throw ConfigError("world_model.tokens_per_frame must equal the tokenizer grid size");
    }
    if (data.crop != autoencoder.input_size) {
        throw ConfigError("data.crop must equal autoencoder.input_size");
    }
    if (data.initial_frames < 1 || data.predicted_frames < 1) {
        throw ConfigError("initial_frames and predicted_frames must be >= 1");
    }
    if (inflation.temporal_extent < 1 || inflation.temporal_extent % 2 == 0) {
        throw ConfigError("temporal extent must be odd");
    }
    for (const auto& [name, extent] : inflation.overrides) {
        if (extent < 1 || extent % 2 == 0) throw ConfigError("temporal extent override for " + name + " must be odd");
    }
    for (const auto* t : {&tok, &wm, &vdec}) {
        t->schedule.validate();
        t->loss.validate();
        if (t->batch_size < 1) throw ConfigError("batch_size must be positive");
    }
    if (sampling.top_k < 1) throw ConfigError("sampling.top_k must be >= 1");
    if (!(metrics.cmmd_bandwidth > 0.0)) throw ConfigError("metrics.cmmd_bandwidth must be positive");
    if (metrics.ms_ssim_weights.empty()) throw ConfigError("metrics.ms_ssim_weights must not be empty");
}

// --- presets ---------------------------------------------------------------------------

RunConfig paper_scale_config() {
    RunConfig c;
    c.preset = "paper-scale";
    c.data.crop = 256;
    c.data.image_fps = 0.2;

    c.tok.batch_size = 80;
    c.tok.schedule = {2000, 5e-5, 150000, 5e-7, 200000};
    c.tok.loss = LossWeights{};
    c.tok.checkpoint_interval = 5000;

    c.wm.batch_size = 24;
    c.wm.schedule = {250, 6e-4, 15000, 6e-5, 28300};
    c.wm.optimizer = OptimizerConfig{0.9, 0.95, 1e-5, 0.1, {"norm", "embed", "bias"}, 1.0};
    c.wm.checkpoint_interval = 1000;

    c.vdec.batch_size = 48;
    c.vdec.schedule = {100, 5e-5, 99900, 5e-7, 100000};
    c.vdec.loss = LossWeights{};
    c.vdec.loss.lambda_codebook = 0.0;
    c.vdec.loss.lambda_ssl = 0.0;
    c.vdec.loss.adversarial_start_step = 2000;
    c.vdec.checkpoint_interval = 5000;

    c.sampling.top_k = 1000;
    return c;
}

RunConfig desk_scale_config() {
    RunConfig c = paper_scale_config();
    c.preset = "desk-scale";
    c.data.crop = 64;
    c.data.image_fps = 4.0;

    auto& ae = c.autoencoder;
    ae.input_size = 64;
    ae.codebook_size = 16;
    ae.code_dim = 16;
    ae.channels = {16, 16, 32, 32, 32};
    ae.res_blocks = 1;
    ae.norm_groups = 4;
    ae.discriminator = {DiscriminatorVariant::kOurs, 16, 64, 8};

    auto& wm = c.world_model;
    wm.image_vocab = 17;
    wm.text_vocab = 257;
    wm.tokens_per_frame = 16;
    wm.depth = 2;
    wm.heads = 2;
    wm.model_dim = 64;
    wm.ffn_dim = 176;
    wm.context_length = 512;
    wm.lora = {true, 8, 16.0, true, true};

    c.tok.batch_size = 8;
    c.tok.schedule = {100, 2e-3, 1700, 2e-5, 2000};
    c.tok.loss.adversarial_start_step = 1000;
    c.tok.checkpoint_interval = 500;

    c.wm.batch_size = 4;
    c.wm.schedule = {50, 5e-3, 900, 5e-4, 1000};
    c.wm.checkpoint_interval = 250;

    c.vdec.batch_size = 4;
    c.vdec.schedule = {20, 1e-3, 380, 1e-5, 400};
    c.vdec.loss.adversarial_start_step = 100;
    c.vdec.checkpoint_interval = 100;

    c.sampling.top_k = 5;
    c.metrics.ms_ssim_weights = {0.0448, 0.2856, 0.3001};
    return c;
}

RunConfig RunConfig::preset_config(const std::string& name) {
    if (name == "paper-scale") return paper_scale_config();
    if (name == "desk-scale") return desk_scale_config();
    throw ConfigError("unknown preset '" + name + "' (expected paper-scale or desk-scale)");
}

// --- YAML ------------------------------------------------------------------------

namespace {

// Reads known keys from a mapping and rejects anything else.
class MapReader {
public:
    MapReader(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
        if (node_ && !node_.IsNull() && !node_.IsMap()) {
            throw ConfigError(path_ + " must be a mapping");
        }
    }

    template <typename T>
    void get(const char* key, T& out) {
        used_.insert(key);
        if (!node_ || node_.IsNull()) return;
        auto value = node_[key];
        if (!value) return;
        try {
            out = value.as<T>();
        } catch (const YAML::Exception& e) {
            throw ConfigError(path_ + "." + key + ": " + e.what());
        }
    }

    MapReader child(const char* key) {
        used_.insert(key);
        if (!node_ || node_.IsNull()) return MapReader(YAML::Node(), path_ + "." + key);
        return MapReader(node_[key], path_ + "." + key);
    }

    void finish() const {
        if (!node_ || node_.IsNull()) return;
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!used_.count(key)) {
                throw ConfigError("unknown config key " + path_ + "." + key);
            }
        }
    }

private:
    YAML::Node node_;
    std::string path_;
    std::set<std::string> used_;
};

DiscriminatorVariant parse_variant(const std::string& s) {
    if (s == "ours") return DiscriminatorVariant::kOurs;
    if (s == "baseline") return DiscriminatorVariant::kBaseline;
    throw ConfigError("unknown discriminator variant '" + s + "'");
}

const char* variant_name(DiscriminatorVariant v) { return v == DiscriminatorVariant::kOurs ? "ours" : "baseline"; }

StructureMode parse_structure(const std::string& s) {
    if (s == "free") return StructureMode::kFree;
    if (s == "forced") return StructureMode::kForced;
    throw ConfigError("unknown structure_mode '" + s + "'");
}

MmdEstimator parse_estimator(const std::string& s) {
    if (s == "unbiased") return MmdEstimator::kUnbiased;
    if (s == "biased") return MmdEstimator::kBiased;
    throw ConfigError("unknown cmmd_estimator '" + s + "'");
}

void read_schedule(MapReader r, ScheduleConfig& s) {
    r.get("warmup_steps", s.warmup_steps);
    r.get("peak_lr", s.peak_lr);
    r.get("decay_steps", s.decay_steps);
    r.get("final_lr", s.final_lr);
    r.get("total_steps", s.total_steps);
    r.finish();
}

void read_loss(MapReader r, LossWeights& w) {
    r.get("lambda_l1", w.lambda_l1);
    r.get("lambda_l2", w.lambda_l2);
    r.get("lambda_perceptual", w.lambda_perceptual);
    r.get("lambda_codebook", w.lambda_codebook);
    r.get("lambda_ssl", w.lambda_ssl);
    r.get("lambda_generator", w.lambda_generator);
    r.get("beta", w.beta);
    r.get("adversarial_start_step", w.adversarial_start_step);
    r.finish();
}

void read_optimizer(MapReader r, OptimizerConfig& o) {
    r.get("beta1", o.beta1);
    r.get("beta2", o.beta2);
    r.get("eps", o.eps);
    r.get("weight_decay", o.weight_decay);
    r.get("no_decay", o.no_decay);
    r.get("grad_clip", o.grad_clip);
    r.finish();
}

void read_training(MapReader r, TrainingConfig& t) {
    r.get("batch_size", t.batch_size);
    r.get("checkpoint_interval", t.checkpoint_interval);
    r.get("log_interval", t.log_interval);
    r.get("validation_interval", t.validation_interval);
    r.get("discriminator_lr_scale", t.discriminator_lr_scale);
    read_schedule(r.child("schedule"), t.schedule);
    read_optimizer(r.child("optimizer"), t.optimizer);
    read_loss(r.child("loss"), t.loss);
    r.finish();
}

void apply_yaml(const YAML::Node& root, RunConfig& c) {
    MapReader r(root, "config");
    std::string ignored_preset;
    r.get("preset", ignored_preset);
    std::string stage = to_string(c.stage);
    r.get("stage", stage);
    c.stage = parse_stage(stage);
    r.get("seed", c.seed);

    {
        auto d = r.child("data");
        d.get("manifest", c.data.manifest);
        d.get("target_fps", c.data.target_fps);
        d.get("image_fps", c.data.image_fps);
        d.get("scale", c.data.scale);
        d.get("crop", c.data.crop);
        d.get("workers", c.data.workers);
        d.get("initial_frames", c.data.initial_frames);
        d.get("predicted_frames", c.data.predicted_frames);
        d.get("prompt", c.data.prompt);
        d.finish();
    }
    {
        auto a = r.child("autoencoder");
        auto& ae = c.autoencoder;
        a.get("input_size", ae.input_size);
        a.get("compression_factor", ae.compression_factor);
        a.get("codebook_size", ae.codebook_size);
        a.get("code_dim", ae.code_dim);
        a.get("channels", ae.channels);
        a.get("res_blocks", ae.res_blocks);
        a.get("norm_groups", ae.norm_groups);
        a.get("teacher_dim", ae.teacher_dim);
        auto dr = a.child("discriminator");
        std::string variant = variant_name(ae.discriminator.variant);
        dr.get("variant", variant);
        ae.discriminator.variant = parse_variant(variant);
        dr.get("base_channels", ae.discriminator.base_channels);
        dr.get("max_channels", ae.discriminator.max_channels);
        dr.get("patch_grid", ae.discriminator.patch_grid);
        dr.finish();
        a.finish();
    }
    {
        auto w = r.child("world_model");
        auto& wm = c.world_model;
        w.get("image_vocab", wm.image_vocab);
        w.get("text_vocab", wm.text_vocab);
        w.get("tokens_per_frame", wm.tokens_per_frame);
        w.get("depth", wm.depth);
        w.get("heads", wm.heads);
        w.get("model_dim", wm.model_dim);
        w.get("ffn_dim", wm.ffn_dim);
        w.get("context_length", wm.context_length);
        w.get("rope_theta", wm.rope_theta);
        w.get("norm_eps", wm.norm_eps);
        w.get("frozen_bfloat16", wm.frozen_bfloat16);
        auto l = w.child("lora");
        l.get("enabled", wm.lora.enabled);
        l.get("rank", wm.lora.rank);
        l.get("alpha", wm.lora.alpha);
        l.get("linear", wm.lora.linear);
        l.get("embedding", wm.lora.embedding);
        l.finish();
        w.finish();
    }
    {
        auto v = r.child("video_decoder");
        v.get("temporal_extent", c.inflation.temporal_extent);
        v.get("overrides", c.inflation.overrides);
        v.finish();
    }
    {
        auto t = r.child("train");
        read_training(t.child("tok"), c.tok);
        read_training(t.child("wm"), c.wm);
        read_training(t.child("vdec"), c.vdec);
        t.finish();
    }
    {
        auto s = r.child("sampling");
        s.get("top_k", c.sampling.top_k);
        std::string mode = c.sampling.structure_mode == StructureMode::kFree ? "free" : "forced";
        s.get("structure_mode", mode);
        c.sampling.structure_mode = parse_structure(mode);
        s.get("kv_cache", c.sampling.kv_cache);
        s.finish();
    }
    {
        auto m = r.child("metrics");
        auto& mc = c.metrics;
        m.get("cmmd_bandwidth", mc.cmmd_bandwidth);
        std::string est = mc.cmmd_estimator == MmdEstimator::kUnbiased ? "unbiased" : "biased";
        m.get("cmmd_estimator", est);
        mc.cmmd_estimator = parse_estimator(est);
        m.get("ssim_window", mc.ssim_window);
        m.get("ssim_sigma", mc.ssim_sigma);
        m.get("ssim_k1", mc.ssim_k1);
        m.get("ssim_k2", mc.ssim_k2);
        m.get("ms_ssim_weights", mc.ms_ssim_weights);
        m.get("frame_count", mc.frame_count);
        m.get("feature_seed", mc.feature_seed);
        m.finish();
    }
    {
        auto p = r.child("paths");
        p.get("tokenizer", c.paths.tokenizer);
        p.get("world_model", c.paths.world_model);
        p.get("video_decoder", c.paths.video_decoder);
        p.get("out", c.paths.out);
        p.finish();
    }
    r.finish();
}

void emit_schedule(YAML::Emitter& e, const ScheduleConfig& s) {
    e << YAML::Key << "schedule" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "warmup_steps" << YAML::Value << s.warmup_steps;
    e << YAML::Key << "peak_lr" << YAML::Value << s.peak_lr;
    e << YAML::Key << "decay_steps" << YAML::Value << s.decay_steps;
    e << YAML::Key << "final_lr" << YAML::Value << s.final_lr;
    e << YAML::Key << "total_steps" << YAML::Value << s.total_steps;
    e << YAML::EndMap;
}

void emit_training(YAML::Emitter& e, const char* name, const TrainingConfig& t) {
    e << YAML::Key << name << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "batch_size" << YAML::Value << t.batch_size;
    e << YAML::Key << "checkpoint_interval" << YAML::Value << t.checkpoint_interval;
    e << YAML::Key << "log_interval" << YAML::Value << t.log_interval;
    e << YAML::Key << "validation_interval" << YAML::Value << t.validation_interval;
    e << YAML::Key << "discriminator_lr_scale" << YAML::Value << t.discriminator_lr_scale;
    emit_schedule(e, t.schedule);
    e << YAML::Key << "optimizer" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "beta1" << YAML::Value << t.optimizer.beta1;
    e << YAML::Key << "beta2" << YAML::Value << t.optimizer.beta2;
    e << YAML::Key << "eps" << YAML::Value << t.optimizer.eps;
    e << YAML::Key << "weight_decay" << YAML::Value << t.optimizer.weight_decay;
    e << YAML::Key << "no_decay" << YAML::Value << YAML::Flow << t.optimizer.no_decay;
    e << YAML::Key << "grad_clip" << YAML::Value << t.optimizer.grad_clip;
    e << YAML::EndMap;
    const auto& w = t.loss;
    e << YAML::Key << "loss" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "lambda_l1" << YAML::Value << w.lambda_l1;
    e << YAML::Key << "lambda_l2" << YAML::Value << w.lambda_l2;
    e << YAML::Key << "lambda_perceptual" << YAML::Value << w.lambda_perceptual;
    e << YAML::Key << "lambda_codebook" << YAML::Value << w.lambda_codebook;
    e << YAML::Key << "lambda_ssl" << YAML::Value << w.lambda_ssl;
    e << YAML::Key << "lambda_generator" << YAML::Value << w.lambda_generator;
    e << YAML::Key << "beta" << YAML::Value << w.beta;
    e << YAML::Key << "adversarial_start_step" << YAML::Value << w.adversarial_start_step;
    e << YAML::EndMap;
    e << YAML::EndMap;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& yaml_text, const std::string& fallback_preset) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("config is not valid YAML: ") + e.what());
    }
    std::string preset = fallback_preset;
    if (root && root.IsMap() && root["preset"]) preset = root["preset"].as<std::string>();
    RunConfig c = preset_config(preset);
    apply_yaml(root, c);
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path, const std::string& fallback_preset) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), fallback_preset);
}

std::string RunConfig::to_yaml() const {
    YAML::Emitter e;
    e.SetDoublePrecision(17);
    e << YAML::BeginMap;
    e << YAML::Key << "preset" << YAML::Value << preset;
    e << YAML::Key << "stage" << YAML::Value << to_string(stage);
    e << YAML::Key << "seed" << YAML::Value << seed;

    e << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "manifest" << YAML::Value << data.manifest;
    e << YAML::Key << "target_fps" << YAML::Value << data.target_fps;
    e << YAML::Key << "image_fps" << YAML::Value << data.image_fps;
    e << YAML::Key << "scale" << YAML::Value << data.scale;
    e << YAML::Key << "crop" << YAML::Value << data.crop;
    e << YAML::Key << "workers" << YAML::Value << data.workers;
    e << YAML::Key << "initial_frames" << YAML::Value << data.initial_frames;
    e << YAML::Key << "predicted_frames" << YAML::Value << data.predicted_frames;
    e << YAML::Key << "prompt" << YAML::Value << YAML::DoubleQuoted << data.prompt;
    e << YAML::EndMap;

    const auto& ae = autoencoder;
    e << YAML::Key << "autoencoder" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "input_size" << YAML::Value << ae.input_size;
    e << YAML::Key << "compression_factor" << YAML::Value << ae.compression_factor;
    e << YAML::Key << "codebook_size" << YAML::Value << ae.codebook_size;
    e << YAML::Key << "code_dim" << YAML::Value << ae.code_dim;
    e << YAML::Key << "channels" << YAML::Value << YAML::Flow << ae.channels;
    e << YAML::Key << "res_blocks" << YAML::Value << ae.res_blocks;
    e << YAML::Key << "norm_groups" << YAML::Value << ae.norm_groups;
    e << YAML::Key << "teacher_dim" << YAML::Value << ae.teacher_dim;
    e << YAML::Key << "discriminator" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "variant" << YAML::Value << variant_name(ae.discriminator.variant);
    e << YAML::Key << "base_channels" << YAML::Value << ae.discriminator.base_channels;
    e << YAML::Key << "max_channels" << YAML::Value << ae.discriminator.max_channels;
    e << YAML::Key << "patch_grid" << YAML::Value << ae.discriminator.patch_grid;
    e << YAML::EndMap;
    e << YAML::EndMap;

    const auto& wmc = world_model;
    e << YAML::Key << "world_model" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "image_vocab" << YAML::Value << wmc.image_vocab;
    e << YAML::Key << "text_vocab" << YAML::Value << wmc.text_vocab;
    e << YAML::Key << "tokens_per_frame" << YAML::Value << wmc.tokens_per_frame;
    e << YAML::Key << "depth" << YAML::Value << wmc.depth;
    e << YAML::Key << "heads" << YAML::Value << wmc.heads;
    e << YAML::Key << "model_dim" << YAML::Value << wmc.model_dim;
    e << YAML::Key << "ffn_dim" << YAML::Value << wmc.ffn_dim;
    e << YAML::Key << "context_length" << YAML::Value << wmc.context_length;
    e << YAML::Key << "rope_theta" << YAML::Value << wmc.rope_theta;
    e << YAML::Key << "norm_eps" << YAML::Value << wmc.norm_eps;
    e << YAML::Key << "frozen_bfloat16" << YAML::Value << wmc.frozen_bfloat16;
    e << YAML::Key << "lora" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "enabled" << YAML::Value << wmc.lora.enabled;
    e << YAML::Key << "rank" << YAML::Value << wmc.lora.rank;
    e << YAML::Key << "alpha" << YAML::Value << wmc.lora.alpha;
    e << YAML::Key << "linear" << YAML::Value << wmc.lora.linear;
    e << YAML::Key << "embedding" << YAML::Value << wmc.lora.embedding;
    e << YAML::EndMap;
    e << YAML::EndMap;

    e << YAML::Key << "video_decoder" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "temporal_extent" << YAML::Value << inflation.temporal_extent;
    e << YAML::Key << "overrides" << YAML::Value << YAML::BeginMap;
    for (const auto& [k, v] : inflation.overrides) e << YAML::Key << k << YAML::Value << v;
    e << YAML::EndMap;
    e << YAML::EndMap;

    e << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
    emit_training(e, "tok", tok);
    emit_training(e, "wm", wm);
    emit_training(e, "vdec", vdec);
    e << YAML::EndMap;

    e << YAML::Key << "sampling" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "top_k" << YAML::Value << sampling.top_k;
    e << YAML::Key << "structure_mode" << YAML::Value
      << (sampling.structure_mode == StructureMode::kFree ? "free" : "forced");
    e << YAML::Key << "kv_cache" << YAML::Value << sampling.kv_cache;
    e << YAML::EndMap;

    e << YAML::Key << "metrics" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "cmmd_bandwidth" << YAML::Value << metrics.cmmd_bandwidth;
    e << YAML::Key << "cmmd_estimator" << YAML::Value
      << (metrics.cmmd_estimator == MmdEstimator::kUnbiased ? "unbiased" : "biased");
    e << YAML::Key << "ssim_window" << YAML::Value << metrics.ssim_window;
    e << YAML::Key << "ssim_sigma" << YAML::Value << metrics.ssim_sigma;
    e << YAML::Key << "ssim_k1" << YAML::Value << metrics.ssim_k1;
    e << YAML::Key << "ssim_k2" << YAML::Value << metrics.ssim_k2;
    e << YAML::Key << "ms_ssim_weights" << YAML::Value << YAML::Flow << metrics.ms_ssim_weights;
    e << YAML::Key << "frame_count" << YAML::Value << metrics.frame_count;
    e << YAML::Key << "feature_seed" << YAML::Value << metrics.feature_seed;
    e << YAML::EndMap;

    e << YAML::Key << "paths" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "tokenizer" << YAML::Value << paths.tokenizer;
    e << YAML::Key << "world_model" << YAML::Value << paths.world_model;
    e << YAML::Key << "video_decoder" << YAML::Value << paths.video_decoder;
    e << YAML::Key << "out" << YAML::Value << paths.out;
    e << YAML::EndMap;

    e << YAML::EndMap;
    return std::string(e.c_str()) + "\n";
}

std::string RunConfig::hash() const { return sha256_hex(to_yaml()); }

// --- hashing ---------------------------------------------------------------------------

namespace {

std::string hex(const unsigned char* data, unsigned len) {
    std::ostringstream out;
    for (unsigned i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(data[i]);
    return out.str();
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    return hex(digest, len);
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buffer[1 << 16];
    while (in) {
        in.read(buffer, sizeof(buffer));
        EVP_DigestUpdate(ctx, buffer, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    return hex(digest, len);
}

}  // namespace openviga
