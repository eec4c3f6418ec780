// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "openviga/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "openviga/checkpoint.hpp"
#include "openviga/errors.hpp"
#include "openviga/log.hpp"

namespace fs = std::filesystem;

namespace openviga::train {

namespace {

using Named = std::vector<std::pair<std::string, torch::Tensor>>;

Named named_parameters(const torch::nn::Module& module) {
    Named out;
    for (const auto& item : module.named_parameters(true)) out.emplace_back(item.key(), item.value());
    return out;
}

std::vector<torch::Tensor> grad_parameters(const torch::nn::Module& module) {
    std::vector<torch::Tensor> out;
    for (const auto& p : module.parameters(true)) {
        if (p.requires_grad()) out.push_back(p);
    }
    return out;
}

void clip(const std::vector<torch::Tensor>& params, double max_norm) {
    if (max_norm > 0.0 && !params.empty()) torch::nn::utils::clip_grad_norm_(params, max_norm);
}

void freeze(torch::nn::Module& module) {
    for (auto& p : module.parameters(true)) p.set_requires_grad(false);
    module.eval();
}

/// Values of a set of parameters at one point in time.
class Snapshot {
public:
    Snapshot(const torch::nn::Module& module, const std::vector<std::string>& names) {
        auto params = module.named_parameters(true);
        for (const auto& name : names) tensors_.emplace_back(name, params[name].detach().clone());
    }
    explicit Snapshot(const torch::nn::Module& module) {
        for (const auto& item : module.named_parameters(true)) {
            tensors_.emplace_back(item.key(), item.value().detach().clone());
        }
    }
    /// Name of the first parameter that no longer equals its snapshot.
    std::optional<std::string> first_changed(const torch::nn::Module& module) const {
        auto params = module.named_parameters(true);
        for (const auto& [name, value] : tensors_) {
            if (!torch::equal(params[name], value)) return name;
        }
        return std::nullopt;
    }
    std::size_t size() const { return tensors_.size(); }

private:
    std::vector<std::pair<std::string, torch::Tensor>> tensors_;
};

data::DatasetManifest load_manifest(const RunConfig& cfg) {
    if (cfg.data.manifest.empty()) throw ConfigError("data.manifest is not set");
    return data::DatasetManifest::load(cfg.data.manifest);
}

/// Sample `index` of an endless stream over `count` items, reshuffled per epoch.
std::size_t shuffled_index(std::uint64_t seed, std::size_t count, std::size_t index) {
    const std::size_t epoch = index / count;
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));
    std::shuffle(order.begin(), order.end(), rng);
    return order[index % count];
}

torch::Tensor image_batch(const data::SampleStream& stream, long step, int batch) {
    std::vector<data::Frame> frames;
    for (int i = 0; i < batch; ++i) {
        frames.push_back(stream.materialize(stream.at(static_cast<std::size_t>(step) * batch + i)).front());
    }
    return to_tensor(frames);
}

/// [B, 3 (channels), 3 (time), H, W] triplets.
torch::Tensor triplet_tensor(const std::vector<std::vector<data::Frame>>& triplets) {
    std::vector<torch::Tensor> items;
    for (const auto& t : triplets) items.push_back(to_tensor(t));  // [3 (time), 3, H, W]
    return torch::stack(items).permute({0, 2, 1, 3, 4}).contiguous();
}

torch::Tensor triplet_batch(const data::SampleStream& stream, long step, int batch) {
    std::vector<std::vector<data::Frame>> triplets;
    for (int i = 0; i < batch; ++i) {
        triplets.push_back(stream.materialize(stream.at(static_cast<std::size_t>(step) * batch + i)));
    }
    return triplet_tensor(triplets);
}

/// Quantized latents of every frame of a triplet batch, [B, d, 3, h, w].
torch::Tensor triplet_latents(vq::VQAutoencoder& tok, const torch::Tensor& x) {
    torch::NoGradGuard guard;
    const auto b = x.size(0);
    auto flat = x.permute({0, 2, 1, 3, 4}).reshape({b * 3, x.size(1), x.size(3), x.size(4)});
    auto z = tok->tokenize(flat).quantized;
    return z.reshape({b, 3, z.size(1), z.size(2), z.size(3)}).permute({0, 2, 1, 3, 4}).contiguous();
}

std::string autoencoder_signature(const AutoencoderConfig& a) {
    std::ostringstream s;
    s << "in" << a.input_size << "/f" << a.compression_factor << "/K" << a.codebook_size << "/d" << a.code_dim << "/ch";
    for (int c : a.channels) s << c << ',';
    s << "/rb" << a.res_blocks << "/g" << a.norm_groups << "/t" << a.teacher_dim << "/disc"
      << (a.discriminator.variant == DiscriminatorVariant::kOurs ? "ours" : "baseline") << ','
      << a.discriminator.base_channels << ',' << a.discriminator.max_channels << ',' << a.discriminator.patch_grid;
    return s.str();
}

std::string world_model_signature(const WorldModelConfig& w) {
    std::ostringstream s;
    s << "iv" << w.image_vocab << "/tv" << w.text_vocab << "/n" << w.tokens_per_frame << "/L" << w.depth << "/h"
      << w.heads << "/D" << w.model_dim << "/F" << w.ffn_dim << "/ctx" << w.context_length << "/theta" << w.rope_theta
      << "/bf16" << w.frozen_bfloat16 << "/lora" << w.lora.enabled << ',' << w.lora.rank << ',' << w.lora.alpha << ','
      << w.lora.linear << ',' << w.lora.embedding;
    return s.str();
}

std::string step_dir_name(long step) {
    std::ostringstream s;
    s << "step_" << std::setw(8) << std::setfill('0') << step;
    return s.str();
}

ckpt::Reader open_resume(const fs::path& dir, const RunConfig& cfg, const std::string& stage) {
    ckpt::Reader reader(dir);
    reader.manifest().require("stage", stage);
    reader.manifest().require("config_hash", cfg.hash());
    return reader;
}

void stamp(ckpt::Manifest& m, const RunConfig& cfg, const std::string& stage, long step) {
    m.set("stage", stage);
    m.set("step", std::to_string(step));
    m.set("seed", std::to_string(cfg.seed));
    m.set("config_hash", cfg.hash());
    m.set("autoencoder", autoencoder_signature(cfg.autoencoder));
}

std::vector<int32_t> prompt_tokens(const RunConfig& cfg) {
    wm::ByteCodec codec;
    if (cfg.world_model.text_vocab < codec.vocab_size() + 1) {
        throw ConfigError("world_model.text_vocab must hold the byte vocabulary plus the begin-of-sequence id");
    }
    return wm::frame_text_prompt(cfg.data.prompt, codec);
}

/// Records the effective configuration next to the run outputs.
void write_config(const RunConfig& cfg, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream(out_dir / "config.yaml") << cfg.to_yaml();
}

template <typename Step, typename Save>
long run_loop(const RunConfig& cfg, const TrainingConfig& tc, long step, const TrainOptions& options, Step&& one_step,
              Save&& save, StepLog& log, TrainResult& result, const std::function<void(long)>& validate) {
    const long stop = std::min(tc.schedule.total_steps, options.stop_after.value_or(tc.schedule.total_steps));
    fs::path last_good;
    while (step < stop) {
        StepRecord record;
        record.step = step;
        record.lr = lr_at(step, tc.schedule);
        try {
            one_step(step, record);
        } catch (const NumericalError& e) {
            log::error("step ", step, ": ", e.what(), "; last good checkpoint: ",
                       last_good.empty() ? std::string("none") : last_good.string());
            throw;
        }
        if (step % std::max(1L, tc.log_interval) == 0) log.write(record);
        if (options.on_step) options.on_step(record);
        result.log.push_back(record);
        ++step;
        if (tc.checkpoint_interval > 0 && step % tc.checkpoint_interval == 0 && step < stop) {
            last_good = save(options.out_dir / "ckpt" / step_dir_name(step), step);
        }
        if (tc.validation_interval > 0 && step % tc.validation_interval == 0) validate(step);
    }
    (void)cfg;
    return step;
}

}  // namespace

// --- schedule and optimizer ---------------------------------------------------------------

double lr_at(long step, const ScheduleConfig& s) {
    if (step < 0) throw ParameterError("lr_at: negative step");
    if (step <= s.warmup_steps) {
        if (s.warmup_steps == 0) return s.peak_lr;
        return s.peak_lr * (static_cast<double>(step) / static_cast<double>(s.warmup_steps));
    }
    if (step <= s.warmup_steps + s.decay_steps) {
        const double t = static_cast<double>(step - s.warmup_steps) / static_cast<double>(s.decay_steps);
        return s.final_lr + (s.peak_lr - s.final_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
    }
    return s.final_lr;
}

std::unique_ptr<torch::optim::AdamW> make_adamw(const Named& named, const OptimizerConfig& config, double lr) {
    std::vector<torch::Tensor> decay, no_decay;
    for (const auto& [name, p] : named) {
        if (!p.requires_grad()) continue;
        const bool excluded = std::any_of(config.no_decay.begin(), config.no_decay.end(),
                                          [&](const std::string& s) { return name.find(s) != std::string::npos; });
        (excluded ? no_decay : decay).push_back(p);
    }
    if (decay.empty() && no_decay.empty()) throw ConfigError("optimizer has no trainable parameters");
    auto options = torch::optim::AdamWOptions(lr)
                       .betas({config.beta1, config.beta2})
                       .eps(config.eps)
                       .weight_decay(config.weight_decay);
    std::vector<torch::optim::OptimizerParamGroup> groups;
    if (!decay.empty()) groups.emplace_back(decay, std::make_unique<torch::optim::AdamWOptions>(options));
    if (!no_decay.empty()) {
        auto plain = options;
        plain.weight_decay(0.0);
        groups.emplace_back(no_decay, std::make_unique<torch::optim::AdamWOptions>(plain));
    }
    return std::make_unique<torch::optim::AdamW>(std::move(groups), options);
}

void set_lr(torch::optim::Optimizer& optimizer, double lr) {
    for (auto& group : optimizer.param_groups()) group.options().set_lr(lr);
}

std::unique_ptr<loss::FeatureExtractor> make_perceptual(const RunConfig&) {
    return std::make_unique<loss::RandomConvFeatures>();
}

std::unique_ptr<loss::Teacher> make_teacher(const RunConfig& cfg) {
    return std::make_unique<loss::RandomPatchTeacher>(cfg.autoencoder.compression_factor, cfg.autoencoder.teacher_dim);
}

data::PipelineConfig pipeline_config(const RunConfig& cfg, double fps) {
    data::PipelineConfig p;
    p.target_fps = fps;
    p.preprocess.scale = cfg.data.scale;
    p.preprocess.crop = cfg.data.crop;
    p.workers = cfg.data.workers;
    return p;
}

// --- step log --------------------------------------------------------------------------------

StepLog::StepLog(const fs::path& path, std::vector<std::string> columns, bool append)
    : path_(path), columns_(std::move(columns)) {
    if (!path_.parent_path().empty()) fs::create_directories(path_.parent_path());
    if (append && fs::exists(path_)) return;
    std::ofstream out(path_);
    if (!out) throw IoError("cannot write " + path_.string());
    out << "step\tlr";
    for (const auto& c : columns_) out << '\t' << c;
    out << '\n';
}

void StepLog::write(const StepRecord& record) {
    std::ofstream out(path_, std::ios::app);
    out << std::setprecision(17) << record.step << '\t' << record.lr;
    for (const auto& c : columns_) {
        auto it = record.values.find(c);
        out << '\t';
        if (it == record.values.end()) {
            out << '-';
        } else {
            out << it->second;
        }
    }
    out << '\n';
}

std::vector<StepRecord> StepLog::read(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read step log " + path.string());
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    {
        std::istringstream h(line);
        std::string cell;
        while (std::getline(h, cell, '\t')) header.push_back(cell);
    }
    if (header.size() < 2 || header[0] != "step" || header[1] != "lr") throw IoError("malformed step log header");
    std::vector<StepRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        StepRecord r;
        for (std::size_t i = 0; std::getline(row, cell, '\t'); ++i) {
            if (i >= header.size()) throw IoError("step log row has too many cells");
            if (i == 0) {
                r.step = std::stol(cell);
            } else if (i == 1) {
                r.lr = std::stod(cell);
            } else if (cell != "-") {
                r.values[header[i]] = std::stod(cell);
            }
        }
        out.push_back(std::move(r));
    }
    return out;
}

// --- tokenizer ---------------------------------------------------------------------------------

TrainResult train_tokenizer(const RunConfig& cfg, const TrainOptions& options) {
    cfg.validate();
    const auto& tc = cfg.tok;
    const auto& w = tc.loss;
    const auto manifest = load_manifest(cfg);
    const auto samples = data::make_samples(manifest, data::Split::kTrain, pipeline_config(cfg, cfg.data.image_fps),
                                            data::image_window(), cfg.seed);
    if (samples.size() == 0) throw ConfigError("no training images in " + cfg.data.manifest);

    torch::manual_seed(cfg.seed);
    vq::VQAutoencoder tok(cfg.autoencoder);
    vq::PatchDiscriminator disc(cfg.autoencoder.discriminator, cfg.autoencoder.input_size);
    const auto phi = make_perceptual(cfg);
    const auto teacher = make_teacher(cfg);
    auto opt_g = make_adamw(named_parameters(*tok), tc.optimizer, 0.0);
    auto opt_d = make_adamw(named_parameters(*disc), tc.optimizer, 0.0);
    const auto g_params = grad_parameters(*tok);
    const auto d_params = grad_parameters(*disc);

    long step = 0;
    if (options.resume) {
        auto reader = open_resume(*options.resume, cfg, "tok");
        reader.load_module("tok", *tok);
        reader.load_module("disc", *disc);
        reader.load_optimizer("gen", *opt_g);
        reader.load_optimizer("disc", *opt_d);
        step = std::stol(reader.manifest().get("step"));
    }
    write_config(cfg, options.out_dir);

    std::vector<data::Frame> probe_frames;
    for (std::size_t i = 0; i < std::min<std::size_t>(16, samples.size()); ++i) {
        probe_frames.push_back(samples.materialize(samples.ordered()[i]).front());
    }
    const auto probe = to_tensor(probe_frames);
    auto probe_l1 = [&]() {
        torch::NoGradGuard guard;
        return item(loss::pixel_l1(tok->transcode(probe), probe));
    };

    auto save = [&](const fs::path& dir, long at) {
        ckpt::Writer writer;
        writer.add_module("tok", *tok);
        writer.add_module("disc", *disc);
        writer.add_optimizer("gen", *opt_g);
        writer.add_optimizer("disc", *opt_d);
        stamp(writer.manifest(), cfg, "tok", at);
        return writer.write(dir);
    };

    TrainResult result;
    result.metric_name = "probe_l1";
    result.initial_metric = probe_l1();
    log::info("tokenizer: ", samples.size(), " training images, step ", step, ", probe L1 ", result.initial_metric);

    StepLog log(options.out_dir / "train_log.tsv",
                {"total", "l1", "l2", "perceptual", "codebook", "ssl", "generator", "disc", "adversarial"},
                options.resume.has_value());
    StepLog val_log(options.out_dir / "val_log.tsv", {"probe_l1", "probe_psnr"}, options.resume.has_value());

    auto one_step = [&](long s, StepRecord& record) {
        set_lr(*opt_g, record.lr);
        set_lr(*opt_d, record.lr * tc.discriminator_lr_scale);
        const auto x = image_batch(samples, s, tc.batch_size);
        const auto act = loss::active_terms(w, s);
        auto enc = tok->tokenize(x);
        auto x_hat = tok->decode(enc.z_st);
        auto rec = loss::reconstruction_terms(x_hat, x, w, phi.get());
        loss::LossComponents c;
        c.reconstruction = rec.total;
        if (act.codebook) c.codebook = loss::codebook_loss(enc.quantized, enc.z_tilde, w.beta);
        if (act.ssl) c.ssl = loss::ssl_loss(tok->adapt(enc.z_st), teacher->features(x));
        if (act.generator) c.generator = loss::generator_loss(disc(x_hat));
        auto total = loss::total_loss(c, w, s);
        opt_g->zero_grad();
        total.backward();
        clip(g_params, tc.optimizer.grad_clip);
        opt_g->step();

        record.values["total"] = item(total);
        record.values["l1"] = item(rec.l1);
        record.values["l2"] = item(rec.l2);
        if (rec.perceptual.defined()) record.values["perceptual"] = item(rec.perceptual);
        if (c.codebook.defined()) record.values["codebook"] = item(c.codebook);
        if (c.ssl.defined()) record.values["ssl"] = item(c.ssl);
        if (c.generator.defined()) record.values["generator"] = item(c.generator);
        record.values["adversarial"] = act.generator ? 1.0 : 0.0;

        if (act.generator) {
            opt_d->zero_grad();
            auto d_loss = loss::discriminator_loss(disc(x), disc(x_hat.detach()));
            if (!std::isfinite(item(d_loss))) throw NumericalError("discriminator loss is not finite");
            d_loss.backward();
            clip(d_params, tc.optimizer.grad_clip);
            opt_d->step();
            record.values["disc"] = item(d_loss);
        }
    };
    auto validate = [&](long s) {
        torch::NoGradGuard guard;
        const auto rec = to_frames(tok->transcode(probe));
        StepRecord r;
        r.step = s;
        r.lr = lr_at(s, tc.schedule);
        r.values["probe_l1"] = probe_l1();
        r.values["probe_psnr"] = metrics::batch_mean(std::span<const data::Frame>(rec), probe_frames,
                                                     [](const auto& a, const auto& b) { return metrics::psnr(a, b); });
        val_log.write(r);
        log::info("tokenizer step ", s, ": probe L1 ", r.values["probe_l1"], ", PSNR ", r.values["probe_psnr"]);
    };

    tok->train();
    disc->train();
    step = run_loop(cfg, tc, step, options, one_step, save, log, result, validate);
    result.steps = step;
    result.final_metric = probe_l1();
    result.checkpoint = save(options.out_dir / "checkpoint", step);
    log::info("tokenizer: stopped at step ", step, ", probe L1 ", result.final_metric);
    return result;
}

// --- model loading -----------------------------------------------------------------------------

vq::VQAutoencoder load_tokenizer(const RunConfig& cfg, const fs::path& checkpoint) {
    if (checkpoint.empty()) throw ConfigError("no tokenizer checkpoint given (paths.tokenizer)");
    ckpt::Reader reader(checkpoint);
    reader.manifest().require("autoencoder", autoencoder_signature(cfg.autoencoder));
    vq::VQAutoencoder tok(cfg.autoencoder);
    reader.load_module("tok", *tok);
    return tok;
}

wm::WorldModel load_world_model(const RunConfig& cfg, const fs::path& checkpoint) {
    if (checkpoint.empty()) throw ConfigError("no world-model checkpoint given (paths.world_model)");
    ckpt::Reader reader(checkpoint);
    reader.manifest().require("world_model", world_model_signature(cfg.world_model));
    wm::WorldModel model(cfg.world_model);
    reader.load_module("wm", *model);
    return model;
}

vdec::VideoDecoder load_video_decoder(const RunConfig& cfg, const vq::VQAutoencoder& tok, const fs::path& checkpoint) {
    const auto spec = vdec::InflationSpec::from_config(cfg.inflation);
    vdec::VideoDecoder model(tok->decoder, cfg.autoencoder, spec);
    if (checkpoint.empty()) {
        log::warn("no video-decoder checkpoint; using the inflated tokenizer decoder");
        return model;
    }
    ckpt::Reader reader(checkpoint);
    reader.manifest().require("autoencoder", autoencoder_signature(cfg.autoencoder));
    reader.load_module("vdec", *model);
    return model;
}

Pipeline load_pipeline(const RunConfig& cfg) {
    Pipeline p;
    p.tok = load_tokenizer(cfg, cfg.paths.tokenizer);
    p.wm = load_world_model(cfg, cfg.paths.world_model);
    p.vdec = load_video_decoder(cfg, p.tok, cfg.paths.video_decoder);
    freeze(*p.tok);
    freeze(*p.wm);
    freeze(*p.vdec);
    p.checkpoint_hashes["tok"] = ckpt::module_hash(*p.tok);
    p.checkpoint_hashes["wm"] = ckpt::module_hash(*p.wm);
    p.checkpoint_hashes["vdec"] = ckpt::module_hash(*p.vdec);
    return p;
}

// --- world model -------------------------------------------------------------------------------

namespace {

/// Framed image-token sequences of every (T+N)-frame window of a split, [S, L].
torch::Tensor tokenize_windows(const RunConfig& cfg, vq::VQAutoencoder& tok, const data::DatasetManifest& manifest,
                               data::Split split) {
    const auto stream = data::make_samples(manifest, split, pipeline_config(cfg, cfg.data.target_fps),
                                           data::video_window(cfg.data.initial_frames, cfg.data.predicted_frames),
                                           cfg.seed);
    std::vector<torch::Tensor> rows;
    for (const auto& ref : stream.ordered()) {
        const auto frames = stream.materialize(ref);
        const auto grids = tok->index_frames(frames);
        const auto framed = wm::frame_indices(grids);
        rows.push_back(torch::tensor(std::vector<int64_t>(framed.begin(), framed.end()), torch::kInt64));
    }
    if (rows.empty()) return {};
    return torch::stack(rows);
}

}  // namespace

TrainResult train_world_model(const RunConfig& cfg, const TrainOptions& options) {
    cfg.validate();
    const auto& tc = cfg.wm;
    const auto manifest = load_manifest(cfg);
    auto tok = load_tokenizer(cfg, cfg.paths.tokenizer);
    freeze(*tok);
    const auto text = prompt_tokens(cfg);

    const auto train_seqs = tokenize_windows(cfg, tok, manifest, data::Split::kTrain);
    if (!train_seqs.defined()) throw ConfigError("no training windows of " +
                                                 std::to_string(cfg.data.initial_frames + cfg.data.predicted_frames) +
                                                 " frames in " + cfg.data.manifest);
    auto probe_seqs = tokenize_windows(cfg, tok, manifest, data::Split::kVal);
    if (!probe_seqs.defined()) {
        log::warn("world model: no validation windows, accuracy is measured on training windows");
        probe_seqs = train_seqs;
    }
    const auto count = static_cast<std::size_t>(train_seqs.size(0));

    torch::manual_seed(cfg.seed);
    wm::WorldModel model(cfg.world_model);
    const Snapshot frozen(*model, model->frozen_parameter_names());
    Named trainable;
    for (const auto& item : model->named_parameters(true)) {
        if (item.value().requires_grad()) trainable.emplace_back(item.key(), item.value());
    }
    auto opt = make_adamw(trainable, tc.optimizer, 0.0);
    const auto params = model->trainable_parameters();

    long step = 0;
    if (options.resume) {
        auto reader = open_resume(*options.resume, cfg, "wm");
        reader.load_module("wm", *model);
        reader.load_optimizer("wm", *opt);
        step = std::stol(reader.manifest().get("step"));
    }
    write_config(cfg, options.out_dir);

    auto accuracy = [&]() {
        torch::NoGradGuard guard;
        double correct = 0.0;
        const auto n = probe_seqs.size(0);
        for (int64_t i = 0; i < n; i += tc.batch_size) {
            const auto batch = probe_seqs.slice(0, i, std::min<int64_t>(n, i + tc.batch_size));
            correct += wm::top1_accuracy(model->image_logits(text, batch), batch) * batch.numel();
        }
        return correct / static_cast<double>(probe_seqs.numel());
    };
    auto save = [&](const fs::path& dir, long at) {
        ckpt::Writer writer;
        writer.add_module("wm", *model);
        writer.add_optimizer("wm", *opt);
        stamp(writer.manifest(), cfg, "wm", at);
        writer.manifest().set("world_model", world_model_signature(cfg.world_model));
        writer.manifest().set("tokenizer", ckpt::module_hash(*tok));
        return writer.write(dir);
    };

    TrainResult result;
    result.metric_name = "top1_accuracy";
    result.initial_metric = accuracy();
    const auto report = model->parameter_report();
    log::info("world model: ", count, " training sequences of ", train_seqs.size(1), " tokens, ", report.trainable,
              " of ", report.total, " parameters trainable, accuracy ", result.initial_metric);

    StepLog log(options.out_dir / "train_log.tsv", {"loss", "accuracy"}, options.resume.has_value());
    StepLog val_log(options.out_dir / "val_log.tsv", {"accuracy"}, options.resume.has_value());

    auto one_step = [&](long s, StepRecord& record) {
        set_lr(*opt, record.lr);
        std::vector<int64_t> idx;
        for (int i = 0; i < tc.batch_size; ++i) {
            idx.push_back(static_cast<int64_t>(
                shuffled_index(cfg.seed, count, static_cast<std::size_t>(s) * tc.batch_size + i)));
        }
        const auto batch = train_seqs.index_select(0, torch::tensor(idx, torch::kInt64));
        const auto logits = model->image_logits(text, batch);
        auto loss = wm::wm_ce_loss(logits, batch);
        const double value = item(loss);
        if (!std::isfinite(value)) throw NumericalError("world-model cross entropy is not finite");
        opt->zero_grad();
        loss.backward();
        clip(params, tc.optimizer.grad_clip);
        opt->step();
        if (auto moved = frozen.first_changed(*model)) {
            throw NumericalError("frozen world-model parameter '" + *moved + "' changed at step " + std::to_string(s));
        }
        record.values["loss"] = value;
        record.values["accuracy"] = wm::top1_accuracy(logits.detach(), batch);
    };
    auto validate = [&](long s) {
        StepRecord r;
        r.step = s;
        r.lr = lr_at(s, tc.schedule);
        r.values["accuracy"] = accuracy();
        val_log.write(r);
        log::info("world model step ", s, ": accuracy ", r.values["accuracy"]);
    };

    model->train();
    step = run_loop(cfg, tc, step, options, one_step, save, log, result, validate);
    result.steps = step;
    result.final_metric = accuracy();
    result.checkpoint = save(options.out_dir / "checkpoint", step);
    log::info("world model: stopped at step ", step, ", accuracy ", result.final_metric, " (chance ",
              1.0 / cfg.world_model.image_vocab, ")");
    return result;
}

// --- video decoder -------------------------------------------------------------------------------

TrainResult train_video_decoder(const RunConfig& cfg, const TrainOptions& options) {
    cfg.validate();
    const auto& tc = cfg.vdec;
    const auto& w = tc.loss;
    const auto manifest = load_manifest(cfg);
    const auto samples = data::make_samples(manifest, data::Split::kTrain, pipeline_config(cfg, cfg.data.target_fps),
                                            data::video3_window(), cfg.seed);
    if (samples.size() == 0) throw ConfigError("no three-frame training windows in " + cfg.data.manifest);

    auto tok = load_tokenizer(cfg, cfg.paths.tokenizer);
    freeze(*tok);
    const Snapshot tok_state(*tok);
    vq::PatchDiscriminator disc2d(cfg.autoencoder.discriminator, cfg.autoencoder.input_size);
    {
        ckpt::Reader reader(cfg.paths.tokenizer);
        const auto& modules = reader.manifest().get("modules");
        if (modules.find("disc") != std::string::npos) reader.load_module("disc", *disc2d);
    }

    const auto spec = vdec::InflationSpec::from_config(cfg.inflation);
    torch::manual_seed(cfg.seed);
    vdec::VideoDecoder model(tok->decoder, cfg.autoencoder, spec);
    auto disc = vdec::inflate_discriminator(disc2d, cfg.autoencoder, spec);
    const auto phi = make_perceptual(cfg);
    auto opt_g = make_adamw(named_parameters(*model), tc.optimizer, 0.0);
    auto opt_d = make_adamw(named_parameters(*disc), tc.optimizer, 0.0);
    const auto g_params = grad_parameters(*model);
    const auto d_params = grad_parameters(*disc);

    long step = 0;
    if (options.resume) {
        auto reader = open_resume(*options.resume, cfg, "vdec");
        reader.load_module("vdec", *model);
        reader.load_module("disc3d", *disc);
        reader.load_optimizer("gen", *opt_g);
        reader.load_optimizer("disc", *opt_d);
        step = std::stol(reader.manifest().get("step"));
    }
    write_config(cfg, options.out_dir);

    std::vector<std::vector<data::Frame>> probe_triplets;
    for (std::size_t i = 0; i < std::min<std::size_t>(8, samples.size()); ++i) {
        probe_triplets.push_back(samples.materialize(samples.ordered()[i]));
    }
    const auto probe = triplet_tensor(probe_triplets);
    const auto probe_latents = triplet_latents(tok, probe);
    auto center_l1 = [&]() {
        torch::NoGradGuard guard;
        return item(loss::pixel_l1(model->decode_center(probe_latents), probe.select(2, 1)));
    };
    auto save = [&](const fs::path& dir, long at) {
        ckpt::Writer writer;
        writer.add_module("vdec", *model);
        writer.add_module("disc3d", *disc);
        writer.add_optimizer("gen", *opt_g);
        writer.add_optimizer("disc", *opt_d);
        stamp(writer.manifest(), cfg, "vdec", at);
        writer.manifest().set("tokenizer", ckpt::module_hash(*tok));
        return writer.write(dir);
    };

    TrainResult result;
    result.metric_name = "center_l1";
    result.initial_metric = center_l1();
    log::info("video decoder: ", samples.size(), " training triplets, center-frame L1 ", result.initial_metric);

    StepLog log(options.out_dir / "train_log.tsv",
                {"total", "reconstruction", "center_l1", "generator", "disc", "adversarial"},
                options.resume.has_value());
    StepLog val_log(options.out_dir / "val_log.tsv", {"center_l1"}, options.resume.has_value());

    auto one_step = [&](long s, StepRecord& record) {
        set_lr(*opt_g, record.lr);
        set_lr(*opt_d, record.lr * tc.discriminator_lr_scale);
        const auto x = triplet_batch(samples, s, tc.batch_size);
        const auto z = triplet_latents(tok, x);
        const bool adversarial = loss::active_terms(w, s).generator;
        auto x_hat = model(z);
        torch::Tensor fake_logits;
        if (adversarial) fake_logits = disc(x_hat);
        auto terms = vdec::vdec_loss(x_hat, x, w, phi.get(), fake_logits, s);
        opt_g->zero_grad();
        terms.total.backward();
        clip(g_params, tc.optimizer.grad_clip);
        opt_g->step();

        record.values["total"] = item(terms.total);
        record.values["reconstruction"] = item(terms.reconstruction);
        record.values["center_l1"] = item(loss::pixel_l1(x_hat.select(2, 1).detach(), x.select(2, 1)));
        if (terms.generator.defined()) record.values["generator"] = item(terms.generator);
        record.values["adversarial"] = adversarial ? 1.0 : 0.0;

        if (adversarial) {
            opt_d->zero_grad();
            auto d_loss = loss::discriminator_loss(disc(x), disc(x_hat.detach()));
            if (!std::isfinite(item(d_loss))) throw NumericalError("discriminator loss is not finite");
            d_loss.backward();
            clip(d_params, tc.optimizer.grad_clip);
            opt_d->step();
            record.values["disc"] = item(d_loss);
        }
        if (auto moved = tok_state.first_changed(*tok)) {
            throw NumericalError("frozen tokenizer parameter '" + *moved + "' changed at step " + std::to_string(s));
        }
    };
    auto validate = [&](long s) {
        StepRecord r;
        r.step = s;
        r.lr = lr_at(s, tc.schedule);
        r.values["center_l1"] = center_l1();
        val_log.write(r);
        log::info("video decoder step ", s, ": center-frame L1 ", r.values["center_l1"]);
    };

    model->train();
    disc->train();
    step = run_loop(cfg, tc, step, options, one_step, save, log, result, validate);
    result.steps = step;
    result.final_metric = center_l1();
    result.checkpoint = save(options.out_dir / "checkpoint", step);
    log::info("video decoder: stopped at step ", step, ", center-frame L1 ", result.final_metric);
    return result;
}

// --- generation -----------------------------------------------------------------------------------

VideoResult generate_video(const RunConfig& cfg, Pipeline& pipeline, const VideoRequest& request) {
    if (request.initial.empty()) throw ParameterError("generation needs at least one initial frame");
    torch::NoGradGuard guard;
    const auto initial = pipeline.tok->index_frames(request.initial);

    wm::GenerationRequest g;
    g.text = prompt_tokens(cfg);
    g.initial = initial;
    g.predicted_frames = request.predicted_frames;
    g.top_k = request.top_k;
    g.seed = request.seed;
    g.structure_mode = request.structure_mode;
    g.use_cache = cfg.sampling.kv_cache;
    auto generated = wm::generate(pipeline.wm, g);
    if (request.repair_budget >= 0 && generated.repairs > request.repair_budget) {
        throw StructuralError("generated sequence needed " + std::to_string(generated.repairs) +
                                  " repairs, budget is " + std::to_string(request.repair_budget),
                              -1);
    }

    std::vector<IndexGrid> all = initial;
    all.insert(all.end(), generated.grids.begin(), generated.grids.end());
    const auto latents = pipeline.tok->quantizer->lookup(to_index_tensor(all));
    std::vector<torch::Tensor> stream;
    for (int64_t i = 0; i < latents.size(0); ++i) stream.push_back(latents[i]);
    const auto decoded = vdec::stream_decode(pipeline.vdec, stream);

    VideoResult result;
    result.frames = to_frames(decoded.slice(0, static_cast<int64_t>(initial.size())));
    result.grids = std::move(generated.grids);
    result.repairs = generated.repairs;
    return result;
}

ExportedVideo generate_and_export(const RunConfig& cfg, Pipeline& pipeline, const VideoRequest& request,
                                  const fs::path& out_dir) {
    ExportedVideo out;
    out.result = generate_video(cfg, pipeline, request);
    out.files = data::export_frames(out_dir, out.result.frames);
    ckpt::Manifest m;
    m.set("config_hash", cfg.hash());
    m.set("seed", std::to_string(request.seed));
    m.set("top_k", std::to_string(request.top_k));
    m.set("structure_mode", request.structure_mode == StructureMode::kForced ? "forced" : "free");
    m.set("initial_frames", std::to_string(request.initial.size()));
    m.set("predicted_frames", std::to_string(request.predicted_frames));
    m.set("repairs", std::to_string(out.result.repairs));
    for (const auto& [name, hash] : pipeline.checkpoint_hashes) m.set("checkpoint." + name, hash);
    for (const auto& file : out.files) m.set("frame." + file.filename().string(), sha256_file(file));
    out.manifest = out_dir / "run_manifest.txt";
    std::ofstream(out.manifest) << m.to_text();
    return out;
}

// --- evaluation ---------------------------------------------------------------------------------

namespace {

struct Extractors {
    loss::RandomConvFeatures lpips_features;
    metrics::RandomImageEmbedder image;
    metrics::RandomVideoEmbedder video;

    explicit Extractors(const RunConfig& cfg)
        : lpips_features(cfg.metrics.feature_seed),
          image(64, cfg.metrics.feature_seed),
          video(64, cfg.metrics.feature_seed + 1) {}
};

metrics::MetricReport make_report(const RunConfig& cfg, const std::string& metric, double value, long samples,
                                  const std::string& extractor, const std::string& variant) {
    metrics::MetricReport r;
    r.metric = metric;
    r.value = value;
    r.samples = samples;
    r.extractor = extractor;
    r.config_hash = cfg.hash().substr(0, 12);
    r.variant = variant;
    return r;
}

/// Reference and distributional image metrics of `fake` against `real`.
std::vector<metrics::MetricReport> image_metrics(const RunConfig& cfg, const Extractors& ex,
                                                 std::span<const data::Frame> fake, std::span<const data::Frame> real,
                                                 const std::string& variant, std::optional<int> frame_count) {
    const auto ssim_opts = metrics::SsimOptions::from_config(cfg.metrics);
    const std::vector<double> lpips_weights(ex.lpips_features.layers().size(), 1.0);
    const long n = static_cast<long>(real.size());
    std::vector<metrics::MetricReport> out;
    out.push_back(make_report(cfg, "PSNR", metrics::batch_mean(fake, real, [](const auto& a, const auto& b) {
                                  return metrics::psnr(a, b);
                              }), n, "none", variant));
    out.push_back(make_report(cfg, "SSIM", metrics::batch_mean(fake, real, [&](const auto& a, const auto& b) {
                                  return metrics::ssim(a, b, ssim_opts);
                              }), n, "none", variant));
    const int side = std::min(real.front().height(), real.front().width());
    if (side >= metrics::ms_ssim_min_size(static_cast<int>(cfg.metrics.ms_ssim_weights.size()), ssim_opts.window)) {
        out.push_back(make_report(cfg, "MS-SSIM", metrics::batch_mean(fake, real, [&](const auto& a, const auto& b) {
                                      return metrics::ms_ssim(a, b, cfg.metrics.ms_ssim_weights, ssim_opts);
                                  }), n, "none", variant));
    } else {
        log::warn("MS-SSIM skipped: frames of side ", side, " are too small for ", cfg.metrics.ms_ssim_weights.size(),
                  " scales");
    }
    out.push_back(make_report(cfg, "LPIPS", metrics::batch_mean(fake, real, [&](const auto& a, const auto& b) {
                                  return metrics::lpips(a, b, ex.lpips_features, lpips_weights);
                              }), n, ex.lpips_features.name(), variant));
    const auto fa = metrics::embed_frames(ex.image, fake);
    const auto ra = metrics::embed_frames(ex.image, real);
    auto fid = make_report(cfg, "FID", metrics::fid(fa, ra), n, ex.image.name(), variant);
    fid.frame_count = frame_count;
    out.push_back(fid);
    auto cmmd = make_report(cfg, "CMMD", metrics::cmmd(fa, ra, cfg.metrics.cmmd_bandwidth, cfg.metrics.cmmd_estimator),
                            n, ex.image.name(), variant);
    cmmd.frame_count = frame_count;
    out.push_back(cmmd);
    return out;
}

std::vector<data::Frame> validation_images(const RunConfig& cfg, std::size_t limit) {
    const auto manifest = load_manifest(cfg);
    auto stream = data::make_samples(manifest, data::Split::kVal, pipeline_config(cfg, cfg.data.image_fps),
                                     data::image_window(), cfg.seed);
    if (stream.size() == 0) {
        log::warn("no validation images, using training images");
        stream = data::make_samples(manifest, data::Split::kTrain, pipeline_config(cfg, cfg.data.image_fps),
                                    data::image_window(), cfg.seed);
    }
    std::vector<data::Frame> frames;
    for (const auto& ref : stream.ordered()) {
        if (frames.size() >= limit) break;
        frames.push_back(stream.materialize(ref).front());
    }
    if (frames.empty()) throw ConfigError("no images to evaluate in " + cfg.data.manifest);
    return frames;
}

}  // namespace

std::vector<metrics::MetricReport> evaluate_transcoding(const RunConfig& cfg, vq::VQAutoencoder& tok,
                                                        std::span<const data::Frame> frames,
                                                        const std::string& variant) {
    torch::NoGradGuard guard;
    const Extractors ex(cfg);
    std::vector<data::Frame> rec;
    for (std::size_t i = 0; i < frames.size(); i += 32) {
        const auto chunk = frames.subspan(i, std::min<std::size_t>(32, frames.size() - i));
        const auto out = to_frames(tok->transcode(to_tensor(chunk)));
        rec.insert(rec.end(), out.begin(), out.end());
    }
    return image_metrics(cfg, ex, rec, frames, variant, std::nullopt);
}

std::vector<metrics::MetricReport> evaluate(const RunConfig& cfg, Pipeline& pipeline, const EvalOptions& options) {
    const int t = cfg.data.initial_frames;
    const int n = cfg.data.predicted_frames;
    const auto manifest = load_manifest(cfg);
    auto windows = data::make_samples(manifest, data::Split::kVal, pipeline_config(cfg, cfg.data.target_fps),
                                      data::video_window(t, n), cfg.seed);
    if (windows.size() == 0) {
        log::warn("no validation windows, evaluating on training windows");
        windows = data::make_samples(manifest, data::Split::kTrain, pipeline_config(cfg, cfg.data.target_fps),
                                     data::video_window(t, n), cfg.seed);
    }
    if (windows.size() == 0) throw ConfigError("no evaluation windows of " + std::to_string(t + n) + " frames");
    std::vector<std::vector<data::Frame>> real_clips;
    for (const auto& ref : windows.ordered()) {
        if (static_cast<int>(real_clips.size()) >= options.max_clips) break;
        real_clips.push_back(windows.materialize(ref));
    }

    const Extractors ex(cfg);
    const auto ks = options.top_ks.empty() ? std::vector<int>{cfg.sampling.top_k} : options.top_ks;
    std::vector<metrics::MetricReport> reports;
    for (int k : ks) {
        std::vector<std::vector<data::Frame>> fake_clips, truth_clips;
        std::vector<data::Frame> fake_frames, truth_frames;
        long repairs = 0;
        for (std::size_t i = 0; i < real_clips.size(); ++i) {
            VideoRequest request;
            request.initial.assign(real_clips[i].begin(), real_clips[i].begin() + t);
            request.predicted_frames = n;
            request.top_k = k;
            request.seed = cfg.seed + i;
            request.structure_mode = cfg.sampling.structure_mode;
            auto video = generate_video(cfg, pipeline, request);
            repairs += video.repairs;
            std::vector<data::Frame> truth(real_clips[i].begin() + t, real_clips[i].end());
            fake_frames.insert(fake_frames.end(), video.frames.begin(), video.frames.end());
            truth_frames.insert(truth_frames.end(), truth.begin(), truth.end());
            fake_clips.push_back(std::move(video.frames));
            truth_clips.push_back(std::move(truth));
        }
        auto block = image_metrics(cfg, ex, fake_frames, truth_frames, options.variant, n);
        if (fake_clips.size() >= 2) {
            auto fvd = make_report(cfg, "FVD", metrics::fvd(fake_clips, truth_clips, ex.video, n),
                                   static_cast<long>(fake_clips.size()), ex.video.name(), options.variant);
            fvd.frame_count = n;
            block.push_back(fvd);
        } else {
            log::warn("FVD skipped: it needs at least 2 clips, have ", fake_clips.size());
        }
        for (auto& r : block) {
            r.top_k = k;
            reports.push_back(r);
        }
        log::info("evaluate top-k ", k, ": ", fake_clips.size(), " clips, ", repairs, " structure repairs");
    }
    if (options.transcoding) {
        std::vector<data::Frame> frames;
        for (const auto& clip : real_clips) frames.insert(frames.end(), clip.begin() + t, clip.end());
        auto block = evaluate_transcoding(cfg, pipeline.tok, frames, "tok+dec");
        reports.insert(reports.end(), block.begin(), block.end());
    }
    return reports;
}

// --- sweeps ---------------------------------------------------------------------------------------

SweepAxis parse_sweep_axis(const std::string& name) {
    if (name == "top-k" || name == "topk") return SweepAxis::kTopK;
    if (name == "loss") return SweepAxis::kLossToggles;
    if (name == "discriminator") return SweepAxis::kDiscriminator;
    throw ConfigError("unknown sweep axis '" + name + "' (expected top-k, loss or discriminator)");
}

namespace {

/// Shrinks a schedule and its adversarial gate proportionally to `steps`.
void rescale(TrainingConfig& tc, long steps) {
    if (steps <= 0 || steps == tc.schedule.total_steps) return;
    const double f = static_cast<double>(steps) / static_cast<double>(tc.schedule.total_steps);
    tc.schedule.warmup_steps = std::lround(tc.schedule.warmup_steps * f);
    tc.schedule.decay_steps = std::max(1L, std::lround(tc.schedule.decay_steps * f));
    tc.schedule.total_steps = std::max(steps, tc.schedule.warmup_steps + tc.schedule.decay_steps);
    tc.loss.adversarial_start_step = std::lround(tc.loss.adversarial_start_step * f);
}

}  // namespace

SweepResult run_sweep(const RunConfig& cfg, const SweepOptions& options) {
    SweepResult result;
    fs::create_directories(options.out_dir);
    auto run_leg = [&](const std::string& leg, const std::function<std::vector<metrics::MetricReport>()>& body) {
        result.legs.push_back(leg);
        try {
            auto reports = body();
            result.reports.insert(result.reports.end(), reports.begin(), reports.end());
        } catch (const std::exception& e) {
            log::error("sweep leg ", leg, " failed: ", e.what());
            result.failures[leg] = e.what();
        }
    };

    std::string axis_name;
    switch (options.axis) {
        case SweepAxis::kTopK: {
            axis_name = "top-k";
            auto pipeline = load_pipeline(cfg);
            for (int k : options.top_ks) {
                run_leg("top_k=" + std::to_string(k), [&] {
                    EvalOptions eval;
                    eval.max_clips = options.max_clips;
                    eval.transcoding = false;
                    eval.top_ks = {std::min(k, cfg.world_model.image_vocab)};
                    auto reports = evaluate(cfg, pipeline, eval);
                    for (auto& r : reports) r.top_k = k;
                    return reports;
                });
            }
            break;
        }
        case SweepAxis::kLossToggles:
        case SweepAxis::kDiscriminator: {
            std::vector<std::pair<std::string, RunConfig>> legs;
            if (options.axis == SweepAxis::kLossToggles) {
                axis_name = "loss";
                legs.emplace_back("full", cfg);
                const std::pair<const char*, LossTerm> toggles[] = {{"no-ssl", LossTerm::kSsl},
                                                                    {"no-perceptual", LossTerm::kPerceptual},
                                                                    {"no-l2", LossTerm::kL2},
                                                                    {"no-g", LossTerm::kGenerator}};
                for (const auto& [name, term] : toggles) {
                    auto leg = cfg;
                    leg.tok.loss = cfg.tok.loss.without(term);
                    legs.emplace_back(name, leg);
                }
            } else {
                axis_name = "discriminator";
                for (auto variant : {DiscriminatorVariant::kBaseline, DiscriminatorVariant::kOurs}) {
                    auto leg = cfg;
                    leg.autoencoder.discriminator.variant = variant;
                    legs.emplace_back(variant == DiscriminatorVariant::kOurs ? "ours" : "baseline", leg);
                }
            }
            const auto frames = validation_images(cfg, 64);
            for (auto& [name, leg] : legs) {
                leg.stage = Stage::kTokenizer;
                rescale(leg.tok, options.leg_steps);
                run_leg(name, [&, name = name, leg = leg] {
                    TrainOptions train;
                    train.out_dir = options.out_dir / name;
                    auto trained = train_tokenizer(leg, train);
                    auto tok = load_tokenizer(leg, trained.checkpoint);
                    freeze(*tok);
                    return evaluate_transcoding(leg, tok, frames, name);
                });
            }
            break;
        }
    }

    result.report_path = options.out_dir / "sweep_report.txt";
    std::vector<std::string> header = {"axis=" + axis_name, "config=" + cfg.hash(),
                                       "legs=" + std::to_string(result.legs.size()),
                                       "failed=" + std::to_string(result.failures.size())};
    for (const auto& [leg, message] : result.failures) header.push_back("failure " + leg + ": " + message);
    metrics::write_report(result.report_path, result.reports, header);
    return result;
}

}  // namespace openviga::train
