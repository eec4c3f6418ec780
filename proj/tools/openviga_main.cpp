// Copyright 2026 The OpenViGA-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "openviga/config.hpp"
#include "openviga/data_pipeline.hpp"
#include "openviga/errors.hpp"
#include "openviga/eval_metrics.hpp"
#include "openviga/log.hpp"
#include "openviga/orchestrator.hpp"

namespace fs = std::filesystem;
using namespace openviga;

namespace {

struct Common {
    std::string config;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::string out = "runs";
    std::string manifest;
    std::string tokenizer;
    std::string world_model;
    std::string video_decoder;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "YAML run configuration");
    cmd->add_option("--preset", c.preset, "Base preset")->check(CLI::IsMember({"paper-scale", "desk-scale"}));
    cmd->add_option("--seed", c.seed, "Random seed");
    cmd->add_option("--out", c.out, "Output directory");
    cmd->add_option("--manifest", c.manifest, "Dataset manifest (overrides data.manifest)");
    cmd->add_option("--tokenizer", c.tokenizer, "Tokenizer checkpoint directory");
    cmd->add_option("--world-model", c.world_model, "World-model checkpoint directory");
    cmd->add_option("--video-decoder", c.video_decoder, "Video-decoder checkpoint directory");
    cmd->add_flag("--quiet", c.quiet, "Only log warnings and errors");
}

RunConfig resolve(const Common& c, Stage stage) {
    const std::string preset = c.preset.empty() ? "desk-scale" : c.preset;
    RunConfig cfg = c.config.empty() ? RunConfig::preset_config(preset) : RunConfig::load(c.config, preset);
    cfg.stage = stage;
    if (c.seed) cfg.seed = *c.seed;
    if (!c.manifest.empty()) cfg.data.manifest = c.manifest;
    if (!c.tokenizer.empty()) cfg.paths.tokenizer = c.tokenizer;
    if (!c.world_model.empty()) cfg.paths.world_model = c.world_model;
    if (!c.video_decoder.empty()) cfg.paths.video_decoder = c.video_decoder;
    cfg.validate();
    return cfg;
}

StructureMode parse_structure(const std::string& s) {
    if (s == "free") return StructureMode::kFree;
    if (s == "forced") return StructureMode::kForced;
    throw ConfigError("structure mode must be free or forced");
}

void print_training(const train::TrainResult& r) {
    std::cout << "steps=" << r.steps << " checkpoint=" << r.checkpoint.string() << " " << r.metric_name
              << "_initial=" << r.initial_metric << " " << r.metric_name << "_final=" << r.final_metric << "\n";
}

int run(int argc, char** argv) {
    CLI::App app{"OpenViGA video generation pipeline"};
    app.require_subcommand(1);

    Common common;

    auto* pre = app.add_subcommand("preprocess", "Write a synthetic corpus or preprocess a dataset");
    add_common(pre, common);
    std::vector<std::string> synth;
    pre->add_option("--synth", synth, "Synthetic corpus: COUNT WIDTH HEIGHT FRAMES SEED")->expected(5);

    std::optional<long> steps;
    std::string resume;
    auto* tok = app.add_subcommand("train-tok", "Train the image tokenizer and decoder");
    auto* wmc = app.add_subcommand("train-wm", "Adapt the world model");
    auto* vdc = app.add_subcommand("train-vdec", "Train the video decoder");
    for (auto* cmd : {tok, wmc, vdc}) {
        add_common(cmd, common);
        cmd->add_option("--steps", steps, "Stop after this many steps");
        cmd->add_option("--resume", resume, "Checkpoint directory to resume from");
    }

    auto* gen = app.add_subcommand("generate", "Predict frames from initial frames");
    add_common(gen, common);
    std::vector<std::string> frames;
    std::optional<int> top_k;
    std::string structure = "free";
    long repair_budget = -1;
    std::optional<int> predicted;
    gen->add_option("--frames", frames, "Initial frame PNGs in temporal order")->required();
    gen->add_option("--top-k", top_k, "Top-k sampling parameter");
    gen->add_option("--structure", structure, "free or forced end-of-image placement");
    gen->add_option("--repair-budget", repair_budget, "Maximum structure repairs (negative: unlimited)");
    gen->add_option("--predict", predicted, "Number of frames to predict");

    auto* ev = app.add_subcommand("evaluate", "Score generated videos against validation clips");
    add_common(ev, common);
    int max_clips = 16;
    std::vector<int> eval_ks;
    ev->add_option("--max-clips", max_clips, "Validation windows to use");
    ev->add_option("--top-k", eval_ks, "Top-k values to evaluate");

    auto* sw = app.add_subcommand("sweep", "Run an ablation sweep");
    add_common(sw, common);
    std::string axis = "top-k";
    long leg_steps = 0;
    int sweep_clips = 8;
    sw->add_option("--axis", axis, "top-k, loss or discriminator");
    sw->add_option("--leg-steps", leg_steps, "Tokenizer steps per training leg");
    sw->add_option("--max-clips", sweep_clips, "Validation windows per top-k leg");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::kConfigError);
    }
    if (common.quiet) log::set_threshold(log::Level::kWarn);

    if (pre->parsed()) {
        if (!synth.empty()) {
            data::SynthSpec spec;
            spec.count = std::stoi(synth[0]);
            spec.width = std::stoi(synth[1]);
            spec.height = std::stoi(synth[2]);
            spec.frames = std::stoi(synth[3]);
            spec.seed = std::stoull(synth[4]);
            const auto manifest = data::generate_synthetic_corpus(common.out, spec);
            std::cout << "manifest=" << (fs::path(common.out) / "manifest.tsv").string()
                      << " clips=" << manifest.records.size() << "\n";
            return 0;
        }
        const auto cfg = resolve(common, Stage::kTokenizer);
        if (cfg.data.manifest.empty()) throw ConfigError("preprocess needs --synth or a dataset manifest");
        const auto manifest = data::DatasetManifest::load(cfg.data.manifest);
        long total = 0;
        for (auto split : {data::Split::kTrain, data::Split::kVal, data::Split::kTest}) {
            const auto clips = data::prepare_clips(manifest, split, train::pipeline_config(cfg, cfg.data.target_fps));
            for (const auto& clip : clips) {
                data::export_frames(fs::path(common.out) / data::to_string(split) / clip.clip_id, clip.frames);
                total += static_cast<long>(clip.frames.size());
            }
        }
        std::cout << "frames=" << total << " out=" << common.out << "\n";
        return 0;
    }

    train::TrainOptions options;
    options.out_dir = common.out;
    options.stop_after = steps;
    if (!resume.empty()) options.resume = resume;
    if (tok->parsed()) {
        print_training(train::train_tokenizer(resolve(common, Stage::kTokenizer), options));
        return 0;
    }
    if (wmc->parsed()) {
        print_training(train::train_world_model(resolve(common, Stage::kWorldModel), options));
        return 0;
    }
    if (vdc->parsed()) {
        print_training(train::train_video_decoder(resolve(common, Stage::kVideoDecoder), options));
        return 0;
    }

    if (gen->parsed()) {
        const auto cfg = resolve(common, Stage::kWorldModel);
        auto pipeline = train::load_pipeline(cfg);
        train::VideoRequest request;
        data::PreprocessConfig pc{cfg.data.scale, cfg.data.crop};
        for (const auto& f : frames) request.initial.push_back(data::preprocess_image(data::read_png(f), pc));
        request.predicted_frames = predicted.value_or(cfg.data.predicted_frames);
        request.top_k = top_k.value_or(cfg.sampling.top_k);
        request.seed = cfg.seed;
        request.structure_mode = parse_structure(structure);
        request.repair_budget = repair_budget;
        const auto out = train::generate_and_export(cfg, pipeline, request, common.out);
        std::cout << "frames=" << out.files.size() << " repairs=" << out.result.repairs
                  << " manifest=" << out.manifest.string() << "\n";
        return 0;
    }

    if (ev->parsed()) {
        const auto cfg = resolve(common, Stage::kWorldModel);
        auto pipeline = train::load_pipeline(cfg);
        train::EvalOptions eo;
        eo.max_clips = max_clips;
        eo.top_ks = eval_ks;
        const auto reports = train::evaluate(cfg, pipeline, eo);
        const auto path = fs::path(common.out) / "report.txt";
        fs::create_directories(common.out);
        metrics::write_report(path, reports, {"config=" + cfg.hash()});
        std::cout << metrics::summary_table(reports) << "report=" << path.string() << "\n";
        return 0;
    }

    if (sw->parsed()) {
        const auto cfg = resolve(common, Stage::kTokenizer);
        train::SweepOptions so;
        so.axis = train::parse_sweep_axis(axis);
        so.out_dir = common.out;
        so.leg_steps = leg_steps;
        so.max_clips = sweep_clips;
        const auto result = train::run_sweep(cfg, so);
        std::cout << metrics::summary_table(result.reports) << "legs=" << result.legs.size()
                  << " failed=" << result.failures.size() << " report=" << result.report_path.string() << "\n";
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        log::error(e.what());
        return static_cast<int>(e.exit_code());
    } catch (const std::exception& e) {
        log::error(e.what());
        return 1;
    }
}
