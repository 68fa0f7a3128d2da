#include "demark/cli.hpp"

#include "demark/checkpoint.hpp"
#include "demark/errors.hpp"
#include "demark/image.hpp"
#include "demark/image_io.hpp"
#include "demark/kvconfig.hpp"
#include "demark/losses.hpp"
#include "demark/metrics.hpp"
#include "demark/reconstruct.hpp"
#include "demark/synth/generate.hpp"
#include "demark/train/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;

namespace demark {

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<uint64_t> seed;
    bool verbose = false;
};

void add_common(CLI::App* cmd, CommonArgs& c) {
    cmd->add_option("--config", c.config_path, "key = value config file");
    cmd->add_option("--set", c.overrides, "config override key=value (repeatable)")
        ->take_all();
    cmd->add_option("--seed", c.seed, "seed override (sets gen.seed and train.seed)");
    cmd->add_flag("-v,--verbose", c.verbose, "verbose output");
}

KvConfig resolve_config(const CommonArgs& c) {
    KvConfig cfg;
    if (!c.config_path.empty()) cfg = KvConfig::from_file(c.config_path);
    for (const auto& kv : c.overrides) cfg.apply_override(kv);
    if (c.seed) {
        cfg.set("gen.seed", std::to_string(*c.seed));
        cfg.set("train.seed", std::to_string(*c.seed));
    }
    if (const char* dev = std::getenv("DEMARK_DEVICE"); dev && *dev)
        cfg.set("train.device", dev);
    cfg.check_known(known_config_keys());
    std::cout << "# effective config\n" << cfg.render() << "# ---\n";
    return cfg;
}

int cmd_generate(const CommonArgs& common, const std::string& backgrounds,
                 const std::string& out, int64_t count) {
    KvConfig cfg = resolve_config(common);
    if (count < 0) throw ValidationError("generate: count must be >= 0");
    auto gen = synth::GeneratorConfig::from_config(cfg);
    const uint64_t seed = cfg.get_u64("gen.seed", 0);
    auto manifest = synth::generate_dataset(backgrounds, out, count, seed, gen);
    std::cout << "generated " << manifest.samples.size() << " samples in " << out << "\n";
    return 0;
}

int cmd_train(const CommonArgs& common, const std::string& resume_path) {
    KvConfig cfg = resolve_config(common);
    auto train_cfg = TrainConfig::from_config(cfg);
    NetConfig net = NetConfig::from_config(cfg);
    train_cfg.input_hw = net.input_hw;
    auto weights = LossWeights::from_config(cfg, net.num_mask_sides());
    std::optional<Trainer> trainer;
    if (!resume_path.empty()) {
        trainer.emplace(Trainer::resume(train_cfg, weights, resume_path, cfg.render()));
        std::cout << "resumed from " << resume_path << " at step " << trainer->step() << "\n";
    } else {
        trainer.emplace(train_cfg, net, weights, cfg.render());
    }
    fs::path final_ckpt = trainer->fit();
    std::cout << "final checkpoint: " << final_ckpt.string() << "\n";
    return 0;
}

std::vector<fs::path> collect_inputs(const fs::path& input) {
    std::vector<fs::path> files;
    if (fs::is_directory(input)) {
        fs::path dir = fs::is_directory(input / "corrupted") ? input / "corrupted" : input;
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_regular_file() && has_image_extension(entry.path()))
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw ValidationError("infer: no images in " + dir.string());
    } else if (fs::is_regular_file(input)) {
        files.push_back(input);
    } else {
        throw ValidationError("infer: input not found: " + input.string());
    }
    return files;
}

int cmd_infer(const CommonArgs& common, const std::string& checkpoint, const std::string& input,
              const std::string& out, std::optional<double> threshold, bool save_mask) {
    KvConfig cfg = resolve_config(common);
    auto [model, meta] = load_checkpoint(checkpoint);
    model->eval();

    MaskPolicy policy;
    if (threshold) {
        policy.mode = MaskMode::kThreshold;
        policy.threshold = *threshold;
    }
    auto files = collect_inputs(input);
    fs::create_directories(out);
    const int64_t batch_size = cfg.get_int("eval.batch_size", 4);
    for (size_t start = 0; start < files.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(files.size(), start + static_cast<size_t>(batch_size));
        std::vector<torch::Tensor> tensors;
        for (size_t i = start; i < end; ++i)
            tensors.push_back(to_tensor(read_image_rgb(files[i])));
        auto results = infer(model, torch::cat(tensors, 0), policy);
        for (size_t i = 0; i < results.size(); ++i) {
            const fs::path& src = files[start + i];
            fs::path dst = fs::path(out) / (src.stem().string() + ".png");
            write_png(dst, to_image_u8(results[i].final_image));
            if (save_mask)
                write_png(fs::path(out) / (src.stem().string() + "_mask.png"),
                          to_image_u8(results[i].predicted_mask));
        }
    }
    std::cout << "wrote " << files.size() << " images to " << out << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& checkpoint, const std::string& dataset,
             const std::string& out) {
    KvConfig cfg = resolve_config(common);
    auto [model, meta] = load_checkpoint(checkpoint);
    model->eval();
    auto opts = EvalOptions::from_config(cfg);
    std::vector<SampleMetrics> rows;
    MetricReport report = evaluate(model, dataset, opts, &rows);

    fs::path report_path(out);
    if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
    std::ofstream rf(report_path);
    if (!rf) throw IoError("cannot write " + report_path.string());
    rf << report.to_json().dump(2) << "\n";
    fs::path csv_path = report_path.parent_path() / "per_sample.csv";
    write_per_sample_csv(csv_path, rows);

    std::cout << report.to_json().dump() << "\n";
    std::cout << "report: " << report_path.string() << " per-sample: " << csv_path.string() << "\n";
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"demark: watermark synthesis, removal training, inference, evaluation"};
    app.require_subcommand(1);

    CommonArgs cg, ct, ci, ce;

    auto* gen = app.add_subcommand("generate", "synthesize a watermarked dataset");
    std::string backgrounds, gen_out;
    int64_t count = 0;
    gen->add_option("--backgrounds", backgrounds, "background image directory")->required();
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--count", count, "number of samples")->required();
    add_common(gen, cg);

    auto* train = app.add_subcommand("train", "train the AdvancedUnet");
    std::string resume_path;
    train->add_option("--resume", resume_path, "checkpoint to resume from");
    add_common(train, ct);

    auto* inf = app.add_subcommand("infer", "remove watermarks from images");
    std::string ckpt, input, infer_out;
    std::optional<double> threshold;
    bool save_mask = false;
    inf->add_option("--checkpoint", ckpt, "model checkpoint")->required();
    inf->add_option("--input", input, "image file or directory")->required();
    inf->add_option("--out", infer_out, "output directory")->required();
    inf->add_option("--mask-threshold", threshold, "binarize the predicted mask at this value");
    inf->add_flag("--save-mask", save_mask, "also write predicted masks");
    add_common(inf, ci);

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string eval_ckpt, dataset, report_out = "report.json";
    ev->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    ev->add_option("--dataset", dataset, "generated dataset directory")->required();
    ev->add_option("--out", report_out, "report JSON path");
    add_common(ev, ce);

    // CLI11 wants argv-style; it parses in reverse
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back(); // drop program name

    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_generate(cg, backgrounds, gen_out, count);
        if (train->parsed()) return cmd_train(ct, resume_path);
        if (inf->parsed()) return cmd_infer(ci, ckpt, input, infer_out, threshold, save_mask);
        if (ev->parsed()) return cmd_eval(ce, eval_ckpt, dataset, report_out);
        std::cerr << "error: validation: no subcommand\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: validation: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: runtime: " << e.what() << "\n";
        return 2;
    }
}

} // namespace demark
