#include "demark/checkpoint.hpp"
#include "demark/errors.hpp"
#include "demark/image.hpp"
#include "demark/image_io.hpp"
#include "demark/synth/generate.hpp"
#include "demark/train/dataset.hpp"
#include "demark/train/trainer.hpp"

#include "oracles.hpp"

#include <fstream>

// doctest last so its CHECK macros win over the glog-style ones
// that the torch headers pull in
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

using namespace demark;
namespace fs = std::filesystem;

namespace {

// minimal net that still has the full two-decoder wiring
NetConfig tiny_net() {
    NetConfig cfg;
    cfg.encoder = {RsuConfig{2, 3, 4, 8}, RsuConfig{2, 8, 4, 8, true}};
    cfg.mask_decoder = {RsuConfig{2, 16, 4, 8}};
    cfg.image_decoder = {RsuConfig{2, 16, 4, 8}};
    cfg.input_hw = {32, 32};
    return cfg;
}

TrainConfig tiny_train(const fs::path& dataset, const fs::path& out) {
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.max_steps = 4;
    cfg.checkpoint_every = 2;
    cfg.learning_rate = 1e-3;
    cfg.input_hw = {32, 32};
    cfg.seed = 5;
    cfg.deterministic = true;
    cfg.dataset_dir = dataset;
    cfg.out_dir = out;
    return cfg;
}

fs::path make_dataset(const fs::path& root, int count, int hw = 32) {
    fs::create_directories(root / "bg");
    Rng rng(55);
    for (int k = 0; k < 2; ++k) {
        ImageU8 bg(hw, hw, 3);
        for (auto& v : bg.data) v = static_cast<uint8_t>(rng.uniform_int(0, 255));
        write_png(root / "bg" / ("b" + std::to_string(k) + ".png"), bg);
    }
    synth::GeneratorConfig gen;
    gen.height = gen.width = hw;
    gen.text_len_lo = 1;
    gen.text_len_hi = 2;
    gen.font_frac_lo = 0.2;
    gen.font_frac_hi = 0.4;
    synth::generate_dataset(root / "bg", root / "ds", count, 9, gen);
    return root / "ds";
}

bool params_equal(AdvancedUnet& a, AdvancedUnet& b, bool include_buffers = true) {
    auto pa = a->parameters();
    auto pb = b->parameters();
    if (pa.size() != pb.size()) return false;
    for (size_t i = 0; i < pa.size(); ++i)
        if (!torch::equal(pa[i], pb[i])) return false;
    if (!include_buffers) return true;
    auto ba = a->buffers();
    auto bb = b->buffers();
    if (ba.size() != bb.size()) return false;
    for (size_t i = 0; i < ba.size(); ++i)
        if (!torch::equal(ba[i], bb[i])) return false;
    return true;
}

} // namespace

TEST_CASE("batch composition is a pure function of (seed, step)") {
    auto a = batch_indices(3, 10, 16, 4);
    auto b = batch_indices(3, 10, 16, 4);
    CHECK(a == b);
    CHECK(a.size() == 4);
    CHECK(batch_indices(4, 10, 16, 4) != a);
    // one epoch covers every sample exactly once
    std::vector<int64_t> seen;
    for (int64_t step = 0; step < 4; ++step)
        for (auto i : batch_indices(3, step, 16, 4)) seen.push_back(i);
    std::sort(seen.begin(), seen.end());
    for (int64_t i = 0; i < 16; ++i) CHECK(seen[static_cast<size_t>(i)] == i);
    // batch larger than the dataset degrades gracefully
    CHECK(batch_indices(3, 0, 3, 8).size() == 3);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.dataset_dir = "x";
    CHECK_NOTHROW(cfg.validate());
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = TrainConfig{};
    cfg.dataset_dir = "x";
    cfg.optimizer = "lbfgs";
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = TrainConfig{};
    CHECK_THROWS_AS(cfg.validate(), ValidationError); // no dataset dir
    cfg = TrainConfig{};
    cfg.dataset_dir = "x";
    cfg.device = "cuda";
    if (!torch::cuda::is_available()) CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("zero learning rate reports losses but freezes parameters") {
    oracle::TempDir tmp("demark-train-lr0");
    auto ds = make_dataset(tmp.path(), 2);
    auto cfg = tiny_train(ds, tmp.path() / "out");
    cfg.learning_rate = 0.0;
    Trainer trainer(cfg, tiny_net(), LossWeights::defaults(2));
    auto before = build_model(tiny_net(), cfg.seed); // same init
    REQUIRE(params_equal(trainer.model(), before));

    auto pipeline = DataPipeline::disk(ds, cfg.seed, cfg.batch_size);
    auto report = trainer.train_step(pipeline.batch_at(0));
    CHECK(report.total > 0.0);
    CHECK(std::isfinite(report.total));
    CHECK(trainer.step() == 1);
    // parameters frozen; batch-norm running stats still move in train mode
    CHECK(params_equal(trainer.model(), before, /*include_buffers=*/false));
}

TEST_CASE("two identical runs take identical steps") {
    oracle::TempDir tmp("demark-train-det");
    auto ds = make_dataset(tmp.path(), 4);
    auto cfg = tiny_train(ds, tmp.path() / "out");

    Trainer t1(cfg, tiny_net(), LossWeights::defaults(2));
    Trainer t2(cfg, tiny_net(), LossWeights::defaults(2));
    auto pipeline = DataPipeline::disk(ds, cfg.seed, cfg.batch_size);
    for (int64_t s = 0; s < 2; ++s) {
        auto r1 = t1.train_step(pipeline.batch_at(s));
        auto r2 = t2.train_step(pipeline.batch_at(s));
        CHECK(r1.total == r2.total);
    }
    CHECK(params_equal(t1.model(), t2.model()));
}

TEST_CASE("non-finite loss aborts naming the offending term") {
    oracle::TempDir tmp("demark-train-nan");
    auto ds = make_dataset(tmp.path(), 2);
    auto cfg = tiny_train(ds, tmp.path() / "out");
    Trainer trainer(cfg, tiny_net(), LossWeights::defaults(2));
    {
        torch::NoGradGuard g;
        trainer.model()->parameters()[0].fill_(std::numeric_limits<float>::quiet_NaN());
    }
    auto pipeline = DataPipeline::disk(ds, cfg.seed, cfg.batch_size);
    CHECK_THROWS_WITH_AS(trainer.train_step(pipeline.batch_at(0)),
                         doctest::Contains("non-finite loss"), TrainingError);
}

TEST_CASE("resolution mismatch is rejected") {
    oracle::TempDir tmp("demark-train-res");
    auto ds = make_dataset(tmp.path(), 2, 64);
    auto cfg = tiny_train(ds, tmp.path() / "out"); // expects 32x32
    Trainer trainer(cfg, tiny_net(), LossWeights::defaults(2));
    auto pipeline = DataPipeline::disk(ds, cfg.seed, cfg.batch_size);
    CHECK_THROWS_AS(trainer.train_step(pipeline.batch_at(0)), ShapeError);
}

TEST_CASE("fit with max_steps 0 writes only the initial checkpoint") {
    oracle::TempDir tmp("demark-train-0");
    auto ds = make_dataset(tmp.path(), 2);
    auto cfg = tiny_train(ds, tmp.path() / "out");
    cfg.max_steps = 0;
    Trainer trainer(cfg, tiny_net(), LossWeights::defaults(2));
    auto final_path = trainer.fit();
    CHECK(fs::exists(final_path));
    auto [model, meta] = load_checkpoint(final_path);
    CHECK(meta.step == 0);
    CHECK(params_equal(model, trainer.model()));
    // no periodic checkpoints, an empty loss log
    int ckpts = 0;
    for (const auto& e : fs::directory_iterator(cfg.out_dir))
        if (e.path().extension() == ".pt") ++ckpts;
    CHECK(ckpts == 1);
    std::ifstream log(cfg.out_dir / "loss_log.jsonl");
    std::string line;
    CHECK_FALSE(std::getline(log, line));
}

TEST_CASE("checkpoint round-trip preserves forward outputs bitwise") {
    oracle::TempDir tmp("demark-ckpt");
    auto ds = make_dataset(tmp.path(), 2);
    auto cfg = tiny_train(ds, tmp.path() / "out");
    Trainer trainer(cfg, tiny_net(), LossWeights::defaults(2));
    auto pipeline = DataPipeline::disk(ds, cfg.seed, cfg.batch_size);
    trainer.train_step(pipeline.batch_at(0));

    fs::create_directories(cfg.out_dir);
    trainer.save(cfg.out_dir / "probe.pt");
    auto [loaded, meta] = load_checkpoint(cfg.out_dir / "probe.pt");
    CHECK(meta.step == 1);
    CHECK(meta.net.serialize() == tiny_net().serialize());

    torch::NoGradGuard g;
    trainer.model()->eval();
    loaded->eval();
    auto probe = pipeline.batch_at(1).corrupted;
    auto a = trainer.model()->forward(probe);
    auto b = loaded->forward(probe);
    CHECK(torch::equal(a.mask_fused, b.mask_fused));
    CHECK(torch::equal(a.image_final, b.image_final));
}

TEST_CASE("resume reproduces the uninterrupted run bitwise") {
    oracle::TempDir tmp("demark-resume");
    auto ds = make_dataset(tmp.path(), 4);

    // uninterrupted: 4 steps
    auto cfg_a = tiny_train(ds, tmp.path() / "a");
    Trainer full(cfg_a, tiny_net(), LossWeights::defaults(2));
    auto final_a = full.fit();

    // interrupted: 2 steps, then resume for 2 more
    auto cfg_b = tiny_train(ds, tmp.path() / "b");
    cfg_b.max_steps = 2;
    Trainer half(cfg_b, tiny_net(), LossWeights::defaults(2));
    auto mid = half.fit();
    auto cfg_c = tiny_train(ds, tmp.path() / "b");
    cfg_c.max_steps = 4;
    Trainer resumed = Trainer::resume(cfg_c, LossWeights::defaults(2), mid);
    CHECK(resumed.step() == 2);
    auto final_b = resumed.fit();

    auto [ma, meta_a] = load_checkpoint(final_a);
    auto [mb, meta_b] = load_checkpoint(final_b);
    CHECK(meta_a.step == 4);
    CHECK(meta_b.step == 4);
    CHECK(params_equal(ma, mb));

    // loss log: each step exactly once, totals recompose per Eq. 5
    std::ifstream log(tmp.path() / "b" / "loss_log.jsonl");
    std::vector<int64_t> steps;
    for (std::string line; std::getline(log, line);) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        steps.push_back(j.at("step").get<int64_t>());
        // logged totals recompose exactly from the itemized terms
        CHECK(j.at("total").get<double>() ==
              j.at("mask_total").get<double>() + j.at("image_total").get<double>());
        double mask_re = 0;
        const auto& stages = j.at("mask_stages");
        for (size_t i = 0; i < stages.size(); ++i) {
            double w = i == 0 ? 0.5 : 1.0; // defaults: deepest stage down-weighted
            mask_re += w * (stages[i].at("bce").get<double>() +
                            stages[i].at("ssim").get<double>() +
                            stages[i].at("iou").get<double>());
        }
        const auto& fused = j.at("mask_fused");
        mask_re += fused.at("bce").get<double>() + fused.at("ssim").get<double>() +
                   fused.at("iou").get<double>();
        CHECK(j.at("mask_total").get<double>() == mask_re);
    }
    const std::vector<int64_t> expected_steps{1, 2, 3, 4};
    CHECK(steps == expected_steps);
}

TEST_CASE("on-the-fly pipeline is deterministic and correctly shaped") {
    oracle::TempDir tmp("demark-otf");
    make_dataset(tmp.path(), 1); // creates bg/
    synth::GeneratorConfig gen;
    gen.height = gen.width = 32;
    gen.text_len_lo = 1;
    gen.text_len_hi = 2;
    auto p1 = DataPipeline::on_the_fly(tmp.path() / "bg", gen, 3, 2);
    auto p2 = DataPipeline::on_the_fly(tmp.path() / "bg", gen, 3, 2);
    auto b1 = p1.batch_at(5);
    auto b2 = p2.batch_at(5);
    CHECK(torch::equal(b1.corrupted, b2.corrupted));
    CHECK(torch::equal(b1.mask, b2.mask));
    CHECK(b1.corrupted.sizes() == torch::IntArrayRef({2, 3, 32, 32}));
    CHECK(b1.mask.sizes() == torch::IntArrayRef({2, 1, 32, 32}));
    auto b3 = p1.batch_at(6);
    CHECK_FALSE(torch::equal(b1.corrupted, b3.corrupted));
}

TEST_CASE("validation loss tracking picks the best value") {
    oracle::TempDir tmp("demark-val");
    auto ds = make_dataset(tmp.path(), 4);
    auto cfg = tiny_train(ds, tmp.path() / "out");
    cfg.val_dir = ds;
    cfg.max_steps = 4;
    cfg.checkpoint_every = 2;
    Trainer trainer(cfg, tiny_net(), LossWeights::defaults(2));
    trainer.fit();
    CHECK(std::isfinite(trainer.best_val_total()));
    CHECK(trainer.best_val_total() > 0.0);
}
