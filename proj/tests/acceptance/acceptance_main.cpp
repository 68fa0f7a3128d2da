// Acceptance suite: runs every primary criterion at its stated tolerance and
// prints one pass/fail line per criterion. Exit code = number of failures.
#include "demark/checkpoint.hpp"
#include "demark/image.hpp"
#include "demark/image_io.hpp"
#include "demark/losses.hpp"
#include "demark/metrics.hpp"
#include "demark/model/net.hpp"
#include "demark/reconstruct.hpp"
#include "demark/rng.hpp"
#include "demark/synth/generate.hpp"
#include "demark/train/dataset.hpp"
#include "demark/train/trainer.hpp"

#include "../oracles.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

using namespace demark;
namespace fs = std::filesystem;

namespace {

struct Check {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

void make_backgrounds(const fs::path& dir, int count, int hw, uint64_t seed) {
    fs::create_directories(dir);
    Rng rng(seed);
    for (int k = 0; k < count; ++k) {
        ImageU8 img(hw, hw, 3);
        for (int y = 0; y < hw; ++y)
            for (int x = 0; x < hw; ++x) {
                img.at(y, x, 0) = static_cast<uint8_t>((x * 255) / hw);
                img.at(y, x, 1) = static_cast<uint8_t>(((x + y) * 255) / (2 * hw));
                img.at(y, x, 2) = static_cast<uint8_t>(rng.uniform_int(0, 255));
            }
        write_png(dir / ("bg" + std::to_string(k) + ".png"), img);
    }
}

// --- criterion 1: Eq. 1 / Eq. 2 algebra --------------------------------------

Check eq1_eq2_algebra() {
    Check c;
    oracle::TempDir tmp("demark-acc-eq");
    synth::GeneratorConfig cfg;
    cfg.height = cfg.width = 64;
    cfg.text_len_lo = 1;
    cfg.text_len_hi = 6;
    Rng bg_rng(100);
    for (int i = 0; i < 100 && c.ok; ++i) {
        ImageU8 bg(64, 64, 3);
        for (auto& v : bg.data) v = static_cast<uint8_t>(bg_rng.uniform_int(0, 255));
        auto s = synth::synthesize_sample(to_tensor(bg), cfg, 9000 + static_cast<uint64_t>(i));

        // pre-serialization: bitwise recovery of the original
        auto final_pre = composite_final(s.corrupted, s.original, s.mask);
        c.require(torch::equal(final_pre, s.original),
                  "pre-serialization recovery not bitwise at sample " + std::to_string(i));

        // serialization round trip via PNG
        write_png(tmp.path() / "c.png", to_image_u8(s.corrupted));
        write_png(tmp.path() / "o.png", to_image_u8(s.original));
        write_png(tmp.path() / "m.png", to_image_u8(s.mask));
        auto cq = to_tensor(read_image_rgb(tmp.path() / "c.png"));
        auto oq = to_tensor(read_image_rgb(tmp.path() / "o.png"));
        auto mq = to_tensor(read_image_gray(tmp.path() / "m.png"));
        auto final_post = composite_final(cq, oq, mq);
        const double err = (final_post - s.original).abs().max().item<double>();
        c.require(err <= 1.0 / 255.0,
                  "post-serialization error " + std::to_string(err) + " at sample " +
                      std::to_string(i));
    }
    return c;
}

// --- criterion 2: gradient checks --------------------------------------------

Check gradient_checks() {
    Check c;
    Rng rng(200);
    const double h = 1e-4;
    double worst = 0;
    for (int i = 0; i < 20 && c.ok; ++i) {
        auto pred0 = oracle::rand_tensor({1, 1, 8, 8}, rng, 0.05, 0.95);
        auto gt_bin = oracle::rand_binary({1, 1, 8, 8}, rng);
        auto gt_soft = oracle::rand_tensor({1, 1, 8, 8}, rng);

        struct Case {
            const char* name;
            std::function<torch::Tensor(const torch::Tensor&)> fn;
        };
        // ssim uses a 7x7 window: 8x8 inputs cannot fit the default 11
        const Case cases[] = {
            {"bce", [&](const torch::Tensor& p) { return bce_loss(p, gt_bin); }},
            {"iou", [&](const torch::Tensor& p) { return iou_loss(p, gt_bin); }},
            {"ssim", [&](const torch::Tensor& p) { return ssim_loss(p, gt_soft, 7); }},
        };
        for (const auto& cs : cases) {
            auto pred = pred0.clone().requires_grad_(true);
            cs.fn(pred).backward();
            auto fd = oracle::finite_diff_grad(
                [&](const torch::Tensor& x) { return cs.fn(x).item<double>(); }, pred0, h);
            const double err = oracle::rel_error(pred.grad(), fd);
            worst = std::max(worst, err);
            c.require(err <= 1e-4, std::string(cs.name) + " rel error " + std::to_string(err) +
                                       " at trial " + std::to_string(i));
        }
    }
    if (c.ok) c.detail = "worst rel error " + std::to_string(worst);
    return c;
}

// --- criterion 3: metric oracle equivalence ----------------------------------

Check metric_oracle_equivalence() {
    Check c;
    Rng rng(300);
    for (int i = 0; i < 20 && c.ok; ++i) {
        auto a = oracle::rand_tensor({1, 3, 16, 16}, rng);
        auto b = oracle::rand_tensor({1, 3, 16, 16}, rng);
        auto pm = oracle::rand_tensor({1, 1, 16, 16}, rng);
        auto gm = oracle::rand_binary({1, 1, 16, 16}, rng);

        c.require(std::abs(mae(pm, gm) - oracle::ref_mae(pm, gm)) <= 1e-6, "mae mismatch");
        c.require(std::abs(miou(pm, gm, 0.5) - oracle::ref_miou(pm, gm, 0.5)) <= 1e-6,
                  "miou mismatch");
        c.require(std::abs(ssim_metric(a, b) - oracle::ref_ssim_index(a, b)) <= 1e-6,
                  "ssim mismatch");
        c.require(std::abs(psnr(a, b) - oracle::ref_psnr(a, b)) <= 1e-6, "psnr mismatch");

        const double loss = ssim_loss(a, b).item<double>();
        const double metric = ssim_metric(a, b);
        c.require(metric + loss == 1.0, "ssim metric + loss != 1 exactly");
        c.require(metric == 1.0 - loss, "ssim metric is not literally 1 - loss");
    }
    return c;
}

// --- criterion 4: architecture contract --------------------------------------

Check architecture_contract() {
    Check c;
    auto cfg = NetConfig::preset_full();
    auto model = build_model(cfg, 17);
    model->eval();
    torch::NoGradGuard g;
    torch::manual_seed(18);
    auto x = torch::rand({2, 3, 128, 128});
    auto out = model->forward(x);

    c.require(static_cast<int>(out.mask_side.size()) == cfg.num_stages() + 1,
              "expected num_stages+1 = " + std::to_string(cfg.num_stages() + 1) +
                  " mask side outputs, got " + std::to_string(out.mask_side.size()));
    for (const auto& m : out.mask_side) {
        c.require(m.sizes() == torch::IntArrayRef({2, 1, 128, 128}), "mask side shape mismatch");
        c.require(m.min().item<double>() > 0.0 && m.max().item<double>() < 1.0,
                  "mask side out of (0,1)");
    }
    c.require(out.mask_fused.sizes() == torch::IntArrayRef({2, 1, 128, 128}),
              "fused mask shape mismatch");
    c.require(out.image_final.sizes() == torch::IntArrayRef({2, 3, 128, 128}),
              "image output shape mismatch");
    c.require(out.image_final.min().item<double>() > 0.0 &&
                  out.image_final.max().item<double>() < 1.0,
              "image output out of (0,1)");

    // encoder-skip ablation must reach the decoders
    ForwardOptions opts;
    opts.ablate_encoder_stage = 3;
    auto ablated = model->forward(x, opts);
    bool changed = !torch::equal(out.mask_fused, ablated.mask_fused) &&
                   !torch::equal(out.image_final, ablated.image_final);
    c.require(changed, "zeroing encoder stage 3 left decoder outputs unchanged");

    const int64_t count = model->parameter_count();
    const int64_t derived = oracle::expected_param_count(cfg);
    c.require(count == derived, "parameter count " + std::to_string(count) +
                                    " != wiring-derived " + std::to_string(derived));
    c.require(count == 62356636,
              "parameter count " + std::to_string(count) + " != frozen constant 62356636");
    if (c.ok) c.detail = std::to_string(count) + " parameters";
    return c;
}

// --- criterion 5: overfit smoke test ------------------------------------------

Check overfit_smoke(const fs::path& workdir) {
    Check c;
    fs::create_directories(workdir);
    make_backgrounds(workdir / "bg", 8, 192, 500);

    synth::GeneratorConfig gen;
    gen.height = gen.width = 128;
    gen.text_len_lo = 3;
    gen.text_len_hi = 8;
    synth::generate_dataset(workdir / "bg", workdir / "ds", 8, 42, gen);

    NetConfig net = NetConfig::preset_small();
    net.input_hw = {128, 128};

    TrainConfig tc;
    tc.batch_size = 8;
    tc.max_steps = 500;
    tc.checkpoint_every = 250;
    tc.learning_rate = 1e-3;
    tc.input_hw = {128, 128};
    tc.seed = 7;
    tc.dataset_dir = workdir / "ds";
    tc.out_dir = workdir / "run";

    Trainer trainer(tc, net, LossWeights::defaults(net.num_mask_sides()));
    auto final_ckpt = trainer.fit();

    // loss curve: >= 90% drop from the first logged step
    std::ifstream log(tc.out_dir / "loss_log.jsonl");
    std::vector<double> totals;
    std::vector<double> deepest, shallowest;
    for (std::string line; std::getline(log, line);) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        totals.push_back(j.at("total").get<double>());
        const auto& stages = j.at("mask_stages");
        auto stage_sum = [](const nlohmann::json& s) {
            return s.at("bce").get<double>() + s.at("ssim").get<double>() +
                   s.at("iou").get<double>();
        };
        deepest.push_back(stage_sum(stages.front()));
        shallowest.push_back(stage_sum(stages.back()));
    }
    c.require(totals.size() == 500, "expected 500 logged steps, got " +
                                        std::to_string(totals.size()));
    if (!c.ok) return c;
    const double drop = (totals.front() - totals.back()) / totals.front();
    c.require(totals.back() <= 0.1 * totals.front(),
              "loss dropped only " + std::to_string(100 * drop) + "% (" +
                  std::to_string(totals.front()) + " -> " + std::to_string(totals.back()) + ")");

    // the paper's Fig. 3 observation: the deepest mask loss fluctuates most
    auto variance = [](const std::vector<double>& v) {
        double mean = 0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0;
        for (double x : v) var += (x - mean) * (x - mean);
        return var / static_cast<double>(v.size());
    };
    const double var_deep = variance(deepest);
    const double var_shallow = variance(shallowest);
    c.require(var_deep > var_shallow,
              "deepest-stage variance " + std::to_string(var_deep) +
                  " not above shallowest " + std::to_string(var_shallow));

    // reconstruction quality on the training samples
    auto [model, meta] = load_checkpoint(final_ckpt);
    model->eval();
    auto report = evaluate(model, workdir / "ds", EvalOptions{});
    c.require(report.psnr > 30.0 || report.n_psnr_inf == report.n_samples,
              "train-sample PSNR " + std::to_string(report.psnr) + " <= 30 dB");
    if (c.ok) {
        std::ostringstream os;
        os << "loss " << totals.front() << " -> " << totals.back() << " (" << 100 * drop
           << "% drop), PSNR " << report.psnr << " dB, var(mask1) " << var_deep << " > "
           << var_shallow;
        c.detail = os.str();
    }
    return c;
}

// --- criterion 6: determinism suite -------------------------------------------

Check determinism_suite() {
    Check c;
    torch::set_num_threads(1); // deterministic execution mode
    oracle::TempDir tmp("demark-acc-det");

    // dataset generation: identical bytes
    make_backgrounds(tmp.path() / "bg", 2, 64, 600);
    synth::GeneratorConfig gen;
    gen.height = gen.width = 64;
    gen.text_len_lo = 1;
    gen.text_len_hi = 4;
    synth::generate_dataset(tmp.path() / "bg", tmp.path() / "d1", 3, 11, gen);
    synth::generate_dataset(tmp.path() / "bg", tmp.path() / "d2", 3, 11, gen);
    for (const auto& entry : fs::recursive_directory_iterator(tmp.path() / "d1")) {
        if (!entry.is_regular_file()) continue;
        auto rel = fs::relative(entry.path(), tmp.path() / "d1");
        c.require(oracle::read_file_bytes(entry.path()) ==
                      oracle::read_file_bytes(tmp.path() / "d2" / rel),
                  "dataset bytes differ: " + rel.string());
    }

    // model init determinism
    NetConfig net;
    net.encoder = {RsuConfig{2, 3, 4, 8}, RsuConfig{2, 8, 4, 8, true}};
    net.mask_decoder = {RsuConfig{2, 16, 4, 8}};
    net.image_decoder = {RsuConfig{2, 16, 4, 8}};
    net.input_hw = {64, 64};
    auto m1 = build_model(net, 21);
    auto m2 = build_model(net, 21);
    auto p1 = m1->parameters();
    auto p2 = m2->parameters();
    for (size_t i = 0; i < p1.size(); ++i)
        c.require(torch::equal(p1[i], p2[i]), "init differs at parameter " + std::to_string(i));

    // train_step determinism
    TrainConfig tc;
    tc.batch_size = 2;
    tc.max_steps = 2;
    tc.input_hw = {64, 64};
    tc.seed = 3;
    tc.deterministic = true;
    tc.dataset_dir = tmp.path() / "d1";
    tc.out_dir = tmp.path() / "run";
    auto weights = LossWeights::defaults(net.num_mask_sides());
    Trainer t1(tc, net, weights);
    Trainer t2(tc, net, weights);
    auto pipeline = DataPipeline::disk(tc.dataset_dir, tc.seed, tc.batch_size);
    for (int64_t s = 0; s < 2; ++s) {
        auto r1 = t1.train_step(pipeline.batch_at(s));
        auto r2 = t2.train_step(pipeline.batch_at(s));
        c.require(r1.total == r2.total, "losses diverge at step " + std::to_string(s));
    }
    auto q1 = t1.model()->parameters();
    auto q2 = t2.model()->parameters();
    for (size_t i = 0; i < q1.size(); ++i)
        c.require(torch::equal(q1[i], q2[i]),
                  "trained parameters differ at index " + std::to_string(i));

    // checkpoint round trip: bitwise-identical forward outputs
    fs::create_directories(tc.out_dir);
    t1.save(tc.out_dir / "probe.pt");
    auto [loaded, meta] = load_checkpoint(tc.out_dir / "probe.pt");
    t1.model()->eval();
    loaded->eval();
    torch::NoGradGuard g;
    auto probe = pipeline.batch_at(0).corrupted;
    auto o1 = t1.model()->forward(probe);
    auto o2 = loaded->forward(probe);
    c.require(torch::equal(o1.mask_fused, o2.mask_fused) &&
                  torch::equal(o1.image_final, o2.image_final),
              "checkpoint round trip changed forward outputs");
    return c;
}

// --- criterion 7: Eq. 3 literal mode ------------------------------------------

Check eq3_literal_mode() {
    Check c;
    const int64_t n = 16;
    const double m0v = 0.35, m1v = 0.15, fv = 0.25, iv = 0.45, gv = 0.8;
    ModelOutputs outputs;
    outputs.mask_side = {torch::full({1, 1, n, n}, m0v, torch::kDouble),
                         torch::full({1, 1, n, n}, m1v, torch::kDouble)};
    outputs.mask_fused = torch::full({1, 1, n, n}, fv, torch::kDouble);
    outputs.image_side = {torch::full({1, 3, n, n}, iv, torch::kDouble)};
    outputs.image_final = outputs.image_side[0];
    auto mask_gt = torch::zeros({1, 1, n, n}, torch::kDouble);
    auto image_gt = torch::full({1, 3, n, n}, gv, torch::kDouble);

    LossWeights w = LossWeights::defaults(2); // deepest 0.5
    w.w_iou = 0.0;

    auto bce0 = [](double p) { return -std::log(1.0 - p); }; // binary target = 0
    auto ssim_term = [](double p, double t) { return 1.0 - oracle::constant_ssim(p, t); };
    const double hand = 0.5 * (bce0(m0v) + ssim_term(m0v, 0.0)) +
                        1.0 * (bce0(m1v) + ssim_term(m1v, 0.0)) +
                        1.0 * (bce0(fv) + ssim_term(fv, 0.0)) +
                        1.0 * (ssim_term(iv, gv) + std::abs(iv - gv));

    auto report = total_loss(outputs, mask_gt, image_gt, w);
    const double err = std::abs(report.total - hand);
    c.require(err <= 1e-7, "total " + std::to_string(report.total) + " vs hand " +
                               std::to_string(hand) + " (err " + std::to_string(err) + ")");
    if (c.ok) {
        std::ostringstream os;
        os << "|total - hand| = " << err;
        c.detail = os.str();
    }
    return c;
}

} // namespace

int main(int argc, char** argv) {
    std::string only;
    fs::path smoke_dir;
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) only = argv[++i];
        if (a == "--workdir" && i + 1 < argc) smoke_dir = argv[++i];
    }
    std::unique_ptr<oracle::TempDir> tmp;
    if (smoke_dir.empty()) {
        tmp = std::make_unique<oracle::TempDir>("demark-acceptance");
        smoke_dir = tmp->path();
    }

    struct Criterion {
        const char* name;
        std::function<Check()> run;
    };
    const Criterion criteria[] = {
        {"eq1-eq2-algebra", eq1_eq2_algebra},
        {"gradient-checks", gradient_checks},
        {"metric-oracle-equivalence", metric_oracle_equivalence},
        {"architecture-contract", architecture_contract},
        {"overfit-smoke", [&] { return overfit_smoke(smoke_dir / "smoke"); }},
        {"determinism-suite", determinism_suite},
        {"eq3-literal-mode", eq3_literal_mode},
    };

    int failures = 0;
    for (const auto& cr : criteria) {
        if (!only.empty() && only != cr.name) continue;
        const auto start = std::chrono::steady_clock::now();
        Check result;
        try {
            result = cr.run();
        } catch (const std::exception& e) {
            result.ok = false;
            result.detail = std::string("exception: ") + e.what();
        }
        const auto secs =
            std::chrono::duration_cast<std::chrono::duration<double>>(
                std::chrono::steady_clock::now() - start)
                .count();
        std::cout << (result.ok ? "[PASS] " : "[FAIL] ") << cr.name << " (" << secs << "s)";
        if (!result.detail.empty()) std::cout << " — " << result.detail;
        std::cout << std::endl;
        if (!result.ok) ++failures;
    }
    return failures;
}
