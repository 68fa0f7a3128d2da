#include "demark/metrics.hpp"

#include "demark/errors.hpp"
#include "demark/image.hpp"
#include "demark/image_io.hpp"
#include "demark/losses.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace fs = std::filesystem;

namespace demark {

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* op) {
    if (a.dim() != 4 || b.dim() != 4)
        throw ShapeError(std::string(op) + ": expected 4-d (B,C,H,W) tensors");
    if (!a.sizes().equals(b.sizes()))
        throw ShapeError(std::string(op) + ": shape mismatch");
}

} // namespace

double mae(const torch::Tensor& pred_mask, const torch::Tensor& gt_mask) {
    check_same_shape(pred_mask, gt_mask, "mae");
    return (pred_mask - gt_mask).abs().mean().item<double>();
}

double miou(const torch::Tensor& pred_mask, const torch::Tensor& gt_mask, double threshold) {
    check_same_shape(pred_mask, gt_mask, "miou");
    auto p = pred_mask > threshold;
    auto g = gt_mask > 0.5;
    const double inter = (p & g).sum().item<double>();
    const double uni = (p | g).sum().item<double>();
    if (uni == 0.0) return 1.0; // both empty: perfect agreement
    return inter / uni;
}

double ssim_metric(const torch::Tensor& a, const torch::Tensor& b, int window, double sigma) {
    return 1.0 - ssim_loss(a, b, window, sigma).item<double>();
}

double psnr(const torch::Tensor& a, const torch::Tensor& b, double peak) {
    check_same_shape(a, b, "psnr");
    if (peak <= 0) throw ValidationError("psnr: peak must be positive");
    auto diff = a - b;
    const double mse = (diff * diff).mean().item<double>();
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j{
        {"mae", mae},          {"miou", miou},
        {"ssim", ssim},        {"n_samples", n_samples},
        {"n_psnr_inf", n_psnr_inf},
    };
    // JSON has no infinity; keep the sentinel readable
    if (std::isinf(psnr))
        j["psnr"] = "inf";
    else
        j["psnr"] = psnr;
    return j;
}

EvalOptions EvalOptions::from_config(const KvConfig& cfg) {
    EvalOptions o;
    o.batch_size = cfg.get_int("eval.batch_size", o.batch_size);
    o.miou_threshold = cfg.get_double("eval.miou_threshold", o.miou_threshold);
    const std::string mode = cfg.get_str("eval.mask_mode", "soft");
    if (mode == "soft") {
        o.mask_policy.mode = MaskMode::kSoft;
    } else if (mode == "threshold") {
        o.mask_policy.mode = MaskMode::kThreshold;
    } else {
        throw ConfigError("eval.mask_mode must be 'soft' or 'threshold'");
    }
    o.mask_policy.threshold = cfg.get_double("eval.mask_threshold", o.mask_policy.threshold);
    if (o.batch_size < 1) throw ValidationError("eval: batch_size must be >= 1");
    return o;
}

MetricReport evaluate(const InferFn& infer_fn, const fs::path& dataset_dir,
                      const EvalOptions& opts, std::vector<SampleMetrics>* per_sample) {
    std::vector<fs::path> corrupted_files;
    const fs::path cdir = dataset_dir / "corrupted";
    if (!fs::is_directory(cdir))
        throw ValidationError("evaluate: not a dataset directory (no corrupted/): " +
                              dataset_dir.string());
    for (const auto& entry : fs::directory_iterator(cdir))
        if (entry.is_regular_file() && has_image_extension(entry.path()))
            corrupted_files.push_back(entry.path());
    std::sort(corrupted_files.begin(), corrupted_files.end());
    if (corrupted_files.empty())
        throw ValidationError("evaluate: empty dataset: " + dataset_dir.string());

    std::string missing;
    for (const auto& f : corrupted_files) {
        for (const char* sub : {"original", "mask"}) {
            fs::path p = dataset_dir / sub / f.filename();
            if (!fs::exists(p)) missing += (missing.empty() ? "" : ", ") + p.string();
        }
    }
    if (!missing.empty()) throw IoError("evaluate: missing ground-truth files: " + missing);

    std::vector<SampleMetrics> rows;
    double sum_mae = 0, sum_iou = 0, sum_ssim = 0, sum_psnr = 0;
    int64_t n_inf = 0;

    for (size_t start = 0; start < corrupted_files.size();
         start += static_cast<size_t>(opts.batch_size)) {
        const size_t end =
            std::min(corrupted_files.size(), start + static_cast<size_t>(opts.batch_size));
        std::vector<torch::Tensor> corr, orig, gt;
        for (size_t i = start; i < end; ++i) {
            corr.push_back(to_tensor(read_image_rgb(corrupted_files[i])));
            orig.push_back(
                to_tensor(read_image_rgb(dataset_dir / "original" / corrupted_files[i].filename())));
            gt.push_back(
                to_tensor(read_image_gray(dataset_dir / "mask" / corrupted_files[i].filename())));
        }
        auto batch = torch::cat(corr, 0);
        auto results = infer_fn(batch);
        if (results.size() != end - start)
            throw TrainingError("evaluate: inference returned wrong batch size");

        for (size_t i = 0; i < results.size(); ++i) {
            SampleMetrics m;
            m.index = static_cast<int64_t>(start + i);
            m.mae = mae(results[i].predicted_mask, gt[i]);
            m.iou = miou(results[i].predicted_mask, gt[i], opts.miou_threshold);
            m.ssim = ssim_metric(results[i].final_image, orig[i]);
            m.psnr = psnr(results[i].final_image, orig[i]);
            sum_mae += m.mae;
            sum_iou += m.iou;
            sum_ssim += m.ssim;
            if (std::isinf(m.psnr))
                ++n_inf;
            else
                sum_psnr += m.psnr;
            rows.push_back(m);
        }
    }

    MetricReport report;
    report.n_samples = static_cast<int64_t>(rows.size());
    report.mae = sum_mae / static_cast<double>(rows.size());
    report.miou = sum_iou / static_cast<double>(rows.size());
    report.ssim = sum_ssim / static_cast<double>(rows.size());
    report.n_psnr_inf = n_inf;
    const int64_t n_finite = report.n_samples - n_inf;
    report.psnr = n_finite > 0 ? sum_psnr / static_cast<double>(n_finite)
                               : std::numeric_limits<double>::infinity();
    if (per_sample) *per_sample = std::move(rows);
    return report;
}

MetricReport evaluate(AdvancedUnet& model, const fs::path& dataset_dir, const EvalOptions& opts,
                      std::vector<SampleMetrics>* per_sample) {
    return evaluate(
        [&](const torch::Tensor& batch) { return infer(model, batch, opts.mask_policy); },
        dataset_dir, opts, per_sample);
}

void write_per_sample_csv(const fs::path& path, const std::vector<SampleMetrics>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "index,mae,iou,ssim,psnr\n";
    out.precision(17);
    for (const auto& r : rows) {
        out << r.index << "," << r.mae << "," << r.iou << "," << r.ssim << ",";
        if (std::isinf(r.psnr))
            out << "inf";
        else
            out << r.psnr;
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace demark
