#pragma once

#include "demark/kvconfig.hpp"
#include "demark/model/net.hpp"
#include "demark/reconstruct.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <vector>

namespace demark {

double mae(const torch::Tensor& pred_mask, const torch::Tensor& gt_mask);

// Foreground IoU of the binarized prediction; empty-vs-empty is 1.
double miou(const torch::Tensor& pred_mask, const torch::Tensor& gt_mask,
            double threshold = 0.5);

// Shares the ssim_index implementation with ssim_loss, so
// ssim_metric == 1 - ssim_loss bit-exactly.
double ssim_metric(const torch::Tensor& a, const torch::Tensor& b, int window = 11,
                   double sigma = 1.5);

// 10 log10(peak^2 / MSE); +inf sentinel when MSE == 0.
double psnr(const torch::Tensor& a, const torch::Tensor& b, double peak = 1.0);

struct MetricReport {
    double mae = 0;
    double miou = 0;
    double ssim = 0;
    double psnr = 0;          // mean over finite per-sample values
    int64_t n_samples = 0;
    int64_t n_psnr_inf = 0;   // samples excluded from the psnr mean

    nlohmann::json to_json() const;
};

struct SampleMetrics {
    int64_t index = 0;
    double mae = 0, iou = 0, ssim = 0, psnr = 0;
};

struct EvalOptions {
    MaskPolicy mask_policy;       // how Eq. 2 consumes the predicted mask
    double miou_threshold = 0.5;  // binarization for the mIoU metric
    int64_t batch_size = 4;

    static EvalOptions from_config(const KvConfig& cfg);
};

using InferFn = std::function<std::vector<ReconstructionResult>(const torch::Tensor&)>;

// Runs inference over a generated dataset directory and aggregates
// mae/miou on the predicted mask and ssim/psnr on the Eq. 2 output.
MetricReport evaluate(const InferFn& infer_fn, const std::filesystem::path& dataset_dir,
                      const EvalOptions& opts, std::vector<SampleMetrics>* per_sample = nullptr);
MetricReport evaluate(AdvancedUnet& model, const std::filesystem::path& dataset_dir,
                      const EvalOptions& opts, std::vector<SampleMetrics>* per_sample = nullptr);

void write_per_sample_csv(const std::filesystem::path& path,
                          const std::vector<SampleMetrics>& rows);

} // namespace demark
