#pragma once

#include "demark/kvconfig.hpp"
#include "demark/model/net.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <vector>

namespace demark {

// Weights for the deep-supervised hybrid loss. Stage order is deepest first
// everywhere (index 0 = the bottleneck side output, the paper's loss_mask1).
struct LossWeights {
    std::vector<double> w_mask_stage; // one per mask side output
    double w_fuse = 1.0;
    double w_image = 1.0;
    double w_bce = 1.0;
    double w_ssim = 1.0;
    double w_iou = 1.0; // 0 reproduces the BCE+SSIM-only mask formula
    double w_l1 = 1.0;

    // deepest stage gets 0.5, the rest 1
    static LossWeights defaults(int num_mask_sides);
    static LossWeights from_config(const KvConfig& cfg, int num_mask_sides);
    void validate(int num_mask_sides) const;
};

struct MaskTerms {
    double bce = 0, ssim = 0, iou = 0;
};
struct ImageTerms {
    double ssim = 0, l1 = 0;
};

// Itemized raw (unweighted) terms plus the weighted totals. total_tensor
// carries the autograd graph when inputs require grad.
struct LossReport {
    std::vector<MaskTerms> per_stage_mask; // deepest first
    MaskTerms fused_mask;
    std::vector<ImageTerms> image; // deepest first
    double mask_total = 0;
    double image_total = 0;
    double total = 0;
    torch::Tensor total_tensor;

    nlohmann::json to_json(int64_t step) const;
    // name of the first non-finite term, empty if all finite
    std::string first_non_finite() const;
};

inline constexpr double kBceEps = 1e-7;

// mean over pixels of -[t log p + (1-t) log(1-p)], p clamped to [eps, 1-eps]
torch::Tensor bce_loss(const torch::Tensor& pred, const torch::Tensor& target,
                       double eps = kBceEps);

// mean windowed SSIM over valid (un-padded) Gaussian windows, per channel
torch::Tensor ssim_index(const torch::Tensor& a, const torch::Tensor& b,
                         int window = 11, double sigma = 1.5);
torch::Tensor ssim_loss(const torch::Tensor& pred, const torch::Tensor& target,
                        int window = 11, double sigma = 1.5);

// 1 - sum(p*t) / (sum(p) + sum(t) - sum(p*t)); empty/empty defined as 0
torch::Tensor iou_loss(const torch::Tensor& pred, const torch::Tensor& target);

torch::Tensor l1_loss(const torch::Tensor& pred, const torch::Tensor& target);

// Eq. 3 (+ IoU term per the paper text): per-stage and fused mask terms.
LossReport mask_loss(const ModelOutputs& outputs, const torch::Tensor& mask_gt,
                     const LossWeights& weights);
// Eq. 4: SSIM + L1 over the image decoder side outputs.
LossReport image_loss(const ModelOutputs& outputs, const torch::Tensor& image_gt,
                      const LossWeights& weights);
// Eq. 5: mask component + image component.
LossReport total_loss(const ModelOutputs& outputs, const torch::Tensor& mask_gt,
                      const torch::Tensor& image_gt, const LossWeights& weights);

} // namespace demark
