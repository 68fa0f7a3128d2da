#pragma once

#include "demark/model/net.hpp"

#include <torch/torch.h>

#include <vector>

namespace demark {

enum class MaskMode { kSoft, kThreshold };

struct MaskPolicy {
    MaskMode mode = MaskMode::kSoft;
    double threshold = 0.5;
};

// Eq. 2 replacement: (1 - m) * corrupted + m * reconstructed, with the
// single-channel mask broadcast over color channels. Exact passthrough where
// m == 0, exact replacement where m == 1.
torch::Tensor composite_final(const torch::Tensor& corrupted,
                              const torch::Tensor& reconstructed,
                              const torch::Tensor& mask);

struct ReconstructionResult {
    torch::Tensor final_image;    // (1,3,H,W)
    torch::Tensor predicted_mask; // (1,1,H,W), soft or binarized
    torch::Tensor reconstructed;  // (1,3,H,W) the raw decoder output
};

// Batch inference: mask_fused drives Eq. 2 (binarized at policy.threshold in
// threshold mode), image_final is the reconstruction source.
std::vector<ReconstructionResult> infer(AdvancedUnet& model,
                                        const torch::Tensor& corrupted_batch,
                                        const MaskPolicy& policy = {});

} // namespace demark
