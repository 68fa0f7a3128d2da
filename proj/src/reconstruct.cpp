#include "demark/reconstruct.hpp"

#include "demark/errors.hpp"

namespace demark {

torch::Tensor composite_final(const torch::Tensor& corrupted, const torch::Tensor& reconstructed,
                              const torch::Tensor& mask) {
    for (const auto* t : {&corrupted, &reconstructed, &mask})
        if (t->dim() != 4) throw ShapeError("composite_final: expected 4-d tensors");
    if (!corrupted.sizes().equals(reconstructed.sizes()))
        throw ShapeError("composite_final: corrupted/reconstructed shape mismatch");
    if (mask.size(2) != corrupted.size(2) || mask.size(3) != corrupted.size(3))
        throw ShapeError("composite_final: mask spatial size mismatch");
    if (mask.size(1) != 1 && mask.size(1) != corrupted.size(1))
        throw ShapeError("composite_final: mask must be single-channel (or match channels)");
    if (mask.size(0) != corrupted.size(0) && mask.size(0) != 1)
        throw ShapeError("composite_final: mask batch mismatch");
    return (1 - mask) * corrupted + mask * reconstructed;
}

std::vector<ReconstructionResult> infer(AdvancedUnet& model, const torch::Tensor& corrupted_batch,
                                        const MaskPolicy& policy) {
    if (corrupted_batch.dim() != 4) throw ShapeError("infer: expected (B,3,H,W)");
    torch::NoGradGuard no_grad;
    const bool was_training = model->is_training();
    model->eval();
    auto outputs = model->forward(corrupted_batch);
    if (was_training) model->train();

    auto mask = outputs.mask_fused;
    if (policy.mode == MaskMode::kThreshold)
        mask = (mask > policy.threshold).to(corrupted_batch.dtype());

    std::vector<ReconstructionResult> results;
    const int64_t batch = corrupted_batch.size(0);
    for (int64_t b = 0; b < batch; ++b) {
        ReconstructionResult r;
        r.predicted_mask = mask.slice(0, b, b + 1).contiguous();
        r.reconstructed = outputs.image_final.slice(0, b, b + 1).contiguous();
        r.final_image = composite_final(corrupted_batch.slice(0, b, b + 1).contiguous(),
                                        r.reconstructed, r.predicted_mask);
        results.push_back(std::move(r));
    }
    return results;
}

} // namespace demark
