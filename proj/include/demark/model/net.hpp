#pragma once

#include "demark/kvconfig.hpp"
#include "demark/model/rsu.hpp"

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace demark {

// AdvancedUnet layout: encoder.size() = num_stages + 1 (the extra entry is
// the shared bottleneck); each decoder has num_stages entries stored deepest
// first. Decoder stage j takes cat(upsampled previous output, encoder skip)
// so dec[j].c_in = prev_out + skip_out.
struct NetConfig {
    std::vector<RsuConfig> encoder;
    std::vector<RsuConfig> mask_decoder;  // deepest first
    std::vector<RsuConfig> image_decoder; // deepest first
    std::array<int64_t, 2> input_hw{512, 512};

    int num_stages() const { return static_cast<int>(encoder.size()) - 1; }
    int num_mask_sides() const { return num_stages() + 1; }

    void validate() const;
    int64_t required_divisor() const;

    std::string serialize() const;
    static NetConfig parse(const std::string& s);

    static NetConfig preset_full();  // the 512x512 paper-scale plan
    static NetConfig preset_small(); // desk-scale plan for tests/smoke runs
    static NetConfig from_config(const KvConfig& cfg);
};

// Everything is at input resolution, sigmoid-activated, deepest first:
// mask_side[0] comes from the bottleneck (the paper's M_1), the last entry
// from the shallowest decoder stage. image_final is the shallowest image
// side output.
struct ModelOutputs {
    std::vector<torch::Tensor> mask_side;
    torch::Tensor mask_fused;
    std::vector<torch::Tensor> image_side;
    torch::Tensor image_final;
};

struct ForwardOptions {
    // 1-based encoder stage whose output is zeroed before use; a diagnostic
    // hook for skip-wiring checks. -1 disables.
    int ablate_encoder_stage = -1;
};

struct AdvancedUnetImpl : torch::nn::Module {
    explicit AdvancedUnetImpl(NetConfig cfg);

    ModelOutputs forward(const torch::Tensor& x, const ForwardOptions& opts = {});
    int64_t parameter_count() const;

    NetConfig cfg;
    std::vector<RsuBlock> enc_blocks;
    std::vector<RsuBlock> mask_dec_blocks;  // deepest first
    std::vector<RsuBlock> image_dec_blocks; // deepest first
    std::vector<torch::nn::Conv2d> mask_heads;  // [0] bottleneck, then decoder stages
    std::vector<torch::nn::Conv2d> image_heads; // decoder stages, deepest first
    torch::nn::Conv2d fuse_head{nullptr};
};
TORCH_MODULE(AdvancedUnet);

// Seed-deterministic construction + initialization.
AdvancedUnet build_model(const NetConfig& cfg, uint64_t rng_seed);

} // namespace demark
