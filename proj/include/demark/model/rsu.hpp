#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

namespace demark {

// RSU-L(c_in, M, c_out). depth_L counts the encoder convolutions inside the
// block. The dilated variant replaces pooling/upsampling with growing
// dilation and never changes resolution.
struct RsuConfig {
    int depth_L = 4;
    int c_in = 3;
    int c_mid = 12;
    int c_out = 3;
    bool dilated = false;

    void validate() const;
    std::string to_string() const;           // e.g. "4d:512:256:512"
    static RsuConfig parse(const std::string& s);
};

// 3x3 conv + BatchNorm + ReLU, the unit every RSU layer is made of.
struct ConvBnReluImpl : torch::nn::Module {
    ConvBnReluImpl(int c_in, int c_out, int dilation);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv{nullptr};
    torch::nn::BatchNorm2d bn{nullptr};
};
TORCH_MODULE(ConvBnRelu);

struct RsuBlockImpl : torch::nn::Module {
    explicit RsuBlockImpl(RsuConfig cfg);

    // Output keeps the input's spatial size: internal-U(x) + 1x1-mapped x.
    torch::Tensor forward(const torch::Tensor& x);

    // Spatial divisibility required by the block (1 for dilated variants).
    int64_t required_divisor() const;

    RsuConfig cfg;
    ConvBnRelu conv_in{nullptr};
    std::vector<ConvBnRelu> enc; // depth_L entries, shallow to deep
    std::vector<ConvBnRelu> dec; // depth_L - 1 entries, deep to shallow
};
TORCH_MODULE(RsuBlock);

} // namespace demark
