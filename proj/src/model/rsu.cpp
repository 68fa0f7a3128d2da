#include "demark/model/rsu.hpp"

#include "demark/errors.hpp"

#include <sstream>

namespace demark {

namespace F = torch::nn::functional;

void RsuConfig::validate() const {
    if (depth_L < 2) throw ConfigError("RSU: depth_L must be >= 2, got " + std::to_string(depth_L));
    if (c_in < 1 || c_mid < 1 || c_out < 1)
        throw ConfigError("RSU: channel counts must be >= 1");
}

std::string RsuConfig::to_string() const {
    std::ostringstream os;
    os << depth_L << (dilated ? "d" : "") << ":" << c_in << ":" << c_mid << ":" << c_out;
    return os.str();
}

RsuConfig RsuConfig::parse(const std::string& s) {
    RsuConfig cfg;
    std::stringstream ss(s);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, ':')) parts.push_back(part);
    if (parts.size() != 4)
        throw ConfigError("RSU spec expects 'L[d]:c_in:c_mid:c_out', got '" + s + "'");
    try {
        std::string depth = parts[0];
        if (!depth.empty() && (depth.back() == 'd' || depth.back() == 'D')) {
            cfg.dilated = true;
            depth.pop_back();
        }
        cfg.depth_L = std::stoi(depth);
        cfg.c_in = std::stoi(parts[1]);
        cfg.c_mid = std::stoi(parts[2]);
        cfg.c_out = std::stoi(parts[3]);
    } catch (const std::exception&) {
        throw ConfigError("RSU spec expects 'L[d]:c_in:c_mid:c_out', got '" + s + "'");
    }
    cfg.validate();
    return cfg;
}

ConvBnReluImpl::ConvBnReluImpl(int c_in, int c_out, int dilation) {
    conv = register_module(
        "conv", torch::nn::Conv2d(
                    torch::nn::Conv2dOptions(c_in, c_out, 3).padding(dilation).dilation(dilation)));
    bn = register_module("bn", torch::nn::BatchNorm2d(c_out));
}

torch::Tensor ConvBnReluImpl::forward(const torch::Tensor& x) {
    return torch::relu(bn->forward(conv->forward(x)));
}

RsuBlockImpl::RsuBlockImpl(RsuConfig cfg_) : cfg(cfg_) {
    cfg.validate();
    conv_in = register_module("conv_in", ConvBnRelu(cfg.c_in, cfg.c_out, 1));
    for (int k = 1; k <= cfg.depth_L; ++k) {
        int in = (k == 1) ? cfg.c_out : cfg.c_mid;
        int dilation = 1;
        if (cfg.dilated) {
            dilation = 1 << (k - 1);
        } else if (k == cfg.depth_L) {
            dilation = 2; // bottom layer widens its field without pooling
        }
        enc.push_back(register_module("enc" + std::to_string(k),
                                      ConvBnRelu(in, cfg.c_mid, dilation)));
    }
    for (int k = cfg.depth_L - 1; k >= 1; --k) {
        int out = (k == 1) ? cfg.c_out : cfg.c_mid;
        int dilation = cfg.dilated ? (1 << (k - 1)) : 1;
        dec.push_back(register_module("dec" + std::to_string(k),
                                      ConvBnRelu(2 * cfg.c_mid, out, dilation)));
    }
}

int64_t RsuBlockImpl::required_divisor() const {
    return cfg.dilated ? 1 : (int64_t{1} << (cfg.depth_L - 1));
}

torch::Tensor RsuBlockImpl::forward(const torch::Tensor& x) {
    if (x.dim() != 4) throw ShapeError("RSU: expected 4-d input");
    if (x.size(1) != cfg.c_in)
        throw ShapeError("RSU: expected " + std::to_string(cfg.c_in) + " input channels, got " +
                         std::to_string(x.size(1)));
    const int64_t div = required_divisor();
    if (!cfg.dilated && (x.size(2) % div != 0 || x.size(3) % div != 0))
        throw ShapeError("RSU-" + std::to_string(cfg.depth_L) +
                         ": spatial dims must be divisible by " + std::to_string(div) + ", got " +
                         std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)));

    auto xin = conv_in->forward(x);

    std::vector<torch::Tensor> h(static_cast<size_t>(cfg.depth_L));
    h[0] = enc[0]->forward(xin);
    auto cur = h[0];
    for (int k = 2; k <= cfg.depth_L - 1; ++k) {
        if (!cfg.dilated)
            cur = F::max_pool2d(cur, F::MaxPool2dFuncOptions(2).stride(2));
        h[static_cast<size_t>(k - 1)] = enc[static_cast<size_t>(k - 1)]->forward(cur);
        cur = h[static_cast<size_t>(k - 1)];
    }
    // deepest layer shares the resolution of the one above it
    h[static_cast<size_t>(cfg.depth_L - 1)] =
        enc[static_cast<size_t>(cfg.depth_L - 1)]->forward(cur);

    auto d = h[static_cast<size_t>(cfg.depth_L - 1)];
    for (int k = cfg.depth_L - 1; k >= 1; --k) {
        d = dec[static_cast<size_t>(cfg.depth_L - 1 - k)]->forward(
            torch::cat({d, h[static_cast<size_t>(k - 1)]}, 1));
        if (!cfg.dilated && k > 1)
            d = F::interpolate(d, F::InterpolateFuncOptions()
                                      .scale_factor(std::vector<double>{2.0, 2.0})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
    }
    return d + xin;
}

} // namespace demark
