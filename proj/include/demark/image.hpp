#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace demark {

// 8-bit image, HWC row-major. channels is 1 or 3.
struct ImageU8 {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<uint8_t> data;

    ImageU8() = default;
    ImageU8(int h, int w, int c, uint8_t fill = 0)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(h) * w * c, fill) {}

    uint8_t& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    uint8_t at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    bool empty() const { return data.empty(); }
};

// Centered crop to the target aspect ratio (keeps as many pixels as possible).
ImageU8 center_crop_to_aspect(const ImageU8& img, int target_h, int target_w);

// Plain bilinear resize (half-pixel centers). Hand-rolled so generation is
// reproducible independent of any library's SIMD paths.
ImageU8 resize_bilinear(const ImageU8& img, int out_h, int out_w);

uint8_t quantize8(float v);      // round(v*255), clamped
float dequantize8(uint8_t v);    // v / 255

// (1, C, H, W) float32 in [0,1]
torch::Tensor to_tensor(const ImageU8& img);

// Accepts (C,H,W) or (1,C,H,W); clamps to [0,1] and rounds to 8 bits.
ImageU8 to_image_u8(const torch::Tensor& t);

} // namespace demark
