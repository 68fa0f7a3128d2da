#include "demark/image.hpp"

#include "demark/errors.hpp"

#include <algorithm>
#include <cmath>

namespace demark {

ImageU8 center_crop_to_aspect(const ImageU8& img, int target_h, int target_w) {
    if (img.empty()) throw ValidationError("center_crop: empty image");
    double want = static_cast<double>(target_w) / target_h;
    double have = static_cast<double>(img.width) / img.height;
    int crop_w = img.width;
    int crop_h = img.height;
    if (have > want) {
        crop_w = std::max(1, static_cast<int>(std::lround(img.height * want)));
    } else {
        crop_h = std::max(1, static_cast<int>(std::lround(img.width / want)));
    }
    int x0 = (img.width - crop_w) / 2;
    int y0 = (img.height - crop_h) / 2;
    ImageU8 out(crop_h, crop_w, img.channels);
    for (int y = 0; y < crop_h; ++y)
        for (int x = 0; x < crop_w; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
    return out;
}

ImageU8 resize_bilinear(const ImageU8& img, int out_h, int out_w) {
    if (img.empty()) throw ValidationError("resize: empty image");
    if (out_h <= 0 || out_w <= 0) throw ValidationError("resize: non-positive target size");
    if (out_h == img.height && out_w == img.width) return img;
    ImageU8 out(out_h, out_w, img.channels);
    const double sy = static_cast<double>(img.height) / out_h;
    const double sx = static_cast<double>(img.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int y1 = std::min(y0 + 1, img.height - 1);
        y0 = std::clamp(y0, 0, img.height - 1);
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            int x1 = std::min(x0 + 1, img.width - 1);
            x0 = std::clamp(x0, 0, img.width - 1);
            for (int c = 0; c < img.channels; ++c) {
                double v = (1 - wy) * ((1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c)) +
                           wy * ((1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c));
                out.at(y, x, c) = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

uint8_t quantize8(float v) {
    long q = std::lround(static_cast<double>(v) * 255.0);
    return static_cast<uint8_t>(std::clamp(q, 0L, 255L));
}

float dequantize8(uint8_t v) { return static_cast<float>(v) / 255.0f; }

torch::Tensor to_tensor(const ImageU8& img) {
    if (img.empty()) throw ValidationError("to_tensor: empty image");
    auto t = torch::empty({1, img.channels, img.height, img.width}, torch::kFloat32);
    auto acc = t.accessor<float, 4>();
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                acc[0][c][y][x] = dequantize8(img.at(y, x, c));
    return t;
}

ImageU8 to_image_u8(const torch::Tensor& t) {
    torch::Tensor x = t;
    if (x.dim() == 4) {
        if (x.size(0) != 1) throw ShapeError("to_image_u8: expected batch of 1");
        x = x.squeeze(0);
    }
    if (x.dim() != 3) throw ShapeError("to_image_u8: expected (C,H,W) or (1,C,H,W)");
    x = x.to(torch::kFloat32).contiguous();
    const int c = static_cast<int>(x.size(0));
    const int h = static_cast<int>(x.size(1));
    const int w = static_cast<int>(x.size(2));
    if (c != 1 && c != 3) throw ShapeError("to_image_u8: expected 1 or 3 channels");
    ImageU8 out(h, w, c);
    auto acc = x.accessor<float, 3>();
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                out.at(y, xx, ch) = quantize8(acc[ch][y][xx]);
    return out;
}

} // namespace demark
