#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <string>
#include <utility>

namespace demark::synth {

struct WatermarkSpec {
    std::string text;
    int font_id = 0;
    int font_size_px = 24;             // nominal em height; glyph cell scale = size/8
    double rotation_deg = 0.0;
    std::array<double, 3> color{1.0, 1.0, 1.0};
    std::array<double, 2> opacity_range{1.0, 1.0};
    std::array<int, 2> position{0, 0}; // top-left of the rendered bounding box

    void validate() const;
};

struct TextExtent {
    int width = 0;
    int height = 0;
};

// Size of the axis-aligned bounding box of the scaled+rotated tight glyph
// bounding box. Throws ValidationError if the text rasterizes to nothing.
TextExtent measure_text(const std::string& text, int font_id, int font_size_px,
                        double rotation_deg);

struct RenderedWatermark {
    torch::Tensor watermark; // (1,3,H,W) solid glyph color
    torch::Tensor alpha;     // (1,1,H,W) coverage * opacity, in [0,1]
};

// Rasterizes the spec onto an H x W canvas. Coverage is 4x4 box-supersampled,
// so integer scales with zero rotation give exact {0,1} coverage. rng_seed
// drives the single per-sample opacity draw from opacity_range.
RenderedWatermark render_watermark(const WatermarkSpec& spec,
                                   std::pair<int, int> canvas_hw,
                                   uint64_t rng_seed);

// Eq. 1 matting: alpha*watermark + (1-alpha)*original, elementwise with
// channel/batch broadcasting of alpha. Inputs must be in [0,1].
torch::Tensor composite(const torch::Tensor& original,
                        const torch::Tensor& watermark,
                        const torch::Tensor& alpha);

} // namespace demark::synth
