#include "demark/synth/render.hpp"

#include "demark/errors.hpp"
#include "demark/rng.hpp"
#include "demark/synth/font.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace demark::synth {

namespace {

struct TextBitmap {
    int width = 0;  // cells
    int height = kGlyphCell;
    std::vector<uint8_t> bits; // row-major 0/1
    // tight bounds of set cells, inclusive
    int bx0 = 0, bx1 = -1, by0 = 0, by1 = -1;

    bool test(int x, int y) const {
        if (x < 0 || y < 0 || x >= width || y >= height) return false;
        return bits[static_cast<size_t>(y) * width + x] != 0;
    }
    bool empty() const { return bx1 < bx0; }
};

TextBitmap layout_text(const std::string& text, int font_id) {
    const int advance = font_advance(font_id);
    TextBitmap bm;
    bm.width = advance * static_cast<int>(text.size() - 1) + kGlyphCell;
    bm.bits.assign(static_cast<size_t>(bm.width) * bm.height, 0);
    for (size_t i = 0; i < text.size(); ++i) {
        auto rows = glyph_bitmap(font_id, text[i]);
        int x0 = advance * static_cast<int>(i);
        for (int r = 0; r < kGlyphCell; ++r)
            for (int c = 0; c < kGlyphCell; ++c)
                if (rows[r] & (1u << c))
                    bm.bits[static_cast<size_t>(r) * bm.width + x0 + c] = 1;
    }
    bm.bx0 = bm.width;
    bm.by0 = bm.height;
    bm.bx1 = -1;
    bm.by1 = -1;
    for (int y = 0; y < bm.height; ++y)
        for (int x = 0; x < bm.width; ++x)
            if (bm.bits[static_cast<size_t>(y) * bm.width + x]) {
                bm.bx0 = std::min(bm.bx0, x);
                bm.bx1 = std::max(bm.bx1, x);
                bm.by0 = std::min(bm.by0, y);
                bm.by1 = std::max(bm.by1, y);
            }
    return bm;
}

struct Placement {
    double scale;
    double cos_t, sin_t;
    double cx, cy;          // rotation center, glyph coords
    double min_x, min_y;    // AABB min of the transformed tight bbox
    int ext_w, ext_h;
};

Placement place(const TextBitmap& bm, int font_size_px, double rotation_deg) {
    Placement p{};
    p.scale = static_cast<double>(font_size_px) / kGlyphCell;
    const double theta = rotation_deg * std::numbers::pi / 180.0;
    p.cos_t = std::cos(theta);
    p.sin_t = std::sin(theta);
    p.cx = (bm.bx0 + bm.bx1 + 1) / 2.0;
    p.cy = (bm.by0 + bm.by1 + 1) / 2.0;
    double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
    bool first = true;
    const double xs[] = {static_cast<double>(bm.bx0), static_cast<double>(bm.bx1 + 1)};
    const double ys[] = {static_cast<double>(bm.by0), static_cast<double>(bm.by1 + 1)};
    for (double gx : xs)
        for (double gy : ys) {
            double dx = (gx - p.cx) * p.scale;
            double dy = (gy - p.cy) * p.scale;
            double x = p.cos_t * dx - p.sin_t * dy;
            double y = p.sin_t * dx + p.cos_t * dy;
            if (first) {
                min_x = max_x = x;
                min_y = max_y = y;
                first = false;
            } else {
                min_x = std::min(min_x, x);
                max_x = std::max(max_x, x);
                min_y = std::min(min_y, y);
                max_y = std::max(max_y, y);
            }
        }
    p.min_x = min_x;
    p.min_y = min_y;
    p.ext_w = static_cast<int>(std::ceil(max_x - min_x - 1e-9));
    p.ext_h = static_cast<int>(std::ceil(max_y - min_y - 1e-9));
    return p;
}

} // namespace

void WatermarkSpec::validate() const {
    if (text.empty()) throw ValidationError("watermark spec: text must be non-empty");
    if (font_size_px < 1) throw ValidationError("watermark spec: font_size_px must be >= 1");
    if (!(opacity_range[0] >= 0.0 && opacity_range[0] <= opacity_range[1] &&
          opacity_range[1] <= 1.0))
        throw ValidationError("watermark spec: opacity range must satisfy 0 <= lo <= hi <= 1");
    for (double c : color)
        if (!(c >= 0.0 && c <= 1.0))
            throw ValidationError("watermark spec: color components must be in [0,1]");
    // font_id validity is checked by the font table on first glyph lookup
    (void)font_advance(font_id);
}

TextExtent measure_text(const std::string& text, int font_id, int font_size_px,
                        double rotation_deg) {
    if (text.empty()) throw ValidationError("measure_text: empty text");
    TextBitmap bm = layout_text(text, font_id);
    if (bm.empty())
        throw ValidationError("degenerate watermark spec: text renders to an empty bounding box");
    Placement p = place(bm, font_size_px, rotation_deg);
    return {p.ext_w, p.ext_h};
}

RenderedWatermark render_watermark(const WatermarkSpec& spec,
                                   std::pair<int, int> canvas_hw, uint64_t rng_seed) {
    spec.validate();
    const int H = canvas_hw.first;
    const int W = canvas_hw.second;
    if (H < 1 || W < 1) throw ValidationError("render: canvas must be at least 1x1");

    TextBitmap bm = layout_text(spec.text, spec.font_id);
    if (bm.empty())
        throw ValidationError("degenerate watermark spec: text renders to an empty bounding box");
    Placement p = place(bm, spec.font_size_px, spec.rotation_deg);

    if (spec.position[0] < 0 || spec.position[1] < 0 ||
        spec.position[0] + p.ext_w > W || spec.position[1] + p.ext_h > H)
        throw ValidationError("watermark bounding box (" + std::to_string(p.ext_w) + "x" +
                              std::to_string(p.ext_h) + " at " + std::to_string(spec.position[0]) +
                              "," + std::to_string(spec.position[1]) +
                              ") does not fit the frame (" + std::to_string(W) + "x" +
                              std::to_string(H) + ")");

    Rng rng(rng_seed);
    const double opacity = rng.uniform(spec.opacity_range[0], spec.opacity_range[1]);

    auto alpha = torch::zeros({1, 1, H, W}, torch::kFloat32);
    auto acc = alpha.accessor<float, 4>();

    // translation such that the AABB's top-left lands on spec.position
    const double tx = spec.position[0] - p.min_x;
    const double ty = spec.position[1] - p.min_y;
    const double inv_s = 1.0 / p.scale;
    constexpr int kSub = 4;

    for (int y = spec.position[1]; y < spec.position[1] + p.ext_h; ++y) {
        for (int x = spec.position[0]; x < spec.position[0] + p.ext_w; ++x) {
            int hits = 0;
            for (int sy = 0; sy < kSub; ++sy) {
                const double py = y + (sy + 0.5) / kSub - ty;
                for (int sx = 0; sx < kSub; ++sx) {
                    const double px = x + (sx + 0.5) / kSub - tx;
                    // inverse rotation, then unscale, then shift to glyph coords
                    const double gx = (p.cos_t * px + p.sin_t * py) * inv_s + p.cx;
                    const double gy = (-p.sin_t * px + p.cos_t * py) * inv_s + p.cy;
                    if (bm.test(static_cast<int>(std::floor(gx)),
                                static_cast<int>(std::floor(gy))))
                        ++hits;
                }
            }
            if (hits > 0)
                acc[0][0][y][x] =
                    static_cast<float>(opacity * (static_cast<double>(hits) / (kSub * kSub)));
        }
    }

    auto watermark = torch::empty({1, 3, H, W}, torch::kFloat32);
    for (int c = 0; c < 3; ++c)
        watermark.index_put_({0, c}, static_cast<float>(spec.color[c]));
    return {watermark, alpha};
}

torch::Tensor composite(const torch::Tensor& original, const torch::Tensor& watermark,
                        const torch::Tensor& alpha) {
    for (const auto* t : {&original, &watermark, &alpha})
        if (t->dim() != 4) throw ShapeError("composite: expected 4-d (B,C,H,W) tensors");
    auto same_hw = [&](const torch::Tensor& t) {
        return t.size(2) == original.size(2) && t.size(3) == original.size(3);
    };
    auto bcast = [](int64_t a, int64_t b) { return a == b || a == 1 || b == 1; };
    if (!same_hw(watermark) || !same_hw(alpha) ||
        !bcast(watermark.size(1), original.size(1)) || !bcast(alpha.size(1), original.size(1)) ||
        !bcast(watermark.size(0), original.size(0)) || !bcast(alpha.size(0), original.size(0)))
        throw ShapeError("composite: shapes not broadcast-compatible");
    for (const auto* t : {&original, &watermark, &alpha}) {
        if (t->numel() == 0) continue;
        double lo = t->min().item<double>();
        double hi = t->max().item<double>();
        if (lo < 0.0 || hi > 1.0)
            throw ValidationError("composite: inputs must be in [0,1]");
    }
    return alpha * watermark + (1 - alpha) * original;
}

} // namespace demark::synth
