#include "demark/losses.hpp"

#include "demark/errors.hpp"

#include <cmath>

namespace demark {

namespace F = torch::nn::functional;

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* op) {
    if (a.dim() != 4 || b.dim() != 4)
        throw ShapeError(std::string(op) + ": expected 4-d (B,C,H,W) tensors");
    if (!a.sizes().equals(b.sizes()))
        throw ShapeError(std::string(op) + ": shape mismatch " +
                         c10::str(a.sizes()) + " vs " + c10::str(b.sizes()));
}

torch::Tensor gaussian_window(int window, double sigma, const torch::TensorOptions& opts) {
    auto g = torch::empty({window}, opts);
    const double center = (window - 1) / 2.0;
    for (int i = 0; i < window; ++i)
        g[i] = std::exp(-((i - center) * (i - center)) / (2.0 * sigma * sigma));
    g = g / g.sum();
    return g.unsqueeze(1).mm(g.unsqueeze(0)); // (w,w)
}

} // namespace

LossWeights LossWeights::defaults(int num_mask_sides) {
    LossWeights w;
    w.w_mask_stage.assign(static_cast<size_t>(num_mask_sides), 1.0);
    if (!w.w_mask_stage.empty()) w.w_mask_stage[0] = 0.5; // deepest side is unreliable
    return w;
}

LossWeights LossWeights::from_config(const KvConfig& cfg, int num_mask_sides) {
    LossWeights w = defaults(num_mask_sides);
    if (cfg.has("loss.w_mask_stage")) {
        auto v = cfg.get_doubles("loss.w_mask_stage", {});
        w.w_mask_stage = v;
    }
    w.w_fuse = cfg.get_double("loss.w_fuse", w.w_fuse);
    w.w_image = cfg.get_double("loss.w_image", w.w_image);
    w.w_bce = cfg.get_double("loss.w_bce", w.w_bce);
    w.w_ssim = cfg.get_double("loss.w_ssim", w.w_ssim);
    w.w_iou = cfg.get_double("loss.w_iou", w.w_iou);
    w.w_l1 = cfg.get_double("loss.w_l1", w.w_l1);
    w.validate(num_mask_sides);
    return w;
}

void LossWeights::validate(int num_mask_sides) const {
    if (static_cast<int>(w_mask_stage.size()) != num_mask_sides)
        throw ConfigError("loss: w_mask_stage needs " + std::to_string(num_mask_sides) +
                          " entries (one per mask side output), got " +
                          std::to_string(w_mask_stage.size()));
    auto nonneg = [](double v) { return v >= 0.0 && std::isfinite(v); };
    for (double v : w_mask_stage)
        if (!nonneg(v)) throw ConfigError("loss: stage weights must be finite and >= 0");
    for (double v : {w_fuse, w_image, w_bce, w_ssim, w_iou, w_l1})
        if (!nonneg(v)) throw ConfigError("loss: weights must be finite and >= 0");
}

torch::Tensor bce_loss(const torch::Tensor& pred, const torch::Tensor& target, double eps) {
    check_same_shape(pred, target, "bce_loss");
    auto p = pred.clamp(eps, 1.0 - eps);
    return -(target * p.log() + (1 - target) * (1 - p).log()).mean();
}

torch::Tensor ssim_index(const torch::Tensor& a, const torch::Tensor& b, int window,
                         double sigma) {
    check_same_shape(a, b, "ssim");
    if (window < 2 || window % 2 == 0)
        throw ValidationError("ssim: window must be an odd integer >= 3");
    if (a.size(2) < window || a.size(3) < window)
        throw ValidationError("ssim: image " + std::to_string(a.size(2)) + "x" +
                              std::to_string(a.size(3)) + " is smaller than the " +
                              std::to_string(window) + "x" + std::to_string(window) + " window");
    const auto channels = a.size(1);
    auto kernel = gaussian_window(window, sigma, a.options())
                      .expand({channels, 1, window, window})
                      .contiguous();
    auto conv = [&](const torch::Tensor& t) {
        return F::conv2d(t, kernel, F::Conv2dFuncOptions().groups(channels)); // valid windows
    };
    auto mu_a = conv(a);
    auto mu_b = conv(b);
    auto mu_aa = mu_a * mu_a;
    auto mu_bb = mu_b * mu_b;
    auto mu_ab = mu_a * mu_b;
    auto sigma_aa = conv(a * a) - mu_aa;
    auto sigma_bb = conv(b * b) - mu_bb;
    auto sigma_ab = conv(a * b) - mu_ab;
    const double c1 = 0.01 * 0.01; // unit dynamic range
    const double c2 = 0.03 * 0.03;
    auto ssim_map = ((2 * mu_ab + c1) * (2 * sigma_ab + c2)) /
                    ((mu_aa + mu_bb + c1) * (sigma_aa + sigma_bb + c2));
    return ssim_map.mean();
}

torch::Tensor ssim_loss(const torch::Tensor& pred, const torch::Tensor& target, int window,
                        double sigma) {
    return 1 - ssim_index(pred, target, window, sigma);
}

torch::Tensor iou_loss(const torch::Tensor& pred, const torch::Tensor& target) {
    check_same_shape(pred, target, "iou_loss");
    auto inter = (pred * target).sum();
    auto denom = pred.sum() + target.sum() - inter;
    if (denom.item<double>() == 0.0) return pred.sum() * 0; // perfect empty prediction
    return 1 - inter / denom;
}

torch::Tensor l1_loss(const torch::Tensor& pred, const torch::Tensor& target) {
    check_same_shape(pred, target, "l1_loss");
    return (pred - target).abs().mean();
}

namespace {

// The graph-carrying tensor and the logged double are accumulated separately:
// the double total is the exact weighted sum of the itemized terms, so the
// loss log recomposes bit-for-bit regardless of training dtype.
struct Component {
    torch::Tensor tensor;
    double value = 0;
};

Component mask_component(const ModelOutputs& outputs, const torch::Tensor& mask_gt,
                         const LossWeights& w, LossReport& report) {
    if (outputs.mask_side.size() != w.w_mask_stage.size())
        throw ConfigError("mask_loss: " + std::to_string(outputs.mask_side.size()) +
                          " side outputs but " + std::to_string(w.w_mask_stage.size()) +
                          " stage weights");
    Component out{torch::zeros({}, mask_gt.options()), 0.0};
    auto term = [&](const torch::Tensor& pred, MaskTerms& t) {
        auto bce = bce_loss(pred, mask_gt);
        auto ssim = ssim_loss(pred, mask_gt);
        auto iou = iou_loss(pred, mask_gt);
        t.bce = bce.item<double>();
        t.ssim = ssim.item<double>();
        t.iou = iou.item<double>();
        return Component{w.w_bce * bce + w.w_ssim * ssim + w.w_iou * iou,
                         w.w_bce * t.bce + w.w_ssim * t.ssim + w.w_iou * t.iou};
    };
    report.per_stage_mask.resize(outputs.mask_side.size());
    for (size_t i = 0; i < outputs.mask_side.size(); ++i) {
        auto c = term(outputs.mask_side[i], report.per_stage_mask[i]);
        out.tensor = out.tensor + w.w_mask_stage[i] * c.tensor;
        out.value += w.w_mask_stage[i] * c.value;
    }
    auto fused = term(outputs.mask_fused, report.fused_mask);
    out.tensor = out.tensor + w.w_fuse * fused.tensor;
    out.value += w.w_fuse * fused.value;
    return out;
}

Component image_component(const ModelOutputs& outputs, const torch::Tensor& image_gt,
                          const LossWeights& w, LossReport& report) {
    Component out{torch::zeros({}, image_gt.options()), 0.0};
    report.image.resize(outputs.image_side.size());
    for (size_t i = 0; i < outputs.image_side.size(); ++i) {
        auto ssim = ssim_loss(outputs.image_side[i], image_gt);
        auto l1 = demark::l1_loss(outputs.image_side[i], image_gt);
        report.image[i].ssim = ssim.item<double>();
        report.image[i].l1 = l1.item<double>();
        out.tensor = out.tensor + (w.w_ssim * ssim + w.w_l1 * l1);
        out.value += w.w_ssim * report.image[i].ssim + w.w_l1 * report.image[i].l1;
    }
    out.tensor = w.w_image * out.tensor;
    out.value = w.w_image * out.value;
    return out;
}

} // namespace

LossReport mask_loss(const ModelOutputs& outputs, const torch::Tensor& mask_gt,
                     const LossWeights& weights) {
    LossReport report;
    auto c = mask_component(outputs, mask_gt, weights, report);
    report.total_tensor = c.tensor;
    report.mask_total = c.value;
    report.total = c.value;
    return report;
}

LossReport image_loss(const ModelOutputs& outputs, const torch::Tensor& image_gt,
                      const LossWeights& weights) {
    LossReport report;
    auto c = image_component(outputs, image_gt, weights, report);
    report.total_tensor = c.tensor;
    report.image_total = c.value;
    report.total = c.value;
    return report;
}

LossReport total_loss(const ModelOutputs& outputs, const torch::Tensor& mask_gt,
                      const torch::Tensor& image_gt, const LossWeights& weights) {
    LossReport report;
    auto mask_c = mask_component(outputs, mask_gt, weights, report);
    auto image_c = image_component(outputs, image_gt, weights, report);
    report.mask_total = mask_c.value;
    report.image_total = image_c.value;
    report.total_tensor = mask_c.tensor + image_c.tensor;
    report.total = mask_c.value + image_c.value;
    return report;
}

nlohmann::json LossReport::to_json(int64_t step) const {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& t : per_stage_mask)
        stages.push_back({{"bce", t.bce}, {"ssim", t.ssim}, {"iou", t.iou}});
    nlohmann::json images = nlohmann::json::array();
    for (const auto& t : image) images.push_back({{"ssim", t.ssim}, {"l1", t.l1}});
    return nlohmann::json{
        {"step", step},
        {"mask_stages", stages}, // deepest first
        {"mask_fused", {{"bce", fused_mask.bce}, {"ssim", fused_mask.ssim}, {"iou", fused_mask.iou}}},
        {"image_stages", images},
        {"mask_total", mask_total},
        {"image_total", image_total},
        {"total", total},
    };
}

std::string LossReport::first_non_finite() const {
    auto bad = [](double v) { return !std::isfinite(v); };
    for (size_t i = 0; i < per_stage_mask.size(); ++i) {
        if (bad(per_stage_mask[i].bce)) return "mask_stage[" + std::to_string(i) + "].bce";
        if (bad(per_stage_mask[i].ssim)) return "mask_stage[" + std::to_string(i) + "].ssim";
        if (bad(per_stage_mask[i].iou)) return "mask_stage[" + std::to_string(i) + "].iou";
    }
    if (bad(fused_mask.bce)) return "mask_fused.bce";
    if (bad(fused_mask.ssim)) return "mask_fused.ssim";
    if (bad(fused_mask.iou)) return "mask_fused.iou";
    for (size_t i = 0; i < image.size(); ++i) {
        if (bad(image[i].ssim)) return "image_stage[" + std::to_string(i) + "].ssim";
        if (bad(image[i].l1)) return "image_stage[" + std::to_string(i) + "].l1";
    }
    if (bad(total)) return "total";
    return {};
}

} // namespace demark
