#pragma once

#include "demark/kvconfig.hpp"
#include "demark/rng.hpp"
#include "demark/synth/render.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace demark::synth {

struct GeneratorConfig {
    int height = 512;
    int width = 512;
    double opacity_lo = 0.3;
    double opacity_hi = 1.0;
    int text_len_lo = 4;
    int text_len_hi = 12;
    std::string charset =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
    double rotation_max_deg = 30.0;
    double font_frac_lo = 0.12; // font px = frac * min(height, width)
    double font_frac_hi = 0.35;
    std::vector<int> font_ids{0, 1};
    std::optional<std::array<double, 3>> fixed_color; // random RGB when unset
    int threads = 1;

    static GeneratorConfig from_config(const KvConfig& cfg);
    void validate() const;
    nlohmann::json to_json() const;
};

// One supervised quad. All tensors are float32 on the 8-bit grid, so
// corrupted == alpha*watermark_color + (1-alpha)*original holds bit-exactly
// in memory and survives PNG round-trips up to corrupted's own quantization.
struct WatermarkSample {
    torch::Tensor corrupted; // (1,3,H,W)
    torch::Tensor original;  // (1,3,H,W)
    torch::Tensor mask;      // (1,1,H,W) in {0,1}, mask = (alpha > 0)
    torch::Tensor alpha;     // (1,1,H,W) in [0,1]
    WatermarkSpec spec;
    uint64_t seed = 0;
};

// Draws a placement-valid spec; consumes a fixed number of draws from rng so
// generation order is reproducible.
WatermarkSpec sample_spec(const GeneratorConfig& cfg, Rng& rng);

// background: (1,3,H,W) float32 already on the 8-bit grid.
WatermarkSample synthesize_sample(const torch::Tensor& background,
                                  const GeneratorConfig& cfg, Rng& rng,
                                  uint64_t seed_record);
WatermarkSample synthesize_sample(const torch::Tensor& background,
                                  const GeneratorConfig& cfg, uint64_t sample_seed);

struct ManifestEntry {
    int64_t index = 0;
    uint64_t seed = 0;
    WatermarkSpec spec;
    std::string corrupted_file, original_file, mask_file, alpha_file;
};

struct DatasetManifest {
    int version = 1;
    GeneratorConfig config;
    std::vector<ManifestEntry> samples;

    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j);
};

// Emits `count` quads as out_dir/{corrupted,original,mask,alpha}/NNNNNN.png
// plus out_dir/manifest.json. Per-sample seeds derive from (seed, index), so
// output is identical for any thread count.
DatasetManifest generate_dataset(const std::filesystem::path& background_dir,
                                 const std::filesystem::path& out_dir,
                                 int64_t count, uint64_t seed,
                                 const GeneratorConfig& cfg);

DatasetManifest load_manifest(const std::filesystem::path& dataset_dir);

} // namespace demark::synth
