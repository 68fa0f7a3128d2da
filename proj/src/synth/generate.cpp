#include "demark/synth/generate.hpp"

#include "demark/errors.hpp"
#include "demark/image.hpp"
#include "demark/image_io.hpp"
#include "demark/synth/font.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

namespace fs = std::filesystem;

namespace demark::synth {

GeneratorConfig GeneratorConfig::from_config(const KvConfig& cfg) {
    GeneratorConfig g;
    g.height = static_cast<int>(cfg.get_int("gen.height", g.height));
    g.width = static_cast<int>(cfg.get_int("gen.width", g.width));
    g.opacity_lo = cfg.get_double("gen.opacity_lo", g.opacity_lo);
    g.opacity_hi = cfg.get_double("gen.opacity_hi", g.opacity_hi);
    g.text_len_lo = static_cast<int>(cfg.get_int("gen.text_len_lo", g.text_len_lo));
    g.text_len_hi = static_cast<int>(cfg.get_int("gen.text_len_hi", g.text_len_hi));
    g.charset = cfg.get_str("gen.charset", g.charset);
    g.rotation_max_deg = cfg.get_double("gen.rotation_max_deg", g.rotation_max_deg);
    g.font_frac_lo = cfg.get_double("gen.font_frac_lo", g.font_frac_lo);
    g.font_frac_hi = cfg.get_double("gen.font_frac_hi", g.font_frac_hi);
    auto ids = cfg.get_ints("gen.font_ids", {});
    if (!ids.empty()) {
        g.font_ids.clear();
        for (auto id : ids) g.font_ids.push_back(static_cast<int>(id));
    }
    if (cfg.has("gen.color")) {
        auto c = cfg.get_doubles("gen.color", {});
        if (c.size() != 3) throw ConfigError("gen.color expects 'r,g,b' in [0,1]");
        // snap to the 8-bit grid so Eq. 1 closure survives serialization
        std::array<double, 3> col{};
        for (int i = 0; i < 3; ++i) col[i] = std::round(c[i] * 255.0) / 255.0;
        g.fixed_color = col;
    }
    g.threads = static_cast<int>(cfg.get_int("gen.threads", g.threads));
    g.validate();
    return g;
}

void GeneratorConfig::validate() const {
    if (height < 16 || width < 16)
        throw ValidationError("generator: image size must be at least 16x16");
    if (!(opacity_lo >= 0 && opacity_lo <= opacity_hi && opacity_hi <= 1))
        throw ValidationError("generator: opacity range must satisfy 0 <= lo <= hi <= 1");
    if (text_len_lo < 1 || text_len_lo > text_len_hi)
        throw ValidationError("generator: text length range must satisfy 1 <= lo <= hi");
    if (charset.empty()) throw ValidationError("generator: charset must be non-empty");
    for (char c : charset)
        if (!glyph_supported(c))
            throw ValidationError(std::string("generator: charset character '") + c +
                                  "' has no glyph");
    if (rotation_max_deg < 0 || rotation_max_deg > 90)
        throw ValidationError("generator: rotation_max_deg must be in [0,90]");
    if (!(font_frac_lo > 0 && font_frac_lo <= font_frac_hi && font_frac_hi <= 1))
        throw ValidationError("generator: font size fractions must satisfy 0 < lo <= hi <= 1");
    if (font_ids.empty()) throw ValidationError("generator: font_ids must be non-empty");
    for (int id : font_ids) (void)font_advance(id); // throws on bad id
    if (fixed_color)
        for (double c : *fixed_color)
            if (!(c >= 0 && c <= 1)) throw ValidationError("generator: color must be in [0,1]");
    if (threads < 1) throw ValidationError("generator: threads must be >= 1");
}

// threads is an execution knob, not a generation parameter: it stays out of
// the echo so parallel and serial runs emit identical manifests.
nlohmann::json GeneratorConfig::to_json() const {
    nlohmann::json j{
        {"height", height},
        {"width", width},
        {"opacity_lo", opacity_lo},
        {"opacity_hi", opacity_hi},
        {"text_len_lo", text_len_lo},
        {"text_len_hi", text_len_hi},
        {"charset", charset},
        {"rotation_max_deg", rotation_max_deg},
        {"font_frac_lo", font_frac_lo},
        {"font_frac_hi", font_frac_hi},
        {"font_ids", font_ids},
    };
    if (fixed_color) j["color"] = *fixed_color;
    return j;
}

WatermarkSpec sample_spec(const GeneratorConfig& cfg, Rng& rng) {
    WatermarkSpec spec;
    spec.font_id = cfg.font_ids[rng.uniform_int(0, static_cast<int64_t>(cfg.font_ids.size()) - 1)];
    const auto len = rng.uniform_int(cfg.text_len_lo, cfg.text_len_hi);
    spec.text.clear();
    for (int64_t i = 0; i < len; ++i)
        spec.text += cfg.charset[rng.uniform_int(0, static_cast<int64_t>(cfg.charset.size()) - 1)];
    const int min_hw = std::min(cfg.height, cfg.width);
    const int px_lo = std::max(8, static_cast<int>(std::lround(cfg.font_frac_lo * min_hw)));
    const int px_hi = std::max(px_lo, static_cast<int>(std::lround(cfg.font_frac_hi * min_hw)));
    spec.font_size_px = static_cast<int>(rng.uniform_int(px_lo, px_hi));
    spec.rotation_deg = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg);
    if (cfg.fixed_color) {
        spec.color = *cfg.fixed_color;
    } else {
        for (int c = 0; c < 3; ++c)
            spec.color[c] = static_cast<double>(rng.uniform_int(0, 255)) / 255.0;
    }
    spec.opacity_range = {cfg.opacity_lo, cfg.opacity_hi};

    // shrink until the rotated bounding box fits the frame
    TextExtent ext = measure_text(spec.text, spec.font_id, spec.font_size_px, spec.rotation_deg);
    while (ext.width > cfg.width || ext.height > cfg.height) {
        if (spec.font_size_px > 8) {
            spec.font_size_px = std::max(8, spec.font_size_px * 7 / 8 - 1);
        } else if (spec.text.size() > 1) {
            spec.text.pop_back();
        } else {
            throw ValidationError("generator: frame too small for any watermark");
        }
        ext = measure_text(spec.text, spec.font_id, spec.font_size_px, spec.rotation_deg);
    }
    spec.position[0] = static_cast<int>(rng.uniform_int(0, cfg.width - ext.width));
    spec.position[1] = static_cast<int>(rng.uniform_int(0, cfg.height - ext.height));
    return spec;
}

WatermarkSample synthesize_sample(const torch::Tensor& background, const GeneratorConfig& cfg,
                                  Rng& rng, uint64_t seed_record) {
    if (background.dim() != 4 || background.size(0) != 1 || background.size(1) != 3 ||
        background.size(2) != cfg.height || background.size(3) != cfg.width)
        throw ShapeError("synthesize_sample: background must be (1,3,H,W) at the configured size");

    WatermarkSample s;
    s.seed = seed_record;
    s.spec = sample_spec(cfg, rng);
    const uint64_t render_seed = rng.next_u64();
    auto rendered = render_watermark(s.spec, {cfg.height, cfg.width}, render_seed);

    // quantize alpha to the 8-bit grid first; the ground-truth mask and the
    // composite both derive from the quantized map so Eq. 1 closure and
    // mask == (alpha > 0) survive serialization exactly
    ImageU8 alpha_u8 = to_image_u8(rendered.alpha);
    s.alpha = to_tensor(alpha_u8);
    s.mask = (s.alpha > 0).to(torch::kFloat32);
    s.original = background;
    s.corrupted = composite(s.original, rendered.watermark, s.alpha);
    return s;
}

WatermarkSample synthesize_sample(const torch::Tensor& background, const GeneratorConfig& cfg,
                                  uint64_t sample_seed) {
    Rng rng(sample_seed);
    return synthesize_sample(background, cfg, rng, sample_seed);
}

namespace {

nlohmann::json spec_to_json(const WatermarkSpec& s) {
    return nlohmann::json{
        {"text", s.text},
        {"font_id", s.font_id},
        {"font_size_px", s.font_size_px},
        {"rotation_deg", s.rotation_deg},
        {"color", s.color},
        {"opacity_range", s.opacity_range},
        {"position", s.position},
    };
}

WatermarkSpec spec_from_json(const nlohmann::json& j) {
    WatermarkSpec s;
    s.text = j.at("text").get<std::string>();
    s.font_id = j.at("font_id").get<int>();
    s.font_size_px = j.at("font_size_px").get<int>();
    s.rotation_deg = j.at("rotation_deg").get<double>();
    s.color = j.at("color").get<std::array<double, 3>>();
    s.opacity_range = j.at("opacity_range").get<std::array<double, 2>>();
    s.position = j.at("position").get<std::array<int, 2>>();
    return s;
}

std::string index_name(int64_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06lld.png", static_cast<long long>(i));
    return buf;
}

} // namespace

nlohmann::json DatasetManifest::to_json() const {
    nlohmann::json j;
    j["version"] = version;
    j["config"] = config.to_json();
    j["samples"] = nlohmann::json::array();
    for (const auto& e : samples) {
        j["samples"].push_back(nlohmann::json{
            {"index", e.index},
            {"seed", e.seed},
            {"spec", spec_to_json(e.spec)},
            {"files",
             {{"corrupted", e.corrupted_file},
              {"original", e.original_file},
              {"mask", e.mask_file},
              {"alpha", e.alpha_file}}},
        });
    }
    return j;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
    DatasetManifest m;
    m.version = j.at("version").get<int>();
    const auto& c = j.at("config");
    m.config.height = c.at("height").get<int>();
    m.config.width = c.at("width").get<int>();
    m.config.opacity_lo = c.at("opacity_lo").get<double>();
    m.config.opacity_hi = c.at("opacity_hi").get<double>();
    m.config.text_len_lo = c.at("text_len_lo").get<int>();
    m.config.text_len_hi = c.at("text_len_hi").get<int>();
    m.config.charset = c.at("charset").get<std::string>();
    m.config.rotation_max_deg = c.at("rotation_max_deg").get<double>();
    m.config.font_frac_lo = c.at("font_frac_lo").get<double>();
    m.config.font_frac_hi = c.at("font_frac_hi").get<double>();
    m.config.font_ids = c.at("font_ids").get<std::vector<int>>();
    if (c.contains("color")) m.config.fixed_color = c.at("color").get<std::array<double, 3>>();
    if (c.contains("threads")) m.config.threads = c.at("threads").get<int>();
    for (const auto& e : j.at("samples")) {
        ManifestEntry entry;
        entry.index = e.at("index").get<int64_t>();
        entry.seed = e.at("seed").get<uint64_t>();
        entry.spec = spec_from_json(e.at("spec"));
        entry.corrupted_file = e.at("files").at("corrupted").get<std::string>();
        entry.original_file = e.at("files").at("original").get<std::string>();
        entry.mask_file = e.at("files").at("mask").get<std::string>();
        entry.alpha_file = e.at("files").at("alpha").get<std::string>();
        m.samples.push_back(std::move(entry));
    }
    return m;
}

DatasetManifest generate_dataset(const fs::path& background_dir, const fs::path& out_dir,
                                 int64_t count, uint64_t seed, const GeneratorConfig& cfg) {
    cfg.validate();
    if (count < 0) throw ValidationError("generate: count must be >= 0");

    std::vector<fs::path> backgrounds;
    if (count > 0) {
        if (!fs::is_directory(background_dir))
            throw ValidationError("generate: background dir does not exist: " +
                                  background_dir.string());
        for (const auto& entry : fs::directory_iterator(background_dir))
            if (entry.is_regular_file() && has_image_extension(entry.path()))
                backgrounds.push_back(entry.path());
        std::sort(backgrounds.begin(), backgrounds.end());
        if (backgrounds.empty())
            throw ValidationError("generate: no background images in " + background_dir.string());
    }

    for (const char* sub : {"corrupted", "original", "mask", "alpha"})
        fs::create_directories(out_dir / sub);

    std::vector<ManifestEntry> entries(static_cast<size_t>(count));
    std::vector<char> bad(backgrounds.size(), 0);
    int64_t bad_count = 0;
    std::mutex pool_mu;
    std::exception_ptr first_error;
    std::mutex err_mu;

    auto run_sample = [&](int64_t i) {
        const uint64_t child = Rng::derive(seed, static_cast<uint64_t>(i));
        Rng rng(child);

        ImageU8 bg_img;
        for (;;) {
            int64_t idx = rng.uniform_int(0, static_cast<int64_t>(backgrounds.size()) - 1);
            {
                std::lock_guard<std::mutex> lock(pool_mu);
                if (bad_count == static_cast<int64_t>(backgrounds.size()))
                    throw IoError("generate: every background image failed to decode");
                if (bad[static_cast<size_t>(idx)]) continue;
            }
            try {
                bg_img = read_image_rgb(backgrounds[static_cast<size_t>(idx)]);
                break;
            } catch (const IoError&) {
                std::lock_guard<std::mutex> lock(pool_mu);
                if (!bad[static_cast<size_t>(idx)]) {
                    bad[static_cast<size_t>(idx)] = 1;
                    ++bad_count;
                    std::cerr << "warning: skipping undecodable background: "
                              << backgrounds[static_cast<size_t>(idx)].string() << "\n";
                }
            }
        }
        bg_img = center_crop_to_aspect(bg_img, cfg.height, cfg.width);
        bg_img = resize_bilinear(bg_img, cfg.height, cfg.width);

        WatermarkSample s = synthesize_sample(to_tensor(bg_img), cfg, rng, child);

        const std::string name = index_name(i);
        write_png(out_dir / "corrupted" / name, to_image_u8(s.corrupted));
        write_png(out_dir / "original" / name, to_image_u8(s.original));
        write_png(out_dir / "mask" / name, to_image_u8(s.mask));
        write_png(out_dir / "alpha" / name, to_image_u8(s.alpha));

        ManifestEntry e;
        e.index = i;
        e.seed = child;
        e.spec = s.spec;
        e.corrupted_file = "corrupted/" + name;
        e.original_file = "original/" + name;
        e.mask_file = "mask/" + name;
        e.alpha_file = "alpha/" + name;
        entries[static_cast<size_t>(i)] = std::move(e);
    };

    const int threads = std::max(1, std::min<int>(cfg.threads, static_cast<int>(std::max<int64_t>(count, 1))));
    if (threads == 1 || count == 0) {
        for (int64_t i = 0; i < count; ++i) run_sample(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int64_t> next{0};
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (;;) {
                    int64_t i = next.fetch_add(1);
                    if (i >= count) return;
                    try {
                        run_sample(i);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(err_mu);
                        if (!first_error) first_error = std::current_exception();
                        return;
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    DatasetManifest manifest;
    manifest.config = cfg;
    manifest.samples = std::move(entries);

    std::ofstream out(out_dir / "manifest.json");
    if (!out) throw IoError("generate: cannot write manifest in " + out_dir.string());
    out << manifest.to_json().dump(2) << "\n";
    return manifest;
}

DatasetManifest load_manifest(const fs::path& dataset_dir) {
    std::ifstream in(dataset_dir / "manifest.json");
    if (!in) throw IoError("no manifest.json in " + dataset_dir.string());
    nlohmann::json j;
    in >> j;
    return DatasetManifest::from_json(j);
}

} // namespace demark::synth
