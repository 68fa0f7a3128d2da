#include "demark/model/net.hpp"

#include "demark/errors.hpp"

#include <sstream>

namespace demark {

namespace F = torch::nn::functional;

namespace {

std::vector<RsuConfig> parse_rsu_list(const std::string& s) {
    std::vector<RsuConfig> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(RsuConfig::parse(item));
    if (out.empty()) throw ConfigError("empty RSU list: '" + s + "'");
    return out;
}

std::string render_rsu_list(const std::vector<RsuConfig>& list) {
    std::string s;
    for (size_t i = 0; i < list.size(); ++i) {
        if (i) s += ",";
        s += list[i].to_string();
    }
    return s;
}

} // namespace

void NetConfig::validate() const {
    if (encoder.size() < 2) throw ConfigError("net: encoder needs at least 2 stages");
    for (const auto& r : encoder) r.validate();
    for (const auto& r : mask_decoder) r.validate();
    for (const auto& r : image_decoder) r.validate();
    const size_t n = encoder.size();
    if (mask_decoder.size() != n - 1 || image_decoder.size() != n - 1)
        throw ConfigError("net: each decoder needs encoder_stages - 1 = " + std::to_string(n - 1) +
                          " stages");
    // depth is non-increasing as resolution drops
    for (size_t s = 1; s < n; ++s)
        if (encoder[s].depth_L > encoder[s - 1].depth_L)
            throw ConfigError("net: RSU depth must be non-increasing from stage " +
                              std::to_string(s) + " to " + std::to_string(s + 1));
    // stage-to-stage channel flow
    for (size_t s = 1; s < n; ++s)
        if (encoder[s].c_in != encoder[s - 1].c_out)
            throw ConfigError("net: encoder stage " + std::to_string(s + 1) + " expects c_in " +
                              std::to_string(encoder[s - 1].c_out));
    auto check_decoder = [&](const std::vector<RsuConfig>& dec, const char* name) {
        int64_t prev_out = encoder[n - 1].c_out;
        for (size_t j = 0; j < dec.size(); ++j) {
            const auto& skip = encoder[n - 2 - j];
            if (dec[j].c_in != prev_out + skip.c_out)
                throw ConfigError(std::string("net: ") + name + " stage " + std::to_string(j) +
                                  " expects c_in " + std::to_string(prev_out + skip.c_out) +
                                  " (prev " + std::to_string(prev_out) + " + skip " +
                                  std::to_string(skip.c_out) + "), got " +
                                  std::to_string(dec[j].c_in));
            prev_out = dec[j].c_out;
        }
    };
    check_decoder(mask_decoder, "mask_decoder");
    check_decoder(image_decoder, "image_decoder");
    if (input_hw[0] < 1 || input_hw[1] < 1) throw ConfigError("net: input size must be positive");
}

int64_t NetConfig::required_divisor() const {
    int64_t div = 1;
    const size_t n = encoder.size();
    for (size_t s = 0; s < n; ++s) {
        int64_t stage_factor = int64_t{1} << s; // stage s sits at 1/2^s resolution
        int64_t block = stage_factor * RsuBlockImpl(encoder[s]).required_divisor();
        div = std::max(div, block);
    }
    auto cover_decoder = [&](const std::vector<RsuConfig>& dec) {
        for (size_t j = 0; j < dec.size(); ++j) {
            int64_t stage_factor = int64_t{1} << (n - 2 - j);
            div = std::max(div, stage_factor * RsuBlockImpl(dec[j]).required_divisor());
        }
    };
    cover_decoder(mask_decoder);
    cover_decoder(image_decoder);
    return div;
}

std::string NetConfig::serialize() const {
    std::ostringstream os;
    os << "encoder=" << render_rsu_list(encoder) << ";mask_decoder=" << render_rsu_list(mask_decoder)
       << ";image_decoder=" << render_rsu_list(image_decoder) << ";input_hw=" << input_hw[0] << "x"
       << input_hw[1];
    return os.str();
}

NetConfig NetConfig::parse(const std::string& s) {
    NetConfig cfg;
    cfg.encoder.clear();
    std::stringstream ss(s);
    std::string field;
    bool have_enc = false, have_mask = false, have_image = false, have_hw = false;
    while (std::getline(ss, field, ';')) {
        auto pos = field.find('=');
        if (pos == std::string::npos) throw ConfigError("net config: bad field '" + field + "'");
        std::string key = field.substr(0, pos);
        std::string value = field.substr(pos + 1);
        if (key == "encoder") {
            cfg.encoder = parse_rsu_list(value);
            have_enc = true;
        } else if (key == "mask_decoder") {
            cfg.mask_decoder = parse_rsu_list(value);
            have_mask = true;
        } else if (key == "image_decoder") {
            cfg.image_decoder = parse_rsu_list(value);
            have_image = true;
        } else if (key == "input_hw") {
            auto xpos = value.find('x');
            if (xpos == std::string::npos)
                throw ConfigError("net config: input_hw expects HxW, got '" + value + "'");
            cfg.input_hw[0] = std::stoll(value.substr(0, xpos));
            cfg.input_hw[1] = std::stoll(value.substr(xpos + 1));
            have_hw = true;
        } else {
            throw ConfigError("net config: unknown field '" + key + "'");
        }
    }
    if (!have_enc || !have_mask || !have_image || !have_hw)
        throw ConfigError("net config: missing fields in '" + s + "'");
    cfg.validate();
    return cfg;
}

NetConfig NetConfig::preset_full() {
    NetConfig cfg;
    cfg.encoder = {
        RsuConfig{7, 3, 32, 64},          RsuConfig{6, 64, 32, 128},
        RsuConfig{5, 128, 64, 256},       RsuConfig{4, 256, 128, 512},
        RsuConfig{4, 512, 256, 512, true}, RsuConfig{4, 512, 256, 512, true},
    };
    cfg.mask_decoder = {
        RsuConfig{4, 1024, 256, 512, true}, RsuConfig{4, 1024, 128, 256},
        RsuConfig{5, 512, 64, 128},         RsuConfig{6, 256, 32, 64},
        RsuConfig{7, 128, 16, 64},
    };
    cfg.image_decoder = cfg.mask_decoder;
    cfg.input_hw = {512, 512};
    cfg.validate();
    return cfg;
}

NetConfig NetConfig::preset_small() {
    NetConfig cfg;
    cfg.encoder = {
        RsuConfig{4, 3, 8, 16},
        RsuConfig{3, 16, 8, 32},
        RsuConfig{2, 32, 16, 64},
        RsuConfig{2, 64, 32, 64, true},
    };
    cfg.mask_decoder = {
        RsuConfig{2, 128, 16, 32},
        RsuConfig{3, 64, 8, 16},
        RsuConfig{4, 32, 8, 16},
    };
    cfg.image_decoder = cfg.mask_decoder;
    cfg.input_hw = {128, 128};
    cfg.validate();
    return cfg;
}

NetConfig NetConfig::from_config(const KvConfig& cfg) {
    NetConfig net;
    const std::string preset = cfg.get_str("net.preset", "full");
    if (preset == "full") {
        net = preset_full();
    } else if (preset == "small") {
        net = preset_small();
    } else {
        throw ConfigError("net.preset must be 'full' or 'small', got '" + preset + "'");
    }
    if (cfg.has("net.encoder") || cfg.has("net.mask_decoder") || cfg.has("net.image_decoder")) {
        if (!(cfg.has("net.encoder") && cfg.has("net.mask_decoder") && cfg.has("net.image_decoder")))
            throw ConfigError("net: custom wiring needs all of net.encoder, net.mask_decoder, "
                              "net.image_decoder");
        net.encoder = parse_rsu_list(cfg.get_str("net.encoder", ""));
        net.mask_decoder = parse_rsu_list(cfg.get_str("net.mask_decoder", ""));
        net.image_decoder = parse_rsu_list(cfg.get_str("net.image_decoder", ""));
    }
    net.input_hw[0] = cfg.get_int("net.input_h", net.input_hw[0]);
    net.input_hw[1] = cfg.get_int("net.input_w", net.input_hw[1]);
    net.validate();
    return net;
}

AdvancedUnetImpl::AdvancedUnetImpl(NetConfig cfg_) : cfg(std::move(cfg_)) {
    cfg.validate();
    const size_t n = cfg.encoder.size();
    for (size_t s = 0; s < n; ++s)
        enc_blocks.push_back(
            register_module("enc" + std::to_string(s + 1), RsuBlock(cfg.encoder[s])));
    for (size_t j = 0; j < cfg.mask_decoder.size(); ++j)
        mask_dec_blocks.push_back(
            register_module("mask_dec" + std::to_string(j + 1), RsuBlock(cfg.mask_decoder[j])));
    for (size_t j = 0; j < cfg.image_decoder.size(); ++j)
        image_dec_blocks.push_back(
            register_module("image_dec" + std::to_string(j + 1), RsuBlock(cfg.image_decoder[j])));

    // side heads: 3x3 conv to target channels; [0] reads the bottleneck
    mask_heads.push_back(register_module(
        "mask_head1",
        torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.encoder[n - 1].c_out, 1, 3).padding(1))));
    for (size_t j = 0; j < cfg.mask_decoder.size(); ++j)
        mask_heads.push_back(register_module(
            "mask_head" + std::to_string(j + 2),
            torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.mask_decoder[j].c_out, 1, 3).padding(1))));
    for (size_t j = 0; j < cfg.image_decoder.size(); ++j)
        image_heads.push_back(register_module(
            "image_head" + std::to_string(j + 1),
            torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.image_decoder[j].c_out, 3, 3).padding(1))));
    fuse_head = register_module(
        "fuse_head",
        torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg.num_mask_sides(), 1, 1)));
}

int64_t AdvancedUnetImpl::parameter_count() const {
    int64_t total = 0;
    for (const auto& p : parameters()) total += p.numel();
    return total;
}

ModelOutputs AdvancedUnetImpl::forward(const torch::Tensor& x, const ForwardOptions& opts) {
    if (x.dim() != 4) throw ShapeError("forward: expected (B,3,H,W)");
    if (x.size(1) != cfg.encoder[0].c_in)
        throw ShapeError("forward: expected " + std::to_string(cfg.encoder[0].c_in) +
                         " channels, got " + std::to_string(x.size(1)));
    const int64_t div = cfg.required_divisor();
    if (x.size(2) % div != 0 || x.size(3) % div != 0)
        throw ShapeError("forward: spatial dims must be divisible by " + std::to_string(div) +
                         ", got " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)));

    const size_t n = cfg.encoder.size();
    const auto in_hw = std::vector<int64_t>{x.size(2), x.size(3)};

    // e[s] is the decoder-facing copy of each encoder output; ablation zeroes
    // only that copy so a broken skip concat cannot hide behind the encoder
    // chain itself.
    std::vector<torch::Tensor> e(n);
    auto cur = x;
    for (size_t s = 0; s < n; ++s) {
        if (s > 0) cur = F::max_pool2d(cur, F::MaxPool2dFuncOptions(2).stride(2));
        cur = enc_blocks[s]->forward(cur);
        e[s] = (opts.ablate_encoder_stage == static_cast<int>(s + 1)) ? torch::zeros_like(cur)
                                                                      : cur;
    }

    auto up2 = [](const torch::Tensor& t) {
        return F::interpolate(t, F::InterpolateFuncOptions()
                                     .scale_factor(std::vector<double>{2.0, 2.0})
                                     .mode(torch::kBilinear)
                                     .align_corners(false));
    };
    auto to_input_size = [&](const torch::Tensor& t) {
        if (t.size(2) == in_hw[0] && t.size(3) == in_hw[1]) return t;
        return F::interpolate(
            t, F::InterpolateFuncOptions().size(in_hw).mode(torch::kBilinear).align_corners(false));
    };

    auto decode = [&](std::vector<RsuBlock>& blocks) {
        std::vector<torch::Tensor> outs;
        auto d = e[n - 1];
        for (size_t j = 0; j < blocks.size(); ++j) {
            d = blocks[j]->forward(torch::cat({up2(d), e[n - 2 - j]}, 1));
            outs.push_back(d);
        }
        return outs;
    };
    auto md = decode(mask_dec_blocks);
    auto id = decode(image_dec_blocks);

    ModelOutputs out;
    out.mask_side.push_back(torch::sigmoid(to_input_size(mask_heads[0]->forward(e[n - 1]))));
    for (size_t j = 0; j < md.size(); ++j)
        out.mask_side.push_back(torch::sigmoid(to_input_size(mask_heads[j + 1]->forward(md[j]))));
    for (size_t j = 0; j < id.size(); ++j)
        out.image_side.push_back(torch::sigmoid(to_input_size(image_heads[j]->forward(id[j]))));

    out.mask_fused = torch::sigmoid(fuse_head->forward(torch::cat(out.mask_side, 1)));
    out.image_final = out.image_side.back();
    return out;
}

AdvancedUnet build_model(const NetConfig& cfg, uint64_t rng_seed) {
    torch::manual_seed(rng_seed);
    return AdvancedUnet(cfg);
}

} // namespace demark
