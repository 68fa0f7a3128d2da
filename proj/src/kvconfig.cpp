#include "demark/kvconfig.hpp"

#include "demark/errors.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace demark {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::pair<std::string, std::string> split_kv(const std::string& line, const std::string& context) {
    auto pos = line.find('=');
    if (pos == std::string::npos)
        throw ConfigError("config: expected 'key = value' in " + context + ": '" + line + "'");
    std::string key = trim(line.substr(0, pos));
    std::string value = trim(line.substr(pos + 1));
    if (key.empty())
        throw ConfigError("config: empty key in " + context + ": '" + line + "'");
    return {key, value};
}

} // namespace

KvConfig KvConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path.string());
    KvConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto [k, v] = split_kv(t, path.string() + ":" + std::to_string(lineno));
        cfg.values_[k] = v;
    }
    return cfg;
}

void KvConfig::apply_override(const std::string& kv) {
    auto [k, v] = split_kv(kv, "override");
    values_[k] = v;
}

void KvConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

bool KvConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::string KvConfig::get_str(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
}

double KvConfig::get_double(const std::string& key, double def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
        size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a number, got '" + it->second + "'");
    }
}

int64_t KvConfig::get_int(const std::string& key, int64_t def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
        size_t pos = 0;
        int64_t v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects an integer, got '" + it->second + "'");
    }
}

uint64_t KvConfig::get_u64(const std::string& key, uint64_t def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
        size_t pos = 0;
        uint64_t v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects an unsigned integer, got '" + it->second + "'");
    }
}

bool KvConfig::get_bool(const std::string& key, bool def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::string v = it->second;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config: key '" + key + "' expects a boolean, got '" + it->second + "'");
}

std::vector<double> KvConfig::get_doubles(const std::string& key, const std::vector<double>& def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(trim(item)));
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' expects comma-separated numbers, got '" + it->second + "'");
        }
    }
    if (out.empty())
        throw ConfigError("config: key '" + key + "' expects comma-separated numbers, got '" + it->second + "'");
    return out;
}

std::vector<int64_t> KvConfig::get_ints(const std::string& key, const std::vector<int64_t>& def) const {
    auto doubles = get_doubles(key, {});
    if (doubles.empty()) return def;
    std::vector<int64_t> out;
    for (double d : doubles) {
        auto v = static_cast<int64_t>(d);
        if (static_cast<double>(v) != d)
            throw ConfigError("config: key '" + key + "' expects integers");
        out.push_back(v);
    }
    return out;
}

void KvConfig::check_known(const std::set<std::string>& known) const {
    std::string unknown;
    for (const auto& [k, v] : values_) {
        if (!known.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
    }
    if (!unknown.empty())
        throw ConfigError("config: unknown keys: " + unknown);
}

std::string KvConfig::render() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys = {
        // synthgen
        "gen.width", "gen.height", "gen.opacity_lo", "gen.opacity_hi",
        "gen.text_len_lo", "gen.text_len_hi", "gen.charset",
        "gen.rotation_max_deg", "gen.font_frac_lo", "gen.font_frac_hi",
        "gen.font_ids", "gen.color", "gen.threads", "gen.seed",
        // model
        "net.preset", "net.encoder", "net.mask_decoder", "net.image_decoder",
        "net.input_h", "net.input_w",
        // losses
        "loss.w_mask_stage", "loss.w_fuse", "loss.w_image",
        "loss.w_bce", "loss.w_ssim", "loss.w_iou", "loss.w_l1",
        // trainer
        "train.batch_size", "train.max_steps", "train.checkpoint_every",
        "train.learning_rate", "train.optimizer", "train.beta1", "train.beta2",
        "train.weight_decay", "train.grad_clip", "train.seed",
        "train.deterministic", "train.dataset_dir", "train.val_dir",
        "train.out_dir", "train.device", "train.on_the_fly",
        "train.backgrounds_dir",
        // eval / infer
        "eval.batch_size", "eval.miou_threshold", "eval.mask_mode",
        "eval.mask_threshold",
    };
    return keys;
}

} // namespace demark
