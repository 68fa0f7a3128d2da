#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace demark {

// Flat "key = value" config store with dotted section keys (train.batch_size,
// gen.opacity_lo, ...). Layering: defaults < file < command-line overrides.
// Every key must belong to the known-key universe; typos are rejected, not
// ignored.
class KvConfig {
public:
    KvConfig() = default;

    static KvConfig from_file(const std::filesystem::path& path);

    // "key=value"; later overrides win.
    void apply_override(const std::string& kv);
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;

    std::string get_str(const std::string& key, const std::string& def) const;
    double get_double(const std::string& key, double def) const;
    int64_t get_int(const std::string& key, int64_t def) const;
    uint64_t get_u64(const std::string& key, uint64_t def) const;
    bool get_bool(const std::string& key, bool def) const;

    // Comma-separated doubles / ints.
    std::vector<double> get_doubles(const std::string& key, const std::vector<double>& def) const;
    std::vector<int64_t> get_ints(const std::string& key, const std::vector<int64_t>& def) const;

    // Throws ConfigError listing any key not in `known`.
    void check_known(const std::set<std::string>& known) const;

    // Canonical "key = value" lines, sorted by key.
    std::string render() const;

    const std::map<std::string, std::string>& raw() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

// Union of every key any demark component reads. A config file is shared
// across subcommands, so validation is against the full universe.
const std::set<std::string>& known_config_keys();

} // namespace demark
