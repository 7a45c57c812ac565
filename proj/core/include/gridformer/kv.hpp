#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gridformer {

// Ordered key=value text: one pair per line, '#' starts a comment, blank
// lines ignored. Order is preserved so emitted blocks are canonical.
struct KvList {
    std::vector<std::pair<std::string, std::string>> items;

    bool has(const std::string& key) const;
    // Throw ConfigError when the key is absent or malformed for the type.
    const std::string& get(const std::string& key) const;
    int64_t get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;  // accepts 0/1/true/false
    std::vector<int64_t> get_int_list(const std::string& key) const;  // comma-separated

    std::string get_or(const std::string& key, const std::string& fallback) const;
    int64_t get_int_or(const std::string& key, int64_t fallback) const;
    double get_double_or(const std::string& key, double fallback) const;
    bool get_bool_or(const std::string& key, bool fallback) const;

    void set(const std::string& key, const std::string& value);
    void set_int(const std::string& key, int64_t value);
    void set_bool(const std::string& key, bool value);
    void set_int_list(const std::string& key, const std::vector<int64_t>& values);

    std::string text() const;  // "key=value\n" per item
};

// Throws ConfigError on a line without '=' or an empty key.
KvList parse_kv_text(const std::string& text);
KvList load_kv_file(const std::string& path);  // IoError when unreadable

}  // namespace gridformer
