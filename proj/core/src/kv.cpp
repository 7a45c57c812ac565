#include "gridformer/kv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "gridformer/errors.hpp"

namespace gridformer {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

int64_t to_int(const std::string& key, const std::string& v) {
    int64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError("key '" + key + "': expected integer, got '" + v + "'");
    return out;
}

}  // namespace

bool KvList::has(const std::string& key) const {
    for (const auto& [k, v] : items)
        if (k == key) return true;
    return false;
}

const std::string& KvList::get(const std::string& key) const {
    for (const auto& [k, v] : items)
        if (k == key) return v;
    throw ConfigError("missing key '" + key + "'");
}

int64_t KvList::get_int(const std::string& key) const { return to_int(key, get(key)); }

double KvList::get_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
        size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected number, got '" + v + "'");
    }
}

bool KvList::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigError("key '" + key + "': expected bool, got '" + v + "'");
}

std::vector<int64_t> KvList::get_int_list(const std::string& key) const {
    const std::string& v = get(key);
    std::vector<int64_t> out;
    std::string cur;
    std::stringstream ss(v);
    while (std::getline(ss, cur, ',')) out.push_back(to_int(key, trim(cur)));
    if (out.empty()) throw ConfigError("key '" + key + "': expected integer list, got '" + v + "'");
    return out;
}

std::string KvList::get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
}
int64_t KvList::get_int_or(const std::string& key, int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}
double KvList::get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}
bool KvList::get_bool_or(const std::string& key, bool fallback) const {
    return has(key) ? get_bool(key) : fallback;
}

void KvList::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : items)
        if (k == key) {
            v = value;
            return;
        }
    items.emplace_back(key, value);
}

void KvList::set_int(const std::string& key, int64_t value) { set(key, std::to_string(value)); }
void KvList::set_bool(const std::string& key, bool value) { set(key, value ? "1" : "0"); }

void KvList::set_int_list(const std::string& key, const std::vector<int64_t>& values) {
    std::string v;
    for (size_t i = 0; i < values.size(); ++i) {
        if (i) v += ',';
        v += std::to_string(values[i]);
    }
    set(key, v);
}

std::string KvList::text() const {
    std::string out;
    for (const auto& [k, v] : items) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

KvList parse_kv_text(const std::string& text) {
    KvList out;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value, got '" +
                              line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        out.set(key, value);
    }
    return out;
}

KvList load_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_kv_text(ss.str());
}

}  // namespace gridformer
