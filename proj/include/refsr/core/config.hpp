#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "refsr/core/tensor.hpp"

namespace refsr {

// Flat "key = value" config files. Lines starting with '#' (or the tail after
// an unquoted '#') are comments. Keys are dotted paths; values are scalars or
// comma-separated lists.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig from_string(const std::string& text) {
        KeyValueConfig cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw config_error("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty()) throw config_error("config line " + std::to_string(lineno) + ": empty key");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static KeyValueConfig from_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw config_error("cannot open config: " + path);
        std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        return from_string(s);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_string(const std::string& key, const std::string& def) const {
        auto it = values_.find(key);
        return it == values_.end() ? def : it->second;
    }

    double get_double(const std::string& key, double def) const {
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        return parse_double(key, it->second);
    }

    int get_int(const std::string& key, int def) const {
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        try {
            size_t pos = 0;
            const int v = std::stoi(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw config_error("config key '" + key + "': not an integer: " + it->second);
        }
    }

    bool get_bool(const std::string& key, bool def) const {
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw config_error("config key '" + key + "': not a bool: " + it->second);
    }

    std::vector<int> get_int_list(const std::string& key, std::vector<int> def) const {
        auto it = values_.find(key);
        if (it == values_.end()) return def;
        std::vector<int> out;
        std::istringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ','))
            out.push_back(std::stoi(trim(item)));
        return out;
    }

    const std::map<std::string, std::string>& items() const { return values_; }

    // Deterministic fingerprint source: canonical sorted "k=v" lines.
    std::string canonical() const {
        std::string s;
        for (const auto& [k, v] : values_) s += k + "=" + v + "\n";
        return s;
    }

private:
    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    static double parse_double(const std::string& key, const std::string& v) {
        try {
            size_t pos = 0;
            const double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
            return d;
        } catch (...) {
            throw config_error("config key '" + key + "': not a number: " + v);
        }
    }

    std::map<std::string, std::string> values_;
};

}  // namespace refsr
