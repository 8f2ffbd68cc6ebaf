#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "refsr/core/tensor.hpp"

namespace refsr {

// Versioned weight container (format documented in docs/formats.md):
//   magic "RSRW" | u32 version | u32 header_len | header JSON | payload
// The header lists kind, architecture_id, free-form metadata and the tensor
// table; the payload is the tensors' values as little-endian float32 in table
// order. Values are widened back to double on load.
struct Checkpoint {
    std::string kind;
    std::string architecture_id;
    nlohmann::json meta;  // object
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor& get(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return t;
        throw config_error("checkpoint tensor missing: " + name);
    }
    bool has(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return true;
        return false;
    }
};

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
    s.push_back(static_cast<char>((v >> 16) & 0xff));
    s.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

inline std::uint32_t float_bits(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    return u;
}

inline float bits_float(std::uint32_t u) {
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
    nlohmann::json header;
    header["kind"] = ck.kind;
    header["architecture_id"] = ck.architecture_id;
    header["meta"] = ck.meta.is_null() ? nlohmann::json::object() : ck.meta;
    nlohmann::json table = nlohmann::json::array();
    for (const auto& [name, t] : ck.tensors) {
        nlohmann::json e;
        e["name"] = name;
        e["shape"] = t.shape();
        table.push_back(e);
    }
    header["tensors"] = table;
    const std::string hs = header.dump();

    std::string out;
    out += "RSRW";
    detail::put_u32(out, 1);
    detail::put_u32(out, static_cast<std::uint32_t>(hs.size()));
    out += hs;
    for (const auto& [name, t] : ck.tensors) {
        for (std::int64_t i = 0; i < t.size(); ++i) {
            const std::uint32_t bits = detail::float_bits(static_cast<float>(t[i]));
            out.push_back(static_cast<char>(bits & 0xff));
            out.push_back(static_cast<char>((bits >> 8) & 0xff));
            out.push_back(static_cast<char>((bits >> 16) & 0xff));
            out.push_back(static_cast<char>((bits >> 24) & 0xff));
        }
    }
    return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin = "") {
    const auto fail = [&](const std::string& why) -> Checkpoint {
        throw io_error("bad checkpoint" + (origin.empty() ? "" : " " + origin) + ": " + why);
    };
    if (bytes.size() < 12 || bytes.compare(0, 4, "RSRW") != 0) return fail("magic");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint32_t version = detail::get_u32(p + 4);
    if (version != 1) return fail("unsupported version " + std::to_string(version));
    const std::uint32_t hlen = detail::get_u32(p + 8);
    if (bytes.size() < 12 + hlen) return fail("truncated header");
    nlohmann::json header = nlohmann::json::parse(bytes.substr(12, hlen), nullptr, false);
    if (header.is_discarded()) return fail("header json");

    Checkpoint ck;
    ck.kind = header.value("kind", "");
    ck.architecture_id = header.value("architecture_id", "");
    ck.meta = header.value("meta", nlohmann::json::object());
    size_t off = 12 + hlen;
    for (const auto& e : header["tensors"]) {
        std::vector<int> shape = e["shape"].get<std::vector<int>>();
        Tensor t(shape);
        const size_t nbytes = static_cast<size_t>(t.size()) * 4;
        if (bytes.size() < off + nbytes) return fail("truncated payload");
        for (std::int64_t i = 0; i < t.size(); ++i)
            t[i] = detail::bits_float(detail::get_u32(p + off + 4 * static_cast<size_t>(i)));
        off += nbytes;
        ck.tensors.emplace_back(e["name"].get<std::string>(), std::move(t));
    }
    return ck;
}

// Atomic write: temp file in the same directory, then rename.
inline void write_file_atomic(const std::string& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw io_error("cannot write " + tmp.string());
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw io_error("short write " + tmp.string());
    }
    fs::rename(tmp, target);
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    write_file_atomic(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    return decode_checkpoint(read_file(path), path);
}

}  // namespace refsr
