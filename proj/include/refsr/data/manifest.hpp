#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "refsr/core/checkpoint.hpp"
#include "refsr/match/correspondence.hpp"

namespace refsr {

inline const std::set<std::string>& similarity_labels() {
    static const std::set<std::string> labels = {"none", "irrelevant", "similar", "very_similar"};
    return labels;
}

// One dataset entry. `input` is an HR image path for image records, or a
// directory of zero-padded numbered PNG frames for clip records.
struct ManifestRecord {
    std::string type = "image";  // "image" | "clip"
    std::string input;
    std::vector<std::string> refs;
    std::string split = "train";
    std::string similarity = "none";
    // transform-benchmark extras
    std::string gt_field;          // correspondence field file, "" if none
    std::string group;             // small | medium | large, "" if none
    std::vector<double> homography;  // 9 row-major values, empty if none
    bool exclude_first_frame = false;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["type"] = type;
        j["input"] = input;
        j["refs"] = refs;
        j["split"] = split;
        j["similarity"] = similarity;
        if (!gt_field.empty()) j["gt_field"] = gt_field;
        if (!group.empty()) j["group"] = group;
        if (!homography.empty()) j["homography"] = homography;
        if (exclude_first_frame) j["exclude_first_frame"] = true;
        return j;
    }

    static ManifestRecord from_json(const nlohmann::json& j) {
        ManifestRecord r;
        r.type = j.value("type", "image");
        r.input = j.at("input").get<std::string>();
        r.refs = j.value("refs", std::vector<std::string>{});
        r.split = j.value("split", "train");
        r.similarity = j.value("similarity", "none");
        r.gt_field = j.value("gt_field", "");
        r.group = j.value("group", "");
        r.homography = j.value("homography", std::vector<double>{});
        r.exclude_first_frame = j.value("exclude_first_frame", false);
        if (!similarity_labels().count(r.similarity))
            throw config_error("manifest: unknown similarity label '" + r.similarity + "'");
        if (r.type != "image" && r.type != "clip")
            throw config_error("manifest: unknown record type '" + r.type + "'");
        return r;
    }
};

// Line-delimited JSON records; order-preserving and lossless through
// save/load.
struct DatasetManifest {
    std::vector<ManifestRecord> records;

    std::string to_jsonl() const {
        std::string out;
        for (const auto& r : records) out += r.to_json().dump() + "\n";
        return out;
    }

    static DatasetManifest from_jsonl(const std::string& text, const std::string& origin = "") {
        DatasetManifest m;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded())
                throw config_error("manifest " + origin + " line " + std::to_string(lineno) +
                                   ": invalid JSON");
            m.records.push_back(ManifestRecord::from_json(j));
        }
        return m;
    }

    void save(const std::string& path) const { write_file_atomic(path, to_jsonl()); }

    static DatasetManifest load(const std::string& path) {
        return from_jsonl(read_file(path), path);
    }

    // Itemized list of records whose files do not resolve (relative to the
    // manifest's directory when `base` is given).
    std::vector<std::string> missing_paths(const std::string& base = "") const {
        namespace fs = std::filesystem;
        const auto resolve = [&](const std::string& p) {
            return base.empty() ? fs::path(p) : fs::path(base) / p;
        };
        std::vector<std::string> missing;
        for (const auto& r : records) {
            if (!fs::exists(resolve(r.input))) missing.push_back(r.input);
            for (const auto& ref : r.refs)
                if (!fs::exists(resolve(ref))) missing.push_back(ref);
            if (!r.gt_field.empty() && !fs::exists(resolve(r.gt_field))) missing.push_back(r.gt_field);
        }
        return missing;
    }
};

// ---------------------------------------------------------------------------
// Ground-truth correspondence field files ("RSRF"): real-valued reference-grid
// targets plus a validity mask, for AEE evaluation.

struct GtField {
    int h = 0, w = 0;
    std::vector<Vec2> target;
    std::vector<std::uint8_t> valid;

    int index(int i, int j) const { return i * w + j; }
};

inline std::string encode_gt_field(const GtField& f) {
    std::string out = "RSRF";
    detail::put_u32(out, 1);
    detail::put_u32(out, static_cast<std::uint32_t>(f.h));
    detail::put_u32(out, static_cast<std::uint32_t>(f.w));
    for (int i = 0; i < f.h * f.w; ++i) {
        const auto put_f32 = [&](double v) {
            const std::uint32_t bits = detail::float_bits(static_cast<float>(v));
            out.push_back(static_cast<char>(bits & 0xff));
            out.push_back(static_cast<char>((bits >> 8) & 0xff));
            out.push_back(static_cast<char>((bits >> 16) & 0xff));
            out.push_back(static_cast<char>((bits >> 24) & 0xff));
        };
        put_f32(f.target[static_cast<size_t>(i)].x);
        put_f32(f.target[static_cast<size_t>(i)].y);
    }
    for (int i = 0; i < f.h * f.w; ++i) out.push_back(static_cast<char>(f.valid[static_cast<size_t>(i)]));
    return out;
}

inline GtField decode_gt_field(const std::string& bytes, const std::string& origin = "") {
    if (bytes.size() < 16 || bytes.compare(0, 4, "RSRF") != 0)
        throw io_error("bad gt field file " + origin);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    GtField f;
    f.h = static_cast<int>(detail::get_u32(p + 8));
    f.w = static_cast<int>(detail::get_u32(p + 12));
    const size_t n = static_cast<size_t>(f.h) * f.w;
    if (bytes.size() < 16 + n * 9) throw io_error("truncated gt field file " + origin);
    f.target.resize(n);
    f.valid.resize(n);
    for (size_t i = 0; i < n; ++i) {
        f.target[i].x = detail::bits_float(detail::get_u32(p + 16 + 8 * i));
        f.target[i].y = detail::bits_float(detail::get_u32(p + 16 + 8 * i + 4));
    }
    for (size_t i = 0; i < n; ++i) f.valid[i] = p[16 + n * 8 + i];
    return f;
}

inline void save_gt_field(const GtField& f, const std::string& path) {
    write_file_atomic(path, encode_gt_field(f));
}

inline GtField load_gt_field(const std::string& path) {
    return decode_gt_field(read_file(path), path);
}

}  // namespace refsr
