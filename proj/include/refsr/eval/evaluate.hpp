#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "refsr/core/png_io.hpp"
#include "refsr/core/sha256.hpp"
#include "refsr/data/manifest.hpp"
#include "refsr/eval/metrics.hpp"
#include "refsr/sr/network.hpp"
#include "refsr/vsr/network.hpp"

namespace refsr {

struct EvalRow {
    std::string input;
    std::string group;
    bool has_psnr = false;
    double psnr_db = 0.0;
    double ssim_val = 0.0;
    bool has_aee = false;
    double aee_cells = 0.0;
};

// Per-image metrics plus arithmetic-mean aggregates; wall_clock_seconds and
// timestamp are the only volatile fields (stripped for content hashing).
struct EvalReport {
    std::vector<EvalRow> rows;
    bool has_psnr = false;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    bool has_aee = false;
    double mean_aee = 0.0;
    std::string config_fingerprint;
    double wall_clock_seconds = 0.0;
    std::string timestamp;

    void aggregate() {
        double ps = 0, ss = 0, ae = 0;
        int np = 0, na = 0;
        for (const auto& r : rows) {
            if (r.has_psnr) {
                ps += r.psnr_db;
                ss += r.ssim_val;
                ++np;
            }
            if (r.has_aee) {
                ae += r.aee_cells;
                ++na;
            }
        }
        has_psnr = np > 0;
        if (np) {
            mean_psnr = ps / np;
            mean_ssim = ss / np;
        }
        has_aee = na > 0;
        if (na) mean_aee = ae / na;
    }

    // +inf PSNR (identical images) serializes as the string "inf".
    static nlohmann::json num(double v) {
        if (std::isinf(v)) return nlohmann::json("inf");
        return nlohmann::json(v);
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["rows"] = nlohmann::json::array();
        for (const auto& r : rows) {
            nlohmann::json e;
            e["input"] = r.input;
            if (!r.group.empty()) e["group"] = r.group;
            if (r.has_psnr) {
                e["psnr"] = num(r.psnr_db);
                e["ssim"] = r.ssim_val;
            }
            if (r.has_aee) e["aee"] = r.aee_cells;
            j["rows"].push_back(e);
        }
        if (has_psnr) {
            j["mean_psnr"] = num(mean_psnr);
            j["mean_ssim"] = mean_ssim;
        }
        if (has_aee) j["mean_aee"] = mean_aee;
        j["config_fingerprint"] = config_fingerprint;
        j["wall_clock_seconds"] = wall_clock_seconds;
        j["timestamp"] = timestamp;
        return j;
    }

    // Volatile fields removed; used for content hashing and determinism checks.
    nlohmann::json normalized_json() const {
        nlohmann::json j = to_json();
        j.erase("wall_clock_seconds");
        j.erase("timestamp");
        return j;
    }
};

// The restoration backend under evaluation: a trained model or the bicubic
// identity baseline.
struct EvalModel {
    virtual ~EvalModel() = default;
    virtual Image restore_image(const Image& lr, const Image* ref) const = 0;
    virtual VideoClip restore_video(const VideoClip& clip, const Image& ref) const {
        (void)clip;
        (void)ref;
        throw config_error("this model does not support video evaluation");
    }
};

struct BicubicEvalModel final : EvalModel {
    int factor = 4;
    Image restore_image(const Image& lr, const Image*) const override {
        return clamp01(bicubic_upsample(lr, factor));
    }
    VideoClip restore_video(const VideoClip& clip, const Image&) const override {
        VideoClip out;
        for (const auto& f : clip.frames) out.frames.push_back(clamp01(bicubic_upsample(f, factor)));
        return out;
    }
};

struct SrEvalModel final : EvalModel {
    RefImageSR net;
    std::shared_ptr<Matcher> matcher;
    Image restore_image(const Image& lr, const Image* ref) const override {
        if (!ref || !net.cfg.use_reference) return net.restore_baseline(lr);
        return net.restore(lr, *ref, *matcher);
    }
};

struct VsrEvalModel final : EvalModel {
    RefVideoSR net;
    std::shared_ptr<Matcher> matcher;
    Image restore_image(const Image&, const Image*) const override {
        throw config_error("video model cannot evaluate single images");
    }
    VideoClip restore_video(const VideoClip& clip, const Image& ref) const override {
        return net.restore_clip(clip, ref, *matcher);
    }
};

struct EvalOptions {
    std::string mode = "image";  // image | video
    MetricMode channel = MetricMode::Y;
    std::string config_fingerprint;
    const Matcher* aee_matcher = nullptr;  // enables AEE on records with gt fields
};

inline std::vector<std::string> list_clip_frames(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> frames;
    if (!fs::is_directory(dir)) throw io_error("clip directory missing: " + dir);
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".png") frames.push_back(e.path().string());
    std::sort(frames.begin(), frames.end());
    if (frames.empty()) throw io_error("clip directory has no PNG frames: " + dir);
    return frames;
}

// Runs the manifest through a model: LR inputs are bicubic x4 downsamples of
// the referenced HR images, metrics compare against those HR images. Records
// with ground-truth fields additionally get AEE from the matcher.
inline EvalReport evaluate(const EvalModel& model, const DatasetManifest& manifest,
                           const EvalOptions& opt) {
    if (manifest.records.empty()) throw config_error("evaluate: empty manifest");
    const auto missing = manifest.missing_paths();
    if (!missing.empty()) {
        std::string msg = "evaluate: missing inputs:";
        for (const auto& m : missing) msg += "\n  " + m;
        throw io_error(msg);
    }

    const auto t0 = std::chrono::steady_clock::now();
    EvalReport report;
    report.config_fingerprint = opt.config_fingerprint;

    for (const auto& rec : manifest.records) {
        EvalRow row;
        row.input = rec.input;
        row.group = rec.group;
        if (opt.mode == "image") {
            if (rec.type != "image") throw config_error("evaluate: clip record in image mode");
            const Image hr_raw = read_png(rec.input);
            const int h = hr_raw.dim(1) - hr_raw.dim(1) % 4;
            const int w = hr_raw.dim(2) - hr_raw.dim(2) % 4;
            const Image hr = crop(hr_raw, 0, 0, h, w);
            const Image lr = bicubic_downsample(hr, 4);
            Image ref;
            const bool has_ref = !rec.refs.empty();
            if (has_ref) ref = read_png(rec.refs[0]);
            const Image sr = model.restore_image(lr, has_ref ? &ref : nullptr);
            row.has_psnr = true;
            row.psnr_db = psnr(sr, hr, opt.channel);
            row.ssim_val = ssim(sr, hr, opt.channel);
            if (!rec.gt_field.empty() && opt.aee_matcher) {
                const GtField gt = load_gt_field(rec.gt_field);
                const CorrespondenceField pred = opt.aee_matcher->correspond(lr, ref);
                row.has_aee = true;
                row.aee_cells = aee(pred, gt);
            }
        } else if (opt.mode == "video") {
            if (rec.type != "clip") throw config_error("evaluate: image record in video mode");
            VideoClip hr_clip;
            for (const auto& f : list_clip_frames(rec.input)) hr_clip.frames.push_back(read_png(f));
            hr_clip.validate();
            VideoClip lr_clip;
            for (const auto& f : hr_clip.frames) lr_clip.frames.push_back(bicubic_downsample(f, 4));
            if (rec.refs.empty()) throw config_error("evaluate: clip record without reference");
            const Image ref = read_png(rec.refs[0]);
            const VideoClip sr = model.restore_video(lr_clip, ref);
            const size_t first = rec.exclude_first_frame ? 1 : 0;
            if (first >= hr_clip.frames.size())
                throw config_error("evaluate: no frames left after first-frame exclusion");
            double ps = 0, ss = 0;
            int k = 0;
            for (size_t i = first; i < hr_clip.frames.size(); ++i) {
                ps += psnr(sr.frames[i], hr_clip.frames[i], opt.channel);
                ss += ssim(sr.frames[i], hr_clip.frames[i], opt.channel);
                ++k;
            }
            row.has_psnr = true;
            row.psnr_db = ps / k;
            row.ssim_val = ss / k;
        } else {
            throw config_error("evaluate: unknown mode '" + opt.mode + "'");
        }
        report.rows.push_back(std::move(row));
    }

    report.aggregate();
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// ---------------------------------------------------------------------------
// Group plots: CSV plus a small self-contained SVG bar chart.

inline void write_group_plot(const std::map<std::string, double>& by_group,
                             const std::string& metric, const std::string& path_base) {
    std::string csv = "group," + metric + "\n";
    static const std::vector<std::string> order = {"small", "medium", "large"};
    std::vector<std::pair<std::string, double>> bars;
    for (const auto& g : order)
        if (by_group.count(g)) bars.emplace_back(g, by_group.at(g));
    for (const auto& [g, v] : by_group)
        if (std::find(order.begin(), order.end(), g) == order.end()) bars.emplace_back(g, v);
    for (const auto& [g, v] : bars) csv += g + "," + std::to_string(v) + "\n";
    write_file_atomic(path_base + ".csv", csv);

    double vmax = 1e-9;
    for (const auto& [g, v] : bars) vmax = std::max(vmax, v);
    const int W = 80 + static_cast<int>(bars.size()) * 90, H = 260;
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(W) +
                      "\" height=\"" + std::to_string(H) + "\">\n";
    svg += "<text x=\"10\" y=\"20\" font-size=\"14\">" + metric + " by transformation group</text>\n";
    int x = 50;
    for (const auto& [g, v] : bars) {
        const int bh = static_cast<int>(180.0 * v / vmax);
        svg += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(220 - bh) +
               "\" width=\"60\" height=\"" + std::to_string(bh) + "\" fill=\"#4878b0\"/>\n";
        svg += "<text x=\"" + std::to_string(x) + "\" y=\"238\" font-size=\"12\">" + g + "</text>\n";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3f", v);
        svg += "<text x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(212 - bh) +
               "\" font-size=\"11\">" + buf + "</text>\n";
        x += 90;
    }
    svg += "</svg>\n";
    write_file_atomic(path_base + ".svg", svg);
}

inline void write_report_plots(const EvalReport& report, const std::string& plots_dir) {
    std::map<std::string, std::pair<double, int>> aee_acc, psnr_acc;
    for (const auto& r : report.rows) {
        if (r.group.empty()) continue;
        if (r.has_aee) {
            aee_acc[r.group].first += r.aee_cells;
            aee_acc[r.group].second += 1;
        }
        if (r.has_psnr && std::isfinite(r.psnr_db)) {
            psnr_acc[r.group].first += r.psnr_db;
            psnr_acc[r.group].second += 1;
        }
    }
    std::filesystem::create_directories(plots_dir);
    if (!aee_acc.empty()) {
        std::map<std::string, double> means;
        for (const auto& [g, a] : aee_acc) means[g] = a.first / a.second;
        write_group_plot(means, "aee", (std::filesystem::path(plots_dir) / "aee_by_group").string());
    }
    if (!psnr_acc.empty()) {
        std::map<std::string, double> means;
        for (const auto& [g, a] : psnr_acc) means[g] = a.first / a.second;
        write_group_plot(means, "psnr",
                         (std::filesystem::path(plots_dir) / "psnr_by_group").string());
    }
}

}  // namespace refsr
