#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "refsr/core/image.hpp"
#include "refsr/core/png_io.hpp"
#include "refsr/core/rng.hpp"
#include "refsr/data/manifest.hpp"
#include "refsr/data/resize.hpp"
#include "refsr/match/homography.hpp"

namespace refsr {

// ---------------------------------------------------------------------------
// Procedural textures: smooth color ramps + oriented gratings + value noise.
// Deterministic per seed; enough structure for correspondence learning.

namespace detail {

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Bilinearly interpolated random lattice, one octave.
inline double value_noise(Rng& lattice_rng, std::vector<double>& lattice, int cells, double u,
                          double v) {
    if (lattice.empty()) {
        lattice.resize(static_cast<size_t>(cells + 1) * (cells + 1));
        for (auto& x : lattice) x = lattice_rng.uniform();
    }
    const double fu = u * cells, fv = v * cells;
    const int iu = std::min(static_cast<int>(fu), cells - 1);
    const int iv = std::min(static_cast<int>(fv), cells - 1);
    const double tu = smoothstep(fu - iu), tv = smoothstep(fv - iv);
    const auto at = [&](int a, int b) { return lattice[static_cast<size_t>(b) * (cells + 1) + a]; };
    return (1 - tv) * ((1 - tu) * at(iu, iv) + tu * at(iu + 1, iv)) +
           tv * ((1 - tu) * at(iu, iv + 1) + tu * at(iu + 1, iv + 1));
}

}  // namespace detail

// detail_scale multiplies the spatial frequency content; use values > 1 when
// rendering a large canvas whose crops should look like unit-scale textures.
inline Image render_texture(std::uint64_t seed, int h, int w, double detail_scale = 1.0) {
    Rng rng(seed ^ 0x7478747572ULL);
    struct Grating {
        double fx, fy, phase, amp;
    };
    std::vector<Grating> gratings;
    const int n_gratings = 2;
    for (int i = 0; i < n_gratings; ++i) {
        const double theta = rng.uniform(0.0, M_PI);
        const double freq = rng.uniform(2.0, 6.0) * detail_scale;
        gratings.push_back({freq * std::cos(theta), freq * std::sin(theta),
                            rng.uniform(0.0, 2 * M_PI), rng.uniform(0.04, 0.09)});
    }
    // distinctive local landmarks: soft colored blobs at random positions
    struct Blob {
        double cx, cy, r, amp[3];
    };
    std::vector<Blob> blobs;
    const int n_blobs = static_cast<int>((6 + rng.uniform_int(0, 4)) *
                                         std::max(1.0, detail_scale * detail_scale));
    for (int i = 0; i < n_blobs; ++i) {
        Blob b;
        b.cx = rng.uniform(0.05, 0.95);
        b.cy = rng.uniform(0.05, 0.95);
        b.r = rng.uniform(0.04, 0.14) / std::max(1.0, detail_scale);
        for (double& a : b.amp) a = rng.uniform(-0.4, 0.4);
        blobs.push_back(b);
    }
    Rng noise_rng = rng.fork(11);
    std::vector<double> lat1, lat2, lat3;
    const int cells1 = static_cast<int>((4 + rng.uniform_int(0, 3)) * detail_scale);
    const int cells2 = static_cast<int>((9 + rng.uniform_int(0, 5)) * detail_scale);
    const int cells3 = static_cast<int>((18 + rng.uniform_int(0, 8)) * detail_scale);
    const double base_r = rng.uniform(0.3, 0.7);
    const double base_g = rng.uniform(0.3, 0.7);
    const double base_b = rng.uniform(0.3, 0.7);
    const double gx = rng.uniform(-0.2, 0.2), gy = rng.uniform(-0.2, 0.2);
    const double chroma[3] = {rng.uniform(0.6, 1.0), rng.uniform(0.6, 1.0), rng.uniform(0.6, 1.0)};

    Image img({3, h, w});
    for (int y = 0; y < h; ++y) {
        const double v = static_cast<double>(y) / std::max(h - 1, 1);
        for (int x = 0; x < w; ++x) {
            const double u = static_cast<double>(x) / std::max(w - 1, 1);
            double s = gx * (u - 0.5) + gy * (v - 0.5);
            for (const auto& g : gratings)
                s += g.amp * std::sin(2 * M_PI * (g.fx * u + g.fy * v) + g.phase);
            s += 0.30 * (detail::value_noise(noise_rng, lat1, cells1, u, v) - 0.5);
            s += 0.20 * (detail::value_noise(noise_rng, lat2, cells2, u, v) - 0.5);
            s += 0.10 * (detail::value_noise(noise_rng, lat3, cells3, u, v) - 0.5);
            double spot[3] = {0, 0, 0};
            for (const auto& b : blobs) {
                const double d2 = (u - b.cx) * (u - b.cx) + (v - b.cy) * (v - b.cy);
                const double g = std::exp(-d2 / (2 * b.r * b.r));
                for (int c = 0; c < 3; ++c) spot[c] += b.amp[c] * g;
            }
            const double base[3] = {base_r, base_g, base_b};
            for (int c = 0; c < 3; ++c) {
                double val = base[c] + chroma[c] * s + spot[c];
                img.at(c, y, x) = std::min(std::max(val, 0.0), 1.0);
            }
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Homography training pairs

struct TrainPair {
    Image lr_input;       // bicubic x4 downsample of the HR crop
    Image hr_input;       // the HR crop itself (teacher-side input)
    Image hr_ref;         // homography-warped view of the same crop
    Homography homography;  // crop coords -> warped-view coords
    int scale_factor = 4;
};

struct PairConfig {
    int crop = 160;          // HR crop side; LR side is crop / scale_factor
    int scale_factor = 4;
    HomographySampleConfig transform;
};

inline TrainPair make_homography_pair(const Image& hr, const PairConfig& cfg, std::uint64_t seed) {
    check_image(hr, "make_homography_pair");
    if (hr.dim(1) < cfg.crop || hr.dim(2) < cfg.crop)
        throw domain_error("make_homography_pair: image " + std::to_string(hr.dim(2)) + "x" +
                           std::to_string(hr.dim(1)) + " smaller than required crop " +
                           std::to_string(cfg.crop) + "x" + std::to_string(cfg.crop));
    Rng rng(seed);
    const int y0 = hr.dim(1) == cfg.crop ? 0 : rng.uniform_int(0, hr.dim(1) - cfg.crop);
    const int x0 = hr.dim(2) == cfg.crop ? 0 : rng.uniform_int(0, hr.dim(2) - cfg.crop);
    const Image hr_crop = crop(hr, y0, x0, cfg.crop, cfg.crop);

    HomographySampleConfig tcfg = cfg.transform;
    tcfg.width = cfg.crop;
    tcfg.height = cfg.crop;
    TrainPair pair;
    pair.homography = sample_homography(rng, tcfg);
    pair.hr_input = hr_crop;
    pair.hr_ref = warp_image(hr_crop, pair.homography);
    pair.lr_input = bicubic_downsample(hr_crop, cfg.scale_factor);
    pair.scale_factor = cfg.scale_factor;
    return pair;
}

// Ground-truth reference-grid targets for every LR grid cell of a pair.
inline GtField pair_gt_field(const TrainPair& pair, int stride) {
    const int lh = pair.lr_input.dim(1), lw = pair.lr_input.dim(2);
    const int gh = (lh + stride - 1) / stride, gw = (lw + stride - 1) / stride;
    const int rh = (pair.hr_ref.dim(1) + stride - 1) / stride;
    const int rw = (pair.hr_ref.dim(2) + stride - 1) / stride;
    GtField f;
    f.h = gh;
    f.w = gw;
    f.target.resize(static_cast<size_t>(gh) * gw);
    f.valid.resize(static_cast<size_t>(gh) * gw, 0);
    for (int i = 0; i < gh; ++i)
        for (int j = 0; j < gw; ++j) {
            const Vec2 q = gt_correspondence(j, i, pair.homography, stride, pair.scale_factor);
            f.target[static_cast<size_t>(f.index(i, j))] = q;
            f.valid[static_cast<size_t>(f.index(i, j))] = inside_grid(q, rh, rw) ? 1 : 0;
        }
    return f;
}

// Rounded ground-truth cell indices (-1 where invalid), the positive-pair
// lookup used by the margin loss.
inline std::vector<int> gt_ref_indices(const GtField& f, int ref_h, int ref_w) {
    std::vector<int> idx(f.target.size(), -1);
    for (size_t i = 0; i < f.target.size(); ++i) {
        if (!f.valid[i]) continue;
        const int x = static_cast<int>(std::lround(f.target[i].x));
        const int y = static_cast<int>(std::lround(f.target[i].y));
        if (x < 0 || y < 0 || x >= ref_w || y >= ref_h) continue;
        idx[i] = y * ref_w + x;
    }
    return idx;
}

// ---------------------------------------------------------------------------
// Transformation-controlled benchmark

struct TransformBenchmarkSpec {
    std::string group;  // small | medium | large
    double scale_min = 1.0, scale_max = 1.0;
    double rotation_min_deg = 0.0, rotation_max_deg = 0.0;
    std::uint64_t seed = 0;
};

// Default numeric ranges per group. Magnitude bands widen strictly from small
// to large, so draws from a larger group exceed any smaller group's bound.
inline TransformBenchmarkSpec benchmark_group_spec(const std::string& group, std::uint64_t seed) {
    TransformBenchmarkSpec s;
    s.group = group;
    s.seed = seed;
    if (group == "small") {
        s.scale_min = 0.95; s.scale_max = 1.05;
        s.rotation_min_deg = 0.0; s.rotation_max_deg = 5.0;
    } else if (group == "medium") {
        s.scale_min = 0.8; s.scale_max = 1.25;
        s.rotation_min_deg = 5.0; s.rotation_max_deg = 20.0;
    } else if (group == "large") {
        s.scale_min = 0.5; s.scale_max = 2.0;
        s.rotation_min_deg = 20.0; s.rotation_max_deg = 45.0;
    } else {
        throw config_error("unknown benchmark group '" + group + "'");
    }
    return s;
}

// For each input HR image: emit a transformed reference view plus the exact
// per-cell correspondence field, and write everything under out_dir.
inline DatasetManifest build_transform_benchmark(
    const std::vector<std::pair<std::string, Image>>& inputs, const TransformBenchmarkSpec& spec,
    const std::string& out_dir, int stride = 4, int scale_factor = 4) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    DatasetManifest manifest;
    Rng root(spec.seed ^ 0xb3a5u);
    int idx = 0;
    for (const auto& [name, hr_in] : inputs) {
        Rng rng = root.fork(static_cast<std::uint64_t>(idx));
        const int h = hr_in.dim(1) - hr_in.dim(1) % (stride * scale_factor);
        const int w = hr_in.dim(2) - hr_in.dim(2) % (stride * scale_factor);
        const Image hr = crop(hr_in, 0, 0, h, w);

        HomographySampleConfig hcfg;
        hcfg.scale_min = spec.scale_min;
        hcfg.scale_max = spec.scale_max;
        hcfg.rotation_min_deg = spec.rotation_min_deg;
        hcfg.rotation_max_deg = spec.rotation_max_deg;
        hcfg.jitter_frac = 0.0;
        hcfg.translate_max = 0.0;
        hcfg.width = w;
        hcfg.height = h;
        const Homography hom = sample_homography(rng, hcfg);

        TrainPair pair;
        pair.homography = hom;
        pair.hr_ref = warp_image(hr, hom);
        pair.lr_input = bicubic_downsample(hr, scale_factor);
        pair.scale_factor = scale_factor;
        const GtField field = pair_gt_field(pair, stride);

        const std::string base = spec.group + "_" + std::to_string(idx);
        const std::string in_path = (fs::path(out_dir) / (base + "_hr.png")).string();
        const std::string ref_path = (fs::path(out_dir) / (base + "_ref.png")).string();
        const std::string field_path = (fs::path(out_dir) / (base + "_gt.rsrf")).string();
        write_png(in_path, hr);
        write_png(ref_path, pair.hr_ref);
        save_gt_field(field, field_path);

        ManifestRecord rec;
        rec.type = "image";
        rec.input = in_path;
        rec.refs = {ref_path};
        rec.split = "bench";
        rec.gt_field = field_path;
        rec.group = spec.group;
        rec.homography.assign(hom.m.begin(), hom.m.end());
        manifest.records.push_back(std::move(rec));
        ++idx;
    }
    return manifest;
}

// ---------------------------------------------------------------------------
// Webly-referenced style assembly from local pools

struct RescalePolicy {
    double tolerance = 0.10;  // reference max dimension within +-10% of the input's
};

struct AssembleReport {
    DatasetManifest manifest;
    std::vector<std::string> dropped;  // queries without a selection
};

// selection_file: JSONL of {"query": <file name>, "ref": <path under pool>}.
// Queries without a selection are dropped and reported; dangling reference
// paths produce one itemized error.
inline AssembleReport assemble_refsr_dataset(const std::string& query_dir,
                                             const std::string& pool_dir,
                                             const std::string& selection_file,
                                             const std::string& out_dir,
                                             const RescalePolicy& policy = {}) {
    namespace fs = std::filesystem;
    std::map<std::string, std::string> selection;
    {
        const std::string text = read_file(selection_file);
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded()) throw config_error("selection file: invalid JSON line");
            selection[j.at("query").get<std::string>()] = j.at("ref").get<std::string>();
        }
    }

    std::vector<std::string> queries;
    for (const auto& e : fs::directory_iterator(query_dir))
        if (e.path().extension() == ".png") queries.push_back(e.path().filename().string());
    std::sort(queries.begin(), queries.end());

    std::vector<std::string> dangling;
    for (const auto& [q, ref] : selection)
        if (!fs::exists(fs::path(pool_dir) / ref)) dangling.push_back(q + " -> " + ref);
    if (!dangling.empty()) {
        std::string msg = "assemble_refsr_dataset: dangling selection entries:";
        for (const auto& d : dangling) msg += "\n  " + d;
        throw config_error(msg);
    }

    fs::create_directories(out_dir);
    AssembleReport report;
    for (const auto& q : queries) {
        auto it = selection.find(q);
        if (it == selection.end()) {
            report.dropped.push_back(q);
            continue;
        }
        const Image query = read_png((fs::path(query_dir) / q).string());
        Image ref = read_png((fs::path(pool_dir) / it->second).string());
        const int qmax = std::max(query.dim(1), query.dim(2));
        const int rmax = std::max(ref.dim(1), ref.dim(2));
        if (rmax > qmax * (1.0 + policy.tolerance) || rmax < qmax * (1.0 - policy.tolerance)) {
            const double f = static_cast<double>(qmax) / rmax;
            const int nh = std::max(1, static_cast<int>(std::lround(ref.dim(1) * f)));
            const int nw = std::max(1, static_cast<int>(std::lround(ref.dim(2) * f)));
            ref = bicubic_resize(ref, nh, nw);
        }
        const std::string ref_out = (fs::path(out_dir) / ("ref_" + q)).string();
        write_png(ref_out, ref);
        ManifestRecord rec;
        rec.type = "image";
        rec.input = (fs::path(query_dir) / q).string();
        rec.refs = {ref_out};
        rec.split = "eval";
        report.manifest.records.push_back(std::move(rec));
    }
    return report;
}

}  // namespace refsr
