// refsr: reference-based image/video super-resolution toolkit.
//
// Subcommands cover the full two-stage pipeline: matcher training
// (train-teacher, train-student), restoration training (train-sr, train-vsr),
// inference (infer-sr, infer-vsr), dataset construction (make-pairs,
// make-benchmark, assemble-dataset) and evaluation (eval).

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "refsr/pipeline/run.hpp"

namespace fs = std::filesystem;
using namespace refsr;

namespace {

// Raised when a stage dependency (an upstream checkpoint) is absent.
struct dependency_error : config_error {
    using config_error::config_error;
};

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string preset;
    std::uint64_t seed = 0;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& c, bool with_preset = false) {
    cmd->add_option("--config", c.config_path, "flat key=value config file");
    cmd->add_option("--set", c.overrides, "config override KEY=VALUE (repeatable)");
    cmd->add_option("--seed", c.seed, "run seed; recorded in artifacts");
    cmd->add_option("--out", c.out_dir, "output directory")->required();
    if (with_preset)
        cmd->add_option("--preset", c.preset,
                        "ablation preset: no-distill | no-dyn-agg | no-contrastive | "
                        "no-attention | flow-align");
}

KeyValueConfig resolve_config(const CommonOpts& c) {
    KeyValueConfig cfg;
    if (!c.config_path.empty()) cfg = KeyValueConfig::from_file(c.config_path);
    for (const auto& ov : c.overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos) throw config_error("--set expects KEY=VALUE, got " + ov);
        cfg.set(ov.substr(0, eq), ov.substr(eq + 1));
    }
    apply_preset(cfg, c.preset);
    cfg.set("seed", std::to_string(c.seed));
    return cfg;
}

// Data roots may be overridden by environment variable (data paths only).
std::string data_path(const std::string& p) {
    const char* root = std::getenv("REFSR_DATA_ROOT");
    if (root && *root && !p.empty() && p[0] != '/') return (fs::path(root) / p).string();
    return p;
}

void require_file(const std::string& path, const std::string& what) {
    if (path.empty() || !fs::exists(path))
        throw dependency_error(what + " missing: " + (path.empty() ? "(not given)" : path));
}

RunManifest start_manifest(const std::string& stage, const CommonOpts& c,
                           const KeyValueConfig& cfg, int argc, char** argv) {
    RunManifest m;
    m.stage = stage;
    m.seed = c.seed;
    m.config = cfg;
    for (int i = 0; i < argc; ++i) m.command_line.push_back(argv[i]);
    return m;
}

std::vector<std::pair<std::string, Image>> load_source_images(const std::string& hr_dir,
                                                              int procedural, int size,
                                                              std::uint64_t seed) {
    std::vector<std::pair<std::string, Image>> out;
    if (!hr_dir.empty()) {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(data_path(hr_dir)))
            if (e.path().extension() == ".png") files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw io_error("no PNG files in " + hr_dir);
        for (const auto& f : files) out.emplace_back(fs::path(f).stem().string(), read_png(f));
    } else {
        Rng root(seed ^ 0x70726f63ULL);
        for (int i = 0; i < procedural; ++i)
            out.emplace_back("tex" + std::to_string(i), render_texture(root.fork(static_cast<std::uint64_t>(i)).next_u64(), size, size));
    }
    return out;
}

HomographySampleConfig homography_from_kv(const KeyValueConfig& kv) {
    HomographySampleConfig h;
    h.scale_min = kv.get_double("homography.scale_min", h.scale_min);
    h.scale_max = kv.get_double("homography.scale_max", h.scale_max);
    h.rotation_min_deg = kv.get_double("homography.rotation_min_deg", h.rotation_min_deg);
    h.rotation_max_deg = kv.get_double("homography.rotation_max_deg", h.rotation_max_deg);
    h.jitter_frac = kv.get_double("homography.jitter_frac", h.jitter_frac);
    h.translate_max = kv.get_double("homography.translate_max", h.translate_max);
    return h;
}

// --------------------------------------------------------------------------
// Stage bodies

int cmd_make_pairs(const CommonOpts& c, const std::string& hr_dir, int procedural, int count,
                   int crop, int argc, char** argv) {
    KeyValueConfig cfg = resolve_config(c);
    RunManifest manifest = start_manifest("make-pairs", c, cfg, argc, argv);
    const int src_size = std::max(crop, cfg.get_int("pairs.source_size", crop));
    auto sources = load_source_images(hr_dir, procedural > 0 ? procedural : count, src_size, c.seed);

    PairConfig pcfg;
    pcfg.crop = crop;
    pcfg.transform = homography_from_kv(cfg);

    fs::create_directories(fs::path(c.out_dir) / "pairs");
    DatasetManifest data;
    Rng root(c.seed);
    for (int i = 0; i < count; ++i) {
        const auto& [name, hr] = sources[static_cast<size_t>(i) % sources.size()];
        const TrainPair pair = make_homography_pair(hr, pcfg, root.fork(static_cast<std::uint64_t>(i)).next_u64());
        const std::string base = (fs::path(c.out_dir) / "pairs" / ("pair" + std::to_string(i))).string();
        write_png(base + "_hr.png", pair.hr_input);
        write_png(base + "_ref.png", pair.hr_ref);
        ManifestRecord rec;
        rec.input = base + "_hr.png";
        rec.refs = {base + "_ref.png"};
        rec.homography.assign(pair.homography.m.begin(), pair.homography.m.end());
        data.records.push_back(std::move(rec));
        manifest.add_output(base + "_hr.png");
        manifest.add_output(base + "_ref.png");
    }
    const std::string mpath = (fs::path(c.out_dir) / "pairs.jsonl").string();
    data.save(mpath);
    manifest.add_output(mpath);
    manifest.write(c.out_dir);
    std::printf("make-pairs: wrote %d pairs to %s\n", count, c.out_dir.c_str());
    return 0;
}

int cmd_make_benchmark(const CommonOpts& c, const std::string& hr_dir, int procedural, int size,
                       const std::string& group, const std::string& axis, int argc, char** argv) {
    KeyValueConfig cfg = resolve_config(c);
    RunManifest manifest = start_manifest("make-benchmark", c, cfg, argc, argv);
    auto sources = load_source_images(hr_dir, procedural, size, c.seed);

    std::vector<std::string> groups;
    if (group == "all")
        groups = {"small", "medium", "large"};
    else
        groups = {group};
    for (const auto& g : groups) {
        TransformBenchmarkSpec spec = benchmark_group_spec(g, c.seed);
        if (axis == "scale") {
            spec.rotation_min_deg = spec.rotation_max_deg = 0.0;
        } else if (axis == "rotation") {
            spec.scale_min = spec.scale_max = 1.0;
        } else if (axis != "both") {
            throw config_error("--axis must be scale, rotation or both");
        }
        const std::string gdir = (fs::path(c.out_dir) / g).string();
        DatasetManifest data = build_transform_benchmark(sources, spec, gdir);
        const std::string mpath = (fs::path(c.out_dir) / ("benchmark_" + g + ".jsonl")).string();
        data.save(mpath);
        manifest.add_output(mpath);
        for (const auto& rec : data.records) {
            manifest.add_output(rec.input);
            manifest.add_output(rec.refs[0]);
            manifest.add_output(rec.gt_field);
        }
        std::printf("make-benchmark: group %s, %zu records -> %s\n", g.c_str(),
                    data.records.size(), mpath.c_str());
    }
    manifest.write(c.out_dir);
    return 0;
}

int cmd_assemble(const CommonOpts& c, const std::string& queries, const std::string& pool,
                 const std::string& selection, int argc, char** argv) {
    KeyValueConfig cfg = resolve_config(c);
    RunManifest manifest = start_manifest("assemble-dataset", c, cfg, argc, argv);
    RescalePolicy policy;
    policy.tolerance = cfg.get_double("assemble.tolerance", policy.tolerance);
    AssembleReport report = assemble_refsr_dataset(data_path(queries), data_path(pool),
                                                   data_path(selection), c.out_dir, policy);
    const std::string mpath = (fs::path(c.out_dir) / "dataset.jsonl").string();
    report.manifest.save(mpath);
    manifest.add_output(mpath);

    nlohmann::json rj;
    rj["pairs"] = report.manifest.records.size();
    rj["dropped"] = report.dropped;
    rj["dropped_count"] = report.dropped.size();
    const std::string rpath = (fs::path(c.out_dir) / "assemble_report.json").string();
    write_file_atomic(rpath, rj.dump(2) + "\n");
    manifest.add_output(rpath);
    manifest.write(c.out_dir);
    std::printf("assemble-dataset: %zu pairs, %zu dropped\n", report.manifest.records.size(),
                report.dropped.size());
    return 0;
}

int cmd_train_teacher(const CommonOpts& c, const std::string& data, int argc, char** argv) {
    KeyValueConfig cfg = resolve_config(c);
    RunManifest manifest = start_manifest("train-teacher", c, cfg, argc, argv);
    require_file(data_path(data), "pairs manifest (--data)");
    manifest.add_input(data_path(data));

    MatcherTrainConfig tcfg = MatcherTrainConfig::from_kv(cfg);
    tcfg.seed = c.seed;
    tcfg.loss.kl_weight = 0.0;  // teacher optimizes the margin loss alone
    auto pairs = pairs_from_manifest(DatasetManifest::load(data_path(data)));

    Rng rng(c.seed ^ 0x696e6974ULL);
    MatcherNets teacher(tcfg.encoder, rng);
    train_teacher(teacher, pairs, tcfg, [](int step, double loss) {
        if (step % 50 == 0) std::printf("  teacher step %d loss %.5f\n", step, loss);
    });

    Checkpoint ck = matcher_checkpoint(teacher, "matcher_teacher");
    ck.meta["seed"] = c.seed;
    const std::string path = (fs::path(c.out_dir) / "teacher.ckpt").string();
    save_checkpoint(ck, path);
    manifest.add_output(path);
    manifest.write(c.out_dir);
    std::printf("train-teacher: saved %s\n", path.c_str());
    return 0;
}

int cmd_train_student(const CommonOpts& c, const std::string& data, const std::string& teacher_ckpt,
                      int argc, char** argv) {
    KeyValueConfig cfg = resolve_config(c);
    RunManifest manifest = start_manifest("train-student", c, cfg, argc, argv);
    require_file(data_path(data), "pairs manifest (--data)");
    require_file(teacher_ckpt, "teacher checkpoint (--teacher)");
    manifest.add_input(data_path(data));
    manifest.add_input(teacher_ckpt);

    MatcherTrainConfig tcfg = MatcherTrainConfig::from_kv(cfg);
    tcfg.seed = c.seed;
    auto pairs = pairs_from_manifest(DatasetManifest::load(data_path(data)));
    MatcherNets teacher = matcher_from_checkpoint(load_checkpoint(teacher_ckpt), "matcher_teacher");
    {
        auto tp = teacher.params();
        nn::set_requires_grad(tp, false);
    }

    Rng rng(c.seed ^ 0x73696e69ULL);
    MatcherNets student(tcfg.encoder, rng);
    train_student(student, teacher, pairs, tcfg, [](int step, double loss) {
        if (step % 50 == 0) std::printf("  student step %d loss %.5f\n", step, loss);
    });

    Checkpoint ck = matcher_checkpoint(student, "matcher_student");
    ck.meta["seed"] = c.seed;
    ck.meta["kl_weight"] = tcfg.loss.kl_weight;
    const std::string path = (fs::path(c.out_dir) / "student.ckpt").string();
    save_checkpoint(ck, path);
    manifest.add_output(path);
    manifest.write(c.out_dir);
    std::printf("train-student: saved %s\n", path.c_str());
    return 0;
}

int cmd_train_sr(const CommonOpts& c, const std::string& data, const std::string& matcher_ckpt,
                 int argc, char** argv) {
    KeyValueConfig cfg = resolve_config(c);
    RunManifest manifest = start_manifest("train-sr", c, cfg, argc, argv);
    require_file(data_path(data), "training manifest (--data)");
    manifest.add_input(data_path(data));

    const std::string matcher_kind = cfg.get_string("matcher.kind", "contrastive");
    std::shared_ptr<Matcher> matcher;
    MatcherNets student_nets;
    bool have_student = false;
    if (matcher_kind == "ncc") {
        matcher = std::make_shared<NccMatcher>();
    } else {
        require_file(matcher_ckpt, "student matcher checkpoint (--matcher)");
        manifest.add_input(matcher_ckpt);
        student_nets = matcher_from_checkpoint(load_checkpoint(matcher_ckpt), "matcher_student");
        auto sp = student_nets.params();
        nn::set_requires_grad(sp, false);
        matcher = std::make_shared<ContrastiveMatcher>(student_nets.matcher());
        have_student = true;
    }

    std::vector<SrSample> samples;
    for (const auto& rec : DatasetManifest::load(data_path(data)).records) {
        if (rec.refs.empty()) throw config_error("train-sr: record without reference: " + rec.input);
        samples.push_back({read_png(rec.input), read_png(rec.refs[0])});
    }

    Rng rng(c.seed ^ 0x7372ULL);
    RefImageSR model(SrNetConfig::from_kv(cfg), rng);
    SrTrainConfig trcfg = SrTrainConfig::from_kv(cfg);
    trcfg.seed = c.seed;

    FeatureExtractor phi;
    if (have_student) {
        // the student's reference-side encoder doubles as the perceptual
        // feature extractor at desk scale
        DescriptorEncoder enc = student_nets.ref_enc;
        phi = [enc](const ad::Var& x) { return enc.forward(x); };
    } else {
        phi = identity_extractor();
    }

    auto result = train_sr(model, *matcher, samples, trcfg, phi, [&](int step, double loss) {
        if (step % 100 == 0) std::printf("  sr step %d loss %.6f\n", step, loss);
    });
    std::printf("train-sr: %d steps, train min PSNR %.2f dB\n", result.steps_run,
                result.final_min_psnr);

    Checkpoint ck = sr_checkpoint(model, have_student ? &student_nets : nullptr, matcher_kind);
    ck.meta["seed"] = c.seed;
    const std::string path = (fs::path(c.out_dir) / "sr.ckpt").string();
    save_checkpoint(ck, path);
    manifest.add_output(path);
    manifest.write(c.out_dir);
    std::printf("train-sr: saved %s\n", path.c_str());
    return 0;
}

std::vector<VsrSample> load_clip_samples(const DatasetManifest& m) {
    std::vector<VsrSample> clips;
    for (const auto& rec : m.records) {
        if (rec.type != "clip") continue;
        VsrSample s;
        for (const auto& f : list_clip_frames(data_path(rec.input))) s.hr_frames.push_back(read_png(f));
        if (!rec.refs.empty())
            s.ref = read_png(data_path(rec.refs[0]));
        else
            s.ref = s.hr_frames.at(0);  // default policy: first frame is the reference
        clips.push_back(std::move(s));
    }
    if (clips.empty()) throw config_error("no clip records in manifest");
    return clips;
}

int cmd_train_vsr(const CommonOpts& c, const std::string& data, const std::string& matcher_ckpt,
                  int argc, char** argv) {
    KeyValueConfig cfg = resolve_config(c);
    RunManifest manifest = start_manifest("train-vsr", c, cfg, argc, argv);
    require_file(data_path(data), "clip manifest (--data)");
    manifest.add_input(data_path(data));

    const std::string matcher_kind = cfg.get_string("matcher.kind", "contrastive");
    std::shared_ptr<Matcher> matcher;
    MatcherNets student_nets;
    bool have_student = false;
    if (matcher_kind == "ncc") {
        matcher = std::make_shared<NccMatcher>();
    } else {
        require_file(matcher_ckpt, "student matcher checkpoint (--matcher)");
        manifest.add_input(matcher_ckpt);
        student_nets = matcher_from_checkpoint(load_checkpoint(matcher_ckpt), "matcher_student");
        auto sp = student_nets.params();
        nn::set_requires_grad(sp, false);
        matcher = std::make_shared<ContrastiveMatcher>(student_nets.matcher());
        have_student = true;
    }

    auto clips = load_clip_samples(DatasetManifest::load(data_path(data)));
    Rng rng(c.seed ^ 0x767372ULL);
    RefVideoSR model(VsrConfig::from_kv(cfg), rng);
    VsrTrainConfig trcfg = VsrTrainConfig::from_kv(cfg);
    trcfg.seed = c.seed;

    auto result = train_vsr(model, *matcher, clips, trcfg, [&](int step, double loss) {
        if (step % 25 == 0) std::printf("  vsr step %d loss %.6f\n", step, loss);
    });
    std::printf("train-vsr: %d steps, train PSNR %.2f dB\n", result.steps_run, result.final_psnr);

    Checkpoint ck = vsr_checkpoint(model, have_student ? &student_nets : nullptr, matcher_kind);
    ck.meta["seed"] = c.seed;
    const std::string path = (fs::path(c.out_dir) / "vsr.ckpt").string();
    save_checkpoint(ck, path);
    manifest.add_output(path);
    manifest.write(c.out_dir);
    std::printf("train-vsr: saved %s\n", path.c_str());
    return 0;
}

int cmd_infer_sr(const std::string& lr_path, const std::string& ref_path,
                 const std::string& weights, const std::string& out_path) {
    require_file(weights, "sr checkpoint (--weights)");
    require_file(data_path(lr_path), "LR input (--lr)");
    LoadedSr m = sr_from_checkpoint(load_checkpoint(weights));
    const Image lr = read_png(data_path(lr_path));
    Image sr;
    if (!ref_path.empty()) {
        const Image ref = read_png(data_path(ref_path));
        sr = m.net.restore(lr, ref, *m.matcher);
    } else {
        sr = m.net.restore_baseline(lr);
    }
    write_png(out_path, sr);
    std::printf("infer-sr: wrote %s (%dx%d)\n", out_path.c_str(), sr.dim(2), sr.dim(1));
    return 0;
}

int cmd_infer_vsr(const std::string& clip_dir, const std::string& ref_path,
                  const std::string& weights, const std::string& out_dir) {
    require_file(weights, "vsr checkpoint (--weights)");
    require_file(data_path(ref_path), "reference image (--ref)");
    LoadedVsr m = vsr_from_checkpoint(load_checkpoint(weights));
    VideoClip clip;
    for (const auto& f : list_clip_frames(data_path(clip_dir))) clip.frames.push_back(read_png(f));
    const Image ref = read_png(data_path(ref_path));
    const VideoClip out = m.net.restore_clip(clip, ref, *m.matcher);
    fs::create_directories(out_dir);
    for (size_t i = 0; i < out.frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%05zu.png", i);
        write_png((fs::path(out_dir) / name).string(), out.frames[i]);
    }
    std::printf("infer-vsr: wrote %zu frames to %s\n", out.frames.size(), out_dir.c_str());
    return 0;
}

int cmd_eval(const CommonOpts& c, const std::string& weights, const std::string& manifest_path,
             const std::string& mode, const std::string& channel, const std::string& report_path,
             const std::string& plots_dir, const std::string& matcher_arg, int argc, char** argv) {
    KeyValueConfig cfg = resolve_config(c);
    RunManifest rman = start_manifest("eval", c, cfg, argc, argv);
    require_file(data_path(manifest_path), "evaluation manifest (--manifest)");
    rman.add_input(data_path(manifest_path));
    const DatasetManifest manifest = DatasetManifest::load(data_path(manifest_path));

    std::unique_ptr<EvalModel> model;
    std::shared_ptr<Matcher> aee_matcher;
    if (weights == "bicubic") {
        model = std::make_unique<BicubicEvalModel>();
    } else {
        require_file(weights, "model checkpoint (--weights)");
        rman.add_input(weights);
        const Checkpoint ck = load_checkpoint(weights);
        if (ck.kind == "sr") {
            auto m = std::make_unique<SrEvalModel>();
            LoadedSr ld = sr_from_checkpoint(ck);
            m->net = std::move(ld.net);
            m->matcher = ld.matcher;
            aee_matcher = ld.matcher;
            model = std::move(m);
        } else if (ck.kind == "vsr") {
            auto m = std::make_unique<VsrEvalModel>();
            LoadedVsr ld = vsr_from_checkpoint(ck);
            m->net = std::move(ld.net);
            m->matcher = ld.matcher;
            aee_matcher = ld.matcher;
            model = std::move(m);
        } else {
            throw config_error("eval: unsupported checkpoint kind '" + ck.kind + "'");
        }
    }
    if (!matcher_arg.empty()) {
        if (matcher_arg == "ncc") {
            aee_matcher = std::make_shared<NccMatcher>();
        } else {
            require_file(matcher_arg, "matcher checkpoint (--matcher)");
            MatcherNets nets = matcher_from_checkpoint(load_checkpoint(matcher_arg), "");
            auto np = nets.params();
            nn::set_requires_grad(np, false);
            aee_matcher = std::make_shared<ContrastiveMatcher>(nets.matcher());
        }
    }

    EvalOptions opt;
    opt.mode = mode;
    opt.channel = metric_mode_from_string(channel);
    opt.config_fingerprint = rman.fingerprint();
    opt.aee_matcher = aee_matcher.get();

    EvalReport report = evaluate(*model, manifest, opt);
    report.timestamp = "";  // populated below; excluded from the content hash
    {
        std::time_t now = std::time(nullptr);
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        report.timestamp = buf;
    }
    write_file_atomic(report_path, report.to_json().dump(2) + "\n");
    // the report hash covers the normalized form (volatile fields stripped)
    rman.add_output_content(report_path, Sha256::of_string(report.normalized_json().dump(2)));
    if (!plots_dir.empty()) {
        write_report_plots(report, plots_dir);
        std::vector<std::string> plot_files;
        for (const auto& e : fs::directory_iterator(plots_dir)) plot_files.push_back(e.path().string());
        std::sort(plot_files.begin(), plot_files.end());
        for (const auto& f : plot_files) rman.add_output(f);
    }
    rman.write(c.out_dir);

    if (report.has_psnr)
        std::printf("eval: mean PSNR %.4f dB, mean SSIM %.4f over %zu rows\n", report.mean_psnr,
                    report.mean_ssim, report.rows.size());
    if (report.has_aee) std::printf("eval: mean AEE %.4f cells\n", report.mean_aee);
    std::printf("eval: report written to %s\n", report_path.c_str());
    return 0;
}

int cmd_param_count(const std::string& weights) {
    require_file(weights, "checkpoint (--weights)");
    const Checkpoint ck = load_checkpoint(weights);
    std::int64_t total = 0;
    for (const auto& [name, t] : ck.tensors)
        if (name.rfind("opt.", 0) != 0) total += t.size();
    std::printf("%s: %lld parameters (%s)\n", weights.c_str(), static_cast<long long>(total),
                ck.architecture_id.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reference-based image and video super-resolution toolkit"};
    app.require_subcommand(1);

    // make-pairs
    CommonOpts mp;
    std::string mp_hr_dir;
    int mp_procedural = 0, mp_count = 8, mp_crop = 160;
    auto* mk = app.add_subcommand("make-pairs", "synthesize homography training pairs");
    add_common(mk, mp);
    mk->add_option("--hr-dir", mp_hr_dir, "directory of source HR PNGs");
    mk->add_option("--procedural", mp_procedural, "generate N procedural texture sources instead");
    mk->add_option("--count", mp_count, "number of pairs to synthesize");
    mk->add_option("--crop", mp_crop, "HR crop size (LR is crop/4)");

    // make-benchmark
    CommonOpts mb;
    std::string mb_hr_dir, mb_group = "all", mb_axis = "both";
    int mb_procedural = 0, mb_size = 160;
    auto* bk = app.add_subcommand("make-benchmark", "build a transformation-controlled benchmark");
    add_common(bk, mb);
    bk->add_option("--hr-dir", mb_hr_dir, "directory of source HR PNGs");
    bk->add_option("--procedural", mb_procedural, "generate N procedural texture sources instead");
    bk->add_option("--size", mb_size, "procedural source size");
    bk->add_option("--group", mb_group, "small | medium | large | all");
    bk->add_option("--axis", mb_axis, "scale | rotation | both");

    // assemble-dataset
    CommonOpts as;
    std::string as_queries, as_pool, as_selection;
    auto* asm_ = app.add_subcommand("assemble-dataset",
                                    "pair query images with curated references from a local pool");
    add_common(asm_, as);
    asm_->add_option("--queries", as_queries, "directory of query HR PNGs")->required();
    asm_->add_option("--pool", as_pool, "directory of candidate reference images")->required();
    asm_->add_option("--selection", as_selection, "JSONL mapping query -> chosen reference")
        ->required();

    // train-teacher
    CommonOpts tt;
    std::string tt_data;
    auto* t1 = app.add_subcommand("train-teacher", "train the HR-HR teacher matcher");
    add_common(t1, tt);
    t1->add_option("--data", tt_data, "pairs manifest")->required();

    // train-student
    CommonOpts ts;
    std::string ts_data, ts_teacher;
    auto* t2 = app.add_subcommand("train-student",
                                  "train the LR-HR student matcher with correlation distillation");
    add_common(t2, ts, true);
    t2->add_option("--data", ts_data, "pairs manifest")->required();
    t2->add_option("--teacher", ts_teacher, "teacher checkpoint");

    // train-sr
    CommonOpts tsr;
    std::string tsr_data, tsr_matcher;
    auto* t3 = app.add_subcommand("train-sr", "train the reference-based image SR network");
    add_common(t3, tsr, true);
    t3->add_option("--data", tsr_data, "training manifest (HR + reference records)")->required();
    t3->add_option("--matcher", tsr_matcher, "student matcher checkpoint");

    // train-vsr
    CommonOpts tv;
    std::string tv_data, tv_matcher;
    auto* t4 = app.add_subcommand("train-vsr", "train the reference-based video SR network");
    add_common(t4, tv, true);
    t4->add_option("--data", tv_data, "clip manifest")->required();
    t4->add_option("--matcher", tv_matcher, "student matcher checkpoint");

    // infer-sr
    std::string is_lr, is_ref, is_weights, is_out;
    auto* i1 = app.add_subcommand("infer-sr", "restore one LR image");
    i1->add_option("--lr", is_lr, "LR input PNG")->required();
    i1->add_option("--ref", is_ref, "HR reference PNG (omit for the no-reference baseline)");
    i1->add_option("--weights", is_weights, "sr checkpoint")->required();
    i1->add_option("--out", is_out, "output PNG")->required();

    // infer-vsr
    std::string iv_clip, iv_ref, iv_weights, iv_out;
    auto* i2 = app.add_subcommand("infer-vsr", "restore a clip directory");
    i2->add_option("--clip", iv_clip, "directory of numbered LR PNG frames")->required();
    i2->add_option("--ref", iv_ref, "HR reference PNG")->required();
    i2->add_option("--weights", iv_weights, "vsr checkpoint")->required();
    i2->add_option("--out", iv_out, "output directory")->required();

    // eval
    CommonOpts ev;
    std::string ev_weights, ev_manifest, ev_mode = "image", ev_channel = "Y", ev_report,
                ev_plots, ev_matcher;
    auto* e1 = app.add_subcommand("eval", "evaluate a model over a manifest");
    add_common(e1, ev);
    e1->add_option("--weights", ev_weights, "model checkpoint, or 'bicubic'")->required();
    e1->add_option("--manifest", ev_manifest, "dataset manifest")->required();
    e1->add_option("--mode", ev_mode, "image | video");
    e1->add_option("--channel", ev_channel, "Y | RGB");
    e1->add_option("--report", ev_report, "report JSON output path")->required();
    e1->add_option("--plots", ev_plots, "directory for group plots (optional)");
    e1->add_option("--matcher", ev_matcher, "matcher for AEE rows: checkpoint path or 'ncc'");

    // param-count
    std::string pc_weights;
    auto* p1 = app.add_subcommand("param-count", "print the trainable parameter count");
    p1->add_option("--weights", pc_weights, "checkpoint")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (mk->parsed()) {
            if (mp_hr_dir.empty() && mp_procedural <= 0)
                throw config_error("make-pairs needs --hr-dir or --procedural");
            return cmd_make_pairs(mp, mp_hr_dir, mp_procedural, mp_count, mp_crop, argc, argv);
        }
        if (bk->parsed()) {
            if (mb_hr_dir.empty() && mb_procedural <= 0)
                throw config_error("make-benchmark needs --hr-dir or --procedural");
            return cmd_make_benchmark(mb, mb_hr_dir, mb_procedural, mb_size, mb_group, mb_axis,
                                      argc, argv);
        }
        if (asm_->parsed()) return cmd_assemble(as, as_queries, as_pool, as_selection, argc, argv);
        if (t1->parsed()) return cmd_train_teacher(tt, tt_data, argc, argv);
        if (t2->parsed()) return cmd_train_student(ts, ts_data, ts_teacher, argc, argv);
        if (t3->parsed()) return cmd_train_sr(tsr, tsr_data, tsr_matcher, argc, argv);
        if (t4->parsed()) return cmd_train_vsr(tv, tv_data, tv_matcher, argc, argv);
        if (i1->parsed()) return cmd_infer_sr(is_lr, is_ref, is_weights, is_out);
        if (i2->parsed()) return cmd_infer_vsr(iv_clip, iv_ref, iv_weights, iv_out);
        if (e1->parsed())
            return cmd_eval(ev, ev_weights, ev_manifest, ev_mode, ev_channel, ev_report, ev_plots,
                            ev_matcher, argc, argv);
        if (p1->parsed()) return cmd_param_count(pc_weights);
    } catch (const dependency_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const io_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const contract_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const domain_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
