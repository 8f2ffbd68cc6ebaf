#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "refsr/core/sha256.hpp"
#include "refsr/eval/evaluate.hpp"
#include "refsr/match/trainer.hpp"
#include "refsr/sr/trainer.hpp"
#include "refsr/vsr/trainer.hpp"

namespace refsr {

// ---------------------------------------------------------------------------
// Full-model checkpoints. SR/VSR checkpoints embed the (frozen) matcher so a
// single file drives inference.

inline void sr_config_to_meta(const SrNetConfig& cfg, nlohmann::json& meta) {
    meta["ch"] = cfg.ch;
    meta["trunk_blocks"] = cfg.trunk_blocks;
    meta["transfer_blocks"] = cfg.transfer_blocks;
    meta["offset_mid"] = cfg.offset_mid;
    meta["offset_clamp"] = cfg.offset_clamp;
    meta["agg_k_side"] = cfg.agg_k_side;
    meta["dyn_agg"] = cfg.dyn_agg;
    meta["use_reference"] = cfg.use_reference;
}

inline SrNetConfig sr_config_from_meta(const nlohmann::json& meta) {
    SrNetConfig cfg;
    cfg.ch = meta.at("ch").get<int>();
    cfg.trunk_blocks = meta.at("trunk_blocks").get<int>();
    cfg.transfer_blocks = meta.at("transfer_blocks").get<std::vector<int>>();
    cfg.offset_mid = meta.at("offset_mid").get<int>();
    cfg.offset_clamp = meta.at("offset_clamp").get<double>();
    cfg.agg_k_side = meta.at("agg_k_side").get<int>();
    cfg.dyn_agg = meta.at("dyn_agg").get<bool>();
    cfg.use_reference = meta.at("use_reference").get<bool>();
    return cfg;
}

inline Checkpoint sr_checkpoint(RefImageSR& model, MatcherNets* matcher,
                                const std::string& matcher_kind) {
    Checkpoint ck;
    ck.kind = "sr";
    ck.architecture_id = model.cfg.id();
    sr_config_to_meta(model.cfg, ck.meta);
    ck.meta["matcher_kind"] = matcher_kind;
    for (auto& p : model.params()) ck.tensors.emplace_back(p.name, p.var.val());
    if (matcher) {
        ck.meta["matcher_channels"] = matcher->cfg.channels;
        ck.meta["matcher_descriptor_dim"] = matcher->cfg.descriptor_dim;
        for (auto& p : matcher->params()) ck.tensors.emplace_back("matcher." + p.name, p.var.val());
    }
    return ck;
}

inline std::shared_ptr<Matcher> matcher_from_model_checkpoint(const Checkpoint& ck) {
    const std::string kind = ck.meta.value("matcher_kind", "contrastive");
    if (kind == "ncc") return std::make_shared<NccMatcher>();
    EncoderConfig mcfg;
    mcfg.channels = ck.meta.at("matcher_channels").get<std::vector<int>>();
    mcfg.descriptor_dim = ck.meta.at("matcher_descriptor_dim").get<int>();
    Rng rng(0);
    MatcherNets nets(mcfg, rng);
    auto params = nets.params();
    for (auto& p : params) p.var.mutable_val() = ck.get("matcher." + p.name);
    nn::set_requires_grad(params, false);
    return std::make_shared<ContrastiveMatcher>(nets.matcher());
}

struct LoadedSr {
    RefImageSR net;
    std::shared_ptr<Matcher> matcher;
};

inline LoadedSr sr_from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != "sr") throw config_error("checkpoint kind '" + ck.kind + "', expected 'sr'");
    LoadedSr out;
    Rng rng(0);
    out.net = RefImageSR(sr_config_from_meta(ck.meta), rng);
    model_from_checkpoint(out.net.params(), ck);
    out.matcher = matcher_from_model_checkpoint(ck);
    return out;
}

inline void vsr_config_to_meta(const VsrConfig& cfg, nlohmann::json& meta) {
    meta["ch"] = cfg.ch;
    meta["feat_blocks"] = cfg.feat_blocks;
    meta["prop_blocks"] = cfg.prop_blocks;
    meta["fusion_blocks"] = cfg.fusion_blocks;
    meta["offset_mid"] = cfg.offset_mid;
    meta["offset_clamp"] = cfg.offset_clamp;
    meta["agg_k_side"] = cfg.agg_k_side;
    meta["use_reference"] = cfg.use_reference;
    meta["use_attention"] = cfg.use_attention;
    meta["dyn_agg"] = cfg.dyn_agg;
    meta["flow_align_ref"] = cfg.flow_align_ref;
    meta["flow_levels"] = cfg.flow.levels;
    meta["flow_ch"] = cfg.flow.ch;
}

inline VsrConfig vsr_config_from_meta(const nlohmann::json& meta) {
    VsrConfig cfg;
    cfg.ch = meta.at("ch").get<int>();
    cfg.feat_blocks = meta.at("feat_blocks").get<int>();
    cfg.prop_blocks = meta.at("prop_blocks").get<int>();
    cfg.fusion_blocks = meta.at("fusion_blocks").get<int>();
    cfg.offset_mid = meta.at("offset_mid").get<int>();
    cfg.offset_clamp = meta.at("offset_clamp").get<double>();
    cfg.agg_k_side = meta.at("agg_k_side").get<int>();
    cfg.use_reference = meta.at("use_reference").get<bool>();
    cfg.use_attention = meta.at("use_attention").get<bool>();
    cfg.dyn_agg = meta.at("dyn_agg").get<bool>();
    cfg.flow_align_ref = meta.at("flow_align_ref").get<bool>();
    cfg.flow.levels = meta.at("flow_levels").get<int>();
    cfg.flow.ch = meta.at("flow_ch").get<int>();
    return cfg;
}

inline Checkpoint vsr_checkpoint(RefVideoSR& model, MatcherNets* matcher,
                                 const std::string& matcher_kind) {
    Checkpoint ck;
    ck.kind = "vsr";
    ck.architecture_id = model.cfg.id();
    vsr_config_to_meta(model.cfg, ck.meta);
    ck.meta["matcher_kind"] = matcher_kind;
    for (auto& p : model.params()) ck.tensors.emplace_back(p.name, p.var.val());
    if (matcher) {
        ck.meta["matcher_channels"] = matcher->cfg.channels;
        ck.meta["matcher_descriptor_dim"] = matcher->cfg.descriptor_dim;
        for (auto& p : matcher->params()) ck.tensors.emplace_back("matcher." + p.name, p.var.val());
    }
    return ck;
}

struct LoadedVsr {
    RefVideoSR net;
    std::shared_ptr<Matcher> matcher;
};

inline LoadedVsr vsr_from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != "vsr") throw config_error("checkpoint kind '" + ck.kind + "', expected 'vsr'");
    LoadedVsr out;
    Rng rng(0);
    out.net = RefVideoSR(vsr_config_from_meta(ck.meta), rng);
    model_from_checkpoint(out.net.params(), ck);
    out.matcher = matcher_from_model_checkpoint(ck);
    return out;
}

// ---------------------------------------------------------------------------
// Run manifests: machine-readable record of every run with content hashes of
// all inputs and produced artifacts.

struct RunManifest {
    std::string stage;
    std::vector<std::string> command_line;
    std::uint64_t seed = 0;
    KeyValueConfig config;
    std::map<std::string, std::string> input_hashes;
    std::map<std::string, std::string> output_hashes;

    void add_input(const std::string& path) { input_hashes[path] = Sha256::of_file(path); }
    void add_output(const std::string& path) { output_hashes[path] = Sha256::of_file(path); }
    void add_output_content(const std::string& path, const std::string& content_hash) {
        output_hashes[path] = content_hash;
    }

    std::string fingerprint() const { return Sha256::of_string(config.canonical()); }

    void write(const std::string& out_dir) const {
        nlohmann::json j;
        j["stage"] = stage;
        j["command_line"] = command_line;
        j["seed"] = seed;
        j["config"] = config.items();
        j["config_fingerprint"] = fingerprint();
        j["inputs"] = input_hashes;
        j["outputs"] = output_hashes;
        write_file_atomic((std::filesystem::path(out_dir) / "run_manifest.json").string(),
                          j.dump(2) + "\n");
    }
};

// Ablation presets mirroring the study axes: each is a set of config
// overrides applied before a stage runs.
inline void apply_preset(KeyValueConfig& cfg, const std::string& preset) {
    if (preset.empty()) return;
    if (preset == "no-distill") {
        cfg.set("loss.kl_weight", "0");
    } else if (preset == "no-dyn-agg") {
        cfg.set("sr.dyn_agg", "false");
        cfg.set("vsr.dyn_agg", "false");
    } else if (preset == "no-contrastive") {
        cfg.set("matcher.kind", "ncc");
    } else if (preset == "no-attention") {
        cfg.set("vsr.use_attention", "false");
    } else if (preset == "flow-align") {
        cfg.set("vsr.flow_align_ref", "true");
    } else {
        throw config_error("unknown preset '" + preset + "'");
    }
}

// ---------------------------------------------------------------------------
// Training-pair reconstruction from a pairs manifest (as written by
// make-pairs): input = HR crop, refs[0] = warped reference, homography stored
// inline.

inline TrainPair pair_from_record(const ManifestRecord& rec, int scale_factor = 4) {
    if (rec.refs.empty() || rec.homography.size() != 9)
        throw config_error("record is not a training pair: " + rec.input);
    TrainPair p;
    p.hr_input = read_png(rec.input);
    p.hr_ref = read_png(rec.refs[0]);
    for (int i = 0; i < 9; ++i) p.homography.m[static_cast<size_t>(i)] = rec.homography[static_cast<size_t>(i)];
    p.homography.normalize();
    p.scale_factor = scale_factor;
    p.lr_input = bicubic_downsample(p.hr_input, scale_factor);
    return p;
}

inline std::vector<TrainPair> pairs_from_manifest(const DatasetManifest& manifest,
                                                  const std::string& split = "") {
    std::vector<TrainPair> out;
    for (const auto& rec : manifest.records) {
        if (!split.empty() && rec.split != split) continue;
        if (rec.homography.size() == 9) out.push_back(pair_from_record(rec));
    }
    if (out.empty()) throw config_error("manifest holds no training pairs");
    return out;
}

}  // namespace refsr
