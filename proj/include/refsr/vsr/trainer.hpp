#pragma once

#include <limits>
#include <vector>

#include "refsr/core/adam.hpp"
#include "refsr/eval/metrics.hpp"
#include "refsr/sr/losses.hpp"
#include "refsr/vsr/network.hpp"

namespace refsr {

struct VsrTrainConfig {
    double learning_rate = 2e-4;
    double flow_learning_rate = 2.5e-5;
    int flow_freeze_iters = 5000;  // flow refiner fixed for this many steps
    int flow_pretrain_steps = 0;   // optional synthetic warm-up of the refiner
    int iters = 2000;
    int batch_size = 8;
    int patch = 64;  // HR training patch side; frames at or below pass through
    std::uint64_t seed = 0;
    double charbonnier_eps = 1e-8;
    double psnr_stop = 0.0;
    int eval_every = 50;

    static VsrTrainConfig from_kv(const KeyValueConfig& kv) {
        VsrTrainConfig c;
        c.learning_rate = kv.get_double("train.learning_rate", c.learning_rate);
        c.flow_learning_rate = kv.get_double("train.flow_learning_rate", c.flow_learning_rate);
        c.flow_freeze_iters = kv.get_int("train.flow_freeze_iters", c.flow_freeze_iters);
        c.flow_pretrain_steps = kv.get_int("train.flow_pretrain_steps", c.flow_pretrain_steps);
        c.iters = kv.get_int("train.iters", c.iters);
        c.batch_size = kv.get_int("train.batch_size", c.batch_size);
        c.patch = kv.get_int("train.patch", c.patch);
        c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
        c.psnr_stop = kv.get_double("train.psnr_stop", c.psnr_stop);
        c.eval_every = kv.get_int("train.eval_every", c.eval_every);
        return c;
    }
};

struct VsrSample {
    std::vector<Image> hr_frames;
    Image ref;
};

struct VsrTrainResult {
    std::vector<double> loss_history;
    int steps_run = 0;
    double final_psnr = 0.0;
};

inline double clip_psnr(const VideoClip& pred, const std::vector<Image>& gt, MetricMode mode) {
    double total = 0.0;
    for (size_t i = 0; i < gt.size(); ++i) total += psnr(pred.frames[i], gt[i], mode);
    return total / static_cast<double>(gt.size());
}

// Charbonnier training over whole clips, one clip per step. The flow group
// follows the warm-up schedule: pretrained synthetically, then frozen for the
// first flow_freeze_iters steps.
inline VsrTrainResult train_vsr(RefVideoSR& model, const Matcher& matcher,
                                const std::vector<VsrSample>& clips, const VsrTrainConfig& cfg,
                                const std::function<void(int, double)>& progress = {}) {
    if (clips.empty()) throw config_error("train_vsr: empty dataset");

    if (cfg.flow_pretrain_steps > 0)
        pretrain_flow_synthetic(model.flow, cfg.flow_pretrain_steps, cfg.seed);

    struct Prepared {
        std::vector<Image> lr_frames;
        RefVideoSR::ClipCache cache;
    };
    // correspondence fields are constant (frozen matcher); flow fields are
    // constant only while the flow refiner is frozen
    const bool flows_frozen_all_run = cfg.flow_freeze_iters >= cfg.iters;
    std::vector<Prepared> prep;
    for (const auto& c : clips) {
        Prepared p;
        for (const auto& f : c.hr_frames) p.lr_frames.push_back(bicubic_downsample(f, model.cfg.scale_factor));
        p.cache = model.precompute_clip(p.lr_frames, c.ref, matcher, flows_frozen_all_run);
        prep.push_back(std::move(p));
    }

    Adam opt;
    opt.add_group(model.params(/*include_flow=*/false), cfg.learning_rate);
    const int flow_group = opt.add_group(model.flow_params(), cfg.flow_learning_rate);

    // patch cropping applies when frames exceed the training patch; cropped
    // clips get live correspondence fields (the cached full-frame fields no
    // longer apply)
    const int lr_patch = std::max(model.cfg.scale_factor, cfg.patch) / model.cfg.scale_factor;
    Rng crop_rng(cfg.seed ^ 0x76637270ULL);

    VsrTrainResult result;
    for (int step = 0; step < cfg.iters; ++step) {
        const bool flow_enabled = step >= cfg.flow_freeze_iters;
        opt.set_group_enabled(flow_group, flow_enabled);
        if (flow_enabled)
            for (auto& p : prep) p.cache.use_flows = false;

        ad::Var loss;
        const int batch = std::max(1, cfg.batch_size);
        for (int b = 0; b < batch; ++b) {
            const size_t idx =
                (static_cast<size_t>(step) * static_cast<size_t>(batch) + static_cast<size_t>(b)) %
                clips.size();
            const auto& lr_frames = prep[idx].lr_frames;
            const bool needs_crop =
                lr_frames[0].dim(1) > lr_patch || lr_frames[0].dim(2) > lr_patch;
            std::vector<ad::Var> outputs;
            std::vector<const Image*> gts;
            std::vector<Image> cropped_lr, cropped_hr;
            if (needs_crop) {
                cropped_lr.reserve(lr_frames.size());
                cropped_hr.reserve(lr_frames.size());
                const int ly = crop_rng.uniform_int(0, lr_frames[0].dim(1) - lr_patch);
                const int lx = crop_rng.uniform_int(0, lr_frames[0].dim(2) - lr_patch);
                for (size_t i = 0; i < lr_frames.size(); ++i) {
                    cropped_lr.push_back(crop(lr_frames[i], ly, lx, lr_patch, lr_patch));
                    cropped_hr.push_back(crop(clips[idx].hr_frames[i], 4 * ly, 4 * lx,
                                              4 * lr_patch, 4 * lr_patch));
                }
                outputs = model.forward_clip(cropped_lr, clips[idx].ref, matcher);
                for (const auto& f : cropped_hr) gts.push_back(&f);
            } else {
                outputs = model.forward_clip(lr_frames, clips[idx].ref, matcher, &prep[idx].cache);
                for (const auto& f : clips[idx].hr_frames) gts.push_back(&f);
            }
            ad::Var clip_loss;
            for (size_t i = 0; i < outputs.size(); ++i) {
                ad::Var l = charbonnier_loss(outputs[i], *gts[i], cfg.charbonnier_eps);
                clip_loss = clip_loss.defined() ? ad::add(clip_loss, l) : l;
            }
            clip_loss = ad::scale(clip_loss, 1.0 / static_cast<double>(outputs.size()));
            loss = loss.defined() ? ad::add(loss, clip_loss) : clip_loss;
        }
        loss = ad::scale(loss, 1.0 / batch);
        const double lv = loss.val().item();
        if (!std::isfinite(lv)) throw error("train_vsr: non-finite loss at step " + std::to_string(step));
        result.loss_history.push_back(lv);
        auto grads = ad::backward_collect(loss);
        opt.step(grads);
        result.steps_run = step + 1;
        if (progress) progress(step, lv);

        if (cfg.psnr_stop > 0.0 && (step + 1) % cfg.eval_every == 0) {
            double min_psnr = std::numeric_limits<double>::infinity();
            for (size_t c = 0; c < clips.size(); ++c) {
                VideoClip in;
                in.frames = prep[c].lr_frames;
                const VideoClip out = model.restore_clip(in, clips[c].ref, matcher);
                min_psnr = std::min(min_psnr, clip_psnr(out, clips[c].hr_frames, MetricMode::Y));
            }
            result.final_psnr = min_psnr;
            if (min_psnr >= cfg.psnr_stop) break;
        }
    }
    if (cfg.psnr_stop <= 0.0) {
        double min_psnr = std::numeric_limits<double>::infinity();
        for (size_t c = 0; c < clips.size(); ++c) {
            VideoClip in;
            in.frames = prep[c].lr_frames;
            const VideoClip out = model.restore_clip(in, clips[c].ref, matcher);
            min_psnr = std::min(min_psnr, clip_psnr(out, clips[c].hr_frames, MetricMode::Y));
        }
        result.final_psnr = min_psnr;
    }
    return result;
}

}  // namespace refsr
