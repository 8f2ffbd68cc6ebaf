#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "refsr/core/adam.hpp"
#include "refsr/data/resize.hpp"
#include "refsr/eval/metrics.hpp"
#include "refsr/sr/losses.hpp"
#include "refsr/sr/network.hpp"

namespace refsr {

struct SrTrainConfig {
    double lambda_rec = 1.0;
    double lambda_per = 1e-4;
    double lambda_adv = 1e-6;
    double learning_rate = 1e-4;
    int rec_only_iters = 10000;  // adversarial/perceptual branches untouched before this
    double gp_lambda = 10.0;
    int disc_ch = 32;
    int iters = 2000;
    int patch = 160;        // HR training crop side (LR side is patch/4)
    bool rec_only = false;  // the "-rec" variant: lambda_per = lambda_adv = 0 throughout
    std::uint64_t seed = 0;
    double psnr_stop = 0.0;  // early stop once min train-pair PSNR reaches this (0 = off)
    int eval_every = 100;

    static SrTrainConfig from_kv(const KeyValueConfig& kv) {
        SrTrainConfig c;
        c.lambda_rec = kv.get_double("train.lambda_rec", c.lambda_rec);
        c.lambda_per = kv.get_double("train.lambda_per", c.lambda_per);
        c.lambda_adv = kv.get_double("train.lambda_adv", c.lambda_adv);
        c.learning_rate = kv.get_double("train.learning_rate", c.learning_rate);
        c.rec_only_iters = kv.get_int("train.rec_only_iters", c.rec_only_iters);
        c.gp_lambda = kv.get_double("train.gp_lambda", c.gp_lambda);
        c.disc_ch = kv.get_int("train.disc_channels", c.disc_ch);
        c.iters = kv.get_int("train.iters", c.iters);
        c.patch = kv.get_int("train.patch", c.patch);
        c.rec_only = kv.get_bool("train.rec_only", c.rec_only);
        c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
        c.psnr_stop = kv.get_double("train.psnr_stop", c.psnr_stop);
        c.eval_every = kv.get_int("train.eval_every", c.eval_every);
        return c;
    }
};

struct SrSample {
    Image hr;
    Image ref;
};

struct SrTrainResult {
    std::vector<double> loss_history;
    int steps_run = 0;
    double final_min_psnr = 0.0;
};

// Stage-2 training: the matcher stays frozen; correspondence fields are fixed
// per pair and precomputed. One pair per step, round-robin.
inline SrTrainResult train_sr(RefImageSR& model, const Matcher& matcher,
                              const std::vector<SrSample>& samples, const SrTrainConfig& cfg,
                              const FeatureExtractor& perceptual_extractor = {},
                              const std::function<void(int, double)>& progress = {}) {
    if (samples.empty()) throw config_error("train_sr: empty dataset");
    Rng rng(cfg.seed ^ 0x5352u);

    struct Prepared {
        Image lr;
        CorrespondenceField field;
    };
    std::vector<Prepared> prep;
    for (const auto& s : samples) {
        Prepared p;
        p.lr = bicubic_downsample(s.hr, model.cfg.scale_factor);
        p.field = matcher.correspond(p.lr, s.ref);
        prep.push_back(std::move(p));
    }

    Adam opt;
    opt.add_group(model.params(), cfg.learning_rate);
    Discriminator disc(cfg.disc_ch, rng);
    Adam opt_d;
    opt_d.add_group(disc.params("disc"), cfg.learning_rate);

    const bool gan_enabled = !cfg.rec_only && (cfg.lambda_adv > 0.0 || cfg.lambda_per > 0.0);

    const int lr_patch = std::max(model.cfg.scale_factor, cfg.patch) / model.cfg.scale_factor;
    Rng crop_rng(cfg.seed ^ 0x73726370ULL);

    SrTrainResult result;
    for (int step = 0; step < cfg.iters; ++step) {
        const size_t idx = static_cast<size_t>(step) % samples.size();
        const auto& s = samples[idx];
        const auto& p = prep[idx];

        // pairs larger than the training patch are randomly cropped per step,
        // with correspondences recomputed for the crop
        Image lr_in = p.lr;
        Image hr_gt = s.hr;
        const CorrespondenceField* field = &p.field;
        CorrespondenceField crop_field;
        if (p.lr.dim(1) > lr_patch || p.lr.dim(2) > lr_patch) {
            const int ly = crop_rng.uniform_int(0, std::max(0, p.lr.dim(1) - lr_patch));
            const int lx = crop_rng.uniform_int(0, std::max(0, p.lr.dim(2) - lr_patch));
            lr_in = crop(p.lr, ly, lx, std::min(lr_patch, p.lr.dim(1)), std::min(lr_patch, p.lr.dim(2)));
            hr_gt = crop(s.hr, 4 * ly, 4 * lx, 4 * lr_in.dim(1), 4 * lr_in.dim(2));
            crop_field = matcher.correspond(lr_in, s.ref);
            field = &crop_field;
        }

        ad::Var sr = model.forward(ad::Var(lr_in), ad::Var(s.ref), field);
        ad::Var loss = ad::scale(rec_loss(sr, hr_gt), cfg.lambda_rec);
        const bool adversarial_phase = gan_enabled && step >= cfg.rec_only_iters;
        if (adversarial_phase) {
            if (cfg.lambda_per > 0.0)
                loss = ad::add(loss, ad::scale(perceptual_loss(sr, hr_gt, perceptual_extractor),
                                               cfg.lambda_per));
            if (cfg.lambda_adv > 0.0) {
                AdvLosses adv = adversarial_losses(
                    sr, hr_gt, [&](const ad::Var& x) { return disc(x); }, cfg.gp_lambda,
                    rng.uniform());
                auto dgrads = ad::backward_collect(adv.discriminator);
                opt_d.step(dgrads);
                loss = ad::add(loss, ad::scale(adv.generator, cfg.lambda_adv));
            }
        }

        const double loss_value = loss.val().item();
        if (!std::isfinite(loss_value))
            throw error("train_sr: non-finite loss at step " + std::to_string(step));
        result.loss_history.push_back(loss_value);

        auto grads = ad::backward_collect(loss);
        opt.step(grads);
        result.steps_run = step + 1;

        if (progress) progress(step, loss_value);
        if (cfg.psnr_stop > 0.0 && (step + 1) % cfg.eval_every == 0) {
            double min_psnr = std::numeric_limits<double>::infinity();
            for (size_t i = 0; i < samples.size(); ++i) {
                const Image out = model.restore(prep[i].lr, samples[i].ref, matcher);
                min_psnr = std::min(min_psnr, psnr(out, samples[i].hr, MetricMode::Y));
            }
            result.final_min_psnr = min_psnr;
            if (min_psnr >= cfg.psnr_stop) break;
        }
    }
    if (cfg.psnr_stop <= 0.0) {
        double min_psnr = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < samples.size(); ++i) {
            const Image out = model.restore(prep[i].lr, samples[i].ref, matcher);
            min_psnr = std::min(min_psnr, psnr(out, samples[i].hr, MetricMode::Y));
        }
        result.final_min_psnr = min_psnr;
    }
    return result;
}

}  // namespace refsr
