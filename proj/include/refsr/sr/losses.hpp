#pragma once

#include <functional>

#include "refsr/core/autograd.hpp"
#include "refsr/core/nn.hpp"
#include "refsr/core/rng.hpp"

namespace refsr {

// Mean absolute difference.
inline ad::Var rec_loss(const ad::Var& sr, const Tensor& hr) {
    if (!sr.val().same_shape(hr)) throw contract_error("rec_loss: shape mismatch");
    return ad::mean_all(ad::abs_v(ad::sub(sr, ad::Var(hr))));
}

// Maps an image Var to one deep feature map Var.
using FeatureExtractor = std::function<ad::Var(const ad::Var&)>;

inline FeatureExtractor identity_extractor() {
    return [](const ad::Var& x) { return x; };
}

// Sum over channels of the Frobenius norm of the feature difference,
// normalized by the feature volume.
inline ad::Var perceptual_loss(const ad::Var& sr, const Tensor& hr, const FeatureExtractor& phi) {
    if (!phi) throw config_error("perceptual_loss: feature extractor unavailable");
    ad::Var fs = phi(sr);
    ad::Var fh;
    {
        ad::NoGradGuard ng;
        fh = phi(ad::Var(hr));
    }
    if (!fs.val().same_shape(fh.val()))
        throw contract_error("perceptual_loss: feature shape mismatch");
    const Tensor& f = fs.val();
    const double volume = static_cast<double>(f.size());
    ad::Var diff = ad::sub(fs, ad::Var(fh.val()));
    ad::Var per_ch = nn::sum_hw(ad::square(diff));             // [C]
    ad::Var frob = ad::sqrt_v(ad::clamp_min(per_ch, 1e-24));   // [C]
    return ad::scale(ad::sum_all(frob), 1.0 / volume);
}

// Strided-convolution critic: unbounded scalar score, suitable for the
// gradient-penalty objective.
struct Discriminator {
    nn::Conv2dLayer c1, c2, c3, c4;

    Discriminator() = default;
    Discriminator(int ch, Rng& rng)
        : c1(3, ch, 3, 2, 1, rng), c2(ch, 2 * ch, 3, 2, 1, rng), c3(2 * ch, 4 * ch, 3, 2, 1, rng),
          c4(4 * ch, 1, 3, 1, 1, rng) {}

    ad::Var operator()(const ad::Var& img) const {
        ad::Var x = ad::leaky_relu(c1(img), 0.2);
        x = ad::leaky_relu(c2(x), 0.2);
        x = ad::leaky_relu(c3(x), 0.2);
        return ad::mean_all(c4(x));
    }

    nn::ParamList params(const std::string& prefix) {
        nn::ParamList out;
        c1.collect(prefix + ".c1", out);
        c2.collect(prefix + ".c2", out);
        c3.collect(prefix + ".c3", out);
        c4.collect(prefix + ".c4", out);
        return out;
    }
};

struct AdvLosses {
    ad::Var generator;      // -D(sr)
    ad::Var discriminator;  // D(sr) - D(hr) + lambda * (|grad D(mix)| - 1)^2
};

// The critic score function is generic so tests can pass closed-form critics.
// `epsilon` selects the random convex combination mix = eps*sr + (1-eps)*hr.
// The penalty's parameter gradient is exact: the critic's input gradient is
// collected with create_graph so the second backward differentiates it.
template <typename DFn>
inline AdvLosses adversarial_losses(const ad::Var& sr, const Tensor& hr, DFn&& critic,
                                    double gp_lambda, double epsilon) {
    using namespace ad;
    AdvLosses out;
    out.generator = neg(critic(sr));

    Tensor mix = sr.val();
    for (std::int64_t i = 0; i < mix.size(); ++i)
        mix[i] = epsilon * mix[i] + (1.0 - epsilon) * hr[i];
    Var ihat(std::move(mix), true);
    Var d_hat = critic(ihat);
    Var grad_in;
    if (d_hat.requires_grad()) {
        GradMap gm = backward_collect(d_hat, /*create_graph=*/true);
        auto it = gm.find(ihat.node().get());
        if (it != gm.end()) grad_in = it->second;
    }
    if (!grad_in.defined()) grad_in = Var(Tensor::zeros_like(ihat.val()));

    Var norm = sqrt_v(add_scalar(sum_all(square(grad_in)), 1e-24));
    Var penalty = scale(square(add_scalar(norm, -1.0)), gp_lambda);
    out.discriminator = add(sub(critic(sr.detach()), critic(Var(hr))), penalty);
    return out;
}

// Smooth-L1 surrogate: mean sqrt(diff^2 + eps^2) with eps = 1e-8.
inline ad::Var charbonnier_loss(const ad::Var& pred, const Tensor& gt, double eps = 1e-8) {
    if (!pred.val().same_shape(gt)) throw contract_error("charbonnier_loss: shape mismatch");
    return ad::mean_all(ad::sqrt_v(ad::add_scalar(ad::square(ad::sub(pred, ad::Var(gt))), eps * eps)));
}

}  // namespace refsr
