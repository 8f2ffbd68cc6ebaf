#pragma once

#include <cmath>
#include <vector>

#include "refsr/core/autograd.hpp"
#include "refsr/core/nn.hpp"

namespace refsr {

// Adaptive-moment optimizer with per-group learning rates and an enable flag
// (used to hold the flow estimator fixed for its warmup phase).
class Adam {
public:
    struct Group {
        std::vector<ad::Var> params;
        double lr = 1e-3;
        bool enabled = true;
    };

    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    int add_group(const nn::ParamList& params, double lr) {
        Group g;
        g.lr = lr;
        for (const auto& p : params) g.params.push_back(p.var);
        groups_.push_back(std::move(g));
        state_.emplace_back();
        auto& st = state_.back();
        for (const auto& v : groups_.back().params) {
            st.push_back({Tensor::zeros_like(v.val()), Tensor::zeros_like(v.val())});
        }
        return static_cast<int>(groups_.size()) - 1;
    }

    void set_group_enabled(int idx, bool enabled) { groups_[idx].enabled = enabled; }
    void set_group_lr(int idx, double lr) { groups_[idx].lr = lr; }

    void step(const ad::GradMap& grads) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (size_t gi = 0; gi < groups_.size(); ++gi) {
            Group& g = groups_[gi];
            if (!g.enabled) continue;
            for (size_t pi = 0; pi < g.params.size(); ++pi) {
                auto it = grads.find(g.params[pi].node().get());
                if (it == grads.end()) continue;
                const Tensor& grad = it->second.val();
                Tensor& m = state_[gi][pi].m;
                Tensor& v = state_[gi][pi].v;
                Tensor& w = g.params[pi].mutable_val();
                for (std::int64_t i = 0; i < w.size(); ++i) {
                    m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
                    v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
                    const double mh = m[i] / bc1;
                    const double vh = v[i] / bc2;
                    w[i] -= g.lr * mh / (std::sqrt(vh) + eps_);
                }
            }
        }
    }

    long step_count() const { return t_; }

    // Moment tensors in group/param order, for checkpointing.
    std::vector<Tensor> state_tensors() const {
        std::vector<Tensor> out;
        for (const auto& st : state_)
            for (const auto& s : st) {
                out.push_back(s.m);
                out.push_back(s.v);
            }
        return out;
    }

    void load_state_tensors(const std::vector<Tensor>& in, long t) {
        size_t k = 0;
        for (auto& st : state_)
            for (auto& s : st) {
                s.m = in.at(k++);
                s.v = in.at(k++);
            }
        t_ = t;
    }

private:
    struct Moments {
        Tensor m, v;
    };
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Group> groups_;
    std::vector<std::vector<Moments>> state_;
};

}  // namespace refsr
