#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace varsep {

// ---------------------------------------------------------------------------
// Adam with bias correction. Moments are kept in the same order as the
// parameter list handed to each step (the model's canonical visit order).

struct AdamConfig {
    double lr = 4e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double epsilon = 1e-8;

    void validate() const {
        if (lr <= 0.0) throw ContractError("adam: lr must be positive");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw ContractError("adam: betas must lie in [0, 1)");
        if (epsilon <= 0.0) throw ContractError("adam: epsilon must be positive");
    }
};

struct AdamState {
    std::uint64_t step = 0;
    std::vector<Tensor> m, v;  // first/second moments, one pair per parameter
};

inline AdamState init_adam(const std::vector<Tensor*>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor* p : params) {
        s.m.push_back(Tensor::zeros(p->shape));
        s.v.push_back(Tensor::zeros(p->shape));
    }
    return s;
}

// One update over all parameters; `lr` is the current (possibly scheduled)
// learning rate. Gradients must match the parameters pairwise in shape.
inline void adam_step(const AdamConfig& cfg, double lr, AdamState& state,
                      const std::vector<Tensor*>& params,
                      const std::vector<const Tensor*>& grads) {
    cfg.validate();
    if (lr <= 0.0) throw ContractError("adam: lr must be positive");
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ContractError("adam: parameter/gradient/state count mismatch");
    state.step += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
    double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = *grads[k];
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        if (g.shape != p.shape || m.shape != p.shape)
            throw ShapeError("adam: parameter " + std::to_string(k) + " is " +
                             shape_str(p.shape) + " but gradient is " +
                             shape_str(g.shape));
        for (std::size_t i = 0; i < p.numel(); ++i) {
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g.data[i];
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g.data[i] * g.data[i];
            double mhat = m.data[i] / bc1;
            double vhat = v.data[i] / bc2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

}  // namespace varsep
