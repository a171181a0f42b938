#pragma once

#include <cmath>
#include <map>
#include <string>

#include "core/nn.hpp"

namespace casr {

// Adam with per-tensor state; moments live in plain tensors so they serialize
// with checkpoints and resume bitwise.
struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t t = 0;
    std::map<std::string, TensorF> m, v;

    void step(std::map<std::string, nn::Var>& params, double lr) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (auto& [name, var] : params) {
            if (var->grad.v.empty())
                continue;
            TensorF& mi = m.try_emplace(name, TensorF(var->value.shape)).first->second;
            TensorF& vi = v.try_emplace(name, TensorF(var->value.shape)).first->second;
            for (size_t i = 0; i < var->value.v.size(); ++i) {
                const double g = var->grad.v[i];
                mi.v[i] = static_cast<float>(beta1 * mi.v[i] + (1.0 - beta1) * g);
                vi.v[i] = static_cast<float>(beta2 * vi.v[i] + (1.0 - beta2) * g * g);
                const double mhat = mi.v[i] / bc1;
                const double vhat = vi.v[i] / bc2;
                var->value.v[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
            }
        }
    }
};

}  // namespace casr
