#include "lacovl/adam.hpp"

#include <cmath>

namespace lacovl {

void Adam::step(ParamRegistry& registry) {
    for (auto& [name, param] : registry.params()) {
        if (param.frozen || !param.tensor.has_grad()) continue;
        AdamSlot& slot = slots_[name];
        std::vector<double>& theta = param.tensor.values();
        const std::vector<double>& g = param.tensor.grad();
        if (slot.m.empty()) {
            slot.m.assign(theta.size(), 0.0);
            slot.v.assign(theta.size(), 0.0);
        }
        ++slot.step;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(slot.step));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(slot.step));
        const double decay = cfg_.lr * cfg_.weight_decay;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            if (decay != 0.0) theta[i] -= decay * theta[i];
            slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g[i];
            slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double m_hat = slot.m[i] / bc1;
            const double v_hat = slot.v[i] / bc2;
            theta[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
    }
}

}  // namespace lacovl
