#pragma once

#include <map>
#include <string>
#include <vector>

#include "lacovl/nn.hpp"

namespace lacovl {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled, applied before the moment update
};

// Per-parameter Adam state: first/second moments and a step counter.
struct AdamSlot {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    // Applies one update to every non-frozen parameter that has a gradient.
    // Parameters without an accumulated gradient this step are left alone.
    void step(ParamRegistry& registry);

    const AdamConfig& config() const { return cfg_; }
    std::map<std::string, AdamSlot>& slots() { return slots_; }
    const std::map<std::string, AdamSlot>& slots() const { return slots_; }

private:
    AdamConfig cfg_;
    std::map<std::string, AdamSlot> slots_;
};

}  // namespace lacovl
