// Adaptive-moment optimizer over a ParamStore.
#pragma once

#include "stam/autodiff.hpp"

namespace stam {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(ParamStore& store, AdamConfig cfg = {});

    // One update from the gradients currently in the store; clears them.
    // Throws std::runtime_error naming the parameter if any gradient is
    // non-finite.
    void step();

    int64_t steps_taken() const { return t_; }

private:
    ParamStore& store_;
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    int64_t t_ = 0;
};

}  // namespace stam
