#pragma once

#include <vector>

#include "spectragen/numerics/autograd.hpp"

namespace spectragen {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(std::vector<Parameter> params, AdamConfig config);

    /// Applies one update from the accumulated gradients, then zeroes them.
    void step();
    std::size_t steps_taken() const { return t_; }
    double learning_rate() const { return config_.learning_rate; }
    void set_learning_rate(double lr) { config_.learning_rate = lr; }

private:
    std::vector<Parameter> params_;
    AdamConfig config_;
    std::vector<DenseArray> m_;
    std::vector<DenseArray> v_;
    std::size_t t_ = 0;
};

}  // namespace spectragen
