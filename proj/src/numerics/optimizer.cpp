#include "spectragen/numerics/optimizer.hpp"

#include <cmath>

namespace spectragen {

Adam::Adam(std::vector<Parameter> params, AdamConfig config) : params_(std::move(params)), config_(config) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.shape());
        v_.emplace_back(p.shape());
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        DenseArray& value = params_[k].value();
        const DenseArray& grad = params_[k].gradient();
        DenseArray& m = m_[k];
        DenseArray& v = v_[k];
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double g = grad[i];
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
            value[i] -= config_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
        }
        params_[k].zero_grad();
    }
}

}  // namespace spectragen
