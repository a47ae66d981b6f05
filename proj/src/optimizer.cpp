#include "equivae/optimizer.hpp"

#include <cmath>

namespace equivae {

Adam::Adam(AdamConfig config, std::vector<std::string> names)
    : config_(config), names_(std::move(names)) {}

void Adam::step(ParameterStore& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (const auto& name : names_) {
        Tensor& p = params.get(name);
        if (!p.has_grad()) {
            throw ContractError("missing gradient for parameter '" + name + "'");
        }
        const auto& g = p.grad();
        auto& moments = moments_[name];
        if (moments.m.empty()) {
            moments.m.assign(g.size(), 0.0);
            moments.v.assign(g.size(), 0.0);
        }
        auto& values = p.mutable_values();
        for (size_t i = 0; i < g.size(); ++i) {
            moments.m[i] = config_.beta1 * moments.m[i] + (1.0 - config_.beta1) * g[i];
            moments.v[i] = config_.beta2 * moments.v[i] + (1.0 - config_.beta2) * g[i] * g[i];
            const double m_hat = moments.m[i] / bc1;
            const double v_hat = moments.v[i] / bc2;
            values[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
        }
    }
}

}  // namespace equivae
