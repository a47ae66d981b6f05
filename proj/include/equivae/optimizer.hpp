#pragma once

#include <map>
#include <string>
#include <vector>

#include "equivae/nn.hpp"

namespace equivae {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Standard bias-corrected Adam over a fixed set of named parameters.
/// Every listed parameter must carry a gradient when step() runs; the
/// update is applied in place and gradients are left for the caller to
/// clear.
class Adam {
public:
    Adam() = default;
    Adam(AdamConfig config, std::vector<std::string> names);

    void step(ParameterStore& params);
    int64_t step_count() const { return t_; }
    const std::vector<std::string>& names() const { return names_; }
    const AdamConfig& config() const { return config_; }

private:
    struct Moments {
        std::vector<double> m;
        std::vector<double> v;
    };

    AdamConfig config_;
    std::vector<std::string> names_;
    std::map<std::string, Moments> moments_;
    int64_t t_ = 0;
};

}  // namespace equivae
