#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include "chroma/autodiff.hpp"

namespace chroma {

struct AdamConfig {
    float lr = 2e-4f;
    float beta1 = 0.5f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

struct AdamState {
    Tensor m;
    Tensor v;
    std::int64_t t = 0;
};

// One bias-corrected Adam update of `param` in place. Moments are updated and
// t advanced by one. Throws NumericError naming `name` on a non-finite grad.
void adam_step(std::string_view name, Tensor& param, const Tensor& grad, AdamState& state,
               const AdamConfig& config);

struct NamedParam {
    std::string name;
    Var var;
};

// Adam over a named parameter list. A parameter without a gradient is
// stepped with a zero gradient so every state advances in lockstep.
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    void step(std::span<NamedParam> params);

    const AdamConfig& config() const { return config_; }
    void set_config(const AdamConfig& config) { config_ = config; }

    std::map<std::string, AdamState>& states() { return states_; }
    const std::map<std::string, AdamState>& states() const { return states_; }

private:
    AdamConfig config_;
    std::map<std::string, AdamState> states_;
};

}  // namespace chroma
