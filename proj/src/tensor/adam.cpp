#include "chroma/adam.hpp"

#include <cmath>

#include "chroma/errors.hpp"

namespace chroma {

void adam_step(std::string_view name, Tensor& param, const Tensor& grad, AdamState& state,
               const AdamConfig& config) {
    if (grad.shape() != param.shape()) {
        throw ShapeError("adam: gradient " + shape_str(grad.shape()) + " does not match parameter '" +
                         std::string(name) + "' " + shape_str(param.shape()));
    }
    if (!all_finite(grad)) {
        throw NumericError("adam: non-finite gradient for parameter '" + std::string(name) + "'");
    }
    if (state.m.empty()) {
        state.m = Tensor(param.shape());
        state.v = Tensor(param.shape());
    } else if (state.m.shape() != param.shape() || state.v.shape() != param.shape()) {
        throw ShapeError("adam: state for '" + std::string(name) + "' has shape " +
                         shape_str(state.m.shape()) + ", parameter is " + shape_str(param.shape()));
    }

    state.t += 1;
    const double b1 = config.beta1;
    const double b2 = config.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double g = grad[i];
        const double m = b1 * state.m[i] + (1.0 - b1) * g;
        const double v = b2 * state.v[i] + (1.0 - b2) * g * g;
        state.m[i] = static_cast<float>(m);
        state.v[i] = static_cast<float>(v);
        const double m_hat = m / c1;
        const double v_hat = v / c2;
        param[i] = static_cast<float>(param[i] - config.lr * m_hat / (std::sqrt(v_hat) + config.eps));
    }
}

void Adam::step(std::span<NamedParam> params) {
    for (auto& p : params) {
        Tensor& value = p.var.mutable_value();
        const auto& grad = p.var.grad();
        auto& state = states_[p.name];
        if (grad) {
            adam_step(p.name, value, *grad, state, config_);
        } else {
            adam_step(p.name, value, Tensor(value.shape()), state, config_);
        }
    }
}

}  // namespace chroma
