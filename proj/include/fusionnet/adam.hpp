#pragma once

#include <cmath>
#include <cstdint>

#include "fusionnet/tensor.hpp"

namespace fusionnet {

// Bias-corrected Adam (Kingma & Ba). Defaults beta1=0.9, beta2=0.999,
// epsilon=1e-8; moment tensors match their parameter's shape and the step
// counter advances by exactly one per update.
template <typename T>
struct AdamStateT {
    int64_t step = 0;
    TensorT<T> m;
    TensorT<T> v;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamStateT for_param(const TensorT<T>& param) {
        AdamStateT s;
        s.m = TensorT<T>(param.shape());
        s.v = TensorT<T>(param.shape());
        return s;
    }
};

using AdamState = AdamStateT<float>;

template <typename T>
void adam_step(TensorT<T>& param, const TensorT<T>& grad, AdamStateT<T>& state, double lr) {
    require_same_shape(param, grad, "adam_step");
    require_same_shape(param, state.m, "adam_step moment m");
    require_same_shape(param, state.v, "adam_step moment v");

    state.step += 1;
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

    for (int64_t i = 0; i < param.numel(); ++i) {
        const double g = static_cast<double>(grad[i]);
        const double m = b1 * static_cast<double>(state.m[i]) + (1.0 - b1) * g;
        const double v = b2 * static_cast<double>(state.v[i]) + (1.0 - b2) * g * g;
        state.m[i] = static_cast<T>(m);
        state.v[i] = static_cast<T>(v);
        const double m_hat = m / bias1;
        const double v_hat = v / bias2;
        param[i] = static_cast<T>(static_cast<double>(param[i]) -
                                  lr * m_hat / (std::sqrt(v_hat) + state.epsilon));
    }
    param.check_finite("adam_step");
}

} // namespace fusionnet
