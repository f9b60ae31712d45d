#pragma once

#include <string>
#include <vector>

#include "chroma/autodiff.hpp"

namespace chroma {

enum class Mode { train, eval };

enum class ActivationKind { leaky_relu, relu, tanh, sigmoid };

struct Activation {
    ActivationKind kind = ActivationKind::relu;
    float slope = 0.2f;  // leaky_relu only
};

std::string to_string(ActivationKind kind);
ActivationKind activation_from_string(const std::string& name);

// Per-channel running statistics owned by a batch-norm layer. Not part of the
// tape; train-mode forwards update them.
struct BatchNormStats {
    Tensor mean;
    Tensor var;
    bool initialized = false;

    BatchNormStats() = default;
    explicit BatchNormStats(int channels);

    // Standard prior (mean 0, var 1), marked usable for eval mode.
    void reset();
};

struct BatchNormOptions {
    float eps = 1e-5f;
    float momentum = 0.1f;
};

namespace ops {

// input N x C x H x W, kernel O x C x K x K, bias O. Zero padding.
Var conv2d(const Var& input, const Var& kernel, const Var& bias, int stride, int pad);

// Adjoint of conv2d with the same (stride, pad). input N x I x H x W,
// kernel I x O x K x K, bias O; output extent (H - 1) * stride - 2 * pad + K.
Var conv_transpose2d(const Var& input, const Var& kernel, const Var& bias, int stride, int pad);

Var batchnorm2d(const Var& input, const Var& gamma, const Var& beta, BatchNormStats& stats,
                Mode mode, const BatchNormOptions& options = {});

Var activation(const Var& x, const Activation& act);
Var leaky_relu(const Var& x, float slope = 0.2f);
Var relu(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& x);

// Concatenates NCHW tensors along the channel axis.
Var concat_channels(const std::vector<Var>& parts);

Var reshape(const Var& x, Shape shape);

Var add(const Var& a, const Var& b);
Var scale(const Var& x, float factor);

// Scalar sum of all elements.
Var sum(const Var& x);

// Mean over elements of the numerically stable logistic cross-entropy
// max(z, 0) - z * t + log(1 + exp(-|z|)). Targets are constants in [0, 1].
Var bce_with_logits(const Var& logits, const Tensor& targets);
Var bce_with_logits(const Var& logits, float target);

// Mean absolute difference.
Var l1_loss(const Var& pred, const Var& target);

}  // namespace ops
}  // namespace chroma
