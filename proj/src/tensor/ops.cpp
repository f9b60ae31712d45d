#include "chroma/ops.hpp"

#include <cmath>
#include <cstring>

#include "chroma/errors.hpp"

namespace chroma {

std::string to_string(ActivationKind kind) {
    switch (kind) {
    case ActivationKind::leaky_relu:
        return "leaky_relu";
    case ActivationKind::relu:
        return "relu";
    case ActivationKind::tanh:
        return "tanh";
    case ActivationKind::sigmoid:
        return "sigmoid";
    }
    return "unknown";
}

ActivationKind activation_from_string(const std::string& name) {
    for (auto kind : {ActivationKind::leaky_relu, ActivationKind::relu, ActivationKind::tanh,
                      ActivationKind::sigmoid}) {
        if (to_string(kind) == name) {
            return kind;
        }
    }
    throw ConfigError("unknown activation '" + name + "'");
}

BatchNormStats::BatchNormStats(int channels) : mean({channels}, 0.0f), var({channels}, 1.0f) {}

void BatchNormStats::reset() {
    std::fill(mean.mutable_data().begin(), mean.mutable_data().end(), 0.0f);
    std::fill(var.mutable_data().begin(), var.mutable_data().end(), 1.0f);
    initialized = true;
}

namespace ops {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

template <typename Forward, typename Derivative>
Var elementwise(const Var& x, const char* op, Forward f, Derivative df) {
    const Tensor& in = x.value();
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.numel(); ++i) {
        out[i] = f(in[i]);
    }
    return Var::from_op(std::move(out), op, {x}, [df](Node& self) {
        const Tensor& in = self.parents[0]->value;
        const Tensor& g = *self.grad;
        Tensor dx(in.shape());
        for (std::size_t i = 0; i < in.numel(); ++i) {
            dx[i] = g[i] * df(in[i], self.value[i]);
        }
        self.parents[0]->accumulate(dx);
    });
}

}  // namespace

Var batchnorm2d(const Var& input, const Var& gamma, const Var& beta, BatchNormStats& stats,
                Mode mode, const BatchNormOptions& options) {
    const Tensor& x = input.value();
    if (x.rank() != 4) {
        throw ShapeError("batchnorm2d: input must be NCHW, got " + shape_str(x.shape()));
    }
    const int N = x.dim(0);
    const int C = x.dim(1);
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    const Shape channel_shape{C};
    if (gamma.shape() != channel_shape || beta.shape() != channel_shape ||
        stats.mean.shape() != channel_shape || stats.var.shape() != channel_shape) {
        throw ShapeError("batchnorm2d: per-channel tensors must be " + shape_str(channel_shape) +
                         " for input " + shape_str(x.shape()));
    }
    if (!(options.eps > 0.0f)) {
        throw ConfigError("batchnorm2d: eps must be positive");
    }
    if (mode == Mode::eval && !stats.initialized) {
        throw Error("batchnorm2d: eval mode with uninitialised running statistics");
    }

    const std::size_t count = static_cast<std::size_t>(N) * plane;
    std::vector<float> mean(C);
    std::vector<float> inv_std(C);
    for (int c = 0; c < C; ++c) {
        if (mode == Mode::train) {
            double s = 0.0;
            for (int n = 0; n < N; ++n) {
                const float* p = x.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    s += p[i];
                }
            }
            const double mu = s / static_cast<double>(count);
            double ss = 0.0;
            for (int n = 0; n < N; ++n) {
                const float* p = x.ptr() + (static_cast<std::size_t>(n) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mu;
                    ss += d * d;
                }
            }
            const double var = ss / static_cast<double>(count);
            mean[c] = static_cast<float>(mu);
            inv_std[c] = static_cast<float>(1.0 / std::sqrt(var + options.eps));
            const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : var;
            const float m = options.momentum;
            auto& rm = stats.mean[static_cast<std::size_t>(c)];
            auto& rv = stats.var[static_cast<std::size_t>(c)];
            rm = static_cast<float>((1.0 - m) * rm + m * mu);
            rv = static_cast<float>((1.0 - m) * rv + m * unbiased);
        } else {
            mean[c] = stats.mean[static_cast<std::size_t>(c)];
            inv_std[c] = 1.0f / std::sqrt(stats.var[static_cast<std::size_t>(c)] + options.eps);
        }
    }
    if (mode == Mode::train) {
        stats.initialized = true;
    }

    Tensor out(x.shape());
    const float* g = gamma.value().ptr();
    const float* b = beta.value().ptr();
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const float xhat = (x[off + i] - mean[c]) * inv_std[c];
                out[off + i] = g[c] * xhat + b[c];
            }
        }
    }

    return Var::from_op(
        std::move(out), "batchnorm2d", {input, gamma, beta},
        [mode, mean = std::move(mean), inv_std = std::move(inv_std), N, C, plane,
         count](Node& self) {
            const Tensor& xv = self.parents[0]->value;
            const Tensor& gv = self.parents[1]->value;
            const Tensor& dy = *self.grad;
            Tensor dx(xv.shape());
            Tensor dgamma({C});
            Tensor dbeta({C});
            for (int c = 0; c < C; ++c) {
                double sum_dy = 0.0;
                double sum_dy_xhat = 0.0;
                for (int n = 0; n < N; ++n) {
                    const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        const double xhat = (xv[off + i] - mean[c]) * inv_std[c];
                        sum_dy += dy[off + i];
                        sum_dy_xhat += dy[off + i] * xhat;
                    }
                }
                dgamma[static_cast<std::size_t>(c)] = static_cast<float>(sum_dy_xhat);
                dbeta[static_cast<std::size_t>(c)] = static_cast<float>(sum_dy);
                const double scale = static_cast<double>(gv[static_cast<std::size_t>(c)]) * inv_std[c];
                const double mean_dy = sum_dy / static_cast<double>(count);
                const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(count);
                for (int n = 0; n < N; ++n) {
                    const std::size_t off = (static_cast<std::size_t>(n) * C + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        if (mode == Mode::train) {
                            const double xhat = (xv[off + i] - mean[c]) * inv_std[c];
                            dx[off + i] =
                                static_cast<float>(scale * (dy[off + i] - mean_dy - xhat * mean_dy_xhat));
                        } else {
                            dx[off + i] = static_cast<float>(scale * dy[off + i]);
                        }
                    }
                }
            }
            self.parents[0]->accumulate(dx);
            self.parents[1]->accumulate(dgamma);
            self.parents[2]->accumulate(dbeta);
        });
}

Var leaky_relu(const Var& x, float slope) {
    return elementwise(
        x, "leaky_relu", [slope](float v) { return v > 0.0f ? v : slope * v; },
        [slope](float in, float) { return in > 0.0f ? 1.0f : slope; });
}

Var relu(const Var& x) {
    return elementwise(
        x, "relu", [](float v) { return v > 0.0f ? v : 0.0f; },
        [](float in, float) { return in > 0.0f ? 1.0f : 0.0f; });
}

Var tanh(const Var& x) {
    return elementwise(
        x, "tanh", [](float v) { return std::tanh(v); },
        [](float, float out) { return 1.0f - out * out; });
}

Var sigmoid(const Var& x) {
    return elementwise(
        x, "sigmoid",
        [](float v) {
            // Split by sign so exp never overflows.
            if (v >= 0.0f) {
                return 1.0f / (1.0f + std::exp(-v));
            }
            const float e = std::exp(v);
            return e / (1.0f + e);
        },
        [](float, float out) { return out * (1.0f - out); });
}

Var activation(const Var& x, const Activation& act) {
    switch (act.kind) {
    case ActivationKind::leaky_relu:
        return leaky_relu(x, act.slope);
    case ActivationKind::relu:
        return relu(x);
    case ActivationKind::tanh:
        return tanh(x);
    case ActivationKind::sigmoid:
        return sigmoid(x);
    }
    throw Error("unhandled activation kind");
}

Var concat_channels(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw ShapeError("concat_channels: no inputs");
    }
    const Shape& first = parts.front().shape();
    if (first.size() != 4) {
        throw ShapeError("concat_channels: inputs must be NCHW, got " + shape_str(first));
    }
    int channels = 0;
    std::vector<int> offsets;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != 4 || s[0] != first[0] || s[2] != first[2] || s[3] != first[3]) {
            throw ShapeError("concat_channels: " + shape_str(s) + " incompatible with " +
                             shape_str(first));
        }
        offsets.push_back(channels);
        channels += s[1];
    }
    const int N = first[0];
    const std::size_t plane = static_cast<std::size_t>(first[2]) * first[3];
    Tensor out({N, channels, first[2], first[3]});
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = parts[k].value();
        const std::size_t block = static_cast<std::size_t>(v.dim(1)) * plane;
        for (int n = 0; n < N; ++n) {
            std::memcpy(out.mutable_ptr() + (static_cast<std::size_t>(n) * channels + offsets[k]) * plane,
                        v.ptr() + n * block, block * sizeof(float));
        }
    }
    return Var::from_op(std::move(out), "concat_channels", parts,
                        [offsets, channels, N, plane](Node& self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            Node& parent = *self.parents[k];
            if (!parent.requires_grad) {
                continue;
            }
            Tensor g(parent.value.shape());
            const std::size_t block = static_cast<std::size_t>(g.dim(1)) * plane;
            for (int n = 0; n < N; ++n) {
                std::memcpy(g.mutable_ptr() + n * block,
                            self.grad->ptr() + (static_cast<std::size_t>(n) * channels + offsets[k]) * plane,
                            block * sizeof(float));
            }
            parent.accumulate(g);
        }
    });
}

Var reshape(const Var& x, Shape shape) {
    return Var::from_op(x.value().reshaped(std::move(shape)), "reshape", {x}, [](Node& self) {
        Node& parent = *self.parents[0];
        parent.accumulate(self.grad->reshaped(parent.value.shape()));
    });
}

Var sum(const Var& x) {
    double acc = 0.0;
    for (float v : x.value().data()) {
        acc += v;
    }
    return Var::from_op(Tensor::scalar(static_cast<float>(acc)), "sum", {x}, [](Node& self) {
        Node& parent = *self.parents[0];
        parent.accumulate(Tensor(parent.value.shape(), self.grad->item()));
    });
}

Var bce_with_logits(const Var& logits, const Tensor& targets) {
    require_same_shape("bce_with_logits", logits.value(), targets);
    for (float t : targets.data()) {
        if (!(t >= 0.0f && t <= 1.0f)) {
            throw Error("bce_with_logits: targets must lie in [0, 1]");
        }
    }
    const Tensor& z = logits.value();
    double acc = 0.0;
    for (std::size_t i = 0; i < z.numel(); ++i) {
        const double zi = z[i];
        acc += std::max(zi, 0.0) - zi * targets[i] + std::log1p(std::exp(-std::fabs(zi)));
    }
    const double n = static_cast<double>(z.numel());
    return Var::from_op(Tensor::scalar(static_cast<float>(acc / n)), "bce_with_logits", {logits},
                        [targets, n](Node& self) {
        const Tensor& zv = self.parents[0]->value;
        const double g = self.grad->item();
        Tensor dz(zv.shape());
        for (std::size_t i = 0; i < zv.numel(); ++i) {
            const double zi = zv[i];
            const double s = zi >= 0.0 ? 1.0 / (1.0 + std::exp(-zi))
                                       : std::exp(zi) / (1.0 + std::exp(zi));
            dz[i] = static_cast<float>(g * (s - targets[i]) / n);
        }
        self.parents[0]->accumulate(dz);
    });
}

Var bce_with_logits(const Var& logits, float target) {
    return bce_with_logits(logits, Tensor(logits.shape(), target));
}

Var l1_loss(const Var& pred, const Var& target) {
    require_same_shape("l1_loss", pred.value(), target.value());
    const Tensor& p = pred.value();
    const Tensor& t = target.value();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.numel(); ++i) {
        acc += std::fabs(static_cast<double>(p[i]) - t[i]);
    }
    const double n = static_cast<double>(p.numel());
    return Var::from_op(Tensor::scalar(static_cast<float>(acc / n)), "l1_loss", {pred, target},
                        [n](Node& self) {
        const Tensor& pv = self.parents[0]->value;
        const Tensor& tv = self.parents[1]->value;
        const double g = self.grad->item() / n;
        Tensor dp(pv.shape());
        for (std::size_t i = 0; i < pv.numel(); ++i) {
            const float d = pv[i] - tv[i];
            dp[i] = d > 0.0f ? static_cast<float>(g) : (d < 0.0f ? static_cast<float>(-g) : 0.0f);
        }
        self.parents[0]->accumulate(dp);
        if (self.parents[1]->requires_grad) {
            for (auto& v : dp.mutable_data()) {
                v = -v;
            }
            self.parents[1]->accumulate(dp);
        }
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape("add", a.value(), b.value());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] += b.value()[i];
    }
    return Var::from_op(std::move(out), "add", {a, b}, [](Node& self) {
        self.parents[0]->accumulate(*self.grad);
        self.parents[1]->accumulate(*self.grad);
    });
}

Var scale(const Var& x, float factor) {
    Tensor out = x.value();
    for (auto& v : out.mutable_data()) {
        v *= factor;
    }
    return Var::from_op(std::move(out), "scale", {x}, [factor](Node& self) {
        Tensor g = *self.grad;
        for (auto& v : g.mutable_data()) {
            v *= factor;
        }
        self.parents[0]->accumulate(g);
    });
}

}  // namespace ops
}  // namespace chroma
