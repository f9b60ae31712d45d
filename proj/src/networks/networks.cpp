#include "chroma/networks.hpp"

#include <bit>
#include <cstdio>
#include <random>

#include "chroma/errors.hpp"

namespace chroma::nets {

std::string to_string(LayerKind kind) {
    switch (kind) {
    case LayerKind::conv:
        return "conv";
    case LayerKind::conv_transpose:
        return "conv_transpose";
    case LayerKind::batchnorm:
        return "bn";
    case LayerKind::activation:
        return "act";
    case LayerKind::concat_skip:
        return "concat_skip";
    case LayerKind::flatten:
        return "flatten";
    }
    return "unknown";
}

namespace {

std::string layer_prefix(std::size_t index, LayerKind kind) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02zu", index);
    return std::string(buf) + "." + to_string(kind);
}

int stage_width(const NetConfig& c, int stage) {
    const long long w = static_cast<long long>(c.base_channels) << stage;
    return static_cast<int>(std::min<long long>(w, c.channel_cap));
}

void check_config(const NetConfig& c) {
    if (c.depth < 1) {
        throw ConfigError("network depth must be at least 1, got " + std::to_string(c.depth));
    }
    if (c.base_channels < 1 || c.channel_cap < 1) {
        throw ConfigError("base_channels and channel_cap must be positive");
    }
    const int step = 1 << c.depth;
    if (c.image_size < step || c.image_size % step != 0) {
        throw ConfigError("image_size " + std::to_string(c.image_size) +
                          " must be a positive multiple of 2^depth = " + std::to_string(step));
    }
}

// Appends a layer, filling in the spatial extents from the previous layer.
class SpecBuilder {
public:
    SpecBuilder(std::string name, int size, int in_channels) {
        spec_.name = std::move(name);
        spec_.image_size = size;
        spec_.in_channels = in_channels;
        size_ = size;
        channels_ = in_channels;
    }

    int conv(LayerKind kind, int out, int k, int s, int p) {
        LayerSpec l;
        l.kind = kind;
        l.in_channels = channels_;
        l.out_channels = out;
        l.kernel = k;
        l.stride = s;
        l.pad = p;
        l.in_size = size_;
        l.out_size = kind == LayerKind::conv ? (size_ + 2 * p - k) / s + 1 : (size_ - 1) * s - 2 * p + k;
        return push(l);
    }
    int batchnorm() { return push(same(LayerKind::batchnorm)); }
    int act(ActivationKind kind, float slope = 0.0f) {
        LayerSpec l = same(LayerKind::activation);
        l.activation = {kind, slope};
        return push(l);
    }
    int concat_skip(int from) {
        LayerSpec l = same(LayerKind::concat_skip);
        l.skip_from = from;
        l.out_channels = channels_ + spec_.layers.at(static_cast<std::size_t>(from)).out_channels;
        return push(l);
    }
    int flatten() { return push(same(LayerKind::flatten)); }

    NetworkSpec finish() {
        spec_.out_channels = channels_;
        validate(spec_);
        return std::move(spec_);
    }

private:
    LayerSpec same(LayerKind kind) const {
        LayerSpec l;
        l.kind = kind;
        l.in_channels = channels_;
        l.out_channels = channels_;
        l.in_size = size_;
        l.out_size = size_;
        return l;
    }
    int push(const LayerSpec& l) {
        spec_.layers.push_back(l);
        channels_ = l.out_channels;
        size_ = l.out_size;
        return static_cast<int>(spec_.layers.size()) - 1;
    }

    NetworkSpec spec_;
    int size_;
    int channels_;
};

// U-Net: `depth` stride-2 encoder convs, mirrored by stride-2 transposed convs
// whose inputs (after the innermost) are concatenated with the encoder output
// at the same resolution.
NetworkSpec unet_spec(std::string name, const NetConfig& c) {
    check_config(c);
    SpecBuilder b(std::move(name), c.image_size, 1);
    std::vector<int> encoder_out(static_cast<std::size_t>(c.depth));
    for (int i = 0; i < c.depth; ++i) {
        b.conv(LayerKind::conv, stage_width(c, i), 4, 2, 1);
        if (i > 0) {
            b.batchnorm();
        }
        encoder_out[static_cast<std::size_t>(i)] = b.act(ActivationKind::leaky_relu, c.leaky_slope);
    }
    const int out_channels = c.predict_ab ? 2 : 3;
    for (int j = c.depth - 1; j >= 0; --j) {
        if (j < c.depth - 1) {
            b.concat_skip(encoder_out[static_cast<std::size_t>(j)]);
        }
        if (j > 0) {
            b.conv(LayerKind::conv_transpose, stage_width(c, j - 1), 4, 2, 1);
            b.batchnorm();
            b.act(ActivationKind::relu);
        } else {
            b.conv(LayerKind::conv_transpose, out_channels, 4, 2, 1);
            b.act(ActivationKind::tanh);
        }
    }
    return b.finish();
}

}  // namespace

void validate(const NetworkSpec& spec) {
    int channels = spec.in_channels;
    int size = spec.image_size;
    const auto fail = [&](std::size_t i, const std::string& why) {
        throw ConfigError(spec.name + " layer " + std::to_string(i) + " (" +
                          to_string(spec.layers[i].kind) + "): " + why);
    };
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.in_channels != channels) {
            fail(i, "expects " + std::to_string(l.in_channels) + " input channels, previous layer gives " +
                        std::to_string(channels));
        }
        if (l.in_size != size) {
            fail(i, "expects spatial extent " + std::to_string(l.in_size) + ", previous layer gives " +
                        std::to_string(size));
        }
        switch (l.kind) {
        case LayerKind::conv:
        case LayerKind::conv_transpose: {
            if (l.kernel < 1 || l.stride < 1 || l.pad < 0 || l.out_channels < 1) {
                fail(i, "invalid kernel/stride/pad/channels");
            }
            const int expect = l.kind == LayerKind::conv ? (size + 2 * l.pad - l.kernel) / l.stride + 1
                                                         : (size - 1) * l.stride - 2 * l.pad + l.kernel;
            if (l.kind == LayerKind::conv && size + 2 * l.pad < l.kernel) {
                fail(i, "kernel larger than padded input");
            }
            if (expect != l.out_size || expect < 1) {
                fail(i, "output extent " + std::to_string(l.out_size) + " inconsistent with geometry");
            }
            break;
        }
        case LayerKind::concat_skip: {
            if (l.skip_from < 0 || static_cast<std::size_t>(l.skip_from) >= i) {
                fail(i, "skip source must be an earlier layer");
            }
            const LayerSpec& src = spec.layers[static_cast<std::size_t>(l.skip_from)];
            if (src.out_size != size) {
                fail(i, "skip source extent " + std::to_string(src.out_size) + " != " + std::to_string(size));
            }
            if (l.out_channels != channels + src.out_channels) {
                fail(i, "concatenated channel count does not add up");
            }
            break;
        }
        default:
            if (l.out_channels != channels || l.out_size != size) {
                fail(i, "must preserve shape");
            }
        }
        channels = l.out_channels;
        size = l.out_size;
    }
    if (channels != spec.out_channels) {
        throw ConfigError(spec.name + ": final layer gives " + std::to_string(channels) +
                          " channels, spec declares " + std::to_string(spec.out_channels));
    }
}

int default_depth(int image_size) {
    if (image_size < 8 || !std::has_single_bit(static_cast<unsigned>(image_size))) {
        return 3;
    }
    return std::bit_width(static_cast<unsigned>(image_size)) - 1 - 2;
}

NetworkSpec generator_spec(const NetConfig& config) { return unet_spec("generator", config); }

NetworkSpec baseline_spec(const NetConfig& config) { return unet_spec("baseline", config); }

NetworkSpec discriminator_spec(const NetConfig& c) {
    check_config(c);
    SpecBuilder b("discriminator", c.image_size, 1 + (c.predict_ab ? 2 : 3));
    for (int i = 0; i < c.depth; ++i) {
        b.conv(LayerKind::conv, stage_width(c, i), 4, 2, 1);
        if (i > 0) {
            b.batchnorm();
        }
        b.act(ActivationKind::leaky_relu, c.leaky_slope);
    }
    // Collapse the remaining extent to one logit per image.
    b.conv(LayerKind::conv, 1, c.image_size >> c.depth, 1, 0);
    b.flatten();
    return b.finish();
}

Network::Network(NetworkSpec spec, BatchNormOptions bn) : spec_(std::move(spec)), bn_(bn) {
    validate(spec_);
    slots_.resize(spec_.layers.size());
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerSpec& l = spec_.layers[i];
        const std::string prefix = layer_prefix(i, l.kind);
        auto add = [&](const std::string& role, Shape shape) {
            params_.push_back({prefix + "." + role, Var::parameter(Tensor(std::move(shape)))});
            return static_cast<int>(params_.size()) - 1;
        };
        LayerSlots& s = slots_[i];
        if (l.kind == LayerKind::conv) {
            s.weight = add("weight", {l.out_channels, l.in_channels, l.kernel, l.kernel});
            s.bias = add("bias", {l.out_channels});
        } else if (l.kind == LayerKind::conv_transpose) {
            s.weight = add("weight", {l.in_channels, l.out_channels, l.kernel, l.kernel});
            s.bias = add("bias", {l.out_channels});
        } else if (l.kind == LayerKind::batchnorm) {
            s.gamma = add("gamma", {l.out_channels});
            s.beta = add("beta", {l.out_channels});
            stats_.push_back({prefix, BatchNormStats(l.out_channels)});
            s.stats = static_cast<int>(stats_.size()) - 1;
        }
    }
}

std::vector<std::string> Network::param_names() const {
    std::vector<std::string> names;
    names.reserve(params_.size());
    for (const auto& p : params_) {
        names.push_back(p.name);
    }
    return names;
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.var.value().numel();
    }
    return n;
}

void Network::zero_grad() {
    for (auto& p : params_) {
        p.var.zero_grad();
    }
}

Var Network::forward(const Var& input, Mode mode) {
    const Shape expected{0, spec_.in_channels, spec_.image_size, spec_.image_size};
    const Shape& got = input.shape();
    if (got.size() != 4 || got[1] != expected[1] || got[2] != expected[2] || got[3] != expected[3]) {
        throw ShapeError(spec_.name + " input: expected Nx" + std::to_string(spec_.in_channels) + "x" +
                         std::to_string(spec_.image_size) + "x" + std::to_string(spec_.image_size) +
                         ", got " + shape_str(got));
    }
    std::vector<Var> outputs;
    outputs.reserve(spec_.layers.size());
    Var x = input;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerSpec& l = spec_.layers[i];
        const LayerSlots& s = slots_[i];
        try {
            switch (l.kind) {
            case LayerKind::conv:
                x = ops::conv2d(x, params_[s.weight].var, params_[s.bias].var, l.stride, l.pad);
                break;
            case LayerKind::conv_transpose:
                x = ops::conv_transpose2d(x, params_[s.weight].var, params_[s.bias].var, l.stride, l.pad);
                break;
            case LayerKind::batchnorm:
                x = ops::batchnorm2d(x, params_[s.gamma].var, params_[s.beta].var, stats_[s.stats].stats,
                                     mode, bn_);
                break;
            case LayerKind::activation:
                x = ops::activation(x, l.activation);
                break;
            case LayerKind::concat_skip:
                x = ops::concat_channels({x, outputs[static_cast<std::size_t>(l.skip_from)]});
                break;
            case LayerKind::flatten:
                x = ops::reshape(x, {x.shape()[0], static_cast<int>(x.value().numel()) / x.shape()[0]});
                break;
            }
        } catch (const ShapeError& e) {
            throw ShapeError(spec_.name + " layer " + std::to_string(i) + " (" + to_string(l.kind) +
                             "): " + e.what());
        }
        outputs.push_back(x);
    }
    return x;
}

Network Network::clone() const {
    Network copy(spec_, bn_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        copy.params_[i].var.mutable_value() = params_[i].var.value();
    }
    copy.stats_ = stats_;
    return copy;
}

void init_weights(Network& net, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& p : net.params()) {
        Tensor& v = p.var.mutable_value();
        const auto ends_with = [&](const char* suffix) {
            const std::string s(suffix);
            return p.name.size() >= s.size() && p.name.compare(p.name.size() - s.size(), s.size(), s) == 0;
        };
        if (ends_with(".weight")) {
            v = Tensor::randn(v.shape(), rng, 0.0f, 0.02f);
        } else if (ends_with(".gamma")) {
            v = Tensor::randn(v.shape(), rng, 1.0f, 0.02f);
        } else {
            v = Tensor(v.shape());
        }
        p.var.zero_grad();
    }
    for (auto& s : net.batchnorm_stats()) {
        s.stats.reset();
    }
}

Network build_generator(const NetConfig& config, std::uint64_t seed, BatchNormOptions bn) {
    Network net(generator_spec(config), bn);
    init_weights(net, seed);
    return net;
}

Network build_baseline(const NetConfig& config, std::uint64_t seed, BatchNormOptions bn) {
    Network net(baseline_spec(config), bn);
    init_weights(net, seed);
    return net;
}

Network build_discriminator(const NetConfig& config, std::uint64_t seed, BatchNormOptions bn) {
    Network net(discriminator_spec(config), bn);
    init_weights(net, seed);
    return net;
}

}  // namespace chroma::nets
