#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chroma/adam.hpp"
#include "chroma/ops.hpp"

namespace chroma::nets {

enum class LayerKind { conv, conv_transpose, batchnorm, activation, concat_skip, flatten };

std::string to_string(LayerKind kind);

struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 0;
    int stride = 1;
    int pad = 0;
    Activation activation{};
    int skip_from = -1;  // concat_skip: index of the layer whose output is appended
    int in_size = 0;     // spatial extent entering / leaving the layer
    int out_size = 0;
};

struct NetworkSpec {
    std::string name;
    int image_size = 0;
    int in_channels = 0;
    int out_channels = 0;
    std::vector<LayerSpec> layers;
};

// Throws ConfigError if channels or spatial extents fail to chain, or a skip
// source is missing / mismatched.
void validate(const NetworkSpec& spec);

struct NetConfig {
    int image_size = 32;
    int base_channels = 64;
    int depth = 3;
    int channel_cap = 512;
    bool predict_ab = true;  // 2 output channels; otherwise L'a'b'
    float leaky_slope = 0.2f;
};

// log2(image_size) - 2: depth 3 at 32x32, 4 at 64x64.
int default_depth(int image_size);

NetworkSpec generator_spec(const NetConfig& config);
NetworkSpec baseline_spec(const NetConfig& config);
NetworkSpec discriminator_spec(const NetConfig& config);

struct NamedStats {
    std::string name;
    BatchNormStats stats;
};

// A network spec bound to its parameters and batch-norm running statistics.
// Parameter names are "<layer>.<kind>.<role>" with a zero-padded layer index
// and are stable across builds of the same spec.
class Network {
public:
    explicit Network(NetworkSpec spec, BatchNormOptions bn = {});

    // Copies would alias parameter nodes; use clone().
    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    const NetworkSpec& spec() const { return spec_; }
    std::vector<NamedParam>& params() { return params_; }
    const std::vector<NamedParam>& params() const { return params_; }
    std::vector<NamedStats>& batchnorm_stats() { return stats_; }
    const std::vector<NamedStats>& batchnorm_stats() const { return stats_; }

    std::vector<std::string> param_names() const;
    std::size_t parameter_count() const;
    void zero_grad();

    // input: N x in_channels x size x size. Train mode builds a tape over the
    // parameters and updates running statistics.
    Var forward(const Var& input, Mode mode);

    // Deep copy of parameters and statistics, detached from any tape.
    Network clone() const;

private:
    struct LayerSlots {
        int weight = -1;
        int bias = -1;
        int gamma = -1;
        int beta = -1;
        int stats = -1;
    };

    NetworkSpec spec_;
    BatchNormOptions bn_;
    std::vector<NamedParam> params_;
    std::vector<NamedStats> stats_;
    std::vector<LayerSlots> slots_;
};

// Conv / transposed-conv weights ~ N(0, 0.02^2); batch-norm gamma ~ N(1, 0.02^2),
// beta = 0; biases = 0; running statistics reset to (0, 1).
void init_weights(Network& net, std::uint64_t seed);

Network build_generator(const NetConfig& config, std::uint64_t seed, BatchNormOptions bn = {});
Network build_baseline(const NetConfig& config, std::uint64_t seed, BatchNormOptions bn = {});
Network build_discriminator(const NetConfig& config, std::uint64_t seed, BatchNormOptions bn = {});

}  // namespace chroma::nets
