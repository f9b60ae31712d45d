#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "chroma/adam.hpp"
#include "chroma/networks.hpp"

namespace chroma::training {

struct TrainConfig {
    std::string model = "gan";  // "gan" or "baseline"
    double lambda_l1 = 100.0;
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    int batch_size = 32;
    int epochs = 10;
    double label_smooth = 0.9;
    std::uint64_t seed = 0;
    int image_size = 32;
    bool predict_ab = true;

    std::string dataset = "cifar10";  // "cifar10" or "images"
    std::string data_dir;
    std::string split = "train";      // CIFAR-10 only
    std::uint64_t limit = 0;          // first N samples; 0 = all

    int base_channels = 64;
    int depth = 0;  // 0 picks default_depth(image_size)
    int d_updates = 1;
    bool hflip = false;

    int log_every = 1;         // steps between metrics rows
    int checkpoint_every = 0;  // steps between checkpoints; 0 = every epoch end
    bool timing = false;       // real wall time in the metrics "seconds" column

    nets::NetConfig net_config() const;
    AdamConfig adam_config() const;
};

// Throws ConfigError naming the first offending field.
void validate(const TrainConfig& config);

nlohmann::json to_json(const TrainConfig& config);

// Fields present in `j` override `base`. Unknown keys and wrong types are
// ConfigErrors. The result is validated.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

TrainConfig load_config(const std::filesystem::path& path);

}  // namespace chroma::training
