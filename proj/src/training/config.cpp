#include "chroma/train_config.hpp"

#include <fstream>

#include "chroma/errors.hpp"

namespace chroma::training {

using nlohmann::json;

nets::NetConfig TrainConfig::net_config() const {
    nets::NetConfig net;
    net.image_size = image_size;
    net.base_channels = base_channels;
    net.depth = depth > 0 ? depth : nets::default_depth(image_size);
    net.predict_ab = predict_ab;
    return net;
}

AdamConfig TrainConfig::adam_config() const {
    AdamConfig adam;
    adam.lr = static_cast<float>(lr);
    adam.beta1 = static_cast<float>(beta1);
    adam.beta2 = static_cast<float>(beta2);
    return adam;
}

void validate(const TrainConfig& c) {
    auto fail = [](const std::string& msg) { throw ConfigError("invalid config: " + msg); };
    if (c.model != "gan" && c.model != "baseline") fail("model must be \"gan\" or \"baseline\", got \"" + c.model + "\"");
    if (!(c.lambda_l1 >= 0.0)) fail("lambda_l1 must be >= 0");
    if (!(c.lr >= 0.0)) fail("lr must be >= 0");
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0)) fail("beta1 must be in [0, 1)");
    if (!(c.beta2 >= 0.0 && c.beta2 < 1.0)) fail("beta2 must be in [0, 1)");
    if (c.batch_size < 1) fail("batch_size must be >= 1");
    if (c.epochs < 0) fail("epochs must be >= 0");
    if (!(c.label_smooth > 0.0 && c.label_smooth <= 1.0)) fail("label_smooth must be in (0, 1]");
    if (c.image_size < 4) fail("image_size must be >= 4");
    if (c.dataset != "cifar10" && c.dataset != "images") fail("dataset must be \"cifar10\" or \"images\"");
    if (c.split != "train" && c.split != "test" && c.split != "all") fail("split must be train, test or all");
    if (c.base_channels < 1) fail("base_channels must be >= 1");
    if (c.depth < 0) fail("depth must be >= 0");
    if (c.d_updates < 1) fail("d_updates must be >= 1");
    if (c.log_every < 1) fail("log_every must be >= 1");
    if (c.checkpoint_every < 0) fail("checkpoint_every must be >= 0");
    // Surfaces size/depth mismatches before any data is read.
    nets::validate(nets::generator_spec(c.net_config()));
}

json to_json(const TrainConfig& c) {
    return json{
        {"model", c.model},
        {"lambda_l1", c.lambda_l1},
        {"lr", c.lr},
        {"beta1", c.beta1},
        {"beta2", c.beta2},
        {"batch_size", c.batch_size},
        {"epochs", c.epochs},
        {"label_smooth", c.label_smooth},
        {"seed", c.seed},
        {"image_size", c.image_size},
        {"predict_ab", c.predict_ab},
        {"dataset", c.dataset},
        {"data_dir", c.data_dir},
        {"split", c.split},
        {"limit", c.limit},
        {"base_channels", c.base_channels},
        {"depth", c.depth},
        {"d_updates", c.d_updates},
        {"hflip", c.hflip},
        {"log_every", c.log_every},
        {"checkpoint_every", c.checkpoint_every},
        {"timing", c.timing},
    };
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config field '" + std::string(key) + "' has the wrong type: " + j.at(key).dump());
    }
}

}  // namespace

TrainConfig config_from_json(const json& j, TrainConfig base) {
    if (!j.is_object()) {
        throw ConfigError("config must be a JSON object");
    }
    const json known = to_json(base);
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw ConfigError("unknown config field '" + key + "'");
        }
        if (value.is_number() != known.at(key).is_number() || value.is_string() != known.at(key).is_string() ||
            value.is_boolean() != known.at(key).is_boolean()) {
            throw ConfigError("config field '" + key + "' has the wrong type: " + value.dump());
        }
        const json& expected = known.at(key);
        if ((expected.is_number_integer() && !value.is_number_integer()) ||
            (expected.is_number_unsigned() && !value.is_number_unsigned())) {
            throw ConfigError("config field '" + key + "' must be a non-negative integer: " + value.dump());
        }
    }
    const auto field = [&](const char* key, auto& out) {
        if (j.contains(key)) read_field(j, key, out);
    };
    field("model", base.model);
    field("lambda_l1", base.lambda_l1);
    field("lr", base.lr);
    field("beta1", base.beta1);
    field("beta2", base.beta2);
    field("batch_size", base.batch_size);
    field("epochs", base.epochs);
    field("label_smooth", base.label_smooth);
    field("seed", base.seed);
    field("image_size", base.image_size);
    field("predict_ab", base.predict_ab);
    field("dataset", base.dataset);
    field("data_dir", base.data_dir);
    field("split", base.split);
    field("limit", base.limit);
    field("base_channels", base.base_channels);
    field("depth", base.depth);
    field("d_updates", base.d_updates);
    field("hflip", base.hflip);
    field("log_every", base.log_every);
    field("checkpoint_every", base.checkpoint_every);
    field("timing", base.timing);
    validate(base);
    return base;
}

TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

}  // namespace chroma::training
