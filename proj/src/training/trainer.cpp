#include <cstdio>
#include <sstream>

#include "chroma/errors.hpp"
#include "chroma/ops.hpp"
#include "chroma/training.hpp"

namespace chroma::training {

Var discriminator_loss(const Var& logits_real, const Var& logits_fake, float label_smooth) {
    if (logits_real.shape() != logits_fake.shape()) {
        throw ShapeError("discriminator_loss: real logits " + shape_str(logits_real.shape()) +
                         " vs fake logits " + shape_str(logits_fake.shape()));
    }
    return ops::add(ops::bce_with_logits(logits_real, label_smooth), ops::bce_with_logits(logits_fake, 0.0f));
}

GeneratorLoss generator_loss(const Var& logits_fake, const Var& fake, const Var& real, float lambda_l1) {
    GeneratorLoss loss;
    loss.adv = ops::bce_with_logits(logits_fake, 1.0f);
    loss.l1 = ops::l1_loss(fake, real);
    loss.total = ops::add(loss.adv, ops::scale(loss.l1, lambda_l1));
    return loss;
}

std::string metrics_row(const StepMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f", static_cast<long long>(m.step), m.d_loss,
                  m.g_adv, m.g_l1, m.d_real_acc, m.d_fake_acc, m.seconds);
    return buf;
}

namespace {

double fraction(const Tensor& logits, bool positive) {
    std::size_t hits = 0;
    for (float z : logits.data()) {
        hits += positive ? (z > 0.0f) : (z < 0.0f);
    }
    return static_cast<double>(hits) / static_cast<double>(logits.numel());
}

Var pair(const Tensor& L, const Var& ab) { return ops::concat_channels({Var::constant(L), ab}); }

}  // namespace

void discriminator_update(nets::Network& disc, const Tensor& L, const Tensor& target, const Var& fake,
                          const TrainConfig& config, Adam& d_opt, StepMetrics& metrics) {
    Var real_logits = disc.forward(pair(L, Var::constant(target)), Mode::train);
    Var fake_logits = disc.forward(pair(L, fake.detach()), Mode::train);
    Var loss = discriminator_loss(real_logits, fake_logits, static_cast<float>(config.label_smooth));
    disc.zero_grad();
    backward(loss);
    d_opt.step(disc.params());
    disc.zero_grad();
    metrics.d_loss = loss.value().item();
    metrics.d_real_acc = fraction(real_logits.value(), true);
    metrics.d_fake_acc = fraction(fake_logits.value(), false);
}

void generator_update(nets::Network& gen, nets::Network& disc, const Tensor& L, const Tensor& target,
                      const Var& fake, const TrainConfig& config, Adam& g_opt, StepMetrics& metrics) {
    Var logits = disc.forward(pair(L, fake), Mode::train);
    GeneratorLoss loss = generator_loss(logits, fake, Var::constant(target), static_cast<float>(config.lambda_l1));
    gen.zero_grad();
    backward(loss.total);
    g_opt.step(gen.params());
    gen.zero_grad();
    disc.zero_grad();
    metrics.g_adv = loss.adv.value().item();
    metrics.g_l1 = loss.l1.value().item();
}

StepMetrics gan_train_step(nets::Network& gen, nets::Network& disc, const data::Batch& batch,
                           const TrainConfig& config, Adam& g_opt, Adam& d_opt) {
    StepMetrics m;
    Var fake = gen.forward(Var::constant(batch.L), Mode::train);
    for (int k = 0; k < config.d_updates; ++k) {
        discriminator_update(disc, batch.L, batch.target, fake, config, d_opt, m);
    }
    generator_update(gen, disc, batch.L, batch.target, fake, config, g_opt, m);
    return m;
}

StepMetrics baseline_train_step(nets::Network& net, const data::Batch& batch, const TrainConfig& /*config*/,
                                Adam& opt) {
    Var out = net.forward(Var::constant(batch.L), Mode::train);
    Var loss = ops::l1_loss(out, Var::constant(batch.target));
    net.zero_grad();
    backward(loss);
    opt.step(net.params());
    net.zero_grad();
    StepMetrics m;
    m.g_l1 = loss.value().item();
    return m;
}

StepMetrics train_step(TrainState& state, const data::Batch& batch) {
    StepMetrics m = state.is_gan()
                        ? gan_train_step(state.generator, *state.discriminator, batch, state.config, state.g_opt,
                                         state.d_opt)
                        : baseline_train_step(state.generator, batch, state.config, state.g_opt);
    m.step = ++state.step;
    return m;
}

// --- state and checkpoints -------------------------------------------------

namespace {

constexpr std::uint64_t kDiscriminatorSeedOffset = 0x9e3779b97f4a7c15ull;

std::mt19937_64 augmentation_rng(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0xf11bu};
    return std::mt19937_64(seq);
}

std::int64_t adam_steps(const Adam& opt) { return opt.states().empty() ? 0 : opt.states().begin()->second.t; }

void store_network(Checkpoint& ck, const std::string& prefix, const nets::Network& net, const Adam& opt) {
    for (const auto& p : net.params()) {
        ck.tensors.push_back({prefix + "/" + p.name, p.var.value()});
    }
    for (const auto& s : net.batchnorm_stats()) {
        ck.tensors.push_back({prefix + "/" + s.name + ".running_mean", s.stats.mean});
        ck.tensors.push_back({prefix + "/" + s.name + ".running_var", s.stats.var});
    }
    for (const auto& [name, st] : opt.states()) {
        ck.tensors.push_back({prefix + "/adam.m/" + name, st.m});
        ck.tensors.push_back({prefix + "/adam.v/" + name, st.v});
    }
}

void assign(Tensor& dst, const Tensor& src, const std::string& name) {
    if (dst.shape() != src.shape()) {
        throw DataError("checkpoint tensor '" + name + "' has shape " + shape_str(src.shape()) + ", model expects " +
                        shape_str(dst.shape()));
    }
    dst = src;
}

void restore_network(const Checkpoint& ck, const std::string& prefix, nets::Network& net) {
    for (auto& p : net.params()) {
        const std::string key = prefix + "/" + p.name;
        assign(p.var.mutable_value(), ck.tensor(key), key);
    }
    for (auto& s : net.batchnorm_stats()) {
        assign(s.stats.mean, ck.tensor(prefix + "/" + s.name + ".running_mean"), s.name);
        assign(s.stats.var, ck.tensor(prefix + "/" + s.name + ".running_var"), s.name);
        s.stats.initialized = true;
    }
}

void restore_adam(const Checkpoint& ck, const std::string& prefix, const nets::Network& net, Adam& opt,
                  std::int64_t t) {
    opt.states().clear();
    if (t == 0) return;
    for (const auto& p : net.params()) {
        AdamState st;
        st.m = ck.tensor(prefix + "/adam.m/" + p.name);
        st.v = ck.tensor(prefix + "/adam.v/" + p.name);
        st.t = t;
        if (st.m.shape() != p.var.shape() || st.v.shape() != p.var.shape()) {
            throw DataError("checkpoint optimizer state for '" + p.name + "' has the wrong shape");
        }
        opt.states().emplace(p.name, std::move(st));
    }
}

TrainConfig header_config(const Checkpoint& ck) {
    try {
        return config_from_json(ck.header.at("config"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint header has no usable config: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("checkpoint config is invalid: ") + e.what());
    }
}

}  // namespace

TrainState make_state(const TrainConfig& config) {
    validate(config);
    const nets::NetConfig net = config.net_config();
    TrainState state{config,
                     config.model == "gan" ? nets::build_generator(net, config.seed)
                                           : nets::build_baseline(net, config.seed),
                     std::nullopt,
                     Adam(config.adam_config()),
                     Adam(config.adam_config()),
                     0,
                     augmentation_rng(config.seed)};
    if (config.model == "gan") {
        state.discriminator = nets::build_discriminator(net, config.seed + kDiscriminatorSeedOffset);
    }
    return state;
}

Checkpoint to_checkpoint(const TrainState& state) {
    Checkpoint ck;
    ck.header = {
        {"config", to_json(state.config)},
        {"model", state.config.model},
        {"step", state.step},
        {"adam_steps", {{"generator", adam_steps(state.g_opt)}, {"discriminator", adam_steps(state.d_opt)}}},
    };
    store_network(ck, "generator", state.generator, state.g_opt);
    if (state.discriminator) {
        store_network(ck, "discriminator", *state.discriminator, state.d_opt);
    }
    std::ostringstream rng;
    rng << state.rng;
    ck.rng_state = rng.str();
    return ck;
}

TrainState from_checkpoint(const Checkpoint& ck) {
    TrainState state = make_state(header_config(ck));
    try {
        state.step = ck.header.at("step").get<std::int64_t>();
        restore_network(ck, "generator", state.generator);
        restore_adam(ck, "generator", state.generator, state.g_opt,
                     ck.header.at("adam_steps").at("generator").get<std::int64_t>());
        if (state.discriminator) {
            restore_network(ck, "discriminator", *state.discriminator);
            restore_adam(ck, "discriminator", *state.discriminator, state.d_opt,
                         ck.header.at("adam_steps").at("discriminator").get<std::int64_t>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint header is incomplete: ") + e.what());
    }
    std::istringstream rng(ck.rng_state);
    rng >> state.rng;
    if (!rng) {
        throw DataError("checkpoint RNG state is unreadable");
    }
    return state;
}

LoadedModel load_generator(const Checkpoint& ck) {
    TrainConfig config = header_config(ck);
    const nets::NetConfig net = config.net_config();
    LoadedModel model{config, config.model == "gan" ? nets::build_generator(net, config.seed)
                                                    : nets::build_baseline(net, config.seed)};
    restore_network(ck, "generator", model.net);
    return model;
}

double mean_ab_l1(nets::Network& net, const data::Dataset& dataset, bool predict_ab, int batch_size) {
    if (dataset.empty()) {
        throw DataError("cannot evaluate on an empty dataset");
    }
    const std::size_t n = dataset.size();
    const std::size_t plane = static_cast<std::size_t>(dataset.image_size) * dataset.image_size;
    const int channels = predict_ab ? 2 : 3;
    const int first_ab = predict_ab ? 0 : 1;
    double acc = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(batch_size)) {
        idx.clear();
        for (std::size_t i = begin; i < std::min(n, begin + static_cast<std::size_t>(batch_size)); ++i) {
            idx.push_back(i);
        }
        data::Batch b = data::assemble(dataset, idx, predict_ab);
        Var out = net.forward(Var::constant(b.L), Mode::eval);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            for (int c = first_ab; c < first_ab + 2; ++c) {
                const std::size_t off = (k * channels + c) * plane;
                for (std::size_t p = 0; p < plane; ++p) {
                    acc += std::fabs(static_cast<double>(out.value()[off + p]) - b.target[off + p]);
                }
            }
        }
    }
    return acc / static_cast<double>(n * 2 * plane);
}

}  // namespace chroma::training
