#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "chroma/adam.hpp"
#include "chroma/checkpoint.hpp"
#include "chroma/dataset.hpp"
#include "chroma/networks.hpp"
#include "chroma/train_config.hpp"

namespace chroma::training {

// bce(real, label_smooth) + bce(fake, 0). Smoothing touches only the real term.
Var discriminator_loss(const Var& logits_real, const Var& logits_fake, float label_smooth);

struct GeneratorLoss {
    Var total;  // adv + lambda * l1
    Var adv;    // bce(fake logits, 1), the non-saturating form
    Var l1;     // unweighted mean |fake - real|
};

GeneratorLoss generator_loss(const Var& logits_fake, const Var& fake, const Var& real, float lambda_l1);

struct StepMetrics {
    std::int64_t step = 0;
    double d_loss = 0.0;
    double g_adv = 0.0;
    double g_l1 = 0.0;
    double d_real_acc = 0.0;  // fraction of real logits > 0
    double d_fake_acc = 0.0;  // fraction of fake logits < 0
    double seconds = 0.0;
};

inline constexpr const char* kMetricsHeader = "step,d_loss,g_adv,g_l1,d_real_acc,d_fake_acc,seconds";
std::string metrics_row(const StepMetrics& m);

// One discriminator update on (L, target) versus (L, fake). `fake` is
// detached here, so the generator's tape is never touched.
void discriminator_update(nets::Network& disc, const Tensor& L, const Tensor& target, const Var& fake,
                          const TrainConfig& config, Adam& d_opt, StepMetrics& metrics);

// One generator update through the (frozen) discriminator. Only the
// generator's parameters are stepped.
void generator_update(nets::Network& gen, nets::Network& disc, const Tensor& L, const Tensor& target,
                      const Var& fake, const TrainConfig& config, Adam& g_opt, StepMetrics& metrics);

// d_updates discriminator updates, then one generator update.
StepMetrics gan_train_step(nets::Network& gen, nets::Network& disc, const data::Batch& batch,
                           const TrainConfig& config, Adam& g_opt, Adam& d_opt);

// A single L1 update; adversarial fields stay zero.
StepMetrics baseline_train_step(nets::Network& net, const data::Batch& batch, const TrainConfig& config,
                                Adam& opt);

// Everything a run needs to continue bit-identically.
struct TrainState {
    TrainConfig config;
    nets::Network generator;  // the baseline network when model == "baseline"
    std::optional<nets::Network> discriminator;
    Adam g_opt;
    Adam d_opt;
    std::int64_t step = 0;
    std::mt19937_64 rng;  // augmentation draws

    bool is_gan() const { return discriminator.has_value(); }
};

// Fresh networks initialised from config.seed.
TrainState make_state(const TrainConfig& config);

Checkpoint to_checkpoint(const TrainState& state);
TrainState from_checkpoint(const Checkpoint& checkpoint);

// The generator (or baseline) network stored in a checkpoint, plus its config.
struct LoadedModel {
    TrainConfig config;
    nets::Network net;
};
LoadedModel load_generator(const Checkpoint& checkpoint);

// Runs one step on `batch` for whichever model `state` holds.
StepMetrics train_step(TrainState& state, const data::Batch& batch);

struct TrainOptions {
    std::filesystem::path out_dir;          // metrics.csv and checkpoint-<step>.ckpt
    std::optional<std::filesystem::path> resume;
    std::function<void(const StepMetrics&)> on_log;
};

struct TrainResult {
    TrainState state;
    std::vector<StepMetrics> metrics;
    std::vector<std::filesystem::path> checkpoints;
};

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, std::int64_t step);

// Epoch loop with seeded shuffling. On resume the run continues from the
// checkpoint's step; the checkpoint's config must match `config` apart from
// epochs, logging and checkpoint cadence. A non-finite loss writes
// checkpoint-<step>-diagnostic.ckpt and rethrows as NumericError.
TrainResult train(const TrainConfig& config, const data::Dataset& dataset, const TrainOptions& options);

// Mean |prediction - target| over the a', b' channels, eval mode, in batches.
double mean_ab_l1(nets::Network& net, const data::Dataset& dataset, bool predict_ab, int batch_size = 64);

}  // namespace chroma::training
