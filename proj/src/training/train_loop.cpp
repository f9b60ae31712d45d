#include <chrono>
#include <fstream>

#include "chroma/errors.hpp"
#include "chroma/training.hpp"

namespace chroma::training {

namespace fs = std::filesystem;

fs::path checkpoint_path(const fs::path& out_dir, std::int64_t step) {
    return out_dir / ("checkpoint-" + std::to_string(step) + ".ckpt");
}

namespace {

// Fields that may differ between a checkpoint and the run resuming it.
nlohmann::json resumable_view(const TrainConfig& config) {
    nlohmann::json j = to_json(config);
    for (const char* key : {"epochs", "log_every", "checkpoint_every", "timing", "data_dir"}) {
        j.erase(key);
    }
    return j;
}

// Keeps the header and rows up to `step`, so a resumed run's CSV matches an
// uninterrupted one.
std::ofstream open_metrics(const fs::path& path, std::optional<std::int64_t> resume_step) {
    std::vector<std::string> kept;
    if (resume_step && fs::exists(path)) {
        std::ifstream in(path);
        std::string line;
        if (std::getline(in, line) && line == kMetricsHeader) {
            while (std::getline(in, line)) {
                if (!line.empty() && std::stoll(line.substr(0, line.find(','))) <= *resume_step) {
                    kept.push_back(line);
                }
            }
        }
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write metrics file " + path.string());
    }
    out << kMetricsHeader << '\n';
    for (const auto& line : kept) out << line << '\n';
    out.flush();
    return out;
}

}  // namespace

TrainResult train(const TrainConfig& config, const data::Dataset& dataset, const TrainOptions& options) {
    validate(config);
    if (dataset.empty()) {
        throw DataError("training dataset " + dataset.source + " is empty");
    }
    if (dataset.image_size != config.image_size) {
        throw ConfigError("dataset images are " + std::to_string(dataset.image_size) + "px but image_size is " +
                          std::to_string(config.image_size));
    }
    const data::BatchPlan first_plan = data::make_plan(dataset.size(), config.batch_size, config.seed, 0);
    const auto per_epoch = static_cast<std::int64_t>(first_plan.batch_count());

    std::optional<std::int64_t> resume_step;
    TrainResult result{options.resume ? from_checkpoint(load_checkpoint(*options.resume)) : make_state(config),
                       {},
                       {}};
    TrainState& state = result.state;
    if (options.resume) {
        if (resumable_view(state.config) != resumable_view(config)) {
            throw ConfigError("checkpoint " + options.resume->string() +
                              " was trained with a different configuration: " + resumable_view(state.config).dump());
        }
        state.config = config;
        resume_step = state.step;
    }

    std::error_code ec;
    fs::create_directories(options.out_dir, ec);
    if (ec) {
        throw DataError("cannot create output directory " + options.out_dir.string() + ": " + ec.message());
    }
    std::ofstream metrics = open_metrics(options.out_dir / "metrics.csv", resume_step);

    std::int64_t last_saved = -1;
    const auto save = [&](const fs::path& path) {
        save_checkpoint(path, to_checkpoint(state));
        result.checkpoints.push_back(path);
    };
    const auto save_step = [&] {
        if (last_saved == state.step) return;
        save(checkpoint_path(options.out_dir, state.step));
        last_saved = state.step;
    };

    const auto start = std::chrono::steady_clock::now();
    for (std::int64_t epoch = state.step / per_epoch; epoch < config.epochs; ++epoch) {
        const data::BatchPlan plan =
            data::make_plan(dataset.size(), config.batch_size, config.seed, static_cast<int>(epoch));
        for (std::int64_t b = state.step - epoch * per_epoch; b < per_epoch; ++b) {
            const auto idx = plan.batch(static_cast<std::size_t>(b));
            std::vector<bool> flips;
            if (config.hflip) {
                for (std::size_t k = 0; k < idx.size(); ++k) flips.push_back((state.rng() & 1u) != 0);
            }
            const data::Batch batch = data::assemble(dataset, idx, config.predict_ab, flips);
            StepMetrics m;
            try {
                m = train_step(state, batch);
            } catch (const NumericError& e) {
                const auto failing = state.step + 1;
                const fs::path diag = options.out_dir / ("checkpoint-" + std::to_string(failing) + "-diagnostic.ckpt");
                save(diag);
                throw NumericError("non-finite value at step " + std::to_string(failing) + ": " + e.what() +
                                   " (state written to " + diag.string() + ")");
            }
            if (config.timing) {
                m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            }
            if (state.step % config.log_every == 0) {
                metrics << metrics_row(m) << '\n';
                metrics.flush();
                if (!metrics) throw DataError("failed writing " + (options.out_dir / "metrics.csv").string());
                result.metrics.push_back(m);
                if (options.on_log) options.on_log(m);
            }
            if (config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0) {
                save_step();
            }
        }
        if (config.checkpoint_every == 0) {
            save_step();
        }
    }
    save_step();
    return result;
}

}  // namespace chroma::training
