#include "chroma/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <optional>

#include <CLI11.hpp>

#include "chroma/errors.hpp"
#include "chroma/evaluation.hpp"
#include "chroma/gradcheck.hpp"
#include "chroma/image_io.hpp"
#include "chroma/training.hpp"

namespace chroma::cli {

namespace fs = std::filesystem;
using training::TrainConfig;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::string out_dir = "out";
};

struct TrainFlags {
    std::optional<std::string> model, dataset, data_dir, split, resume;
    std::optional<int> epochs, batch_size, image_size, base_channels, depth, d_updates, log_every, checkpoint_every;
    std::optional<double> lr, beta1, beta2, lambda_l1, label_smooth;
    std::optional<std::uint64_t> limit;
    bool hflip = false, predict_lab = false, timing = false;
};

struct DataFlags {
    std::optional<std::string> dataset, data_dir;
    std::string split = "test";
    std::uint64_t limit = 0;
    bool resize = false;
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
    cmd->add_option("--dataset", f.dataset, "cifar10 or images (default: the checkpoint's)");
    cmd->add_option("--data-dir", f.data_dir, "dataset directory (default: the checkpoint's)");
    cmd->add_option("--split", f.split, "CIFAR-10 split: train, test or all")->capture_default_str();
    cmd->add_option("--limit", f.limit, "use only the first N samples (0 = all)");
    cmd->add_flag("--resize", f.resize, "crop and resample images that do not match the model size");
}

data::Dataset load_dataset(const std::string& kind, const std::string& dir, const std::string& split,
                           std::uint64_t limit, int image_size, bool resize, std::ostream& err) {
    if (dir.empty()) {
        throw ConfigError("no data directory given (use --data-dir)");
    }
    if (kind == "cifar10") {
        return data::load_cifar10(dir, data::cifar_split_from_string(split), limit, image_size);
    }
    if (kind == "images") {
        data::Dataset ds = data::load_image_dir(dir, image_size, limit, resize);
        for (const auto& line : ds.report) err << line << '\n';
        if (ds.empty()) throw DataError("no decodable images in " + dir);
        return ds;
    }
    throw ConfigError("unknown dataset kind '" + kind + "' (expected cifar10 or images)");
}

data::Dataset load_eval_dataset(const DataFlags& f, const TrainConfig& model_config, std::ostream& err) {
    return load_dataset(f.dataset.value_or(model_config.dataset), f.data_dir.value_or(model_config.data_dir), f.split,
                        f.limit, model_config.image_size, f.resize, err);
}

template <typename T, typename U>
void override_with(const std::optional<T>& flag, U& field) {
    if (flag) field = *flag;
}

int cmd_train(const Globals& g, const TrainFlags& f, std::ostream& out, std::ostream& err) {
    TrainConfig c = g.config.empty() ? TrainConfig{} : training::load_config(g.config);
    override_with(f.model, c.model);
    override_with(f.dataset, c.dataset);
    override_with(f.data_dir, c.data_dir);
    override_with(f.split, c.split);
    override_with(f.epochs, c.epochs);
    override_with(f.batch_size, c.batch_size);
    override_with(f.image_size, c.image_size);
    override_with(f.base_channels, c.base_channels);
    override_with(f.depth, c.depth);
    override_with(f.d_updates, c.d_updates);
    override_with(f.log_every, c.log_every);
    override_with(f.checkpoint_every, c.checkpoint_every);
    override_with(f.lr, c.lr);
    override_with(f.beta1, c.beta1);
    override_with(f.beta2, c.beta2);
    override_with(f.lambda_l1, c.lambda_l1);
    override_with(f.label_smooth, c.label_smooth);
    override_with(f.limit, c.limit);
    override_with(g.seed, c.seed);
    if (f.hflip) c.hflip = true;
    if (f.predict_lab) c.predict_ab = false;
    if (f.timing) c.timing = true;
    training::validate(c);

    const data::Dataset ds = load_dataset(c.dataset, c.data_dir, c.split, c.limit, c.image_size, true, err);
    out << "train " << c.model << " on " << ds.source << " (" << ds.size() << " images, " << c.image_size << "px)\n";

    const auto start = std::chrono::steady_clock::now();
    training::TrainOptions opts;
    opts.out_dir = g.out_dir;
    if (f.resume) opts.resume = fs::path(*f.resume);
    opts.on_log = [&](const training::StepMetrics& m) {
        char line[256];
        std::snprintf(line, sizeof line,
                      "step %lld  d_loss %.4f  g_adv %.4f  g_l1 %.4f  d_acc %.2f/%.2f  %.1fs",
                      static_cast<long long>(m.step), m.d_loss, m.g_adv, m.g_l1, m.d_real_acc, m.d_fake_acc,
                      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        out << line << std::endl;
    };
    const training::TrainResult r = training::train(c, ds, opts);
    for (const auto& p : r.checkpoints) out << "wrote " << p.string() << '\n';
    return kExitOk;
}

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
    std::vector<fs::path> files;
    for (const auto& in : inputs) {
        if (fs::is_directory(in)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(in)) {
                if (e.is_regular_file() && e.path().filename().string().front() != '.') found.push_back(e.path());
            }
            std::sort(found.begin(), found.end());
            files.insert(files.end(), found.begin(), found.end());
        } else if (fs::exists(in)) {
            files.emplace_back(in);
        } else {
            throw DataError("input not found: " + in);
        }
    }
    return files;
}

int cmd_colorize(const Globals& g, const std::string& checkpoint, const std::vector<std::string>& inputs, bool resize,
                 std::ostream& out) {
    training::LoadedModel model = training::load_generator(training::load_checkpoint(checkpoint));
    const int size = model.config.image_size;
    fs::create_directories(g.out_dir);
    for (const auto& path : expand_inputs(inputs)) {
        color::Rgb8Image img = io::read_image(path);
        if (img.height != size || img.width != size) {
            if (!resize) {
                throw DataError(path.string() + " is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                " but the checkpoint requires " + std::to_string(size) + "x" + std::to_string(size) +
                                " (pass --resize to resample)");
            }
            img = io::resize_bilinear(io::center_crop_square(img), size, size);
        }
        const data::Sample sample = data::make_sample(path.filename().string(), std::move(img));
        const auto pred = eval::predict_one(model.net, sample.lab, model.config.predict_ab);
        const fs::path dst = fs::path(g.out_dir) / (path.stem().string() + ".colorized.png");
        io::write_png(dst, eval::to_rgb(pred));
        out << "wrote " << dst.string() << '\n';
    }
    return kExitOk;
}

int cmd_eval(const Globals& g, const std::string& checkpoint, const DataFlags& f, std::ostream& out,
             std::ostream& err) {
    training::LoadedModel model = training::load_generator(training::load_checkpoint(checkpoint));
    const data::Dataset ds = load_eval_dataset(f, model.config, err);
    const auto preds = eval::predict(model.net, ds, model.config.predict_ab);
    const eval::EvalReport report = eval::evaluate(ds, preds);
    fs::create_directories(g.out_dir);
    const fs::path dst = fs::path(g.out_dir) / "eval.csv";
    eval::write_eval_csv(dst, report);
    out << "eval " << model.config.model << " on " << report.count << " images: ab_mae "
        << eval::format_metric(report.mean_ab_mae) << "  psnr " << eval::format_metric(report.mean_psnr) << " dB\n";
    out << "wrote " << dst.string() << '\n';
    return kExitOk;
}

int cmd_montage(const Globals& g, const std::string& checkpoint, const std::optional<std::string>& baseline, int n,
                const std::optional<std::string>& output, const DataFlags& f, std::ostream& out, std::ostream& err) {
    training::LoadedModel main = training::load_generator(training::load_checkpoint(checkpoint));
    std::optional<training::LoadedModel> base;
    if (baseline) {
        base = training::load_generator(training::load_checkpoint(*baseline));
        if (base->config.image_size != main.config.image_size) {
            throw ConfigError("baseline and main checkpoints use different image sizes");
        }
    }
    const data::Dataset ds = load_eval_dataset(f, main.config, err);
    if (n < 1 || static_cast<std::size_t>(n) > ds.size()) {
        throw ConfigError("montage needs 1 <= n <= " + std::to_string(ds.size()) + ", got " + std::to_string(n));
    }
    const data::BatchPlan pick = data::make_plan(ds.size(), 1, g.seed.value_or(0), 0);
    data::Dataset chosen;
    chosen.image_size = ds.image_size;
    for (int i = 0; i < n; ++i) chosen.samples.push_back(ds.samples[pick.permutation[static_cast<std::size_t>(i)]]);

    const auto main_pred = eval::predict(main.net, chosen, main.config.predict_ab);
    std::vector<color::NormalizedSample> base_pred;
    if (base) base_pred = eval::predict(base->net, chosen, base->config.predict_ab);

    std::vector<std::vector<color::Rgb8Image>> rows;
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        std::vector<color::Rgb8Image> row{eval::gray_image(chosen.samples[i].lab), chosen.samples[i].rgb};
        if (base) row.push_back(eval::to_rgb(base_pred[i]));
        row.push_back(eval::to_rgb(main_pred[i]));
        rows.push_back(std::move(row));
    }
    const fs::path dst = output ? fs::path(*output) : fs::path(g.out_dir) / "montage.png";
    if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
    io::write_png(dst, eval::montage(rows));
    out << "wrote " << dst.string() << '\n';
    return kExitOk;
}

int cmd_gradcheck(const Globals& g, const std::string& fault, std::ostream& out) {
    GradcheckOptions opts;
    opts.seed = g.seed.value_or(0);
    opts.inject_fault = fault;
    const auto start = std::chrono::steady_clock::now();
    const auto results = run_gradcheck(opts);
    char line[160];
    std::snprintf(line, sizeof line, "%-20s %9s %14s  %s\n", "op", "instances", "max_rel_error", "status");
    out << line;
    std::vector<std::string> failed;
    for (const auto& r : results) {
        std::snprintf(line, sizeof line, "%-20s %9d %14.3e  %s\n", r.op.c_str(), r.instances, r.max_rel_error,
                      r.passed ? "PASS" : "FAIL");
        out << line;
        if (!r.passed) failed.push_back(r.op);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::snprintf(line, sizeof line, "%zu ops, tolerance %.0e, %.2fs\n", results.size(), opts.tolerance, secs);
    out << line;
    if (!failed.empty()) {
        out << "FAILED:";
        for (const auto& op : failed) out << ' ' << op;
        out << '\n';
        return kExitFailure;
    }
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Grayscale image colorization with a conditional GAN and an L1 baseline", "chroma"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "RNG seed (training init and shuffling, montage selection, gradcheck)");
    app.add_option("--config", g.config, "JSON training config; flags override its fields");
    app.add_option("--out-dir", g.out_dir, "output directory")->capture_default_str();

    TrainFlags tf;
    CLI::App* train = app.add_subcommand("train", "train a GAN or baseline colorizer");
    train->add_option("--model", tf.model, "gan or baseline");
    train->add_option("--dataset", tf.dataset, "cifar10 or images");
    train->add_option("--data-dir", tf.data_dir, "dataset directory");
    train->add_option("--split", tf.split, "CIFAR-10 split: train, test or all");
    train->add_option("--limit", tf.limit, "use only the first N samples (0 = all)");
    train->add_option("--epochs", tf.epochs);
    train->add_option("--batch-size", tf.batch_size);
    train->add_option("--image-size", tf.image_size);
    train->add_option("--base-channels", tf.base_channels);
    train->add_option("--depth", tf.depth, "encoder stages (0 = log2(size) - 2)");
    train->add_option("--d-updates", tf.d_updates, "discriminator updates per generator update");
    train->add_option("--lr", tf.lr);
    train->add_option("--beta1", tf.beta1);
    train->add_option("--beta2", tf.beta2);
    train->add_option("--lambda", tf.lambda_l1, "L1 weight in the generator objective");
    train->add_option("--label-smooth", tf.label_smooth, "target for real pairs");
    train->add_option("--log-every", tf.log_every, "steps between metrics rows");
    train->add_option("--checkpoint-every", tf.checkpoint_every, "steps between checkpoints (0 = each epoch)");
    train->add_option("--resume", tf.resume, "continue from a checkpoint");
    train->add_flag("--hflip", tf.hflip, "random horizontal flips");
    train->add_flag("--predict-lab", tf.predict_lab, "predict L'a'b' instead of a'b'");
    train->add_flag("--timing", tf.timing, "record wall time in metrics.csv (breaks byte-identical reruns)");

    std::string ckpt;
    std::vector<std::string> inputs;
    bool colorize_resize = false;
    CLI::App* colorize = app.add_subcommand("colorize", "colorize images with a trained checkpoint");
    colorize->add_option("--checkpoint", ckpt, "checkpoint file")->required();
    colorize->add_option("inputs", inputs, "image files or directories")->required();
    colorize->add_flag("--resize", colorize_resize, "crop and resample inputs to the checkpoint's size");

    DataFlags eval_flags;
    std::string eval_ckpt;
    CLI::App* evalc = app.add_subcommand("eval", "score a checkpoint on a dataset (writes eval.csv)");
    evalc->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    add_data_flags(evalc, eval_flags);

    DataFlags montage_flags;
    std::string montage_ckpt;
    std::optional<std::string> montage_baseline, montage_output;
    int montage_n = 8;
    CLI::App* montage = app.add_subcommand("montage", "grid of gray / truth / [baseline] / model outputs");
    montage->add_option("--checkpoint", montage_ckpt, "checkpoint for the last column")->required();
    montage->add_option("--baseline", montage_baseline, "optional baseline checkpoint column");
    montage->add_option("-n", montage_n, "number of rows")->capture_default_str();
    montage->add_option("--output", montage_output, "PNG path (default <out-dir>/montage.png)");
    add_data_flags(montage, montage_flags);

    std::string fault;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
    gradcheck->add_option("--inject-fault", fault, "perturb one op's gradient (harness self-test)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitConfig;
    }

    try {
        if (*train) return cmd_train(g, tf, out, err);
        if (*colorize) return cmd_colorize(g, ckpt, inputs, colorize_resize, out);
        if (*evalc) return cmd_eval(g, eval_ckpt, eval_flags, out, err);
        if (*montage)
            return cmd_montage(g, montage_ckpt, montage_baseline, montage_n, montage_output, montage_flags, out, err);
        if (*gradcheck) return cmd_gradcheck(g, fault, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const fs::filesystem_error& e) {
        err << "I/O error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitConfig;
}

}  // namespace chroma::cli
