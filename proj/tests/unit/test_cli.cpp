#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "../support/synthetic.hpp"
#include "chroma/cli.hpp"
#include "chroma/evaluation.hpp"
#include "chroma/gradcheck.hpp"
#include "chroma/image_io.hpp"
#include "chroma/training.hpp"

using namespace chroma;
using chroma::testing::fresh_temp_dir;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string file_text(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// A small CIFAR-format directory with train and test batches.
fs::path cifar_dir() {
    static const fs::path dir = [] {
        const auto d = fresh_temp_dir("cli_cifar");
        chroma::testing::write_synthetic_cifar(d, 12, 1, "data_batch_1.bin");
        chroma::testing::write_synthetic_cifar(d, 6, 2, "test_batch.bin");
        return d;
    }();
    return dir;
}

std::vector<std::string> tiny_train(const fs::path& out, const std::string& model = "gan") {
    return {"--out-dir", out.string(), "train", "--data-dir", cifar_dir().string(), "--image-size", "16",
            "--base-channels", "8", "--batch-size", "4", "--model", model};
}

fs::path trained_checkpoint(const std::string& model, int epochs) {
    const auto out = fresh_temp_dir("cli_ckpt_" + model + std::to_string(epochs));
    auto args = tiny_train(out, model);
    args.insert(args.end(), {"--epochs", std::to_string(epochs)});
    const Result r = run(args);
    EXPECT_EQ(r.code, 0) << r.err;
    return out / ("checkpoint-" + std::to_string(epochs * 3) + ".ckpt");
}

}  // namespace

TEST(CliUsage, UnknownFlagIsUsageError) {
    const Result r = run({"train", "--no-such-flag"});
    EXPECT_EQ(r.code, cli::kExitConfig);
    EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
}

TEST(CliUsage, MissingVerbIsUsageError) {
    EXPECT_EQ(run({}).code, cli::kExitConfig);
    EXPECT_EQ(run({"fly"}).code, cli::kExitConfig);
    EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
}

TEST(CliTrain, MissingDataDirIsDataError) {
    const auto out = fresh_temp_dir("cli_missing");
    const Result r = run({"--out-dir", out.string(), "train", "--data-dir", "/no/such/cifar", "--epochs", "0"});
    EXPECT_EQ(r.code, cli::kExitData);
    EXPECT_NE(r.err.find("/no/such/cifar"), std::string::npos) << r.err;
}

TEST(CliTrain, ZeroEpochsWritesCheckpointZero) {
    const auto out = fresh_temp_dir("cli_zero");
    auto args = tiny_train(out);
    args.insert(args.end(), {"--epochs", "0"});
    const Result r = run(args);
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(out / "checkpoint-0.ckpt"));
    EXPECT_EQ(file_text(out / "metrics.csv"), "step,d_loss,g_adv,g_l1,d_real_acc,d_fake_acc,seconds\n");
}

TEST(CliTrain, StatusLinePerLogInterval) {
    const auto out = fresh_temp_dir("cli_status");
    auto args = tiny_train(out);
    args.insert(args.end(), {"--epochs", "2", "--log-every", "2"});
    const Result r = run(args);
    ASSERT_EQ(r.code, 0) << r.err;
    int lines = 0;
    std::istringstream in(r.out);
    for (std::string line; std::getline(in, line);) lines += line.rfind("step ", 0) == 0;
    EXPECT_EQ(lines, 3);  // 6 steps, every 2nd logged
}

TEST(CliTrain, ConfigFileWithFlagOverride) {
    const auto out = fresh_temp_dir("cli_config");
    const fs::path cfg = out / "config.json";
    std::ofstream(cfg) << R"({"epochs": 1, "image_size": 16, "base_channels": 8, "batch_size": 4, "data_dir": ")"
                       << cifar_dir().string() << R"("})";
    Result r = run({"--config", cfg.string(), "--out-dir", (out / "run").string(), "train", "--epochs", "0"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(out / "run" / "checkpoint-0.ckpt"));
    EXPECT_FALSE(fs::exists(out / "run" / "checkpoint-3.ckpt"));

    std::ofstream(cfg) << R"({"label_smooth": 0})";
    r = run({"--config", cfg.string(), "train"});
    EXPECT_EQ(r.code, cli::kExitConfig);
    EXPECT_NE(r.err.find("label_smooth"), std::string::npos);
}

TEST(CliTrain, SeedFlagIsGlobal) {
    const auto a = fresh_temp_dir("cli_seed_a");
    const auto b = fresh_temp_dir("cli_seed_b");
    auto args_a = tiny_train(a);
    args_a.insert(args_a.end(), {"--epochs", "0", "--seed", "7"});
    auto args_b = tiny_train(b);
    args_b.insert(args_b.begin(), {"--seed", "7"});
    args_b.insert(args_b.end(), {"--epochs", "0"});
    ASSERT_EQ(run(args_a).code, 0);
    ASSERT_EQ(run(args_b).code, 0);
    EXPECT_EQ(file_bytes(a / "checkpoint-0.ckpt"), file_bytes(b / "checkpoint-0.ckpt"));
    const auto ck = training::load_checkpoint(a / "checkpoint-0.ckpt");
    EXPECT_EQ(ck.header["config"]["seed"], 7);
}

TEST(CliTrain, NumericAbortExitsFour) {
    const auto out = fresh_temp_dir("cli_nan");
    auto args = tiny_train(out, "baseline");
    args.insert(args.end(), {"--epochs", "2", "--lr", "1e30"});
    const Result r = run(args);
    EXPECT_EQ(r.code, cli::kExitNumeric) << r.out << r.err;
    EXPECT_NE(r.err.find("step"), std::string::npos);
}

TEST(CliColorize, GrayImageTwiceIsByteIdentical) {
    const auto ckpt = trained_checkpoint("gan", 1);
    const auto dir = fresh_temp_dir("cli_colorize");
    color::Rgb8Image gray(16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            for (int c = 0; c < 3; ++c) gray.at(y, x)[c] = static_cast<std::uint8_t>(8 * y + x);
    fs::create_directories(dir / "in");
    io::write_png(dir / "in" / "g.png", gray);
    Result r1 = run({"--out-dir", (dir / "o1").string(), "colorize", "--checkpoint", ckpt.string(), (dir / "in").string()});
    Result r2 = run({"--out-dir", (dir / "o2").string(), "colorize", "--checkpoint", ckpt.string(), (dir / "in" / "g.png").string()});
    ASSERT_EQ(r1.code, 0) << r1.err;
    ASSERT_EQ(r2.code, 0) << r2.err;
    const auto a = file_bytes(dir / "o1" / "g.colorized.png");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, file_bytes(dir / "o2" / "g.colorized.png"));

    // Only chroma is predicted, so lightness survives up to 8-bit rounding.
    const color::LabImage in = color::rgb_to_lab(gray);
    const color::LabImage outlab = color::rgb_to_lab(io::read_png(dir / "o1" / "g.colorized.png"));
    for (std::size_t i = 0; i < in.size(); ++i) EXPECT_NEAR(outlab.L[i], in.L[i], 1.0) << i;
}

TEST(CliColorize, UntrainedCheckpointGivesValidPng) {
    const auto ckpt = trained_checkpoint("gan", 0);
    const auto dir = fresh_temp_dir("cli_colorize0");
    std::mt19937_64 rng(4);
    io::write_png(dir / "x.png", chroma::testing::synthetic_image(16, rng));
    const Result r = run({"--out-dir", dir.string(), "colorize", "--checkpoint", ckpt.string(), (dir / "x.png").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto img = io::read_png(dir / "x.colorized.png");
    EXPECT_EQ(img.height, 16);
}

TEST(CliColorize, SizeMismatchNamesRequiredSize) {
    const auto ckpt = trained_checkpoint("gan", 0);
    const auto dir = fresh_temp_dir("cli_colorize_size");
    std::mt19937_64 rng(4);
    io::write_png(dir / "big.png", chroma::testing::synthetic_image(40, rng));
    Result r = run({"--out-dir", dir.string(), "colorize", "--checkpoint", ckpt.string(), (dir / "big.png").string()});
    EXPECT_EQ(r.code, cli::kExitData);
    EXPECT_NE(r.err.find("16x16"), std::string::npos) << r.err;
    r = run({"--out-dir", dir.string(), "colorize", "--resize", "--checkpoint", ckpt.string(), (dir / "big.png").string()});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(io::read_png(dir / "big.colorized.png").width, 16);
}

TEST(CliColorize, BadCheckpointIsDataError) {
    const auto dir = fresh_temp_dir("cli_badckpt");
    std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
    const Result r = run({"colorize", "--checkpoint", (dir / "junk.ckpt").string(), (dir / "junk.ckpt").string()});
    EXPECT_EQ(r.code, cli::kExitData);
}

TEST(CliEval, BaselineAndGanReportsShareSchema) {
    const auto gan = trained_checkpoint("gan", 1);
    const auto base = trained_checkpoint("baseline", 1);
    const auto dir = fresh_temp_dir("cli_eval");
    Result rg = run({"--out-dir", (dir / "gan").string(), "eval", "--checkpoint", gan.string()});
    Result rb = run({"--out-dir", (dir / "base").string(), "eval", "--checkpoint", base.string()});
    ASSERT_EQ(rg.code, 0) << rg.err;
    ASSERT_EQ(rb.code, 0) << rb.err;
    const auto schema = [](const std::string& text) {
        std::vector<std::string> firsts;
        std::istringstream in(text);
        for (std::string line; std::getline(in, line);) firsts.push_back(line.substr(0, line.find(',')));
        return firsts;
    };
    const std::string g = file_text(dir / "gan" / "eval.csv");
    const std::string b = file_text(dir / "base" / "eval.csv");
    EXPECT_EQ(g.substr(0, g.find('\n')), "id,count,ab_mae,psnr_db");
    EXPECT_EQ(schema(g), schema(b));
    EXPECT_EQ(schema(g).size(), 1u + 6u + 1u);  // header, 6 test images, aggregate
    EXPECT_EQ(schema(g).back(), "ALL");
}

TEST(Evaluation, GroundTruthAgainstItself) {
    data::Dataset ds;
    ds.image_size = 8;
    for (const auto& img : chroma::testing::synthetic_images(3, 8, 9)) ds.samples.push_back(data::make_sample("t", img));
    std::vector<color::NormalizedSample> truth;
    for (const auto& s : ds.samples) truth.push_back(s.lab);
    const eval::EvalReport r = eval::evaluate(ds, truth);
    EXPECT_EQ(r.mean_ab_mae, 0.0);
    EXPECT_TRUE(std::isinf(r.mean_psnr));
    const std::string csv = eval::eval_csv(r);
    EXPECT_NE(csv.find("ALL,3,0.000000,inf"), std::string::npos) << csv;
}

TEST(Evaluation, AggregatesAreExactMeans) {
    data::Dataset ds;
    ds.image_size = 8;
    for (const auto& img : chroma::testing::synthetic_images(4, 8, 10)) ds.samples.push_back(data::make_sample("t", img));
    std::vector<color::NormalizedSample> preds;
    for (const auto& s : ds.samples) {
        auto p = s.lab;
        for (auto& v : p.a) v = 0.0f;
        preds.push_back(p);
    }
    const eval::EvalReport r = eval::evaluate(ds, preds);
    double mae = 0.0, ps = 0.0;
    for (const auto& s : r.images) {
        mae += s.ab_mae;
        ps += s.psnr;
        EXPECT_TRUE(std::isfinite(s.psnr));
    }
    EXPECT_DOUBLE_EQ(r.mean_ab_mae, mae / 4);
    EXPECT_DOUBLE_EQ(r.mean_psnr, ps / 4);
    EXPECT_EQ(r.count, 4u);
}

TEST(Evaluation, PsnrClosedForm) {
    color::Rgb8Image a(1, 2), b(1, 2);
    b.pixels[0] = 10;  // squared error 100 over 6 channels
    EXPECT_NEAR(eval::psnr(a, b), 10 * std::log10(255.0 * 255.0 * 6 / 100), 1e-12);
    EXPECT_TRUE(std::isinf(eval::psnr(a, a)));
}

TEST(Evaluation, UntrainedGeneratorErrorIsDatasetChroma) {
    data::Dataset ds;
    ds.image_size = 16;
    for (const auto& img : chroma::testing::synthetic_images(8, 16, 12)) ds.samples.push_back(data::make_sample("t", img));
    double mean_abs = 0.0;
    std::size_t n = 0;
    for (const auto& s : ds.samples) {
        for (std::size_t i = 0; i < s.lab.size(); ++i) mean_abs += std::fabs(s.lab.a[i]) + std::fabs(s.lab.b[i]);
        n += 2 * s.lab.size();
    }
    mean_abs /= static_cast<double>(n);
    nets::NetConfig cfg;
    cfg.image_size = 16;
    cfg.depth = 2;
    nets::Network gen = nets::build_generator(cfg, 1);
    const eval::EvalReport r = eval::evaluate(ds, eval::predict(gen, ds, true));
    EXPECT_NEAR(r.mean_ab_mae, mean_abs, 0.05);
}

TEST(Montage, GridArithmeticAndSeparators) {
    std::vector<std::vector<color::Rgb8Image>> rows(2, std::vector<color::Rgb8Image>(3, color::Rgb8Image(5, 4)));
    const color::Rgb8Image g = eval::montage(rows);
    EXPECT_EQ(g.width, 3 * 4 + 2 * 2);
    EXPECT_EQ(g.height, 2 * 5 + 1 * 2);
    EXPECT_EQ(g.at(0, 4)[0], 255);
    EXPECT_EQ(g.at(0, 5)[1], 255);
    EXPECT_EQ(g.at(5, 0)[2], 255);
    EXPECT_EQ(g.at(0, 6)[0], 0);
    EXPECT_EQ(g.at(7, 0)[0], 0);
}

TEST(CliMontage, OneRowOneCheckpoint) {
    const auto ckpt = trained_checkpoint("gan", 0);
    const auto dir = fresh_temp_dir("cli_montage");
    const Result r = run({"--out-dir", dir.string(), "montage", "--checkpoint", ckpt.string(), "-n", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto img = io::read_png(dir / "montage.png");
    EXPECT_EQ(img.width, 3 * 16 + 2 * 2);
    EXPECT_EQ(img.height, 16);
}

TEST(CliMontage, BaselineColumnAndDeterminism) {
    const auto gan = trained_checkpoint("gan", 0);
    const auto base = trained_checkpoint("baseline", 0);
    const auto dir = fresh_temp_dir("cli_montage2");
    const std::vector<std::string> args{"--seed", "3", "montage", "--checkpoint", gan.string(), "--baseline",
                                        base.string(), "-n", "4", "--output"};
    auto a = args, b = args;
    a.push_back((dir / "a.png").string());
    b.push_back((dir / "b.png").string());
    ASSERT_EQ(run(a).code, 0);
    ASSERT_EQ(run(b).code, 0);
    EXPECT_EQ(file_bytes(dir / "a.png"), file_bytes(dir / "b.png"));
    const auto img = io::read_png(dir / "a.png");
    EXPECT_EQ(img.width, 4 * 16 + 3 * 2);
    EXPECT_EQ(img.height, 4 * 16 + 3 * 2);
    EXPECT_EQ(run({"montage", "--checkpoint", gan.string(), "-n", "7"}).code, cli::kExitConfig);
}

TEST(CliGradcheck, AllOpsPass) {
    const Result r = run({"gradcheck"});
    EXPECT_EQ(r.code, 0) << r.out;
    for (const auto& op : gradcheck_ops()) EXPECT_NE(r.out.find(op), std::string::npos) << op;
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(CliGradcheck, InjectedFaultIsNamed) {
    const Result r = run({"gradcheck", "--inject-fault", "tanh"});
    EXPECT_EQ(r.code, cli::kExitFailure);
    EXPECT_NE(r.out.find("FAILED: tanh"), std::string::npos) << r.out;
    EXPECT_EQ(run({"gradcheck", "--inject-fault", "nope"}).code, cli::kExitConfig);
}
