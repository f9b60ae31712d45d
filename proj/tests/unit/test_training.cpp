#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "../support/synthetic.hpp"
#include "chroma/errors.hpp"
#include "chroma/ops.hpp"
#include "chroma/training.hpp"

using namespace chroma;
using namespace chroma::training;
using chroma::testing::fresh_temp_dir;

namespace {

const double kLn2 = std::log(2.0);

// Direct evaluation of mean(max(z,0) - z t + log(1 + exp(-|z|))).
double bce_oracle(const Tensor& z, double t) {
    double acc = 0.0;
    for (float v : z.data()) acc += std::max<double>(v, 0.0) - v * t + std::log1p(std::exp(-std::fabs(v)));
    return acc / static_cast<double>(z.numel());
}

data::Dataset tiny_dataset(std::size_t n, int size, std::uint64_t seed = 11) {
    data::Dataset ds;
    ds.source = "synthetic";
    ds.image_size = size;
    for (const auto& img : chroma::testing::synthetic_images(n, size, seed)) {
        ds.samples.push_back(data::make_sample("s", img));
    }
    return ds;
}

TrainConfig tiny_config(const std::string& model) {
    TrainConfig c;
    c.model = model;
    c.image_size = 8;
    c.base_channels = 8;
    c.batch_size = 4;
    c.epochs = 1;
    c.seed = 5;
    return c;
}

data::Batch whole(const data::Dataset& ds, bool predict_ab = true) {
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return data::assemble(ds, idx, predict_ab);
}

std::vector<Tensor> snapshot(const nets::Network& net) {
    std::vector<Tensor> out;
    for (const auto& p : net.params()) out.push_back(p.var.value());
    return out;
}

bool bit_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].shape() != b[i].shape()) return false;
        if (std::memcmp(a[i].ptr(), b[i].ptr(), a[i].numel() * sizeof(float)) != 0) return false;
    }
    return true;
}

std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(DiscriminatorLoss, ZeroLogitsGiveTwoLn2) {
    Var z = Var::constant(Tensor({6, 1}, 0.0f));
    EXPECT_NEAR(discriminator_loss(z, z, 0.9f).value().item(), 2 * kLn2, 1e-6);
}

TEST(DiscriminatorLoss, PerfectDiscriminationIsNearZero) {
    Var real = Var::constant(Tensor({4, 1}, 30.0f));
    Var fake = Var::constant(Tensor({4, 1}, -30.0f));
    EXPECT_LE(discriminator_loss(real, fake, 1.0f).value().item(), 1e-8);
}

TEST(DiscriminatorLoss, MatchesScalarOracle) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 5; ++i) {
        Tensor r = Tensor::uniform({8, 1}, rng, -6, 6);
        Tensor f = Tensor::uniform({8, 1}, rng, -6, 6);
        const double expected = bce_oracle(r, 0.9) + bce_oracle(f, 0.0);
        EXPECT_NEAR(discriminator_loss(Var::constant(r), Var::constant(f), 0.9f).value().item(), expected, 1e-6);
    }
}

TEST(DiscriminatorLoss, SmoothingOnlyTouchesRealTerm) {
    std::mt19937_64 rng(2);
    Var r = Var::constant(Tensor::uniform({8, 1}, rng, -3, 3));
    double first = 0.0;
    for (int i = 0; i < 4; ++i) {
        Var f = Var::constant(Tensor::uniform({8, 1}, rng, -3, 3));
        const double delta = discriminator_loss(r, f, 0.9f).value().item() - discriminator_loss(r, f, 1.0f).value().item();
        if (i == 0) first = delta;
        EXPECT_NEAR(delta, first, 1e-6);
    }
}

TEST(DiscriminatorLoss, BatchMismatchIsShapeError) {
    EXPECT_THROW(discriminator_loss(Var::constant(Tensor({4, 1})), Var::constant(Tensor({3, 1})), 0.9f), ShapeError);
}

TEST(GeneratorLoss, Examples) {
    std::mt19937_64 rng(3);
    Tensor real = Tensor::uniform({2, 2, 4, 4}, rng, -0.5f, 0.5f);
    Var zero = Var::constant(Tensor({2, 1}, 0.0f));
    EXPECT_NEAR(generator_loss(zero, Var::constant(real), Var::constant(real), 100).total.value().item(), kLn2, 1e-6);
    Var confident = Var::constant(Tensor({2, 1}, 30.0f));
    EXPECT_LE(generator_loss(confident, Var::constant(real), Var::constant(real), 100).total.value().item(), 1e-8);

    Tensor ab({2, 2, 4, 4}, 0.0f);
    Tensor shifted({2, 2, 4, 4}, 0.1f);
    GeneratorLoss g = generator_loss(zero, Var::constant(shifted), Var::constant(ab), 100);
    EXPECT_NEAR(g.total.value().item(), kLn2 + 10.0, 1e-6);
    EXPECT_NEAR(g.adv.value().item(), kLn2, 1e-6);
    EXPECT_NEAR(g.l1.value().item(), 0.1, 1e-7);
}

TEST(GeneratorLoss, MonotoneInL1) {
    std::mt19937_64 rng(4);
    Var logits = Var::constant(Tensor::uniform({4, 1}, rng, -2, 2));
    Var real = Var::constant(Tensor({4, 2, 2, 2}, 0.0f));
    double prev = -1.0;
    for (float off : {0.0f, 0.01f, 0.05f, 0.2f, 0.7f}) {
        const double total =
            generator_loss(logits, Var::constant(Tensor({4, 2, 2, 2}, off)), real, 10).total.value().item();
        EXPECT_GE(total, prev);
        prev = total;
    }
}

TEST(GeneratorLoss, GradientReachesFakeThroughBothTerms) {
    Var fake = Var::parameter(Tensor({1, 2, 1, 1}, 0.5f));
    Var logits = Var::parameter(Tensor({1, 1}, 0.0f));
    GeneratorLoss g = generator_loss(logits, fake, Var::constant(Tensor({1, 2, 1, 1}, 0.0f)), 4.0f);
    backward(g.total);
    // d/dfake of 4 * mean|fake| over two elements is 2; d/dz of bce(z, 1) at 0 is -1/2.
    EXPECT_NEAR((*fake.grad())[0], 2.0f, 1e-6);
    EXPECT_NEAR(logits.grad()->item(), -0.5f, 1e-6);
}

TEST(GanStep, ZeroLearningRateLeavesParameters) {
    TrainConfig c = tiny_config("gan");
    c.lr = 0.0;
    TrainState st = make_state(c);
    const auto g0 = snapshot(st.generator);
    const auto d0 = snapshot(*st.discriminator);
    const data::Dataset ds = tiny_dataset(4, 8);
    StepMetrics m = train_step(st, whole(ds));
    EXPECT_TRUE(bit_equal(g0, snapshot(st.generator)));
    EXPECT_TRUE(bit_equal(d0, snapshot(*st.discriminator)));
    EXPECT_EQ(m.step, 1);
    for (double v : {m.d_loss, m.g_adv, m.g_l1}) {
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_GT(v, 0.0);
    }
    for (double acc : {m.d_real_acc, m.d_fake_acc}) {
        EXPECT_GE(acc, 0.0);
        EXPECT_LE(acc, 1.0);
    }
}

TEST(GanStep, UpdatesAreIsolated) {
    TrainConfig c = tiny_config("gan");
    TrainState st = make_state(c);
    const data::Batch b = whole(tiny_dataset(4, 8));
    Var fake = st.generator.forward(Var::constant(b.L), Mode::train);
    StepMetrics m;

    const auto g0 = snapshot(st.generator);
    const auto d0 = snapshot(*st.discriminator);
    discriminator_update(*st.discriminator, b.L, b.target, fake, c, st.d_opt, m);
    EXPECT_TRUE(bit_equal(g0, snapshot(st.generator)));
    EXPECT_FALSE(bit_equal(d0, snapshot(*st.discriminator)));
    for (const auto& p : st.generator.params()) EXPECT_FALSE(p.var.grad().has_value()) << p.name;

    const auto d1 = snapshot(*st.discriminator);
    generator_update(st.generator, *st.discriminator, b.L, b.target, fake, c, st.g_opt, m);
    EXPECT_TRUE(bit_equal(d1, snapshot(*st.discriminator)));
    EXPECT_FALSE(bit_equal(g0, snapshot(st.generator)));
}

TEST(GanStep, MemorizesOneBatch) {
    TrainConfig c = tiny_config("gan");
    c.image_size = 16;
    c.base_channels = 16;
    TrainState st = make_state(c);
    const data::Batch b = whole(tiny_dataset(4, 16));
    std::vector<double> l1;
    for (int s = 0; s < 200; ++s) l1.push_back(train_step(st, b).g_l1);
    for (std::size_t t = 0; t + 50 < l1.size(); ++t) {
        ASSERT_LT(l1[t + 50], l1[t]) << "window starting at step " << t + 1;
    }
}

TEST(BaselineStep, ZeroLearningRateLeavesParameters) {
    TrainConfig c = tiny_config("baseline");
    c.lr = 0.0;
    TrainState st = make_state(c);
    EXPECT_FALSE(st.is_gan());
    const auto p0 = snapshot(st.generator);
    StepMetrics m = train_step(st, whole(tiny_dataset(4, 8)));
    EXPECT_TRUE(bit_equal(p0, snapshot(st.generator)));
    EXPECT_EQ(m.d_loss, 0.0);
    EXPECT_EQ(m.g_adv, 0.0);
    EXPECT_GT(m.g_l1, 0.0);
}

TEST(BaselineStep, LossIsPlainL1OfForward) {
    TrainConfig c = tiny_config("baseline");
    TrainState st = make_state(c);
    const data::Batch b = whole(tiny_dataset(4, 8));
    nets::Network copy = st.generator.clone();
    const float expected =
        ops::l1_loss(copy.forward(Var::constant(b.L), Mode::train), Var::constant(b.target)).value().item();
    EXPECT_EQ(train_step(st, b).g_l1, expected);
}

TEST(BaselineStep, MemorizesTwoImagesWithin500Steps) {
    TrainConfig c;
    c.model = "baseline";
    c.image_size = 8;
    c.depth = 2;  // depth 1 at 8px has no skip connection at all
    c.batch_size = 2;
    TrainState st = make_state(c);
    const data::Batch b = whole(tiny_dataset(2, 8));
    int reached = 0;
    for (int s = 1; s <= 500 && reached == 0; ++s) {
        if (train_step(st, b).g_l1 < 0.05) reached = s;
    }
    EXPECT_GT(reached, 0);
}

TEST(BaselineStep, ThreeChannelMode) {
    TrainConfig c = tiny_config("baseline");
    c.predict_ab = false;
    TrainState st = make_state(c);
    const data::Dataset ds = tiny_dataset(4, 8);
    StepMetrics m = train_step(st, whole(ds, false));
    EXPECT_GT(m.g_l1, 0.0);
    EXPECT_GE(mean_ab_l1(st.generator, ds, false), 0.0);
}

TEST(Config, JsonRoundTripAndOverrides) {
    TrainConfig c;
    c.seed = 123456789012345ull;
    c.lr = 1e-3;
    c.model = "baseline";
    const TrainConfig back = config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    const TrainConfig o = config_from_json({{"epochs", 3}, {"hflip", true}});
    EXPECT_EQ(o.epochs, 3);
    EXPECT_TRUE(o.hflip);
    EXPECT_EQ(o.lambda_l1, 100.0);
    EXPECT_EQ(o.batch_size, 32);
    EXPECT_NEAR(o.label_smooth, 0.9, 0.0);
}

TEST(Config, InvariantsAreEnforced) {
    EXPECT_THROW(config_from_json({{"lambda_l1", -1.0}}), ConfigError);
    EXPECT_THROW(config_from_json({{"label_smooth", 0.0}}), ConfigError);
    EXPECT_THROW(config_from_json({{"label_smooth", 1.01}}), ConfigError);
    EXPECT_NO_THROW(config_from_json({{"label_smooth", 1.0}}));
    EXPECT_THROW(config_from_json({{"batch_size", 0}}), ConfigError);
    EXPECT_THROW(config_from_json({{"model", "vae"}}), ConfigError);
    EXPECT_THROW(config_from_json({{"learning_rate", 0.1}}), ConfigError);
    EXPECT_THROW(config_from_json({{"epochs", "ten"}}), ConfigError);
    EXPECT_THROW(config_from_json({{"epochs", 1.5}}), ConfigError);
    EXPECT_THROW(config_from_json({{"seed", -1}}), ConfigError);
    EXPECT_THROW(config_from_json({{"image_size", 36}}), ConfigError);
}

TEST(CheckpointFormat, RoundTripIsBitExact) {
    TrainConfig c = tiny_config("gan");
    TrainState st = make_state(c);
    train_step(st, whole(tiny_dataset(4, 8)));
    Checkpoint ck = to_checkpoint(st);
    ck.tensors.push_back({"odd/nan", Tensor({3}, {std::numeric_limits<float>::quiet_NaN(), -0.0f,
                                                  std::numeric_limits<float>::denorm_min()})});
    const auto bytes = encode_checkpoint(ck);
    const Checkpoint back = decode_checkpoint(bytes, "mem");
    EXPECT_EQ(encode_checkpoint(back), bytes);
    ASSERT_EQ(back.tensors.size(), ck.tensors.size());
    for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
        EXPECT_EQ(back.tensors[i].name, ck.tensors[i].name);
        EXPECT_TRUE(bit_equal({back.tensors[i].value}, {ck.tensors[i].value})) << ck.tensors[i].name;
    }
    EXPECT_EQ(back.header, ck.header);
    EXPECT_EQ(back.rng_state, ck.rng_state);
}

TEST(CheckpointFormat, HeaderLayout) {
    Checkpoint ck;
    ck.header = {{"k", 1}};
    ck.tensors.push_back({"w", Tensor({1, 2}, {1.0f, -2.0f})});
    ck.rng_state = "r";
    const std::vector<std::uint8_t> expected = {
        'C', 'G', 'A', 'N', 1, 0, 0, 0,        // magic, version
        7, 0, 0, 0, '{', '"', 'k', '"', ':', '1', '}',
        1, 0, 0, 0,                             // entry count
        1, 0, 0, 0, 'w', 2, 1, 0, 0, 0, 2, 0, 0, 0,
        0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0,
        1, 0, 0, 0, 'r'};
    EXPECT_EQ(encode_checkpoint(ck), expected);
}

TEST(CheckpointFormat, CorruptionIsDataError) {
    Checkpoint ck;
    ck.tensors.push_back({"w", Tensor({2, 2}, 1.0f)});
    const auto good = encode_checkpoint(ck);
    for (std::size_t cut = 0; cut < good.size(); ++cut) {
        EXPECT_THROW(decode_checkpoint({good.data(), cut}, "cut"), DataError) << cut;
    }
    auto bad = good;
    bad[0] = 'X';
    EXPECT_THROW(decode_checkpoint(bad, "magic"), DataError);
    bad = good;
    bad[4] = 2;
    EXPECT_THROW(decode_checkpoint(bad, "version"), DataError);
    bad = good;
    bad.push_back(0);
    EXPECT_THROW(decode_checkpoint(bad, "trailing"), DataError);
    EXPECT_THROW(load_checkpoint("/nonexistent/x.ckpt"), DataError);
}

TEST(CheckpointState, RestoreContinuesIdentically) {
    TrainConfig c = tiny_config("gan");
    const data::Batch b = whole(tiny_dataset(4, 8));
    TrainState a = make_state(c);
    train_step(a, b);
    TrainState restored = from_checkpoint(decode_checkpoint(encode_checkpoint(to_checkpoint(a)), "mem"));
    train_step(a, b);
    train_step(restored, b);
    EXPECT_EQ(encode_checkpoint(to_checkpoint(a)), encode_checkpoint(to_checkpoint(restored)));
    const LoadedModel g = load_generator(to_checkpoint(a));
    EXPECT_TRUE(bit_equal(snapshot(g.net), snapshot(a.generator)));
}

TEST(TrainLoop, ZeroEpochsWritesInitialization) {
    TrainConfig c = tiny_config("gan");
    c.epochs = 0;
    const auto dir = fresh_temp_dir("train_zero");
    TrainResult r = train(c, tiny_dataset(6, 8), {dir, std::nullopt, nullptr});
    ASSERT_EQ(r.checkpoints.size(), 1u);
    EXPECT_EQ(r.checkpoints[0], dir / "checkpoint-0.ckpt");
    EXPECT_EQ(file_bytes(r.checkpoints[0]), encode_checkpoint(to_checkpoint(make_state(c))));
    EXPECT_TRUE(r.metrics.empty());
}

TEST(TrainLoop, RunsAreByteIdentical) {
    TrainConfig c = tiny_config("gan");
    c.epochs = 2;
    c.hflip = true;
    const data::Dataset ds = tiny_dataset(10, 8);
    const auto a = fresh_temp_dir("train_det_a");
    const auto b = fresh_temp_dir("train_det_b");
    TrainResult ra = train(c, ds, {a, std::nullopt, nullptr});
    train(c, ds, {b, std::nullopt, nullptr});
    EXPECT_EQ(ra.state.step, 6);  // 10 images in batches of 4: 3 steps per epoch
    EXPECT_EQ(ra.metrics.size(), 6u);
    EXPECT_EQ(file_bytes(a / "metrics.csv"), file_bytes(b / "metrics.csv"));
    for (const char* name : {"checkpoint-3.ckpt", "checkpoint-6.ckpt"}) {
        ASSERT_TRUE(std::filesystem::exists(a / name)) << name;
        EXPECT_EQ(file_bytes(a / name), file_bytes(b / name)) << name;
    }
    std::ifstream in(a / "metrics.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "step,d_loss,g_adv,g_l1,d_real_acc,d_fake_acc,seconds");
}

TEST(TrainLoop, ResumeMatchesStraightThrough) {
    for (const char* model : {"gan", "baseline"}) {
        TrainConfig c = tiny_config(model);
        c.hflip = true;
        c.log_every = 2;
        const data::Dataset ds = tiny_dataset(10, 8);
        const auto straight = fresh_temp_dir(std::string("resume_straight_") + model);
        const auto split = fresh_temp_dir(std::string("resume_split_") + model);
        c.epochs = 2;
        train(c, ds, {straight, std::nullopt, nullptr});
        c.epochs = 1;
        train(c, ds, {split, std::nullopt, nullptr});
        c.epochs = 2;
        train(c, ds, {split, split / "checkpoint-3.ckpt", nullptr});
        EXPECT_EQ(file_bytes(straight / "checkpoint-6.ckpt"), file_bytes(split / "checkpoint-6.ckpt")) << model;
        EXPECT_EQ(file_bytes(straight / "metrics.csv"), file_bytes(split / "metrics.csv")) << model;
    }
}

TEST(TrainLoop, MidEpochCheckpointResume) {
    TrainConfig c = tiny_config("gan");
    c.epochs = 2;
    c.checkpoint_every = 2;
    const data::Dataset ds = tiny_dataset(10, 8);
    const auto straight = fresh_temp_dir("mid_straight");
    const auto resumed = fresh_temp_dir("mid_resumed");
    TrainResult r = train(c, ds, {straight, std::nullopt, nullptr});
    EXPECT_EQ(r.checkpoints.size(), 3u);  // steps 2, 4, 6
    train(c, ds, {resumed, straight / "checkpoint-2.ckpt", nullptr});
    EXPECT_EQ(file_bytes(straight / "checkpoint-6.ckpt"), file_bytes(resumed / "checkpoint-6.ckpt"));
}

TEST(TrainLoop, ResumeRejectsDifferentConfig) {
    TrainConfig c = tiny_config("gan");
    const data::Dataset ds = tiny_dataset(8, 8);
    const auto dir = fresh_temp_dir("resume_mismatch");
    train(c, ds, {dir, std::nullopt, nullptr});
    c.lambda_l1 = 10;
    EXPECT_THROW(train(c, ds, {dir, dir / "checkpoint-2.ckpt", nullptr}), ConfigError);
}

TEST(TrainLoop, NonFiniteAbortsWithDiagnostic) {
    TrainConfig c = tiny_config("gan");
    data::Dataset ds = tiny_dataset(8, 8);
    for (auto& s : ds.samples) s.lab.a[3] = std::numeric_limits<float>::quiet_NaN();
    const auto dir = fresh_temp_dir("train_nan");
    try {
        train(c, ds, {dir, std::nullopt, nullptr});
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos) << e.what();
    }
    EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint-1-diagnostic.ckpt"));
}

TEST(TrainLoop, Preconditions) {
    TrainConfig c = tiny_config("gan");
    const auto dir = fresh_temp_dir("train_pre");
    data::Dataset empty;
    empty.image_size = 8;
    EXPECT_THROW(train(c, empty, {dir, std::nullopt, nullptr}), DataError);
    EXPECT_THROW(train(c, tiny_dataset(4, 16), {dir, std::nullopt, nullptr}), ConfigError);
    c.batch_size = 9;
    EXPECT_THROW(train(c, tiny_dataset(8, 8), {dir, std::nullopt, nullptr}), ConfigError);
}
