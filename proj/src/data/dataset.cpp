#include "chroma/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>

#include "chroma/errors.hpp"
#include "chroma/image_io.hpp"
#include "chroma/parallel.hpp"

namespace chroma::data {

namespace fs = std::filesystem;

Sample make_sample(std::string id, color::Rgb8Image rgb) {
    Sample s;
    s.id = std::move(id);
    s.lab = color::normalize(color::rgb_to_lab(rgb));
    s.rgb = std::move(rgb);
    return s;
}

CifarSplit cifar_split_from_string(const std::string& name) {
    if (name == "train") return CifarSplit::train;
    if (name == "test") return CifarSplit::test;
    if (name == "all") return CifarSplit::all;
    throw ConfigError("unknown CIFAR-10 split '" + name + "' (expected train, test or all)");
}

std::vector<color::Rgb8Image> parse_cifar10(std::span<const std::uint8_t> bytes, const std::string& source,
                                            std::size_t limit) {
    if (bytes.size() % kCifarRecordBytes != 0) {
        const std::size_t offset = bytes.size() - bytes.size() % kCifarRecordBytes;
        throw DataError("corrupt CIFAR-10 file " + source + ": " + std::to_string(bytes.size()) +
                        " bytes is not a multiple of " + std::to_string(kCifarRecordBytes) +
                        "; partial record at offset " + std::to_string(offset));
    }
    std::size_t count = bytes.size() / kCifarRecordBytes;
    if (limit > 0) {
        count = std::min(count, limit);
    }
    constexpr std::size_t plane = kCifarSide * kCifarSide;
    std::vector<color::Rgb8Image> images;
    images.reserve(count);
    for (std::size_t rec = 0; rec < count; ++rec) {
        const std::uint8_t* base = bytes.data() + rec * kCifarRecordBytes + 1;
        color::Rgb8Image img(kCifarSide, kCifarSide);
        for (std::size_t p = 0; p < plane; ++p) {
            for (std::size_t ch = 0; ch < 3; ++ch) {
                img.pixels[p * 3 + ch] = base[ch * plane + p];
            }
        }
        images.push_back(std::move(img));
    }
    return images;
}

std::vector<std::uint8_t> encode_cifar10(std::span<const color::Rgb8Image> images) {
    constexpr std::size_t plane = kCifarSide * kCifarSide;
    std::vector<std::uint8_t> bytes;
    bytes.reserve(images.size() * kCifarRecordBytes);
    for (const auto& img : images) {
        if (img.height != static_cast<int>(kCifarSide) || img.width != static_cast<int>(kCifarSide)) {
            throw DataError("CIFAR-10 records must be 32x32");
        }
        bytes.push_back(0);
        for (std::size_t ch = 0; ch < 3; ++ch) {
            for (std::size_t p = 0; p < plane; ++p) {
                bytes.push_back(img.pixels[p * 3 + ch]);
            }
        }
    }
    return bytes;
}

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Dataset load_cifar10(const fs::path& dir, CifarSplit split, std::size_t limit, int image_size) {
    if (!fs::is_directory(dir)) {
        throw DataError("CIFAR-10 directory not found: " + dir.string());
    }
    fs::path root = dir;
    if (!fs::exists(root / "data_batch_1.bin") && !fs::exists(root / "test_batch.bin") &&
        fs::is_directory(dir / "cifar-10-batches-bin")) {
        root = dir / "cifar-10-batches-bin";
    }
    std::vector<fs::path> files;
    if (split != CifarSplit::test) {
        for (int i = 1; i <= 5; ++i) {
            const fs::path p = root / ("data_batch_" + std::to_string(i) + ".bin");
            if (fs::exists(p)) files.push_back(p);
        }
    }
    if (split != CifarSplit::train) {
        const fs::path p = root / "test_batch.bin";
        if (fs::exists(p)) files.push_back(p);
    }
    if (files.empty()) {
        throw DataError("no CIFAR-10 batch files (data_batch_N.bin / test_batch.bin) in " + dir.string());
    }

    Dataset ds;
    ds.source = "cifar10:" + root.string();
    ds.image_size = image_size;
    for (const auto& file : files) {
        const std::size_t remaining = limit > 0 ? limit - ds.samples.size() : 0;
        if (limit > 0 && remaining == 0) break;
        const auto bytes = read_file(file);
        auto images = parse_cifar10(bytes, file.string(), remaining);
        const std::size_t first = ds.samples.size();
        ds.samples.resize(first + images.size());
        parallel_for(images.size(), [&](std::size_t i) {
            color::Rgb8Image img = std::move(images[i]);
            if (image_size != static_cast<int>(kCifarSide)) {
                img = io::resize_bilinear(img, image_size, image_size);
            }
            ds.samples[first + i] = make_sample(file.filename().string() + "#" + std::to_string(i), std::move(img));
        });
    }
    return ds;
}

Dataset load_image_dir(const fs::path& dir, int target_size, std::size_t limit, bool resize) {
    if (!fs::is_directory(dir)) {
        throw DataError("image directory not found: " + dir.string());
    }
    if (target_size <= 0) {
        throw ConfigError("target image size must be positive");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().filename().string().front() != '.') {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

    std::vector<std::optional<Sample>> decoded(files.size());
    std::vector<std::string> reasons(files.size());
    std::vector<std::string> wrong_size(files.size());
    parallel_for(files.size(), [&](std::size_t i) {
        try {
            color::Rgb8Image img = io::read_image(files[i]);
            if (!resize && (img.height != target_size || img.width != target_size)) {
                wrong_size[i] = files[i].string() + " is " + std::to_string(img.width) + "x" +
                                std::to_string(img.height) + " but the model requires " +
                                std::to_string(target_size) + "x" + std::to_string(target_size);
                return;
            }
            img = io::resize_bilinear(io::center_crop_square(img), target_size, target_size);
            decoded[i] = make_sample(files[i].filename().string(), std::move(img));
        } catch (const Error& e) {
            reasons[i] = e.what();
        }
    });

    for (const auto& msg : wrong_size) {
        if (!msg.empty()) throw DataError(msg + " (pass --resize to resample)");
    }

    Dataset ds;
    ds.source = "images:" + dir.string();
    ds.image_size = target_size;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (!decoded[i]) {
            ds.report.push_back("SKIP " + files[i].string() + " " + reasons[i]);
            continue;
        }
        if (limit == 0 || ds.samples.size() < limit) {
            ds.samples.push_back(std::move(*decoded[i]));
        }
    }
    return ds;
}

std::size_t BatchPlan::batch_count() const {
    const auto bs = static_cast<std::size_t>(batch_size);
    return (permutation.size() + bs - 1) / bs;
}

std::span<const std::size_t> BatchPlan::batch(std::size_t i) const {
    const auto bs = static_cast<std::size_t>(batch_size);
    const std::size_t begin = i * bs;
    if (begin >= permutation.size()) {
        throw Error("batch index " + std::to_string(i) + " out of range");
    }
    return std::span<const std::size_t>(permutation).subspan(begin, std::min(bs, permutation.size() - begin));
}

BatchPlan make_plan(std::size_t dataset_size, int batch_size, std::uint64_t seed, int epoch) {
    if (dataset_size == 0) {
        throw DataError("cannot batch an empty dataset");
    }
    if (batch_size < 1 || static_cast<std::size_t>(batch_size) > dataset_size) {
        throw ConfigError("batch size " + std::to_string(batch_size) + " must be in [1, " +
                          std::to_string(dataset_size) + "]");
    }
    BatchPlan plan{seed, epoch, batch_size, std::vector<std::size_t>(dataset_size)};
    for (std::size_t i = 0; i < dataset_size; ++i) {
        plan.permutation[i] = i;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x5eedu};
    std::mt19937_64 rng(seq);
    for (std::size_t i = dataset_size - 1; i > 0; --i) {
        // Unbiased draw in [0, i] by rejection.
        const std::uint64_t bound = i + 1;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t r;
        do {
            r = rng();
        } while (r >= limit);
        std::swap(plan.permutation[i], plan.permutation[r % bound]);
    }
    return plan;
}

Batch assemble(const Dataset& dataset, std::span<const std::size_t> indices, bool predict_ab,
               const std::vector<bool>& flip) {
    if (indices.empty()) {
        throw Error("assemble: empty batch");
    }
    const int n = static_cast<int>(indices.size());
    const int s = dataset.image_size;
    const std::size_t plane = static_cast<std::size_t>(s) * s;
    const int target_channels = predict_ab ? 2 : 3;
    Batch b{Tensor({n, 1, s, s}), Tensor({n, target_channels, s, s})};
    for (int k = 0; k < n; ++k) {
        const Sample& sample = dataset.samples.at(indices[static_cast<std::size_t>(k)]);
        const bool mirror = !flip.empty() && flip[static_cast<std::size_t>(k)];
        const auto copy_plane = [&](const std::vector<float>& src, float* dst) {
            for (int y = 0; y < s; ++y) {
                for (int x = 0; x < s; ++x) {
                    dst[y * s + x] = src[static_cast<std::size_t>(y) * s + (mirror ? s - 1 - x : x)];
                }
            }
        };
        copy_plane(sample.lab.L, b.L.mutable_ptr() + k * plane);
        float* t = b.target.mutable_ptr() + static_cast<std::size_t>(k) * target_channels * plane;
        if (!predict_ab) {
            copy_plane(sample.lab.L, t);
            t += plane;
        }
        copy_plane(sample.lab.a, t);
        copy_plane(sample.lab.b, t + plane);
    }
    return b;
}

std::vector<Batch> batches(const Dataset& dataset, const BatchPlan& plan, bool predict_ab) {
    if (dataset.empty()) {
        throw DataError("cannot batch an empty dataset");
    }
    std::vector<Batch> out;
    out.reserve(plan.batch_count());
    for (std::size_t i = 0; i < plan.batch_count(); ++i) {
        out.push_back(assemble(dataset, plan.batch(i), predict_ab));
    }
    return out;
}

}  // namespace chroma::data
