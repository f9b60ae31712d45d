#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "chroma/colorspace.hpp"
#include "chroma/tensor.hpp"

namespace chroma::data {

struct Sample {
    std::string id;
    color::NormalizedSample lab;  // L', a', b' planes in [-1, 1]
    color::Rgb8Image rgb;         // original pixels, kept for evaluation
};

struct Dataset {
    std::string source;
    int image_size = 0;
    std::vector<Sample> samples;
    // One "SKIP <path> <reason>" line per input that could not be used.
    std::vector<std::string> report;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
};

Sample make_sample(std::string id, color::Rgb8Image rgb);

// --- CIFAR-10 binary format ------------------------------------------------
// Each record is 3073 bytes: a label byte, then 1024 red, 1024 green and 1024
// blue bytes, each plane row-major 32 x 32.

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarRecordBytes = 1 + 3 * kCifarSide * kCifarSide;

enum class CifarSplit { train, test, all };

CifarSplit cifar_split_from_string(const std::string& name);

// Labels are ignored. Throws DataError naming `source` and the byte offset of
// the trailing partial record when the length is not a multiple of 3073.
std::vector<color::Rgb8Image> parse_cifar10(std::span<const std::uint8_t> bytes, const std::string& source,
                                            std::size_t limit = 0);

// Reads data_batch_{1..5}.bin (train), test_batch.bin (test) or both from `dir`
// (or its cifar-10-batches-bin subdirectory). `limit` > 0 keeps the first
// `limit` records; `image_size` other than 32 resamples bilinearly.
Dataset load_cifar10(const std::filesystem::path& dir, CifarSplit split = CifarSplit::train,
                     std::size_t limit = 0, int image_size = 32);

// Writes records in the CIFAR-10 binary layout (label byte 0).
std::vector<std::uint8_t> encode_cifar10(std::span<const color::Rgb8Image> images);

// --- image directories -----------------------------------------------------

// Decodes every regular file in `dir` in name order, centre-crops to a square
// and resizes to target_size. Undecodable files are skipped and reported.
// With resize = false an image of any other size is a DataError instead.
Dataset load_image_dir(const std::filesystem::path& dir, int target_size, std::size_t limit = 0,
                       bool resize = true);

// --- batching --------------------------------------------------------------

struct BatchPlan {
    std::uint64_t seed = 0;
    int epoch = 0;
    int batch_size = 1;
    std::vector<std::size_t> permutation;

    std::size_t batch_count() const;
    // Indices of batch i; the final batch may be short.
    std::span<const std::size_t> batch(std::size_t i) const;
};

// Seeded Fisher-Yates permutation of [0, dataset_size), a pure function of
// (seed, epoch). Requires 1 <= batch_size <= dataset_size.
BatchPlan make_plan(std::size_t dataset_size, int batch_size, std::uint64_t seed, int epoch);

struct Batch {
    Tensor L;       // N x 1 x H x W
    Tensor target;  // N x 2 x H x W (a', b') or N x 3 x H x W (L', a', b')
};

// `flip[i]` mirrors sample i horizontally; empty means no flips.
Batch assemble(const Dataset& dataset, std::span<const std::size_t> indices, bool predict_ab,
               const std::vector<bool>& flip = {});

// Every batch of one epoch, materialised. The trainer streams with
// plan.batch(i) + assemble() instead.
std::vector<Batch> batches(const Dataset& dataset, const BatchPlan& plan, bool predict_ab = true);

}  // namespace chroma::data
