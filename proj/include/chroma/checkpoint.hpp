#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "chroma/tensor.hpp"

namespace chroma::training {

// On-disk layout, all integers little-endian:
//
//   "CGAN"                      4-byte magic
//   u32 version                 currently 1
//   u32 n, n bytes              UTF-8 JSON header: config, step, model kind,
//                               optimizer step counts
//   u32 count                   number of tensor entries, then per entry:
//     u32 n, n bytes            name
//     u8 rank, rank x u32       dimensions
//     numel x f32               values, row-major
//   u32 n, n bytes              RNG state as text
//
// Nothing follows the RNG state.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor value;
};

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    nlohmann::json header = nlohmann::json::object();
    std::vector<NamedTensor> tensors;
    std::string rng_state;

    // Throws DataError when absent.
    const Tensor& tensor(const std::string& name) const;
    bool has(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);

// Throws DataError naming `source` on bad magic, unsupported version,
// truncation or trailing bytes.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& source);

// Writes through a temporary file and renames, so a crash never leaves a
// half-written checkpoint under the final name.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace chroma::training
