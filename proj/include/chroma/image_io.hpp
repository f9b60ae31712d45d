#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "chroma/colorspace.hpp"

namespace chroma::io {

// PNG of any colour type, converted to 8-bit RGB (alpha composited on black).
// Throws DataError with the path on failure.
color::Rgb8Image read_png(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const color::Rgb8Image& image);
void write_png(const std::filesystem::path& path, const color::Rgb8Image& image);

bool jpeg_supported();
color::Rgb8Image read_jpeg(const std::filesystem::path& path);

// Dispatches on the file extension (.png, .jpg, .jpeg; case-insensitive).
color::Rgb8Image read_image(const std::filesystem::path& path);

color::Rgb8Image center_crop_square(const color::Rgb8Image& image);

// Bilinear resampling with corner-aligned sample grids: output pixel i maps to
// input coordinate i * (in - 1) / (out - 1), so edge pixels are preserved.
color::Rgb8Image resize_bilinear(const color::Rgb8Image& image, int height, int width);

}  // namespace chroma::io
