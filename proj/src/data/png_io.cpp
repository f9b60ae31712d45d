#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include "chroma/errors.hpp"
#include "chroma/image_io.hpp"

namespace chroma::io {

using color::Rgb8Image;

Rgb8Image read_png(const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&image, path.c_str()) == 0) {
        throw DataError("cannot decode PNG " + path.string() + ": " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    Rgb8Image out(static_cast<int>(image.height), static_cast<int>(image.width));
    if (png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr) == 0) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw DataError("cannot decode PNG " + path.string() + ": " + msg);
    }
    return out;
}

std::vector<std::uint8_t> encode_png(const Rgb8Image& img) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (png_image_write_get_memory_size(image, size, 0, img.pixels.data(), 0, nullptr) == 0) {
        throw DataError(std::string("PNG encode failed: ") + image.message);
    }
    std::vector<std::uint8_t> bytes(size);
    if (png_image_write_to_memory(&image, bytes.data(), &size, 0, img.pixels.data(), 0, nullptr) == 0) {
        throw DataError(std::string("PNG encode failed: ") + image.message);
    }
    bytes.resize(size);
    return bytes;
}

void write_png(const std::filesystem::path& path, const Rgb8Image& image) {
    const auto bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
}

Rgb8Image read_image(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") {
        return read_png(path);
    }
    if (ext == ".jpg" || ext == ".jpeg") {
        if (!jpeg_supported()) {
            throw DataError("JPEG support not compiled in: " + path.string());
        }
        return read_jpeg(path);
    }
    throw DataError("unsupported image format: " + path.string());
}

Rgb8Image center_crop_square(const Rgb8Image& image) {
    const int side = std::min(image.height, image.width);
    const int y0 = (image.height - side) / 2;
    const int x0 = (image.width - side) / 2;
    Rgb8Image out(side, side);
    for (int y = 0; y < side; ++y) {
        std::memcpy(out.at(y, 0), image.at(y0 + y, x0), static_cast<std::size_t>(side) * 3);
    }
    return out;
}

Rgb8Image resize_bilinear(const Rgb8Image& image, int height, int width) {
    if (height <= 0 || width <= 0 || image.height <= 0 || image.width <= 0) {
        throw DataError("resize_bilinear: empty image");
    }
    const auto coord = [](int i, int in, int out) {
        if (out == 1) {
            return (in - 1) / 2.0;
        }
        return static_cast<double>(i) * (in - 1) / (out - 1);
    };
    Rgb8Image out(height, width);
    for (int y = 0; y < height; ++y) {
        const double sy = coord(y, image.height, height);
        const int y0 = static_cast<int>(std::floor(sy));
        const int y1 = std::min(y0 + 1, image.height - 1);
        const double fy = sy - y0;
        for (int x = 0; x < width; ++x) {
            const double sx = coord(x, image.width, width);
            const int x0 = static_cast<int>(std::floor(sx));
            const int x1 = std::min(x0 + 1, image.width - 1);
            const double fx = sx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = image.at(y0, x0)[c] * (1.0 - fx) + image.at(y0, x1)[c] * fx;
                const double bottom = image.at(y1, x0)[c] * (1.0 - fx) + image.at(y1, x1)[c] * fx;
                const double v = top * (1.0 - fy) + bottom * fy;
                out.at(y, x)[c] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
            }
        }
    }
    return out;
}

}  // namespace chroma::io
