#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace chroma::color {

// Interleaved 8-bit RGB, row-major, height x width x 3.
struct Rgb8Image {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;

    Rgb8Image() = default;
    Rgb8Image(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0) {}

    std::uint8_t* at(int y, int x) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* at(int y, int x) const {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    bool operator==(const Rgb8Image&) const = default;
};

struct Lab {
    double L = 0.0;
    double a = 0.0;
    double b = 0.0;
};

// Planar CIE L*a*b* (D65). L in [0, 100]; a, b roughly [-110, 110].
struct LabImage {
    int height = 0;
    int width = 0;
    std::vector<float> L, a, b;

    LabImage() = default;
    LabImage(int h, int w);
    std::size_t size() const { return L.size(); }
};

// Network ranges: L' = L / 50 - 1 and ab' = ab / 110, all clamped to [-1, 1].
struct NormalizedSample {
    int height = 0;
    int width = 0;
    std::vector<float> L, a, b;

    std::size_t size() const { return L.size(); }
};

inline constexpr double kAbScale = 110.0;

Lab srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b);
// Out-of-gamut results are clamped per channel; rounding is half-up.
std::array<std::uint8_t, 3> lab_to_srgb(const Lab& lab);

LabImage rgb_to_lab(const Rgb8Image& rgb);
Rgb8Image lab_to_rgb(const LabImage& lab);

float normalize_l(float L);
float normalize_ab(float ab);
float denormalize_l(float l_norm);
float denormalize_ab(float ab_norm);

NormalizedSample normalize(const LabImage& lab);
LabImage denormalize(const NormalizedSample& sample);

}  // namespace chroma::color
