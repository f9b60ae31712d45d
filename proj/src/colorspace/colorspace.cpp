#include "chroma/colorspace.hpp"

#include <algorithm>
#include <cmath>

namespace chroma::color {

namespace {

// D65 reference white and the sRGB primaries matrices.
constexpr double kXn = 0.95047;
constexpr double kYn = 1.00000;
constexpr double kZn = 1.08883;

constexpr double kRgbToXyz[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                                    {0.2126729, 0.7151522, 0.0721750},
                                    {0.0193339, 0.1191920, 0.9503041}};
constexpr double kXyzToRgb[3][3] = {{3.2404542, -1.5371385, -0.4985314},
                                    {-0.9692660, 1.8760108, 0.0415560},
                                    {0.0556434, -0.2040259, 1.0572252}};

constexpr double kDelta = 6.0 / 29.0;

double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double v) {
    return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) {
    return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_inv(double t) {
    return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0);
}

std::uint8_t to_byte(double v) {
    const double scaled = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
    return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

}  // namespace

LabImage::LabImage(int h, int w)
    : height(h), width(w), L(static_cast<std::size_t>(h) * w), a(L.size()), b(L.size()) {}

Lab srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const double lin[3] = {srgb_to_linear(r / 255.0), srgb_to_linear(g / 255.0),
                           srgb_to_linear(b / 255.0)};
    double xyz[3];
    for (int i = 0; i < 3; ++i) {
        xyz[i] = kRgbToXyz[i][0] * lin[0] + kRgbToXyz[i][1] * lin[1] + kRgbToXyz[i][2] * lin[2];
    }
    const double fx = lab_f(xyz[0] / kXn);
    const double fy = lab_f(xyz[1] / kYn);
    const double fz = lab_f(xyz[2] / kZn);
    return {std::clamp(116.0 * fy - 16.0, 0.0, 100.0), 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::array<std::uint8_t, 3> lab_to_srgb(const Lab& lab) {
    // L* = 0 means Y = 0, which only black realises.
    if (lab.L <= 0.0) {
        return {0, 0, 0};
    }
    const double fy = (lab.L + 16.0) / 116.0;
    const double fx = fy + lab.a / 500.0;
    const double fz = fy - lab.b / 200.0;
    const double xyz[3] = {kXn * lab_f_inv(fx), kYn * lab_f_inv(fy), kZn * lab_f_inv(fz)};
    std::array<std::uint8_t, 3> out{};
    for (int i = 0; i < 3; ++i) {
        const double lin = kXyzToRgb[i][0] * xyz[0] + kXyzToRgb[i][1] * xyz[1] + kXyzToRgb[i][2] * xyz[2];
        out[static_cast<std::size_t>(i)] = to_byte(linear_to_srgb(std::clamp(lin, 0.0, 1.0)));
    }
    return out;
}

LabImage rgb_to_lab(const Rgb8Image& rgb) {
    LabImage lab(rgb.height, rgb.width);
    for (std::size_t i = 0; i < lab.size(); ++i) {
        const std::uint8_t* p = rgb.pixels.data() + i * 3;
        const Lab v = srgb_to_lab(p[0], p[1], p[2]);
        lab.L[i] = static_cast<float>(v.L);
        lab.a[i] = static_cast<float>(v.a);
        lab.b[i] = static_cast<float>(v.b);
    }
    return lab;
}

Rgb8Image lab_to_rgb(const LabImage& lab) {
    Rgb8Image rgb(lab.height, lab.width);
    for (std::size_t i = 0; i < lab.size(); ++i) {
        const auto px = lab_to_srgb({lab.L[i], lab.a[i], lab.b[i]});
        std::copy(px.begin(), px.end(), rgb.pixels.begin() + static_cast<std::ptrdiff_t>(i * 3));
    }
    return rgb;
}

float normalize_l(float L) { return std::clamp(L / 50.0f - 1.0f, -1.0f, 1.0f); }
float normalize_ab(float ab) { return std::clamp(static_cast<float>(ab / kAbScale), -1.0f, 1.0f); }
float denormalize_l(float l_norm) { return (l_norm + 1.0f) * 50.0f; }
float denormalize_ab(float ab_norm) { return static_cast<float>(ab_norm * kAbScale); }

NormalizedSample normalize(const LabImage& lab) {
    NormalizedSample s{lab.height, lab.width, {}, {}, {}};
    s.L.resize(lab.size());
    s.a.resize(lab.size());
    s.b.resize(lab.size());
    for (std::size_t i = 0; i < lab.size(); ++i) {
        s.L[i] = normalize_l(lab.L[i]);
        s.a[i] = normalize_ab(lab.a[i]);
        s.b[i] = normalize_ab(lab.b[i]);
    }
    return s;
}

LabImage denormalize(const NormalizedSample& sample) {
    LabImage lab(sample.height, sample.width);
    for (std::size_t i = 0; i < lab.size(); ++i) {
        lab.L[i] = denormalize_l(sample.L[i]);
        lab.a[i] = denormalize_ab(sample.a[i]);
        lab.b[i] = denormalize_ab(sample.b[i]);
    }
    return lab;
}

}  // namespace chroma::color
