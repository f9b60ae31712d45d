#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "chroma/colorspace.hpp"
#include "chroma/dataset.hpp"
#include "chroma/networks.hpp"

namespace chroma::eval {

// Eval-mode forward over the dataset in order. Each result keeps the input
// L' plane and carries the predicted a', b' planes; three-channel models also
// replace L' with their prediction.
std::vector<color::NormalizedSample> predict(nets::Network& net, const data::Dataset& dataset, bool predict_ab,
                                             int batch_size = 64);

// L' only, for a single image already at the network's size.
color::NormalizedSample predict_one(nets::Network& net, const color::NormalizedSample& input, bool predict_ab);

color::Rgb8Image to_rgb(const color::NormalizedSample& sample);

// The L' plane with zero chroma.
color::Rgb8Image gray_image(const color::NormalizedSample& sample);

// +infinity when the images are identical.
double psnr(const color::Rgb8Image& a, const color::Rgb8Image& b);

struct ImageScore {
    std::string id;
    double ab_mae = 0.0;  // mean |a' - a'_true| and |b' - b'_true|, normalised units
    double psnr = 0.0;    // dB on 8-bit RGB, peak 255
};

struct EvalReport {
    std::vector<ImageScore> images;
    double mean_ab_mae = 0.0;
    double mean_psnr = 0.0;  // exact mean of per-image values; +inf if any is
    std::size_t count = 0;
};

// Scores predictions against the dataset's ground truth. The RGB reference is
// the ground-truth Lab converted back to sRGB, so a perfect prediction scores
// exactly +inf.
EvalReport evaluate(const data::Dataset& dataset, const std::vector<color::NormalizedSample>& predictions);

// "inf" for infinite values, otherwise fixed with six decimals.
std::string format_metric(double v);

inline constexpr const char* kEvalHeader = "id,count,ab_mae,psnr_db";

// One row per image, then an "ALL" row with the aggregate.
std::string eval_csv(const EvalReport& report);
void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);

// Row-major grid of equal-size tiles separated by 2-pixel white lines.
color::Rgb8Image montage(const std::vector<std::vector<color::Rgb8Image>>& rows);

inline constexpr int kMontageGap = 2;

}  // namespace chroma::eval
