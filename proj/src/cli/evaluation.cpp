#include "chroma/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "chroma/errors.hpp"

namespace chroma::eval {

namespace {

void copy_prediction(const Tensor& out, std::size_t k, bool predict_ab, color::NormalizedSample& s) {
    const std::size_t plane = s.L.size();
    const int channels = predict_ab ? 2 : 3;
    const float* base = out.ptr() + k * channels * plane;
    if (!predict_ab) {
        s.L.assign(base, base + plane);
        base += plane;
    }
    s.a.assign(base, base + plane);
    s.b.assign(base + plane, base + 2 * plane);
}

}  // namespace

std::vector<color::NormalizedSample> predict(nets::Network& net, const data::Dataset& dataset, bool predict_ab,
                                             int batch_size) {
    std::vector<color::NormalizedSample> out;
    out.reserve(dataset.size());
    std::vector<std::size_t> idx;
    for (std::size_t begin = 0; begin < dataset.size(); begin += static_cast<std::size_t>(batch_size)) {
        idx.clear();
        for (std::size_t i = begin; i < std::min(dataset.size(), begin + static_cast<std::size_t>(batch_size)); ++i) {
            idx.push_back(i);
        }
        const data::Batch b = data::assemble(dataset, idx, predict_ab);
        const Var pred = net.forward(Var::constant(b.L), Mode::eval);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            color::NormalizedSample s = dataset.samples[idx[k]].lab;
            copy_prediction(pred.value(), k, predict_ab, s);
            out.push_back(std::move(s));
        }
    }
    return out;
}

color::NormalizedSample predict_one(nets::Network& net, const color::NormalizedSample& input, bool predict_ab) {
    Tensor L({1, 1, input.height, input.width}, input.L);
    const Var pred = net.forward(Var::constant(std::move(L)), Mode::eval);
    color::NormalizedSample s = input;
    copy_prediction(pred.value(), 0, predict_ab, s);
    return s;
}

color::Rgb8Image to_rgb(const color::NormalizedSample& sample) { return color::lab_to_rgb(color::denormalize(sample)); }

color::Rgb8Image gray_image(const color::NormalizedSample& sample) {
    color::NormalizedSample gray = sample;
    std::fill(gray.a.begin(), gray.a.end(), 0.0f);
    std::fill(gray.b.begin(), gray.b.end(), 0.0f);
    return to_rgb(gray);
}

double psnr(const color::Rgb8Image& a, const color::Rgb8Image& b) {
    if (a.height != b.height || a.width != b.width) {
        throw ShapeError("psnr: image sizes differ");
    }
    double se = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
        se += d * d;
    }
    if (se == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    const double mse = se / static_cast<double>(a.pixels.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

EvalReport evaluate(const data::Dataset& dataset, const std::vector<color::NormalizedSample>& predictions) {
    if (predictions.size() != dataset.size()) {
        throw ShapeError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(dataset.size()) + " samples");
    }
    if (dataset.empty()) {
        throw DataError("cannot evaluate an empty dataset");
    }
    EvalReport report;
    report.count = dataset.size();
    double mae_sum = 0.0, psnr_sum = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& truth = dataset.samples[i].lab;
        const auto& pred = predictions[i];
        double acc = 0.0;
        for (std::size_t p = 0; p < truth.size(); ++p) {
            acc += std::fabs(static_cast<double>(pred.a[p]) - truth.a[p]);
            acc += std::fabs(static_cast<double>(pred.b[p]) - truth.b[p]);
        }
        ImageScore score{dataset.samples[i].id, acc / static_cast<double>(2 * truth.size()),
                         psnr(to_rgb(pred), to_rgb(truth))};
        mae_sum += score.ab_mae;
        psnr_sum += score.psnr;
        report.images.push_back(std::move(score));
    }
    report.mean_ab_mae = mae_sum / static_cast<double>(report.count);
    report.mean_psnr = psnr_sum / static_cast<double>(report.count);
    return report;
}

std::string format_metric(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string eval_csv(const EvalReport& report) {
    std::string out = std::string(kEvalHeader) + "\n";
    for (const auto& s : report.images) {
        out += s.id + ",1," + format_metric(s.ab_mae) + "," + format_metric(s.psnr) + "\n";
    }
    out += "ALL," + std::to_string(report.count) + "," + format_metric(report.mean_ab_mae) + "," +
           format_metric(report.mean_psnr) + "\n";
    return out;
}

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << eval_csv(report);
    if (!out) throw DataError("failed writing " + path.string());
}

color::Rgb8Image montage(const std::vector<std::vector<color::Rgb8Image>>& rows) {
    if (rows.empty() || rows[0].empty()) {
        throw Error("montage: no tiles");
    }
    const int th = rows[0][0].height, tw = rows[0][0].width;
    const int n_cols = static_cast<int>(rows[0].size());
    const int n_rows = static_cast<int>(rows.size());
    color::Rgb8Image grid(n_rows * th + (n_rows - 1) * kMontageGap, n_cols * tw + (n_cols - 1) * kMontageGap);
    std::fill(grid.pixels.begin(), grid.pixels.end(), 255);
    for (int r = 0; r < n_rows; ++r) {
        if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != n_cols) {
            throw Error("montage: ragged rows");
        }
        for (int c = 0; c < n_cols; ++c) {
            const auto& tile = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            if (tile.height != th || tile.width != tw) {
                throw Error("montage: tiles differ in size");
            }
            const int y0 = r * (th + kMontageGap), x0 = c * (tw + kMontageGap);
            for (int y = 0; y < th; ++y) {
                std::copy_n(tile.at(y, 0), 3 * tw, grid.at(y0 + y, x0));
            }
        }
    }
    return grid;
}

}  // namespace chroma::eval
