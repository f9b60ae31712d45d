#pragma once

// Direct, loop-only reference implementations used as test oracles. They
// share no code with the im2col/GEMM paths in the library.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "chroma/autodiff.hpp"
#include "chroma/tensor.hpp"

namespace chroma::testing {

inline Tensor direct_conv2d(const Tensor& x, const Tensor& k, const Tensor& b, int stride, int pad) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = k.dim(0), K = k.dim(2);
    const int OH = (H + 2 * pad - K) / stride + 1;
    const int OW = (W + 2 * pad - K) / stride + 1;
    Tensor out({N, O, OH, OW});
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o)
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                    double acc = b[o];
                    for (int c = 0; c < C; ++c)
                        for (int ki = 0; ki < K; ++ki)
                            for (int kj = 0; kj < K; ++kj) {
                                const int iy = oy * stride - pad + ki;
                                const int ix = ox * stride - pad + kj;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += static_cast<double>(x[((n * C + c) * H + iy) * W + ix]) *
                                       k[((o * C + c) * K + ki) * K + kj];
                            }
                    out[((n * O + o) * OH + oy) * OW + ox] = static_cast<float>(acc);
                }
    return out;
}

// Scatter form: every input pixel stamps the kernel onto the output.
inline Tensor direct_conv_transpose2d(const Tensor& x, const Tensor& k, const Tensor& b, int stride,
                                      int pad) {
    const int N = x.dim(0), I = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int O = k.dim(1), K = k.dim(2);
    const int OH = (H - 1) * stride - 2 * pad + K;
    const int OW = (W - 1) * stride - 2 * pad + K;
    std::vector<double> acc(static_cast<std::size_t>(N) * O * OH * OW, 0.0);
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < I; ++i)
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx)
                    for (int o = 0; o < O; ++o)
                        for (int ki = 0; ki < K; ++ki)
                            for (int kj = 0; kj < K; ++kj) {
                                const int oy = y * stride - pad + ki;
                                const int ox = xx * stride - pad + kj;
                                if (oy < 0 || oy >= OH || ox < 0 || ox >= OW) continue;
                                acc[((n * O + o) * OH + oy) * OW + ox] +=
                                    static_cast<double>(x[((n * I + i) * H + y) * W + xx]) *
                                    k[((i * O + o) * K + ki) * K + kj];
                            }
    Tensor out({N, O, OH, OW});
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o)
            for (int p = 0; p < OH * OW; ++p)
                out[(n * O + o) * OH * OW + p] = static_cast<float>(acc[(n * O + o) * OH * OW + p] + b[o]);
    return out;
}

// Central-difference gradient of a scalar function of one tensor. The
// function is evaluated in float through the library forward path; the
// difference quotient is formed in double.
inline Tensor central_difference(const std::function<double(const Tensor&)>& f, const Tensor& at,
                                 float h = 1e-3f) {
    Tensor grad(at.shape());
    Tensor probe = at;
    for (std::size_t i = 0; i < at.numel(); ++i) {
        const float orig = probe[i];
        probe[i] = orig + h;
        const double up = f(probe);
        probe[i] = orig - h;
        const double down = f(probe);
        probe[i] = orig;
        grad[i] = static_cast<float>((up - down) / (2.0 * static_cast<double>(h)));
    }
    return grad;
}

// max |a - b| / max(|a|_inf, |b|_inf, tiny)
inline double relative_error(const Tensor& a, const Tensor& b) {
    double diff = 0.0, scale = 1e-12;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        diff = std::max(diff, std::fabs(static_cast<double>(a[i]) - b[i]));
        scale = std::max({scale, std::fabs(static_cast<double>(a[i])), std::fabs(static_cast<double>(b[i]))});
    }
    return diff / scale;
}

// Values in [lo, hi] kept at least `gap` away from zero, for ops with a kink at 0.
inline Tensor random_away_from_zero(const Shape& shape, std::mt19937_64& rng, float lo, float hi,
                                    float gap) {
    std::uniform_real_distribution<float> dist(lo, hi);
    Tensor t(shape);
    for (auto& v : t.mutable_data()) {
        do {
            v = dist(rng);
        } while (std::fabs(v) < gap);
    }
    return t;
}

}  // namespace chroma::testing
