#include <Eigen/Core>

#include <algorithm>
#include <cstring>

#include "chroma/errors.hpp"
#include "chroma/ops.hpp"
#include "chroma/parallel.hpp"

namespace chroma::ops {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// Geometry of a strided convolution reading an h x w plane of `channels`
// and producing out_h x out_w positions.
struct ConvGeometry {
    int batch;
    int channels;
    int h, w;
    int k, stride, pad;
    int out_h, out_w;

    std::size_t positions() const { return static_cast<std::size_t>(out_h) * out_w; }
    std::size_t col_rows() const { return static_cast<std::size_t>(channels) * k * k; }
    std::size_t col_cols() const { return positions() * batch; }
};

// col has col_rows() rows and col_cols() columns; column n * P + q holds the
// receptive field of output position q of sample n.
void im2col(const float* x, const ConvGeometry& g, float* col) {
    const std::size_t P = g.positions();
    const std::size_t ld = g.col_cols();
    parallel_for(static_cast<std::size_t>(g.batch), [&](std::size_t n) {
        for (int c = 0; c < g.channels; ++c) {
            const float* plane = x + (n * g.channels + c) * static_cast<std::size_t>(g.h) * g.w;
            for (int ki = 0; ki < g.k; ++ki) {
                for (int kj = 0; kj < g.k; ++kj) {
                    const std::size_t row = (static_cast<std::size_t>(c) * g.k + ki) * g.k + kj;
                    float* dst = col + row * ld + n * P;
                    for (int oy = 0; oy < g.out_h; ++oy) {
                        const int iy = oy * g.stride - g.pad + ki;
                        float* out = dst + static_cast<std::size_t>(oy) * g.out_w;
                        if (iy < 0 || iy >= g.h) {
                            std::fill(out, out + g.out_w, 0.0f);
                            continue;
                        }
                        const float* src = plane + static_cast<std::size_t>(iy) * g.w;
                        for (int ox = 0; ox < g.out_w; ++ox) {
                            const int ix = ox * g.stride - g.pad + kj;
                            out[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0f;
                        }
                    }
                }
            }
        }
    });
}

// Scatter-add inverse of im2col. x must be zeroed by the caller.
void col2im(const float* col, const ConvGeometry& g, float* x) {
    const std::size_t P = g.positions();
    const std::size_t ld = g.col_cols();
    parallel_for(static_cast<std::size_t>(g.batch), [&](std::size_t n) {
        for (int c = 0; c < g.channels; ++c) {
            float* plane = x + (n * g.channels + c) * static_cast<std::size_t>(g.h) * g.w;
            for (int ki = 0; ki < g.k; ++ki) {
                for (int kj = 0; kj < g.k; ++kj) {
                    const std::size_t row = (static_cast<std::size_t>(c) * g.k + ki) * g.k + kj;
                    const float* src = col + row * ld + n * P;
                    for (int oy = 0; oy < g.out_h; ++oy) {
                        const int iy = oy * g.stride - g.pad + ki;
                        if (iy < 0 || iy >= g.h) {
                            continue;
                        }
                        float* dst = plane + static_cast<std::size_t>(iy) * g.w;
                        const float* in = src + static_cast<std::size_t>(oy) * g.out_w;
                        for (int ox = 0; ox < g.out_w; ++ox) {
                            const int ix = ox * g.stride - g.pad + kj;
                            if (ix >= 0 && ix < g.w) {
                                dst[ix] += in[ox];
                            }
                        }
                    }
                }
            }
        }
    });
}

// NCHW -> C x (N * HW) and back.
std::vector<float> to_channel_major(const float* x, int n, int c, std::size_t hw) {
    std::vector<float> out(static_cast<std::size_t>(n) * c * hw);
    const std::size_t ld = static_cast<std::size_t>(n) * hw;
    for (int i = 0; i < n; ++i) {
        for (int ch = 0; ch < c; ++ch) {
            std::memcpy(out.data() + ch * ld + i * hw, x + (static_cast<std::size_t>(i) * c + ch) * hw,
                        hw * sizeof(float));
        }
    }
    return out;
}

void from_channel_major(const float* m, int n, int c, std::size_t hw, float* x) {
    const std::size_t ld = static_cast<std::size_t>(n) * hw;
    for (int i = 0; i < n; ++i) {
        for (int ch = 0; ch < c; ++ch) {
            std::memcpy(x + (static_cast<std::size_t>(i) * c + ch) * hw, m + ch * ld + i * hw,
                        hw * sizeof(float));
        }
    }
}

void check_conv_args(const char* op, const Tensor& input, const Tensor& kernel,
                     const Tensor& bias, int in_axis, int out_axis, int stride, int pad) {
    const auto mismatch = [&](const std::string& why) {
        throw ShapeError(std::string(op) + ": " + why + " (input " + shape_str(input.shape()) +
                         ", kernel " + shape_str(kernel.shape()) + ", bias " +
                         shape_str(bias.shape()) + ")");
    };
    if (input.rank() != 4) {
        mismatch("input must be NCHW");
    }
    if (kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3)) {
        mismatch("kernel must be square 4-d");
    }
    if (kernel.dim(in_axis) != input.dim(1)) {
        mismatch("input channels do not match kernel");
    }
    if (bias.rank() != 1 || bias.dim(0) != kernel.dim(out_axis)) {
        mismatch("bias length does not match output channels");
    }
    if (stride <= 0 || pad < 0) {
        mismatch("stride must be positive and pad non-negative");
    }
}

}  // namespace

Var conv2d(const Var& input, const Var& kernel, const Var& bias, int stride, int pad) {
    const Tensor& x = input.value();
    const Tensor& w = kernel.value();
    check_conv_args("conv2d", x, w, bias.value(), 1, 0, stride, pad);
    const int K = w.dim(2);
    if (x.dim(2) + 2 * pad < K || x.dim(3) + 2 * pad < K) {
        throw ShapeError("conv2d: padded input " + shape_str(x.shape()) +
                         " smaller than kernel " + shape_str(w.shape()));
    }
    const ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), K, stride, pad,
                         (x.dim(2) + 2 * pad - K) / stride + 1, (x.dim(3) + 2 * pad - K) / stride + 1};
    const int O = w.dim(0);

    std::vector<float> col(g.col_rows() * g.col_cols());
    im2col(x.ptr(), g, col.data());
    RowMat out_mat = ConstMatMap(w.ptr(), O, static_cast<Eigen::Index>(g.col_rows())) *
                     ConstMatMap(col.data(), static_cast<Eigen::Index>(g.col_rows()),
                                 static_cast<Eigen::Index>(g.col_cols()));
    const float* b = bias.value().ptr();
    for (int o = 0; o < O; ++o) {
        out_mat.row(o).array() += b[o];
    }
    Tensor out({g.batch, O, g.out_h, g.out_w});
    from_channel_major(out_mat.data(), g.batch, O, g.positions(), out.mutable_ptr());

    return Var::from_op(std::move(out), "conv2d", {input, kernel, bias}, [g, O](Node& self) {
        const Tensor& xv = self.parents[0]->value;
        const Tensor& wv = self.parents[1]->value;
        const auto rows = static_cast<Eigen::Index>(g.col_rows());
        const auto cols = static_cast<Eigen::Index>(g.col_cols());
        std::vector<float> dout = to_channel_major(self.grad->ptr(), g.batch, O, g.positions());
        ConstMatMap dout_mat(dout.data(), O, cols);

        if (self.parents[1]->requires_grad) {
            std::vector<float> col(g.col_rows() * g.col_cols());
            im2col(xv.ptr(), g, col.data());
            Tensor dw(wv.shape());
            MatMap(dw.mutable_ptr(), O, rows).noalias() =
                dout_mat * ConstMatMap(col.data(), rows, cols).transpose();
            self.parents[1]->accumulate(dw);
        }
        if (self.parents[2]->requires_grad) {
            Tensor db({O});
            for (int o = 0; o < O; ++o) {
                // Plain loop: Eigen's vectorised sum order depends on pointer alignment.
                const float* row = dout.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(cols);
                double acc = 0.0;
                for (Eigen::Index i = 0; i < cols; ++i) {
                    acc += row[i];
                }
                db[static_cast<std::size_t>(o)] = static_cast<float>(acc);
            }
            self.parents[2]->accumulate(db);
        }
        if (self.parents[0]->requires_grad) {
            std::vector<float> dcol(g.col_rows() * g.col_cols());
            MatMap(dcol.data(), rows, cols).noalias() =
                ConstMatMap(wv.ptr(), O, rows).transpose() * dout_mat;
            Tensor dx(xv.shape());
            col2im(dcol.data(), g, dx.mutable_ptr());
            self.parents[0]->accumulate(dx);
        }
    });
}

Var conv_transpose2d(const Var& input, const Var& kernel, const Var& bias, int stride, int pad) {
    const Tensor& x = input.value();
    const Tensor& w = kernel.value();
    check_conv_args("conv_transpose2d", x, w, bias.value(), 0, 1, stride, pad);
    const int K = w.dim(2);
    const int I = w.dim(0);
    const int O = w.dim(1);
    const int out_h = (x.dim(2) - 1) * stride - 2 * pad + K;
    const int out_w = (x.dim(3) - 1) * stride - 2 * pad + K;
    if (out_h <= 0 || out_w <= 0) {
        throw ShapeError("conv_transpose2d: empty output for input " + shape_str(x.shape()) +
                         " and kernel " + shape_str(w.shape()));
    }
    // The forward conv whose adjoint this is: reads out_h x out_w, produces H x W.
    const ConvGeometry g{x.dim(0), O, out_h, out_w, K, stride, pad, x.dim(2), x.dim(3)};
    const std::size_t hw = g.positions();
    const auto rows = static_cast<Eigen::Index>(g.col_rows());
    const auto cols = static_cast<Eigen::Index>(g.col_cols());

    std::vector<float> x_mat = to_channel_major(x.ptr(), g.batch, I, hw);
    std::vector<float> col(g.col_rows() * g.col_cols());
    MatMap(col.data(), rows, cols).noalias() =
        ConstMatMap(w.ptr(), I, rows).transpose() * ConstMatMap(x_mat.data(), I, cols);
    Tensor out({g.batch, O, out_h, out_w});
    col2im(col.data(), g, out.mutable_ptr());
    const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
    const float* b = bias.value().ptr();
    for (int n = 0; n < g.batch; ++n) {
        for (int o = 0; o < O; ++o) {
            float* p = out.mutable_ptr() + (static_cast<std::size_t>(n) * O + o) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                p[i] += b[o];
            }
        }
    }

    return Var::from_op(std::move(out), "conv_transpose2d", {input, kernel, bias},
                        [g, I, O, rows, cols, hw, plane](Node& self) {
        const Tensor& xv = self.parents[0]->value;
        const Tensor& wv = self.parents[1]->value;
        const Tensor& dout = *self.grad;
        std::vector<float> dcol(g.col_rows() * g.col_cols());
        im2col(dout.ptr(), g, dcol.data());
        ConstMatMap dcol_mat(dcol.data(), rows, cols);

        if (self.parents[0]->requires_grad) {
            RowMat dx_mat = ConstMatMap(wv.ptr(), I, rows) * dcol_mat;
            Tensor dx(xv.shape());
            from_channel_major(dx_mat.data(), g.batch, I, hw, dx.mutable_ptr());
            self.parents[0]->accumulate(dx);
        }
        if (self.parents[1]->requires_grad) {
            std::vector<float> x_mat = to_channel_major(xv.ptr(), g.batch, I, hw);
            Tensor dw(wv.shape());
            MatMap(dw.mutable_ptr(), I, rows).noalias() =
                ConstMatMap(x_mat.data(), I, cols) * dcol_mat.transpose();
            self.parents[1]->accumulate(dw);
        }
        if (self.parents[2]->requires_grad) {
            Tensor db({O});
            for (int o = 0; o < O; ++o) {
                double acc = 0.0;
                for (int n = 0; n < g.batch; ++n) {
                    const float* p = dout.ptr() + (static_cast<std::size_t>(n) * O + o) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        acc += p[i];
                    }
                }
                db[static_cast<std::size_t>(o)] = static_cast<float>(acc);
            }
            self.parents[2]->accumulate(db);
        }
    });
}

}  // namespace chroma::ops
