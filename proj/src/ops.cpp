#include "rmap/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "rmap/kernels.hpp"
#include "rmap/threadpool.hpp"

namespace rmap {
namespace {

void check_nchw(const Tensor& t, const char* op, const char* role) {
    if (t.shape().rank() != 4)
        fail(std::string(op) + ": " + role + " must be NCHW, got shape " + t.shape().str());
}

struct ConvGeom {
    std::int64_t n, c_in, h, w;
    std::int64_t c_out, k;
    std::int64_t stride, pad, dil;
    std::int64_t h_out, w_out;
};

// cols layout: [C_in*K*K rows, H_out*W_out cols]
void im2col(const float* img, const ConvGeom& g, float* cols) {
    const std::int64_t hw_out = g.h_out * g.w_out;
    for (std::int64_t c = 0; c < g.c_in; ++c) {
        const float* src = img + c * g.h * g.w;
        for (std::int64_t ki = 0; ki < g.k; ++ki) {
            for (std::int64_t kj = 0; kj < g.k; ++kj) {
                float* row = cols + ((c * g.k + ki) * g.k + kj) * hw_out;
                for (std::int64_t oy = 0; oy < g.h_out; ++oy) {
                    const std::int64_t iy = oy * g.stride - g.pad + ki * g.dil;
                    float* dst = row + oy * g.w_out;
                    if (iy < 0 || iy >= g.h) {
                        std::fill(dst, dst + g.w_out, 0.0f);
                        continue;
                    }
                    const float* srow = src + iy * g.w;
                    const std::int64_t ix0 = -g.pad + kj * g.dil;
                    if (g.stride == 1) {
                        const std::int64_t lo = std::max<std::int64_t>(0, -ix0);
                        const std::int64_t hi = std::min<std::int64_t>(g.w_out, g.w - ix0);
                        if (lo > 0) std::fill(dst, dst + std::min(lo, g.w_out), 0.0f);
                        if (hi > lo) std::memcpy(dst + lo, srow + ix0 + lo, (hi - lo) * sizeof(float));
                        if (hi < g.w_out) std::fill(dst + std::max<std::int64_t>(hi, 0), dst + g.w_out, 0.0f);
                    } else {
                        for (std::int64_t ox = 0; ox < g.w_out; ++ox) {
                            const std::int64_t ix = ix0 + ox * g.stride;
                            dst[ox] = (ix >= 0 && ix < g.w) ? srow[ix] : 0.0f;
                        }
                    }
                }
            }
        }
    }
}

// Scatter-accumulate the col matrix back into an image (adjoint of im2col).
void col2im_acc(const float* cols, const ConvGeom& g, float* img) {
    const std::int64_t hw_out = g.h_out * g.w_out;
    for (std::int64_t c = 0; c < g.c_in; ++c) {
        float* dst = img + c * g.h * g.w;
        for (std::int64_t ki = 0; ki < g.k; ++ki) {
            for (std::int64_t kj = 0; kj < g.k; ++kj) {
                const float* row = cols + ((c * g.k + ki) * g.k + kj) * hw_out;
                for (std::int64_t oy = 0; oy < g.h_out; ++oy) {
                    const std::int64_t iy = oy * g.stride - g.pad + ki * g.dil;
                    if (iy < 0 || iy >= g.h) continue;
                    float* drow = dst + iy * g.w;
                    const float* srow = row + oy * g.w_out;
                    const std::int64_t ix0 = -g.pad + kj * g.dil;
                    for (std::int64_t ox = 0; ox < g.w_out; ++ox) {
                        const std::int64_t ix = ix0 + ox * g.stride;
                        if (ix >= 0 && ix < g.w) drow[ix] += srow[ox];
                    }
                }
            }
        }
    }
}

void transpose(const float* src, std::size_t rows, std::size_t cols, float* dst) {
    constexpr std::size_t B = 32;
    for (std::size_t r0 = 0; r0 < rows; r0 += B) {
        const std::size_t r1 = std::min(rows, r0 + B);
        for (std::size_t c0 = 0; c0 < cols; c0 += B) {
            const std::size_t c1 = std::min(cols, c0 + B);
            for (std::size_t r = r0; r < r1; ++r)
                for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
        }
    }
}

bool is_identity_cols(const ConvGeom& g) {
    return g.k == 1 && g.stride == 1 && g.pad == 0;
}

thread_local std::unordered_map<const void*, std::int64_t>* g_mac_sink = nullptr;

}  // namespace

namespace macs {
void set_sink(std::unordered_map<const void*, std::int64_t>* sink) { g_mac_sink = sink; }
}  // namespace macs

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding, int dilation) {
    check_nchw(input, "conv2d", "input");
    if (weight.shape().rank() != 4 || weight.dim(2) != weight.dim(3))
        fail("conv2d: weight must be [C_out, C_in, K, K], got " + weight.shape().str());
    if (stride < 1 || padding < 0 || dilation < 1)
        fail("conv2d: stride must be >= 1, padding >= 0, dilation >= 1");
    ConvGeom g{};
    g.n = input.dim(0); g.c_in = input.dim(1); g.h = input.dim(2); g.w = input.dim(3);
    g.c_out = weight.dim(0); g.k = weight.dim(2);
    g.stride = stride; g.pad = padding; g.dil = dilation;
    if (weight.dim(1) != g.c_in)
        fail("conv2d: input channels " + std::to_string(g.c_in) + " (input " + input.shape().str() +
             ") do not match weight C_in " + std::to_string(weight.dim(1)) + " (weight " +
             weight.shape().str() + ")");
    if (bias.numel() != g.c_out)
        fail("conv2d: bias " + bias.shape().str() + " does not match C_out " +
             std::to_string(g.c_out));
    g.h_out = (g.h + 2 * g.pad - g.dil * (g.k - 1) - 1) / g.stride + 1;
    g.w_out = (g.w + 2 * g.pad - g.dil * (g.k - 1) - 1) / g.stride + 1;
    if (g.h_out < 1 || g.w_out < 1)
        fail("conv2d: kernel " + std::to_string(g.k) + " with dilation " + std::to_string(g.dil) +
             " does not fit input " + input.shape().str());

    if (g_mac_sink)
        (*g_mac_sink)[weight.node()] +=
            g.n * g.k * g.k * g.c_in * g.c_out * g.h_out * g.w_out;

    const std::int64_t hw_out = g.h_out * g.w_out;
    const std::int64_t ckk = g.c_in * g.k * g.k;
    std::vector<float> out(static_cast<std::size_t>(g.n * g.c_out * hw_out));
    std::vector<float> cols;
    const bool identity = is_identity_cols(g);
    if (!identity) cols.resize(static_cast<std::size_t>(ckk * hw_out));

    for (std::int64_t n = 0; n < g.n; ++n) {
        const float* x = input.data().data() + n * g.c_in * g.h * g.w;
        const float* colp = x;
        if (!identity) {
            im2col(x, g, cols.data());
            colp = cols.data();
        }
        float* y = out.data() + n * g.c_out * hw_out;
        kern::sgemm(g.c_out, hw_out, ckk, 1.0f, weight.data().data(), ckk, colp, hw_out, 0.0f, y,
                    hw_out);
        for (std::int64_t f = 0; f < g.c_out; ++f) {
            const float b = bias.data()[f];
            if (b != 0.0f) {
                float* row = y + f * hw_out;
                for (std::int64_t i = 0; i < hw_out; ++i) row[i] += b;
            }
        }
    }

    Tensor in_saved = input, w_saved = weight, b_saved = bias;
    return Tensor::make_op_result(
        Shape{g.n, g.c_out, g.h_out, g.w_out}, std::move(out), {input, weight, bias}, "conv2d",
        [in_saved, w_saved, b_saved, g](const Tensor& outt) mutable {
            const std::int64_t hw_out = g.h_out * g.w_out;
            const std::int64_t ckk = g.c_in * g.k * g.k;
            const float* dy = outt.grad().data();
            const bool identity = is_identity_cols(g);

            if (b_saved.requires_grad()) {
                float* db = b_saved.grad_buffer().data();
                for (std::int64_t n = 0; n < g.n; ++n)
                    for (std::int64_t f = 0; f < g.c_out; ++f)
                        db[f] += static_cast<float>(
                            kern::sum(dy + (n * g.c_out + f) * hw_out, hw_out));
            }

            std::vector<float> cols;
            if (!identity && (w_saved.requires_grad() || in_saved.requires_grad()))
                cols.resize(static_cast<std::size_t>(ckk * hw_out));

            if (w_saved.requires_grad()) {
                std::vector<float> dyt(static_cast<std::size_t>(hw_out * g.c_out));
                std::vector<float> dwt(static_cast<std::size_t>(ckk * g.c_out), 0.0f);
                for (std::int64_t n = 0; n < g.n; ++n) {
                    const float* x = in_saved.data().data() + n * g.c_in * g.h * g.w;
                    const float* colp = x;
                    if (!identity) {
                        im2col(x, g, cols.data());
                        colp = cols.data();
                    }
                    transpose(dy + n * g.c_out * hw_out, g.c_out, hw_out, dyt.data());
                    kern::sgemm(ckk, g.c_out, hw_out, 1.0f, colp, hw_out, dyt.data(), g.c_out,
                                1.0f, dwt.data(), g.c_out);
                }
                float* dw = w_saved.grad_buffer().data();
                for (std::int64_t r = 0; r < ckk; ++r)
                    for (std::int64_t f = 0; f < g.c_out; ++f) dw[f * ckk + r] += dwt[r * g.c_out + f];
            }

            if (in_saved.requires_grad()) {
                std::vector<float> wt(static_cast<std::size_t>(ckk * g.c_out));
                transpose(w_saved.data().data(), g.c_out, ckk, wt.data());
                float* dx_base = in_saved.grad_buffer().data();
                std::vector<float> dcols(identity ? 0 : static_cast<std::size_t>(ckk * hw_out));
                for (std::int64_t n = 0; n < g.n; ++n) {
                    float* dx = dx_base + n * g.c_in * g.h * g.w;
                    if (identity) {
                        kern::sgemm(ckk, hw_out, g.c_out, 1.0f, wt.data(), g.c_out,
                                    dy + n * g.c_out * hw_out, hw_out, 1.0f, dx, hw_out);
                    } else {
                        kern::sgemm(ckk, hw_out, g.c_out, 1.0f, wt.data(), g.c_out,
                                    dy + n * g.c_out * hw_out, hw_out, 0.0f, dcols.data(), hw_out);
                        col2im_acc(dcols.data(), g, dx);
                    }
                }
            }
        });
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        int stride, int padding) {
    check_nchw(input, "conv_transpose2d", "input");
    if (weight.shape().rank() != 4 || weight.dim(2) != weight.dim(3))
        fail("conv_transpose2d: weight must be [C_in, C_out, K, K], got " + weight.shape().str());
    if (stride < 1 || padding < 0) fail("conv_transpose2d: stride must be >= 1, padding >= 0");
    const std::int64_t n = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::int64_t c_out = weight.dim(1), k = weight.dim(2);
    if (weight.dim(0) != c_in)
        fail("conv_transpose2d: input channels " + std::to_string(c_in) + " (input " +
             input.shape().str() + ") do not match weight C_in " + std::to_string(weight.dim(0)) +
             " (weight " + weight.shape().str() + ")");
    if (bias.numel() != c_out)
        fail("conv_transpose2d: bias " + bias.shape().str() + " does not match C_out " +
             std::to_string(c_out));
    const std::int64_t h_out = (h - 1) * stride - 2 * padding + k;
    const std::int64_t w_out = (w - 1) * stride - 2 * padding + k;
    if (h_out < 1 || w_out < 1)
        fail("conv_transpose2d: output extent is empty for input " + input.shape().str());

    if (g_mac_sink) (*g_mac_sink)[weight.node()] += n * k * k * c_in * c_out * h * w;

    // Forward is the adjoint of a conv2d whose input is this op's output.
    ConvGeom g{};
    g.n = n; g.c_in = c_out; g.h = h_out; g.w = w_out;
    g.c_out = c_in; g.k = k; g.stride = stride; g.pad = padding; g.dil = 1;
    g.h_out = h; g.w_out = w;

    const std::int64_t hw_in = h * w;
    const std::int64_t ckk = c_out * k * k;
    std::vector<float> out(static_cast<std::size_t>(n * c_out * h_out * w_out), 0.0f);
    std::vector<float> cols(static_cast<std::size_t>(ckk * hw_in));
    std::vector<float> wt(static_cast<std::size_t>(ckk * c_in));
    transpose(weight.data().data(), c_in, ckk, wt.data());

    for (std::int64_t i = 0; i < n; ++i) {
        const float* x = input.data().data() + i * c_in * hw_in;
        float* y = out.data() + i * c_out * h_out * w_out;
        kern::sgemm(ckk, hw_in, c_in, 1.0f, wt.data(), c_in, x, hw_in, 0.0f, cols.data(), hw_in);
        col2im_acc(cols.data(), g, y);
        for (std::int64_t f = 0; f < c_out; ++f) {
            const float b = bias.data()[f];
            if (b != 0.0f) {
                float* row = y + f * h_out * w_out;
                for (std::int64_t j = 0; j < h_out * w_out; ++j) row[j] += b;
            }
        }
    }

    Tensor in_saved = input, w_saved = weight, b_saved = bias;
    return Tensor::make_op_result(
        Shape{n, c_out, h_out, w_out}, std::move(out), {input, weight, bias}, "conv_transpose2d",
        [in_saved, w_saved, b_saved, g, stride, padding](const Tensor& outt) mutable {
            const std::int64_t n = g.n, c_in = g.c_out, c_out = g.c_in, k = g.k;
            const std::int64_t h = g.h_out, w = g.w_out, h_out = g.h, w_out = g.w;
            const std::int64_t hw_in = h * w;
            const std::int64_t hw_out_full = h_out * w_out;
            const std::int64_t ckk = c_out * k * k;
            const float* dy = outt.grad().data();
            (void)stride; (void)padding;

            if (b_saved.requires_grad()) {
                float* db = b_saved.grad_buffer().data();
                for (std::int64_t i = 0; i < n; ++i)
                    for (std::int64_t f = 0; f < c_out; ++f)
                        db[f] += static_cast<float>(
                            kern::sum(dy + (i * c_out + f) * hw_out_full, hw_out_full));
            }

            // dX = conv2d(dY, weight viewed as [C_in rows x C_out*K*K]) and
            // dW = dY-cols x X^T, both via the shared conv geometry g.
            std::vector<float> cols(static_cast<std::size_t>(ckk * hw_in));
            const bool need_w = w_saved.requires_grad();
            const bool need_x = in_saved.requires_grad();
            if (!need_w && !need_x) return;
            std::vector<float> xt(need_w ? static_cast<std::size_t>(hw_in * c_in) : 0);
            for (std::int64_t i = 0; i < n; ++i) {
                im2col(dy + i * c_out * hw_out_full, g, cols.data());
                if (need_x) {
                    float* dx = in_saved.grad_buffer().data() + i * c_in * hw_in;
                    kern::sgemm(c_in, hw_in, ckk, 1.0f, w_saved.data().data(), ckk, cols.data(),
                                hw_in, 1.0f, dx, hw_in);
                }
                if (need_w) {
                    const float* x = in_saved.data().data() + i * c_in * hw_in;
                    transpose(x, c_in, hw_in, xt.data());
                    // dW[c_in, ckk] += x [c_in, hw] * cols^T [hw, ckk]
                    // computed as (cols * x^T)^T accumulated below.
                    std::vector<float> dwt(static_cast<std::size_t>(ckk * c_in));
                    kern::sgemm(ckk, c_in, hw_in, 1.0f, cols.data(), hw_in, xt.data(), c_in, 0.0f,
                                dwt.data(), c_in);
                    float* dwp = w_saved.grad_buffer().data();
                    for (std::int64_t r = 0; r < ckk; ++r)
                        for (std::int64_t cc = 0; cc < c_in; ++cc)
                            dwp[cc * ckk + r] += dwt[r * c_in + cc];
                }
            }
        });
}

Tensor relu(const Tensor& input) {
    std::vector<float> out(input.data().size());
    kern::relu_fwd(input.data().data(), out.data(), out.size());
    Tensor in_saved = input;
    return Tensor::make_op_result(
        input.shape(), std::move(out), {input}, "relu", [in_saved](const Tensor& outt) mutable {
            if (!in_saved.requires_grad()) return;
            kern::relu_bwd_acc(in_saved.data().data(), outt.grad().data(),
                               in_saved.grad_buffer().data(), in_saved.data().size());
        });
}

BatchNormState BatchNormState::create(std::int64_t channels) {
    return {Tensor::zeros(Shape{channels}), Tensor::full(Shape{channels}, 1.0f)};
}

Tensor batch_norm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                    BatchNormState& state, bool train, float momentum, float eps) {
    check_nchw(input, "batch_norm2d", "input");
    const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (gamma.numel() != c || beta.numel() != c)
        fail("batch_norm2d: gamma " + gamma.shape().str() + " / beta " + beta.shape().str() +
             " do not match channel count " + std::to_string(c));
    if (state.running_mean.numel() != c || state.running_var.numel() != c)
        fail("batch_norm2d: running stats do not match channel count " + std::to_string(c));

    const std::int64_t hw = h * w;
    const std::int64_t m = n * hw;  // samples per channel
    std::vector<float> mean(c), invstd(c);
    if (train) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            double s = 0.0, s2 = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                const float* x = input.data().data() + (i * c + ch) * hw;
                s += kern::sum(x, hw);
                s2 += kern::sumsq(x, hw);
            }
            const double mu = s / m;
            const double var = std::max(0.0, s2 / m - mu * mu);
            mean[ch] = static_cast<float>(mu);
            invstd[ch] = static_cast<float>(1.0 / std::sqrt(var + eps));
            float* rm = state.running_mean.mutable_data().data();
            float* rv = state.running_var.mutable_data().data();
            const double var_unbiased = m > 1 ? var * m / (m - 1) : var;
            rm[ch] = (1.0f - momentum) * rm[ch] + momentum * static_cast<float>(mu);
            rv[ch] = (1.0f - momentum) * rv[ch] + momentum * static_cast<float>(var_unbiased);
        }
    } else {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            mean[ch] = state.running_mean.data()[ch];
            invstd[ch] = 1.0f / std::sqrt(state.running_var.data()[ch] + eps);
        }
    }

    std::vector<float> out(input.data().size());
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const float* x = input.data().data() + (i * c + ch) * hw;
            float* y = out.data() + (i * c + ch) * hw;
            const float g = gamma.data()[ch], b = beta.data()[ch];
            const float mu = mean[ch], is = invstd[ch];
            for (std::int64_t j = 0; j < hw; ++j) y[j] = g * (x[j] - mu) * is + b;
        }
    }

    Tensor in_saved = input, g_saved = gamma, b_saved = beta;
    auto mean_saved = std::make_shared<std::vector<float>>(std::move(mean));
    auto invstd_saved = std::make_shared<std::vector<float>>(std::move(invstd));
    return Tensor::make_op_result(
        input.shape(), std::move(out), {input, gamma, beta}, "batch_norm2d",
        [in_saved, g_saved, b_saved, mean_saved, invstd_saved, n, c, hw,
         train](const Tensor& outt) mutable {
            const float* dy = outt.grad().data();
            const std::int64_t m = n * hw;
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const float mu = (*mean_saved)[ch], is = (*invstd_saved)[ch];
                double s1 = 0.0, s2 = 0.0;  // sum dy, sum dy*xhat
                for (std::int64_t i = 0; i < n; ++i) {
                    const float* x = in_saved.data().data() + (i * c + ch) * hw;
                    const float* d = dy + (i * c + ch) * hw;
                    for (std::int64_t j = 0; j < hw; ++j) {
                        s1 += d[j];
                        s2 += static_cast<double>(d[j]) * ((x[j] - mu) * is);
                    }
                }
                if (g_saved.requires_grad()) g_saved.grad_buffer()[ch] += static_cast<float>(s2);
                if (b_saved.requires_grad()) b_saved.grad_buffer()[ch] += static_cast<float>(s1);
                if (in_saved.requires_grad()) {
                    const float g = g_saved.data()[ch];
                    float* dx_base = in_saved.grad_buffer().data();
                    if (train) {
                        const float k1 = static_cast<float>(s1 / m);
                        const float k2 = static_cast<float>(s2 / m);
                        for (std::int64_t i = 0; i < n; ++i) {
                            const float* x = in_saved.data().data() + (i * c + ch) * hw;
                            const float* d = dy + (i * c + ch) * hw;
                            float* dx = dx_base + (i * c + ch) * hw;
                            for (std::int64_t j = 0; j < hw; ++j) {
                                const float xhat = (x[j] - mu) * is;
                                dx[j] += g * is * (d[j] - k1 - xhat * k2);
                            }
                        }
                    } else {
                        for (std::int64_t i = 0; i < n; ++i) {
                            const float* d = dy + (i * c + ch) * hw;
                            float* dx = dx_base + (i * c + ch) * hw;
                            for (std::int64_t j = 0; j < hw; ++j) dx[j] += g * is * d[j];
                        }
                    }
                }
            }
        });
}

Tensor max_pool2d(const Tensor& input) {
    check_nchw(input, "max_pool2d", "input");
    const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (h % 2 != 0 || w % 2 != 0)
        fail("max_pool2d: spatial extent must be even, got " + input.shape().str());
    const std::int64_t ho = h / 2, wo = w / 2;
    std::vector<float> out(static_cast<std::size_t>(n * c * ho * wo));
    auto argmax = std::make_shared<std::vector<std::int32_t>>(out.size());
    const float* x = input.data().data();
    for (std::int64_t nc = 0; nc < n * c; ++nc) {
        const float* src = x + nc * h * w;
        float* dst = out.data() + nc * ho * wo;
        std::int32_t* am = argmax->data() + nc * ho * wo;
        for (std::int64_t oy = 0; oy < ho; ++oy) {
            for (std::int64_t ox = 0; ox < wo; ++ox) {
                const std::int64_t base = (2 * oy) * w + 2 * ox;
                // row-major window order; strictly-greater keeps the first max
                std::int64_t best = base;
                float bv = src[base];
                const std::int64_t cands[3] = {base + 1, base + w, base + w + 1};
                for (std::int64_t cand : cands) {
                    if (src[cand] > bv) {
                        bv = src[cand];
                        best = cand;
                    }
                }
                dst[oy * wo + ox] = bv;
                am[oy * wo + ox] = static_cast<std::int32_t>(best);
            }
        }
    }
    Tensor in_saved = input;
    return Tensor::make_op_result(
        Shape{n, c, ho, wo}, std::move(out), {input}, "max_pool2d",
        [in_saved, argmax, n, c, h, w, ho, wo](const Tensor& outt) mutable {
            if (!in_saved.requires_grad()) return;
            const float* dy = outt.grad().data();
            float* dx = in_saved.grad_buffer().data();
            for (std::int64_t nc = 0; nc < n * c; ++nc) {
                const float* d = dy + nc * ho * wo;
                const std::int32_t* am = argmax->data() + nc * ho * wo;
                float* dsel = dx + nc * h * w;
                for (std::int64_t i = 0; i < ho * wo; ++i) dsel[am[i]] += d[i];
            }
        });
}

Tensor nearest_upsample2x(const Tensor& input) {
    check_nchw(input, "nearest_upsample2x", "input");
    const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::int64_t ho = h * 2, wo = w * 2;
    std::vector<float> out(static_cast<std::size_t>(n * c * ho * wo));
    const float* x = input.data().data();
    for (std::int64_t nc = 0; nc < n * c; ++nc) {
        const float* src = x + nc * h * w;
        float* dst = out.data() + nc * ho * wo;
        for (std::int64_t y = 0; y < h; ++y) {
            float* row0 = dst + (2 * y) * wo;
            for (std::int64_t xx = 0; xx < w; ++xx) {
                row0[2 * xx] = row0[2 * xx + 1] = src[y * w + xx];
            }
            std::memcpy(row0 + wo, row0, wo * sizeof(float));
        }
    }
    Tensor in_saved = input;
    return Tensor::make_op_result(
        Shape{n, c, ho, wo}, std::move(out), {input}, "nearest_upsample2x",
        [in_saved, n, c, h, w, wo](const Tensor& outt) mutable {
            if (!in_saved.requires_grad()) return;
            const float* dy = outt.grad().data();
            float* dx = in_saved.grad_buffer().data();
            for (std::int64_t nc = 0; nc < n * c; ++nc) {
                const float* d = dy + nc * (h * 2) * wo;
                float* dst = dx + nc * h * w;
                for (std::int64_t y = 0; y < h; ++y) {
                    const float* r0 = d + (2 * y) * wo;
                    const float* r1 = r0 + wo;
                    for (std::int64_t xx = 0; xx < w; ++xx)
                        dst[y * w + xx] +=
                            r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1];
                }
            }
        });
}

Tensor dropout(const Tensor& input, float p, bool train, RandomStream& rng) {
    if (p < 0.0f || p >= 1.0f) fail("dropout: p must be in [0, 1), got " + std::to_string(p));
    if (!train || p == 0.0f) return input;
    const std::size_t sz = input.data().size();
    auto mask = std::make_shared<std::vector<float>>(sz);
    const float keep_scale = 1.0f / (1.0f - p);
    for (std::size_t i = 0; i < sz; ++i) (*mask)[i] = rng.uniform() < p ? 0.0f : keep_scale;
    std::vector<float> out(sz);
    kern::mul(input.data().data(), mask->data(), out.data(), sz);
    Tensor in_saved = input;
    return Tensor::make_op_result(
        input.shape(), std::move(out), {input}, "dropout",
        [in_saved, mask](const Tensor& outt) mutable {
            if (!in_saved.requires_grad()) return;
            const float* dy = outt.grad().data();
            float* dx = in_saved.grad_buffer().data();
            const float* mk = mask->data();
            for (std::size_t i = 0; i < mask->size(); ++i) dx[i] += dy[i] * mk[i];
        });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    check_nchw(a, "concat_channels", "lhs");
    check_nchw(b, "concat_channels", "rhs");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        fail("concat_channels: " + a.shape().str() + " and " + b.shape().str() +
             " differ outside the channel axis");
    const std::int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
    const std::int64_t hw = h * w;
    std::vector<float> out(static_cast<std::size_t>(n * (ca + cb) * hw));
    for (std::int64_t i = 0; i < n; ++i) {
        std::memcpy(out.data() + i * (ca + cb) * hw, a.data().data() + i * ca * hw,
                    ca * hw * sizeof(float));
        std::memcpy(out.data() + (i * (ca + cb) + ca) * hw, b.data().data() + i * cb * hw,
                    cb * hw * sizeof(float));
    }
    Tensor a_saved = a, b_saved = b;
    return Tensor::make_op_result(
        Shape{n, ca + cb, h, w}, std::move(out), {a, b}, "concat_channels",
        [a_saved, b_saved, n, ca, cb, hw](const Tensor& outt) mutable {
            const float* dy = outt.grad().data();
            if (a_saved.requires_grad()) {
                float* da = a_saved.grad_buffer().data();
                for (std::int64_t i = 0; i < n; ++i)
                    kern::axpy(1.0f, dy + i * (ca + cb) * hw, da + i * ca * hw, ca * hw);
            }
            if (b_saved.requires_grad()) {
                float* db = b_saved.grad_buffer().data();
                for (std::int64_t i = 0; i < n; ++i)
                    kern::axpy(1.0f, dy + (i * (ca + cb) + ca) * hw, db + i * cb * hw, cb * hw);
            }
        });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape()))
        fail("add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    std::vector<float> out(a.data().size());
    kern::add(a.data().data(), b.data().data(), out.data(), out.size());
    Tensor a_saved = a, b_saved = b;
    return Tensor::make_op_result(a.shape(), std::move(out), {a, b}, "add",
                                  [a_saved, b_saved](const Tensor& outt) mutable {
                                      const float* dy = outt.grad().data();
                                      const std::size_t sz = outt.grad().size();
                                      if (a_saved.requires_grad())
                                          kern::axpy(1.0f, dy, a_saved.grad_buffer().data(), sz);
                                      if (b_saved.requires_grad())
                                          kern::axpy(1.0f, dy, b_saved.grad_buffer().data(), sz);
                                  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape()))
        fail("mul: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    std::vector<float> out(a.data().size());
    kern::mul(a.data().data(), b.data().data(), out.data(), out.size());
    Tensor a_saved = a, b_saved = b;
    return Tensor::make_op_result(
        a.shape(), std::move(out), {a, b}, "mul", [a_saved, b_saved](const Tensor& outt) mutable {
            const float* dy = outt.grad().data();
            const std::size_t sz = outt.grad().size();
            if (a_saved.requires_grad()) {
                float* da = a_saved.grad_buffer().data();
                const float* bv = b_saved.data().data();
                for (std::size_t i = 0; i < sz; ++i) da[i] += dy[i] * bv[i];
            }
            if (b_saved.requires_grad()) {
                float* db = b_saved.grad_buffer().data();
                const float* av = a_saved.data().data();
                for (std::size_t i = 0; i < sz; ++i) db[i] += dy[i] * av[i];
            }
        });
}

Tensor global_avg_pool(const Tensor& input) {
    check_nchw(input, "global_avg_pool", "input");
    const std::int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::int64_t hw = h * w;
    std::vector<float> out(static_cast<std::size_t>(n * c));
    for (std::int64_t i = 0; i < n * c; ++i)
        out[i] = static_cast<float>(kern::sum(input.data().data() + i * hw, hw) / hw);
    Tensor in_saved = input;
    return Tensor::make_op_result(Shape{n, c, 1, 1}, std::move(out), {input}, "global_avg_pool",
                                  [in_saved, n, c, hw](const Tensor& outt) mutable {
                                      if (!in_saved.requires_grad()) return;
                                      const float* dy = outt.grad().data();
                                      float* dx = in_saved.grad_buffer().data();
                                      for (std::int64_t i = 0; i < n * c; ++i) {
                                          const float gv = dy[i] / hw;
                                          float* row = dx + i * hw;
                                          for (std::int64_t j = 0; j < hw; ++j) row[j] += gv;
                                      }
                                  });
}

Tensor broadcast_spatial(const Tensor& input, std::int64_t h, std::int64_t w) {
    check_nchw(input, "broadcast_spatial", "input");
    if (input.dim(2) != 1 || input.dim(3) != 1)
        fail("broadcast_spatial: input must be Nx Cx1x1, got " + input.shape().str());
    const std::int64_t n = input.dim(0), c = input.dim(1), hw = h * w;
    std::vector<float> out(static_cast<std::size_t>(n * c * hw));
    for (std::int64_t i = 0; i < n * c; ++i)
        std::fill(out.begin() + i * hw, out.begin() + (i + 1) * hw, input.data()[i]);
    Tensor in_saved = input;
    return Tensor::make_op_result(Shape{n, c, h, w}, std::move(out), {input}, "broadcast_spatial",
                                  [in_saved, n, c, hw](const Tensor& outt) mutable {
                                      if (!in_saved.requires_grad()) return;
                                      const float* dy = outt.grad().data();
                                      float* dx = in_saved.grad_buffer().data();
                                      for (std::int64_t i = 0; i < n * c; ++i)
                                          dx[i] += static_cast<float>(kern::sum(dy + i * hw, hw));
                                  });
}

Tensor sum_all(const Tensor& input) {
    std::vector<float> out{static_cast<float>(kern::sum(input.data().data(), input.data().size()))};
    Tensor in_saved = input;
    return Tensor::make_op_result(Shape{1}, std::move(out), {input}, "sum_all",
                                  [in_saved](const Tensor& outt) mutable {
                                      if (!in_saved.requires_grad()) return;
                                      const float gv = outt.grad()[0];
                                      float* dx = in_saved.grad_buffer().data();
                                      for (std::size_t i = 0; i < in_saved.data().size(); ++i)
                                          dx[i] += gv;
                                  });
}

namespace {

Tensor mse_impl(const Tensor& estimate, const Tensor& target, bool per_element,
                const char* name) {
    if (!(estimate.shape() == target.shape()))
        fail(std::string(name) + ": shape mismatch " + estimate.shape().str() + " vs " +
             target.shape().str());
    if (estimate.shape().rank() < 1) fail(std::string(name) + ": rank-0 input");
    const double denom = per_element ? static_cast<double>(estimate.numel())
                                     : static_cast<double>(estimate.dim(0));
    const double loss =
        kern::sqdiff_sum(estimate.data().data(), target.data().data(), estimate.data().size()) /
        denom;
    Tensor e_saved = estimate, t_saved = target;
    return Tensor::make_op_result(
        Shape{1}, {static_cast<float>(loss)}, {estimate, target}, name,
        [e_saved, t_saved, denom](const Tensor& outt) mutable {
            const float gv = outt.grad()[0];
            const float scale = static_cast<float>(2.0 / denom) * gv;
            const float* ev = e_saved.data().data();
            const float* tv = t_saved.data().data();
            const std::size_t sz = e_saved.data().size();
            if (e_saved.requires_grad()) {
                float* de = e_saved.grad_buffer().data();
                for (std::size_t i = 0; i < sz; ++i) de[i] += scale * (ev[i] - tv[i]);
            }
            if (t_saved.requires_grad()) {
                float* dt = t_saved.grad_buffer().data();
                for (std::size_t i = 0; i < sz; ++i) dt[i] -= scale * (ev[i] - tv[i]);
            }
        });
}

}  // namespace

Tensor mse_loss(const Tensor& estimate, const Tensor& target) {
    return mse_impl(estimate, target, false, "mse_loss");
}

Tensor mse_loss_per_element(const Tensor& estimate, const Tensor& target) {
    return mse_impl(estimate, target, true, "mse_loss_per_element");
}

}  // namespace rmap
