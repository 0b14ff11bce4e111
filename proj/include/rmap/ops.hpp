#pragma once

#include <unordered_map>

#include "rmap/tensor.hpp"

// Differentiable tensor operations. Forward results are fresh tensors; the
// recorded backward closures accumulate into .grad of every requires_grad
// input. Activation layouts are NCHW throughout.

namespace rmap {

// weight [C_out, C_in, K, K], bias [C_out].
// Output extent: floor((H + 2*padding - dilation*(K-1) - 1) / stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1,
              int padding = 0, int dilation = 1);

// weight [C_in, C_out, K, K], bias [C_out].
// Output extent: (H - 1)*stride - 2*padding + K.
Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        int stride = 1, int padding = 0);

Tensor relu(const Tensor& input);

// Running statistics for batch norm; plain buffers, never part of the graph.
struct BatchNormState {
    Tensor running_mean;
    Tensor running_var;

    static BatchNormState create(std::int64_t channels);
};

Tensor batch_norm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                    BatchNormState& state, bool train, float momentum = 0.1f,
                    float eps = 1e-5f);

// Fixed 2x2 kernel, stride 2; ties route the gradient to the first maximal
// element in row-major window order.
Tensor max_pool2d(const Tensor& input);

Tensor nearest_upsample2x(const Tensor& input);

// Inverted dropout: train mode zeroes with probability p and scales survivors
// by 1/(1-p); eval mode is the identity.
Tensor dropout(const Tensor& input, float p, bool train, RandomStream& rng);

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// N x C x H x W -> N x C x 1 x 1 spatial mean.
Tensor global_avg_pool(const Tensor& input);

// N x C x 1 x 1 -> N x C x H x W by replication (ASPP pooled branch).
Tensor broadcast_spatial(const Tensor& input, std::int64_t h, std::int64_t w);

Tensor sum_all(const Tensor& input);

// Mean over the batch of per-sample squared L2 norms of the difference.
Tensor mse_loss(const Tensor& estimate, const Tensor& target);
// Same error normalized per element; the scale-stable variant the training
// loop optimizes. mse_loss == mse_loss_per_element * (numel / batch).
Tensor mse_loss_per_element(const Tensor& estimate, const Tensor& target);

namespace macs {
// MAC accounting sink. While set (same thread), conv2d adds
// K^2*C_in*C_out*H_out*W_out and conv_transpose2d K^2*C_in*C_out*H_in*W_in,
// keyed by the weight's node pointer.
void set_sink(std::unordered_map<const void*, std::int64_t>* sink);
}  // namespace macs

}  // namespace rmap
