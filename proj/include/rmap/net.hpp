#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rmap/adam.hpp"
#include "rmap/ops.hpp"
#include "rmap/tensor.hpp"

// R2Net family: encoder with cascaded residual bottleneck blocks, a
// per-variant feature enhancement block between encoder and decoder, and a
// skip-connected decoder. All wiring is derived from a ChannelPlan, so the
// same classes serve the 3-channel/16-plane indoor task and the
// 2-channel/1-plane outdoor special case.

namespace rmap::net {

struct ChannelPlan {
    std::int64_t c_in = 3;   // material types + 1 transmitter channel
    std::int64_t c_out = 16; // receiver height planes
    std::int64_t c1 = 40, c2 = 60, c3 = 100, c4 = 150, c5 = 20, c6 = 20;

    static ChannelPlan indoor(std::int64_t c_in = 3, std::int64_t c_out = 16) {
        return {c_in, c_out, 40, 60, 100, 150, 20, 20};
    }
    static ChannelPlan outdoor(std::int64_t c_in = 2, std::int64_t c_out = 1) {
        return {c_in, c_out, 64, 256, 512, 1024, 64, 32};
    }
    // Small plan for overfit harnesses and fast tests.
    static ChannelPlan reduced(std::int64_t c_in = 3, std::int64_t c_out = 16) {
        return {c_in, c_out, 8, 12, 16, 24, 8, 8};
    }
    void validate() const;
};

enum class Variant { In, Out, Outlite, UNet };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ModelSpec {
    Variant variant = Variant::In;
    ChannelPlan plan;
    std::int64_t resolution = 256;  // power of two >= 64

    void validate() const;
};

// Named views of every learnable parameter, running-stat buffer and dropout
// stream in a model; used by the optimizer and the checkpoint format.
struct ParamMap {
    std::vector<std::pair<std::string, Tensor>> params;
    std::vector<std::pair<std::string, Tensor>> buffers;
    std::vector<std::pair<std::string, RandomStream*>> streams;
};

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::int64_t c_in, std::int64_t c_out, int k, int stride, int padding, int dilation,
           RandomStream init);
    Tensor forward(const Tensor& x) const { return conv2d(x, weight, bias, stride_, pad_, dil_); }
    void collect(ParamMap& map, const std::string& prefix);

    Tensor weight, bias;

private:
    int stride_ = 1, pad_ = 0, dil_ = 1;
};

class ConvTranspose2d {
public:
    ConvTranspose2d() = default;
    ConvTranspose2d(std::int64_t c_in, std::int64_t c_out, int k, int stride, int padding,
                    RandomStream init);
    Tensor forward(const Tensor& x) const {
        return conv_transpose2d(x, weight, bias, stride_, pad_);
    }
    void collect(ParamMap& map, const std::string& prefix);

    Tensor weight, bias;

private:
    int stride_ = 2, pad_ = 2;
};

class BatchNorm2d {
public:
    BatchNorm2d() = default;
    explicit BatchNorm2d(std::int64_t channels);
    Tensor forward(const Tensor& x, bool train) {
        return batch_norm2d(x, gamma, beta, state, train, momentum, eps);
    }
    void collect(ParamMap& map, const std::string& prefix);

    Tensor gamma, beta;
    BatchNormState state;
    float momentum = 0.1f;
    float eps = 1e-5f;
};

// conv -> BN -> ReLU
class ConvBnRelu {
public:
    ConvBnRelu() = default;
    ConvBnRelu(std::int64_t c_in, std::int64_t c_out, int k, int stride, int padding, int dilation,
               RandomStream init);
    Tensor forward(const Tensor& x, bool train);
    void collect(ParamMap& map, const std::string& prefix);

    Conv2d conv;
    BatchNorm2d bn;
};

class DropoutLayer {
public:
    DropoutLayer() = default;
    DropoutLayer(float p, RandomStream rng) : p_(p), rng_(rng) {}
    Tensor forward(const Tensor& x, bool train) { return dropout(x, p_, train, rng_); }
    void collect(ParamMap& map, const std::string& prefix);
    RandomStream& stream() { return rng_; }

private:
    float p_ = 0.3f;
    RandomStream rng_;
};

struct ResidualBlockSpec {
    std::int64_t in = 0, mid = 0, out = 0;
    bool projection = false;  // 1x1 shortcut when in != out

    static ResidualBlockSpec make(std::int64_t in, std::int64_t out);
    void validate() const;
};

// 1x1 reduce -> 3x3 -> 1x1 expand, batch norm after each conv, ReLU after the
// shortcut sum. Spatial shape is preserved.
class ResidualBlock {
public:
    ResidualBlock() = default;
    ResidualBlock(const ResidualBlockSpec& spec, RandomStream init);
    Tensor forward(const Tensor& x, bool train);
    void collect(ParamMap& map, const std::string& prefix);

    ResidualBlockSpec spec;

private:
    Conv2d reduce_, mid_, expand_, proj_;
    BatchNorm2d bn1_, bn2_, bn3_, bn_proj_;
};

ResidualBlock build_residual_block(const ResidualBlockSpec& spec, RandomStream init);

// n blocks in sequence; the channel transition happens on the first block only.
class CascadedResidual {
public:
    CascadedResidual() = default;
    CascadedResidual(int n, std::int64_t c_in, std::int64_t c_out, RandomStream init);
    Tensor forward(const Tensor& x, bool train);
    void collect(ParamMap& map, const std::string& prefix);
    std::size_t size() const { return blocks_.size(); }

private:
    std::vector<ResidualBlock> blocks_;
};

struct ASPPSpec {
    std::int64_t c_in = 0;
    std::int64_t branch = 0;   // channels per branch
    std::int64_t c_out = 0;    // fusion output
    std::array<int, 3> rates = {6, 12, 18};

    static ASPPSpec make(std::int64_t c_in);
    void validate() const;
};

// 1x1 conv, three dilated 3x3 convs, global-average-pool branch broadcast
// back to the input extent, fused with a 1x1 conv. Five branches total.
class Aspp {
public:
    Aspp() = default;
    Aspp(const ASPPSpec& spec, RandomStream init);
    Tensor forward(const Tensor& x, bool train);
    void collect(ParamMap& map, const std::string& prefix);
    static constexpr int kBranches = 5;

    ASPPSpec spec;

private:
    ConvBnRelu b1x1_, b_d6_, b_d12_, b_d18_, b_pool_;
    ConvBnRelu fuse_;
};

struct EncoderOutput {
    Tensor bottom;                 // resolution / 16
    std::array<Tensor, 4> skips;   // full, /2, /4, /8 (pre-pool maps)
};

// Stem conv + four stages of (3 cascaded residual blocks, max pool).
class Encoder {
public:
    Encoder() = default;
    Encoder(const ChannelPlan& plan, RandomStream init, bool residual_stages = true);
    EncoderOutput forward(const Tensor& x, bool train);
    void collect(ParamMap& map, const std::string& prefix);

private:
    ConvBnRelu stem_;
    bool residual_ = true;
    std::array<CascadedResidual, 4> stages_;
    // plain double-conv stages for the ablation encoder
    std::array<ConvBnRelu, 4> plain_a_, plain_b_;
};

// Dropout pyramid: p=0.3 at the bottleneck extent, /2 and /4, then nearest
// upsampling back, with a 3x3 conv+BN+ReLU before and after every resolution
// change. Channels stay at C4.
class PfebIn {
public:
    PfebIn() = default;
    PfebIn(std::int64_t c4, RandomStream init);
    Tensor forward(const Tensor& x, bool train);
    void collect(ParamMap& map, const std::string& prefix);

private:
    DropoutLayer drop1_, drop2_, drop3_;
    std::array<ConvBnRelu, 7> convs_;
};

// Five cascaded residual blocks, ASPP, and a 6x6 stride-2 transposed-conv
// upsample; output has twice the input extent at C4/4 channels.
class PfebOut {
public:
    PfebOut() = default;
    PfebOut(std::int64_t c4, RandomStream init);
    Tensor forward(const Tensor& x, bool train);
    void collect(ParamMap& map, const std::string& prefix);
    std::int64_t out_channels() const { return out_channels_; }

    // Parameter counts per component (count audits).
    std::int64_t block_params() const;
    std::int64_t other_params() const;

private:
    CascadedResidual blocks_;
    Aspp aspp_;
    ConvTranspose2d up_;
    BatchNorm2d up_bn_;
    std::int64_t out_channels_ = 0;
};

// Two residual blocks, ASPP, max pool, dropout, nearest upsample back to the
// bottleneck extent; output keeps the input extent at C4/2 channels.
class PfebOutlite {
public:
    PfebOutlite() = default;
    PfebOutlite(std::int64_t c4, RandomStream init);
    Tensor forward(const Tensor& x, bool train);
    void collect(ParamMap& map, const std::string& prefix);
    std::int64_t out_channels() const { return out_channels_; }

private:
    CascadedResidual blocks_;
    Aspp aspp_;
    DropoutLayer drop_;
    std::int64_t out_channels_ = 0;
};

// In-flavor upsampling stage: two convs + BN + ReLU, nearest 2x, skip concat,
// then fusion + refine convs. The first stage uses 3x3 kernels, later stages
// 5x5. UNet ablation reuses this decoder.
class DecoderIn {
public:
    DecoderIn() = default;
    DecoderIn(const ChannelPlan& plan, std::int64_t bottleneck_channels, RandomStream init);
    Tensor forward(const Tensor& x, const std::array<Tensor, 4>& skips, bool train);
    void collect(ParamMap& map, const std::string& prefix);

private:
    struct Stage {
        ConvBnRelu up_a, up_b;
        ConvBnRelu fuse, refine;
    };
    std::array<Stage, 4> stages_;
    Conv2d head_;
};

// Out-flavor decoder: skip concat then 6x6 stride-2 transposed conv per
// stage; a 5x5 conv follows the first upsampling block.
class DecoderOut {
public:
    DecoderOut() = default;
    // n_stages = 3 when the PFEB already upsampled once (Out), 4 otherwise
    // (Outlite).
    DecoderOut(const ChannelPlan& plan, std::int64_t bottleneck_channels, int n_stages,
               RandomStream init);
    Tensor forward(const Tensor& x, const std::array<Tensor, 4>& skips, bool train);
    void collect(ParamMap& map, const std::string& prefix);

private:
    struct Stage {
        ConvTranspose2d up;
        BatchNorm2d bn;
    };
    std::vector<Stage> stages_;
    ConvBnRelu local_;  // after the first upsampling block
    Conv2d head_;
    int n_stages_ = 3;
};

class R2Net {
public:
    R2Net() = default;
    R2Net(const ModelSpec& spec, std::uint64_t seed);

    // (N, C_in, H, W) -> (N, C_out, H, W); estimates are unbounded floats,
    // clamping to [0,1] happens only at export.
    Tensor forward(const Tensor& x, bool train);

    const ModelSpec& spec() const { return spec_; }
    ParamMap param_map();
    std::vector<Tensor> parameters();
    void zero_grads();

private:
    ModelSpec spec_;
    Encoder encoder_;
    PfebIn pfeb_in_;
    PfebOut pfeb_out_;
    PfebOutlite pfeb_outlite_;
    ConvBnRelu unet_mid_a_, unet_mid_b_;
    DecoderIn decoder_in_;
    DecoderOut decoder_out_;
};

Encoder build_encoder(const ChannelPlan& plan, RandomStream init);
PfebIn build_pfeb_in(std::int64_t c4, RandomStream init);
PfebOut build_pfeb_out(std::int64_t c4, RandomStream init);
PfebOutlite build_pfeb_outlite(std::int64_t c4, RandomStream init);

std::int64_t count_params(R2Net& model);
// Conv and transposed-conv multiply-accumulates only; activations, batch
// norm, pooling and interpolation are excluded.
std::int64_t count_macs(R2Net& model, const Shape& input_shape);

struct LayerCost {
    std::string name;
    std::int64_t params;
    std::int64_t macs;
};
std::vector<LayerCost> per_layer_costs(R2Net& model, const Shape& input_shape);

// Kaiming-uniform fan-in initialization bound for a conv weight tensor.
float kaiming_bound(std::int64_t fan_in);

}  // namespace rmap::net
