#include "rmap/net.hpp"

#include <cmath>
#include <unordered_map>

namespace rmap::net {

namespace {

bool power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

float kaiming_bound(std::int64_t fan_in) {
    return std::sqrt(6.0f / static_cast<float>(fan_in));
}

void ChannelPlan::validate() const {
    const std::int64_t all[] = {c_in, c_out, c1, c2, c3, c4, c5, c6};
    for (auto v : all)
        if (v <= 0) fail("ChannelPlan: all channel counts must be positive");
}

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::In: return "in";
        case Variant::Out: return "out";
        case Variant::Outlite: return "outlite";
        case Variant::UNet: return "unet";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    if (name == "in") return Variant::In;
    if (name == "out") return Variant::Out;
    if (name == "outlite") return Variant::Outlite;
    if (name == "unet") return Variant::UNet;
    fail("unknown variant '" + name + "' (expected in, out, outlite or unet)");
}

void ModelSpec::validate() const {
    plan.validate();
    if (!power_of_two(resolution) || resolution < 64)
        fail("ModelSpec: resolution must be a power of two >= 64, got " +
             std::to_string(resolution));
}

// ---- basic layers ----------------------------------------------------------

Conv2d::Conv2d(std::int64_t c_in, std::int64_t c_out, int k, int stride, int padding,
               int dilation, RandomStream init)
    : stride_(stride), pad_(padding), dil_(dilation) {
    const float bound = kaiming_bound(c_in * k * k);
    weight = Tensor::rand_uniform(Shape{c_out, c_in, k, k}, init, -bound, bound, true);
    bias = Tensor::zeros(Shape{c_out}, true);
}

void Conv2d::collect(ParamMap& map, const std::string& prefix) {
    map.params.emplace_back(prefix + ".w", weight);
    map.params.emplace_back(prefix + ".b", bias);
}

ConvTranspose2d::ConvTranspose2d(std::int64_t c_in, std::int64_t c_out, int k, int stride,
                                 int padding, RandomStream init)
    : stride_(stride), pad_(padding) {
    const float bound = kaiming_bound(c_out * k * k);
    weight = Tensor::rand_uniform(Shape{c_in, c_out, k, k}, init, -bound, bound, true);
    bias = Tensor::zeros(Shape{c_out}, true);
}

void ConvTranspose2d::collect(ParamMap& map, const std::string& prefix) {
    map.params.emplace_back(prefix + ".w", weight);
    map.params.emplace_back(prefix + ".b", bias);
}

BatchNorm2d::BatchNorm2d(std::int64_t channels) {
    gamma = Tensor::full(Shape{channels}, 1.0f, true);
    beta = Tensor::zeros(Shape{channels}, true);
    state = BatchNormState::create(channels);
}

void BatchNorm2d::collect(ParamMap& map, const std::string& prefix) {
    map.params.emplace_back(prefix + ".gamma", gamma);
    map.params.emplace_back(prefix + ".beta", beta);
    map.buffers.emplace_back(prefix + ".running_mean", state.running_mean);
    map.buffers.emplace_back(prefix + ".running_var", state.running_var);
}

ConvBnRelu::ConvBnRelu(std::int64_t c_in, std::int64_t c_out, int k, int stride, int padding,
                       int dilation, RandomStream init)
    : conv(c_in, c_out, k, stride, padding, dilation, init.derive(1)), bn(c_out) {}

Tensor ConvBnRelu::forward(const Tensor& x, bool train) {
    return relu(bn.forward(conv.forward(x), train));
}

void ConvBnRelu::collect(ParamMap& map, const std::string& prefix) {
    conv.collect(map, prefix + ".conv");
    bn.collect(map, prefix + ".bn");
}

void DropoutLayer::collect(ParamMap& map, const std::string& prefix) {
    map.streams.emplace_back(prefix, &rng_);
}

// ---- residual blocks -------------------------------------------------------

ResidualBlockSpec ResidualBlockSpec::make(std::int64_t in, std::int64_t out) {
    ResidualBlockSpec s;
    s.in = in;
    s.out = out;
    s.mid = std::max<std::int64_t>(1, out / 2);
    s.projection = in != out;
    return s;
}

void ResidualBlockSpec::validate() const {
    if (in <= 0 || mid <= 0 || out <= 0) fail("ResidualBlockSpec: channel counts must be positive");
    if (out > 1 && mid >= out) fail("ResidualBlockSpec: mid must stay below out (bottleneck)");
}

ResidualBlock::ResidualBlock(const ResidualBlockSpec& s, RandomStream init) : spec(s) {
    spec.validate();
    reduce_ = Conv2d(s.in, s.mid, 1, 1, 0, 1, init.derive(1));
    mid_ = Conv2d(s.mid, s.mid, 3, 1, 1, 1, init.derive(2));
    expand_ = Conv2d(s.mid, s.out, 1, 1, 0, 1, init.derive(3));
    bn1_ = BatchNorm2d(s.mid);
    bn2_ = BatchNorm2d(s.mid);
    bn3_ = BatchNorm2d(s.out);
    if (s.projection) {
        proj_ = Conv2d(s.in, s.out, 1, 1, 0, 1, init.derive(4));
        bn_proj_ = BatchNorm2d(s.out);
    }
}

Tensor ResidualBlock::forward(const Tensor& x, bool train) {
    Tensor y = relu(bn1_.forward(reduce_.forward(x), train));
    y = relu(bn2_.forward(mid_.forward(y), train));
    y = bn3_.forward(expand_.forward(y), train);
    Tensor shortcut = spec.projection ? bn_proj_.forward(proj_.forward(x), train) : x;
    return relu(add(y, shortcut));
}

void ResidualBlock::collect(ParamMap& map, const std::string& prefix) {
    reduce_.collect(map, prefix + ".reduce");
    bn1_.collect(map, prefix + ".bn1");
    mid_.collect(map, prefix + ".mid");
    bn2_.collect(map, prefix + ".bn2");
    expand_.collect(map, prefix + ".expand");
    bn3_.collect(map, prefix + ".bn3");
    if (spec.projection) {
        proj_.collect(map, prefix + ".proj");
        bn_proj_.collect(map, prefix + ".bn_proj");
    }
}

ResidualBlock build_residual_block(const ResidualBlockSpec& spec, RandomStream init) {
    return ResidualBlock(spec, init);
}

CascadedResidual::CascadedResidual(int n, std::int64_t c_in, std::int64_t c_out,
                                   RandomStream init) {
    if (n < 1) fail("CascadedResidual: need at least one block");
    blocks_.reserve(n);
    for (int i = 0; i < n; ++i) {
        const std::int64_t in = i == 0 ? c_in : c_out;
        blocks_.emplace_back(ResidualBlockSpec::make(in, c_out), init.derive(10 + i));
    }
}

Tensor CascadedResidual::forward(const Tensor& x, bool train) {
    Tensor y = x;
    for (auto& b : blocks_) y = b.forward(y, train);
    return y;
}

void CascadedResidual::collect(ParamMap& map, const std::string& prefix) {
    for (std::size_t i = 0; i < blocks_.size(); ++i)
        blocks_[i].collect(map, prefix + ".block" + std::to_string(i));
}

// ---- ASPP ------------------------------------------------------------------

ASPPSpec ASPPSpec::make(std::int64_t c_in) {
    ASPPSpec s;
    s.c_in = c_in;
    s.branch = std::max<std::int64_t>(8, c_in / 4);
    s.c_out = std::max<std::int64_t>(8, c_in / 2);
    return s;
}

void ASPPSpec::validate() const {
    if (c_in <= 0 || branch <= 0 || c_out <= 0) fail("ASPPSpec: channel counts must be positive");
}

Aspp::Aspp(const ASPPSpec& s, RandomStream init) : spec(s) {
    spec.validate();
    b1x1_ = ConvBnRelu(s.c_in, s.branch, 1, 1, 0, 1, init.derive(1));
    b_d6_ = ConvBnRelu(s.c_in, s.branch, 3, 1, s.rates[0], s.rates[0], init.derive(2));
    b_d12_ = ConvBnRelu(s.c_in, s.branch, 3, 1, s.rates[1], s.rates[1], init.derive(3));
    b_d18_ = ConvBnRelu(s.c_in, s.branch, 3, 1, s.rates[2], s.rates[2], init.derive(4));
    b_pool_ = ConvBnRelu(s.c_in, s.branch, 1, 1, 0, 1, init.derive(5));
    fuse_ = ConvBnRelu(kBranches * s.branch, s.c_out, 1, 1, 0, 1, init.derive(6));
}

Tensor Aspp::forward(const Tensor& x, bool train) {
    const std::int64_t h = x.dim(2), w = x.dim(3);
    Tensor a = b1x1_.forward(x, train);
    Tensor b = b_d6_.forward(x, train);
    Tensor c = b_d12_.forward(x, train);
    Tensor d = b_d18_.forward(x, train);
    Tensor pooled = b_pool_.forward(global_avg_pool(x), train);
    Tensor e = broadcast_spatial(pooled, h, w);
    Tensor cat = concat_channels(concat_channels(a, b), concat_channels(c, concat_channels(d, e)));
    return fuse_.forward(cat, train);
}

void Aspp::collect(ParamMap& map, const std::string& prefix) {
    b1x1_.collect(map, prefix + ".b1x1");
    b_d6_.collect(map, prefix + ".d6");
    b_d12_.collect(map, prefix + ".d12");
    b_d18_.collect(map, prefix + ".d18");
    b_pool_.collect(map, prefix + ".pool");
    fuse_.collect(map, prefix + ".fuse");
}

// ---- encoder ----------------------------------------------------------------

Encoder::Encoder(const ChannelPlan& plan, RandomStream init, bool residual_stages)
    : residual_(residual_stages) {
    stem_ = ConvBnRelu(plan.c_in, plan.c1, 3, 1, 1, 1, init.derive(1));
    const std::int64_t chans[5] = {plan.c1, plan.c1, plan.c2, plan.c3, plan.c4};
    for (int s = 0; s < 4; ++s) {
        if (residual_) {
            stages_[s] = CascadedResidual(3, chans[s], chans[s + 1], init.derive(10 + s));
        } else {
            plain_a_[s] = ConvBnRelu(chans[s], chans[s + 1], 3, 1, 1, 1, init.derive(20 + 2 * s));
            plain_b_[s] =
                ConvBnRelu(chans[s + 1], chans[s + 1], 3, 1, 1, 1, init.derive(21 + 2 * s));
        }
    }
}

EncoderOutput Encoder::forward(const Tensor& x, bool train) {
    EncoderOutput out;
    Tensor y = stem_.forward(x, train);
    for (int s = 0; s < 4; ++s) {
        y = residual_ ? stages_[s].forward(y, train)
                      : plain_b_[s].forward(plain_a_[s].forward(y, train), train);
        out.skips[s] = y;
        y = max_pool2d(y);
    }
    out.bottom = y;
    return out;
}

void Encoder::collect(ParamMap& map, const std::string& prefix) {
    stem_.collect(map, prefix + ".stem");
    for (int s = 0; s < 4; ++s) {
        const std::string name = prefix + ".stage" + std::to_string(s);
        if (residual_) {
            stages_[s].collect(map, name);
        } else {
            plain_a_[s].collect(map, name + ".conv_a");
            plain_b_[s].collect(map, name + ".conv_b");
        }
    }
}

Encoder build_encoder(const ChannelPlan& plan, RandomStream init) {
    return Encoder(plan, init, true);
}

// ---- PFEB variants ---------------------------------------------------------

PfebIn::PfebIn(std::int64_t c4, RandomStream init) {
    drop1_ = DropoutLayer(0.3f, init.derive(100));
    drop2_ = DropoutLayer(0.3f, init.derive(101));
    drop3_ = DropoutLayer(0.3f, init.derive(102));
    for (int i = 0; i < 7; ++i) convs_[i] = ConvBnRelu(c4, c4, 3, 1, 1, 1, init.derive(i));
}

Tensor PfebIn::forward(const Tensor& x, bool train) {
    Tensor y = drop1_.forward(x, train);
    y = convs_[0].forward(y, train);
    y = max_pool2d(y);
    y = convs_[1].forward(y, train);
    y = drop2_.forward(y, train);
    y = convs_[2].forward(y, train);
    y = max_pool2d(y);
    y = convs_[3].forward(y, train);
    y = drop3_.forward(y, train);
    y = convs_[4].forward(y, train);
    y = nearest_upsample2x(y);
    y = convs_[5].forward(y, train);
    y = nearest_upsample2x(y);
    y = convs_[6].forward(y, train);
    return y;
}

void PfebIn::collect(ParamMap& map, const std::string& prefix) {
    drop1_.collect(map, prefix + ".drop1");
    drop2_.collect(map, prefix + ".drop2");
    drop3_.collect(map, prefix + ".drop3");
    for (int i = 0; i < 7; ++i) convs_[i].collect(map, prefix + ".conv" + std::to_string(i));
}

PfebIn build_pfeb_in(std::int64_t c4, RandomStream init) { return PfebIn(c4, init); }

PfebOut::PfebOut(std::int64_t c4, RandomStream init) {
    blocks_ = CascadedResidual(5, c4, c4, init.derive(1));
    aspp_ = Aspp(ASPPSpec::make(c4), init.derive(2));
    out_channels_ = std::max<std::int64_t>(8, c4 / 4);
    up_ = ConvTranspose2d(aspp_.spec.c_out, out_channels_, 6, 2, 2, init.derive(3));
    up_bn_ = BatchNorm2d(out_channels_);
}

Tensor PfebOut::forward(const Tensor& x, bool train) {
    Tensor y = blocks_.forward(x, train);
    y = aspp_.forward(y, train);
    return relu(up_bn_.forward(up_.forward(y), train));
}

void PfebOut::collect(ParamMap& map, const std::string& prefix) {
    blocks_.collect(map, prefix + ".blocks");
    aspp_.collect(map, prefix + ".aspp");
    up_.collect(map, prefix + ".up");
    up_bn_.collect(map, prefix + ".up_bn");
}

namespace {
std::int64_t params_in(const ParamMap& map) {
    std::int64_t n = 0;
    for (const auto& [name, t] : map.params) n += t.numel();
    return n;
}
}  // namespace

std::int64_t PfebOut::block_params() const {
    ParamMap map;
    const_cast<CascadedResidual&>(blocks_).collect(map, "x");
    return params_in(map);
}

std::int64_t PfebOut::other_params() const {
    ParamMap map;
    const_cast<Aspp&>(aspp_).collect(map, "x");
    const_cast<ConvTranspose2d&>(up_).collect(map, "y");
    const_cast<BatchNorm2d&>(up_bn_).collect(map, "z");
    return params_in(map);
}

PfebOut build_pfeb_out(std::int64_t c4, RandomStream init) { return PfebOut(c4, init); }

PfebOutlite::PfebOutlite(std::int64_t c4, RandomStream init) {
    blocks_ = CascadedResidual(2, c4, c4, init.derive(1));
    aspp_ = Aspp(ASPPSpec::make(c4), init.derive(2));
    drop_ = DropoutLayer(0.3f, init.derive(100));
    out_channels_ = aspp_.spec.c_out;
}

Tensor PfebOutlite::forward(const Tensor& x, bool train) {
    Tensor y = blocks_.forward(x, train);
    y = aspp_.forward(y, train);
    y = max_pool2d(y);
    y = drop_.forward(y, train);
    return nearest_upsample2x(y);
}

void PfebOutlite::collect(ParamMap& map, const std::string& prefix) {
    blocks_.collect(map, prefix + ".blocks");
    aspp_.collect(map, prefix + ".aspp");
    drop_.collect(map, prefix + ".drop");
}

PfebOutlite build_pfeb_outlite(std::int64_t c4, RandomStream init) {
    return PfebOutlite(c4, init);
}

// ---- decoders ---------------------------------------------------------------

DecoderIn::DecoderIn(const ChannelPlan& plan, std::int64_t bottleneck_channels,
                     RandomStream init) {
    const std::int64_t targets[4] = {plan.c4, plan.c3, plan.c2, plan.c5};
    const std::int64_t skips[4] = {plan.c4, plan.c3, plan.c2, plan.c1};
    std::int64_t prev = bottleneck_channels;
    for (int s = 0; s < 4; ++s) {
        const int k = s == 0 ? 3 : 5;
        const int pad = k / 2;
        const std::int64_t t = targets[s];
        const std::int64_t fuse_out = s == 3 ? plan.c5 : t;
        const std::int64_t refine_out = s == 3 ? plan.c6 : t;
        stages_[s].up_a = ConvBnRelu(prev, t, k, 1, pad, 1, init.derive(40 + 4 * s));
        stages_[s].up_b = ConvBnRelu(t, t, k, 1, pad, 1, init.derive(41 + 4 * s));
        stages_[s].fuse = ConvBnRelu(t + skips[s], fuse_out, k, 1, pad, 1, init.derive(42 + 4 * s));
        stages_[s].refine = ConvBnRelu(fuse_out, refine_out, k, 1, pad, 1, init.derive(43 + 4 * s));
        prev = refine_out;
    }
    head_ = Conv2d(plan.c6, plan.c_out, 1, 1, 0, 1, init.derive(60));
}

Tensor DecoderIn::forward(const Tensor& x, const std::array<Tensor, 4>& skips, bool train) {
    Tensor y = x;
    for (int s = 0; s < 4; ++s) {
        y = stages_[s].up_a.forward(y, train);
        y = stages_[s].up_b.forward(y, train);
        y = nearest_upsample2x(y);
        y = concat_channels(y, skips[3 - s]);
        y = stages_[s].fuse.forward(y, train);
        y = stages_[s].refine.forward(y, train);
    }
    return head_.forward(y);
}

void DecoderIn::collect(ParamMap& map, const std::string& prefix) {
    for (int s = 0; s < 4; ++s) {
        const std::string name = prefix + ".stage" + std::to_string(s);
        stages_[s].up_a.collect(map, name + ".up_a");
        stages_[s].up_b.collect(map, name + ".up_b");
        stages_[s].fuse.collect(map, name + ".fuse");
        stages_[s].refine.collect(map, name + ".refine");
    }
    head_.collect(map, prefix + ".head");
}

DecoderOut::DecoderOut(const ChannelPlan& plan, std::int64_t bottleneck_channels, int n_stages,
                       RandomStream init)
    : n_stages_(n_stages) {
    if (n_stages != 3 && n_stages != 4) fail("DecoderOut: n_stages must be 3 or 4");
    // Skip channels indexed by scale: /8, /4, /2 for the stage inputs.
    const std::int64_t skip_at[4] = {plan.c1, plan.c2, plan.c3, plan.c4};
    std::vector<std::int64_t> targets;
    if (n_stages == 3) targets = {plan.c2, plan.c5, plan.c6};
    else targets = {plan.c3, plan.c2, plan.c5, plan.c6};
    stages_.resize(n_stages);
    std::int64_t prev = bottleneck_channels;
    for (int s = 0; s < n_stages; ++s) {
        // A stage starting at scale /2^(n_stages - s) concatenates the skip at
        // that scale; the deepest Outlite stage (/16) has none.
        const int scale_idx = n_stages - s;  // 4 -> /16, 3 -> /8, 2 -> /4, 1 -> /2
        std::int64_t in_ch = prev;
        if (scale_idx <= 3) in_ch += skip_at[scale_idx];
        stages_[s].up = ConvTranspose2d(in_ch, targets[s], 6, 2, 2, init.derive(70 + 2 * s));
        stages_[s].bn = BatchNorm2d(targets[s]);
        prev = targets[s];
        if (s == 0) {
            local_ = ConvBnRelu(prev, prev, 5, 1, 2, 1, init.derive(80));
        }
    }
    head_ = Conv2d(plan.c6 + plan.c1, plan.c_out, 1, 1, 0, 1, init.derive(81));
}

Tensor DecoderOut::forward(const Tensor& x, const std::array<Tensor, 4>& skips, bool train) {
    Tensor y = x;
    for (int s = 0; s < n_stages_; ++s) {
        const int scale_idx = n_stages_ - s;  // skips[k] holds the /2^k map
        if (scale_idx <= 3) y = concat_channels(y, skips[scale_idx]);
        y = relu(stages_[s].bn.forward(stages_[s].up.forward(y), train));
        if (s == 0) y = local_.forward(y, train);
    }
    y = concat_channels(y, skips[0]);
    return head_.forward(y);
}

void DecoderOut::collect(ParamMap& map, const std::string& prefix) {
    for (int s = 0; s < n_stages_; ++s) {
        const std::string name = prefix + ".stage" + std::to_string(s);
        stages_[s].up.collect(map, name + ".up");
        stages_[s].bn.collect(map, name + ".bn");
    }
    local_.collect(map, prefix + ".local");
    head_.collect(map, prefix + ".head");
}

// ---- full model -------------------------------------------------------------

R2Net::R2Net(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
    spec_.validate();
    RandomStream master(seed);
    const auto& plan = spec_.plan;
    const bool residual_encoder = spec_.variant != Variant::UNet;
    encoder_ = Encoder(plan, master.derive(1), residual_encoder);
    switch (spec_.variant) {
        case Variant::In:
            pfeb_in_ = PfebIn(plan.c4, master.derive(2));
            decoder_in_ = DecoderIn(plan, plan.c4, master.derive(3));
            break;
        case Variant::Out:
            pfeb_out_ = PfebOut(plan.c4, master.derive(2));
            decoder_out_ = DecoderOut(plan, pfeb_out_.out_channels(), 3, master.derive(3));
            break;
        case Variant::Outlite:
            pfeb_outlite_ = PfebOutlite(plan.c4, master.derive(2));
            decoder_out_ = DecoderOut(plan, pfeb_outlite_.out_channels(), 4, master.derive(3));
            break;
        case Variant::UNet:
            unet_mid_a_ = ConvBnRelu(plan.c4, plan.c4, 3, 1, 1, 1, master.derive(4));
            unet_mid_b_ = ConvBnRelu(plan.c4, plan.c4, 3, 1, 1, 1, master.derive(5));
            decoder_in_ = DecoderIn(plan, plan.c4, master.derive(3));
            break;
    }
}

Tensor R2Net::forward(const Tensor& x, bool train) {
    if (x.shape().rank() != 4 || x.dim(1) != spec_.plan.c_in)
        fail("R2Net::forward: expected NCHW input with " + std::to_string(spec_.plan.c_in) +
             " channels, got " + x.shape().str());
    if (x.dim(2) != x.dim(3) || !power_of_two(x.dim(2)) || x.dim(2) < 64)
        fail("R2Net::forward: spatial extent must be a square power of two >= 64, got " +
             x.shape().str());
    EncoderOutput enc = encoder_.forward(x, train);
    Tensor mid;
    switch (spec_.variant) {
        case Variant::In: mid = pfeb_in_.forward(enc.bottom, train); break;
        case Variant::Out: mid = pfeb_out_.forward(enc.bottom, train); break;
        case Variant::Outlite: mid = pfeb_outlite_.forward(enc.bottom, train); break;
        case Variant::UNet:
            mid = unet_mid_b_.forward(unet_mid_a_.forward(enc.bottom, train), train);
            break;
    }
    if (spec_.variant == Variant::Out || spec_.variant == Variant::Outlite)
        return decoder_out_.forward(mid, enc.skips, train);
    return decoder_in_.forward(mid, enc.skips, train);
}

ParamMap R2Net::param_map() {
    ParamMap map;
    encoder_.collect(map, "encoder");
    switch (spec_.variant) {
        case Variant::In: pfeb_in_.collect(map, "pfeb_in"); break;
        case Variant::Out: pfeb_out_.collect(map, "pfeb_out"); break;
        case Variant::Outlite: pfeb_outlite_.collect(map, "pfeb_outlite"); break;
        case Variant::UNet:
            unet_mid_a_.collect(map, "mid.conv_a");
            unet_mid_b_.collect(map, "mid.conv_b");
            break;
    }
    if (spec_.variant == Variant::Out || spec_.variant == Variant::Outlite)
        decoder_out_.collect(map, "decoder");
    else
        decoder_in_.collect(map, "decoder");
    return map;
}

std::vector<Tensor> R2Net::parameters() {
    std::vector<Tensor> out;
    for (auto& [name, t] : param_map().params) out.push_back(t);
    return out;
}

void R2Net::zero_grads() {
    for (auto& t : parameters()) t.zero_grad();
}

std::int64_t count_params(R2Net& model) {
    std::int64_t n = 0;
    for (const auto& [name, t] : model.param_map().params) n += t.numel();
    return n;
}

std::int64_t count_macs(R2Net& model, const Shape& input_shape) {
    std::unordered_map<const void*, std::int64_t> sink;
    macs::set_sink(&sink);
    {
        NoGradGuard ng;
        Tensor x = Tensor::zeros(input_shape);
        model.forward(x, false);
    }
    macs::set_sink(nullptr);
    std::int64_t total = 0;
    for (const auto& [k, v] : sink) total += v;
    return total;
}

std::vector<LayerCost> per_layer_costs(R2Net& model, const Shape& input_shape) {
    std::unordered_map<const void*, std::int64_t> sink;
    macs::set_sink(&sink);
    {
        NoGradGuard ng;
        Tensor x = Tensor::zeros(input_shape);
        model.forward(x, false);
    }
    macs::set_sink(nullptr);
    std::vector<LayerCost> out;
    ParamMap map = model.param_map();
    for (std::size_t i = 0; i < map.params.size(); ++i) {
        const auto& [name, t] = map.params[i];
        if (name.size() < 2 || name.substr(name.size() - 2) != ".w") continue;
        std::int64_t params = t.numel();
        // pair the bias that follows the weight in collection order
        if (i + 1 < map.params.size() && map.params[i + 1].first == name.substr(0, name.size() - 2) + ".b")
            params += map.params[i + 1].second.numel();
        auto it = sink.find(t.node());
        out.push_back({name.substr(0, name.size() - 2), params,
                       it == sink.end() ? 0 : it->second});
    }
    return out;
}

}  // namespace rmap::net
