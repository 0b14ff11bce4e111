#pragma once

#include <cstdint>
#include <vector>

#include "rmap/tensor.hpp"

namespace rmap {

struct AdamConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// Standard Adam with bias correction. Moment buffers are created lazily to
// match the registered parameter shapes; the step counter strictly increases.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    AdamConfig& config() { return cfg_; }
    std::int64_t step_count() const { return step_; }

    // Applies one update using each parameter's accumulated .grad().
    // Parameters with an empty grad buffer are treated as zero-gradient.
    void step(std::vector<Tensor>& params);

    // Serialization access (checkpoint format).
    const std::vector<std::vector<float>>& first_moments() const { return m_; }
    const std::vector<std::vector<float>>& second_moments() const { return v_; }
    void restore(std::int64_t step, std::vector<std::vector<float>> m,
                 std::vector<std::vector<float>> v);

private:
    AdamConfig cfg_;
    std::int64_t step_ = 0;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
};

// Single-call form: one bias-corrected Adam update of `params` given `grads`.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state);

}  // namespace rmap
