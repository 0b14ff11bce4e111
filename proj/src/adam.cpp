#include "rmap/adam.hpp"

#include <cmath>

#include "rmap/kernels.hpp"

namespace rmap {

void AdamState::step(std::vector<Tensor>& params) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i].data().size(), 0.0f);
            v_[i].assign(params[i].data().size(), 0.0f);
        }
    }
    if (m_.size() != params.size())
        fail("AdamState: registered " + std::to_string(m_.size()) + " parameters, got " +
             std::to_string(params.size()));
    ++step_;
    const float c1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(step_));
    const float c2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::size_t n = params[i].data().size();
        if (m_[i].size() != n)
            fail("AdamState: moment shape mismatch for parameter " + std::to_string(i));
        auto grad = params[i].grad();
        if (grad.empty()) {
            // zero gradient: moments still decay
            static thread_local std::vector<float> zeros;
            zeros.assign(n, 0.0f);
            kern::adam_update(params[i].mutable_data().data(), zeros.data(), m_[i].data(),
                              v_[i].data(), n, cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.eps, c1, c2);
        } else {
            kern::adam_update(params[i].mutable_data().data(), grad.data(), m_[i].data(),
                              v_[i].data(), n, cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.eps, c1, c2);
        }
    }
}

void AdamState::restore(std::int64_t step, std::vector<std::vector<float>> m,
                        std::vector<std::vector<float>> v) {
    step_ = step;
    m_ = std::move(m);
    v_ = std::move(v);
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state) {
    if (params.size() != grads.size())
        fail("adam_step: " + std::to_string(params.size()) + " parameters vs " +
             std::to_string(grads.size()) + " gradients");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!(params[i].shape() == grads[i].shape()))
            fail("adam_step: parameter " + std::to_string(i) + " shape " +
                 params[i].shape().str() + " does not match gradient shape " +
                 grads[i].shape().str());
        params[i].grad_buffer();
        params[i].zero_grad();
        kern::axpy(1.0f, grads[i].data().data(),
                   params[i].grad_buffer().data(), grads[i].data().size());
    }
    state.step(params);
}

}  // namespace rmap
