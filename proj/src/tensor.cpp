#include "rmap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace rmap {

std::int64_t Shape::numel() const {
    std::int64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::string Shape::str() const {
    if (dims.empty()) return "scalar";
    std::string s;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += 'x';
        s += std::to_string(dims[i]);
    }
    return s;
}

namespace {

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

thread_local bool g_grad_enabled = true;

}  // namespace

std::uint64_t RandomStream::next_u64() {
    ++counter_;
    return mix64(seed_ ^ (counter_ * 0x9E3779B97F4A7C15ull));
}

float RandomStream::uniform() {
    return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
}

float RandomStream::uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

float RandomStream::normal() {
    // Box-Muller; consumes exactly two counter steps.
    float u1 = uniform();
    const float u2 = uniform();
    if (u1 < 1e-12f) u1 = 1e-12f;
    const float r = std::sqrt(-2.0f * std::log(u1));
    return r * std::cos(6.28318530717958647692f * u2);
}

std::int64_t RandomStream::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) fail("RandomStream::uniform_int: hi < lo");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
}

RandomStream RandomStream::derive(std::uint64_t tag) const {
    return RandomStream(mix64(seed_ ^ mix64(tag + 0x9E3779B97F4A7C15ull)));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void fail(const std::string& msg) { throw std::invalid_argument(msg); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto node = std::make_shared<detail::Node>();
    node->data.assign(static_cast<std::size_t>(shape.numel()), 0.0f);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.node_->data.begin(), t.node_->data.end(), value);
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
    if (shape.numel() != static_cast<std::int64_t>(data.size()))
        fail("Tensor::from_data: shape " + shape.str() + " needs " + std::to_string(shape.numel()) +
             " values, got " + std::to_string(data.size()));
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::rand_uniform(Shape shape, RandomStream& rng, float lo, float hi,
                            bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.node_->data) v = rng.uniform(lo, hi);
    return t;
}

const Shape& Tensor::shape() const {
    if (!node_) fail("Tensor: undefined handle");
    return node_->shape;
}

std::int64_t Tensor::numel() const { return shape().numel(); }

std::span<const float> Tensor::data() const {
    if (!node_) fail("Tensor: undefined handle");
    return node_->data;
}

std::span<float> Tensor::mutable_data() {
    if (!node_) fail("Tensor: undefined handle");
    return node_->data;
}

float Tensor::item() const {
    if (numel() != 1) fail("Tensor::item: tensor has shape " + shape().str());
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
    if (!node_) fail("Tensor: undefined handle");
    node_->requires_grad = v;
    return *this;
}

std::span<const float> Tensor::grad() const {
    if (!node_) fail("Tensor: undefined handle");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

std::span<float> Tensor::grad_buffer() {
    if (!node_) fail("Tensor: undefined handle");
    if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0f);
    return node_->grad;
}

Tensor Tensor::detach_copy() const {
    if (!node_) fail("Tensor: undefined handle");
    auto node = std::make_shared<detail::Node>();
    node->shape = node_->shape;
    node->data = node_->data;
    return Tensor(std::move(node));
}

Tensor Tensor::make_op_result(Shape shape, std::vector<float> data, std::vector<Tensor> inputs,
                              const char* op_name,
                              std::function<void(const Tensor& out)> backward_fn) {
    Tensor out = from_data(std::move(shape), std::move(data), false);
    out.node_->op_name = op_name;
    bool needs_grad = false;
    if (g_grad_enabled) {
        for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
    }
    if (needs_grad) {
        out.node_->requires_grad = true;
        out.node_->parents.reserve(inputs.size());
        for (auto& in : inputs) out.node_->parents.push_back(in.node_);
        out.node_->backward_fn = std::move(backward_fn);
    }
    return out;
}

void Tensor::backward() {
    if (!node_) fail("Tensor: undefined handle");
    if (numel() != 1) fail("backward: root must be scalar, got shape " + shape().str());
    if (!node_->requires_grad)
        fail("backward: root does not require grad (no recorded computation)");
    if (node_->backward_done)
        fail("backward: already ran from this node; rebuild the graph before calling again");

    // Depth-first topological order over the recorded graph.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            detail::Node* p = n->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->grad.assign(1, 1.0f);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (!n->backward_fn) continue;
        if (n->grad.empty()) continue;  // unreachable from the root's grad flow
        Tensor handle(std::shared_ptr<detail::Node>(n, [](detail::Node*) {}));
        n->backward_fn(handle);
        // Release saved activations as soon as the node is consumed.
        n->backward_fn = nullptr;
        n->parents.clear();
        if (n != node_.get()) {
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
    node_->backward_done = true;
}

}  // namespace rmap
