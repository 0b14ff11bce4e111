#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rmap {

// Dense row-major extent list. 4-D activation tensors are NCHW.
struct Shape {
    std::vector<std::int64_t> dims;

    Shape() = default;
    Shape(std::initializer_list<std::int64_t> d) : dims(d) {}
    explicit Shape(std::vector<std::int64_t> d) : dims(std::move(d)) {}

    std::int64_t numel() const;
    std::size_t rank() const { return dims.size(); }
    std::int64_t operator[](std::size_t i) const { return dims[i]; }
    bool operator==(const Shape& o) const { return dims == o.dims; }
    std::string str() const;  // e.g. "1x3x256x256"
};

// Counter-based deterministic RNG. A (seed, counter) pair fully determines
// the next value on every platform, which keeps dropout masks and weight
// init reproducible and makes checkpoint resume bit-exact.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed = 0, std::uint64_t counter = 0)
        : seed_(seed), counter_(counter) {}

    std::uint64_t next_u64();
    float uniform();                        // [0, 1)
    float uniform(float lo, float hi);      // [lo, hi)
    float normal();                         // standard normal, Box-Muller
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);  // inclusive bounds

    // Independent child stream; used to give each layer / sample its own
    // sequence that does not depend on consumption order elsewhere.
    RandomStream derive(std::uint64_t tag) const;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }
    void restore(std::uint64_t seed, std::uint64_t counter) { seed_ = seed; counter_ = counter; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

namespace detail {
struct Node;
}

// Value-semantics handle over a shared tensor node. Copies alias the same
// storage; all ops produce fresh nodes and never mutate their inputs' data.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);
    static Tensor rand_uniform(Shape shape, RandomStream& rng, float lo, float hi,
                               bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::int64_t numel() const;
    std::int64_t dim(std::size_t i) const { return shape()[i]; }

    std::span<const float> data() const;
    std::span<float> mutable_data();  // for parameter updates and loaders
    float item() const;               // single-element tensors only

    bool requires_grad() const;
    Tensor& set_requires_grad(bool v);

    // Gradient accumulated by backward(); empty span when absent.
    std::span<const float> grad() const;
    void zero_grad();

    // Reverse-mode sweep from a scalar node. Rejects a second sweep from the
    // same node; gradients accumulate additively into every reachable
    // requires_grad tensor.
    void backward();

    // Detached copy sharing no graph history (fresh storage).
    Tensor detach_copy() const;

    detail::Node* node() const { return node_.get(); }

    // Engine internals (op implementations live in ops.cpp).
    static Tensor make_op_result(Shape shape, std::vector<float> data,
                                 std::vector<Tensor> inputs, const char* op_name,
                                 std::function<void(const Tensor& out)> backward_fn);
    std::span<float> grad_buffer();  // allocates zeroed buffer on first use

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

namespace detail {
struct Node {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;
    bool requires_grad = false;
    bool backward_done = false;
    const char* op_name = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(const Tensor& out)> backward_fn;
};
}  // namespace detail

// Scoped switch that disables graph recording (inference / data paths).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

// Formats a short diagnostic like "conv2d: input channels 4 != weight C_in 3".
[[noreturn]] void fail(const std::string& msg);

}  // namespace rmap
