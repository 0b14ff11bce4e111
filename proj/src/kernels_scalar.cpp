#include <algorithm>
#include <cmath>

#include "kernels_impl.hpp"

// Reference kernels. Deliberately plain loops: these are the ground truth
// the SIMD variants are equivalence-tested against.

namespace rmap::kern::scalar {
namespace {

void gemm_block(std::size_t m, std::size_t n, std::size_t k, float alpha,
                const float* a, std::size_t lda, const float* b, std::size_t ldb,
                float beta, float* c, std::size_t ldc) {
    for (std::size_t i = 0; i < m; ++i) {
        float* crow = c + i * ldc;
        if (beta == 0.0f) {
            std::fill(crow, crow + n, 0.0f);
        } else if (beta != 1.0f) {
            for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
        }
        const float* arow = a + i * lda;
        for (std::size_t p = 0; p < k; ++p) {
            const float av = alpha * arow[p];
            const float* brow = b + p * ldb;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void relu_fwd(const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_acc(const float* x, const float* dy, float* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (x[i] > 0.0f) dx[i] += dy[i];
    }
}

void add(const float* a, const float* b, float* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

void mul(const float* a, const float* b, float* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(float alpha, float* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void adam_update(float* p, const float* g, float* m, float* v, std::size_t n,
                 float lr, float b1, float b2, float eps, float c1, float c2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + (1.0f - b1) * g[i];
        v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
        const float mhat = m[i] / c1;
        const float vhat = v[i] / c2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace

const VariantTable table = {
    gemm_block, relu_fwd, relu_bwd_acc, add, mul, axpy, scale, adam_update,
};

}  // namespace rmap::kern::scalar
