#pragma once

#include <cstddef>
#include <cstdint>

// Low-level float kernels behind the tensor engine. Every kernel has a
// scalar reference implementation; hot ones also have an AVX2+FMA variant.
// The active variant is picked once at startup from CPUID, overridable
// with RMAP_SIMD=scalar|avx2|auto (tests use this to cross-check variants).

namespace rmap::kern {

enum class SimdLevel { Scalar, Avx2 };

SimdLevel active_level();
const char* active_level_name();

// Forces a variant. Throws if the requested level is not runnable on this
// CPU/build. Intended for tests and benchmarks.
void force_level(SimdLevel level);

// C[M x N] = alpha * A[M x K] * B[K x N] + beta * C, row-major with leading
// dimensions lda/ldb/ldc. Multi-threaded over column tiles; the per-element
// accumulation order is fixed, so results do not depend on thread count.
void sgemm(std::size_t m, std::size_t n, std::size_t k,
           float alpha, const float* a, std::size_t lda,
           const float* b, std::size_t ldb,
           float beta, float* c, std::size_t ldc);

// y[i] = max(x[i], 0)
void relu_fwd(const float* x, float* y, std::size_t n);
// dx[i] += dy[i] * (x[i] > 0)
void relu_bwd_acc(const float* x, const float* dy, float* dx, std::size_t n);

// c[i] = a[i] + b[i]
void add(const float* a, const float* b, float* c, std::size_t n);
// c[i] = a[i] * b[i]
void mul(const float* a, const float* b, float* c, std::size_t n);
// y[i] += alpha * x[i]
void axpy(float alpha, const float* x, float* y, std::size_t n);
// x[i] *= alpha
void scale(float alpha, float* x, std::size_t n);

// Accumulating reductions in double so the result is independent of
// vector width up to the usual last-bit FMA differences.
double sum(const float* x, std::size_t n);
double sumsq(const float* x, std::size_t n);
// sum_i (a[i]-b[i])^2
double sqdiff_sum(const float* a, const float* b, std::size_t n);

// One fused Adam update over a parameter slab.
//   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2
//   p -= lr * (m/c1) / (sqrt(v/c2) + eps)
// c1/c2 are the bias corrections 1-b1^t and 1-b2^t, precomputed by the caller.
void adam_update(float* p, const float* g, float* m, float* v, std::size_t n,
                 float lr, float b1, float b2, float eps, float c1, float c2);

}  // namespace rmap::kern
