#pragma once

#include <cstddef>

// Per-variant entry points. The public API in rmap/kernels.hpp picks a table
// at startup; gemm threading lives in the dispatcher, so variants only ever
// see a single column block.

namespace rmap::kern {

struct VariantTable {
    void (*gemm_block)(std::size_t m, std::size_t n, std::size_t k, float alpha,
                       const float* a, std::size_t lda, const float* b, std::size_t ldb,
                       float beta, float* c, std::size_t ldc);
    void (*relu_fwd)(const float* x, float* y, std::size_t n);
    void (*relu_bwd_acc)(const float* x, const float* dy, float* dx, std::size_t n);
    void (*add)(const float* a, const float* b, float* c, std::size_t n);
    void (*mul)(const float* a, const float* b, float* c, std::size_t n);
    void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
    void (*scale)(float alpha, float* x, std::size_t n);
    void (*adam_update)(float* p, const float* g, float* m, float* v, std::size_t n,
                        float lr, float b1, float b2, float eps, float c1, float c2);
};

namespace scalar {
extern const VariantTable table;
}

#ifdef RMAP_BUILD_AVX2
namespace avx2 {
extern const VariantTable table;
}
#endif

}  // namespace rmap::kern
