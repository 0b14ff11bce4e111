#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "kernels_impl.hpp"

// AVX2+FMA variants. gemm uses a 6x16 register tile: 12 ymm accumulators,
// two B vectors and one broadcast of A per fma step.

namespace rmap::kern::avx2 {
namespace {

template <int R>
inline void gemm_tile_16(std::size_t n_k, float alpha, const float* a, std::size_t lda,
                         const float* b, std::size_t ldb, float beta, float* c,
                         std::size_t ldc) {
    __m256 acc[R][2];
    for (int r = 0; r < R; ++r) {
        if (beta == 0.0f) {
            acc[r][0] = _mm256_setzero_ps();
            acc[r][1] = _mm256_setzero_ps();
        } else {
            acc[r][0] = _mm256_mul_ps(_mm256_set1_ps(beta), _mm256_loadu_ps(c + r * ldc));
            acc[r][1] = _mm256_mul_ps(_mm256_set1_ps(beta), _mm256_loadu_ps(c + r * ldc + 8));
        }
    }
    const __m256 va = _mm256_set1_ps(alpha);
    for (std::size_t p = 0; p < n_k; ++p) {
        const __m256 b0 = _mm256_loadu_ps(b + p * ldb);
        const __m256 b1 = _mm256_loadu_ps(b + p * ldb + 8);
        for (int r = 0; r < R; ++r) {
            const __m256 av = _mm256_mul_ps(va, _mm256_set1_ps(a[r * lda + p]));
            acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
            acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
        }
    }
    for (int r = 0; r < R; ++r) {
        _mm256_storeu_ps(c + r * ldc, acc[r][0]);
        _mm256_storeu_ps(c + r * ldc + 8, acc[r][1]);
    }
}

template <int R>
inline void gemm_tile_8(std::size_t n_k, float alpha, const float* a, std::size_t lda,
                        const float* b, std::size_t ldb, float beta, float* c,
                        std::size_t ldc) {
    __m256 acc[R];
    for (int r = 0; r < R; ++r) {
        acc[r] = beta == 0.0f
                     ? _mm256_setzero_ps()
                     : _mm256_mul_ps(_mm256_set1_ps(beta), _mm256_loadu_ps(c + r * ldc));
    }
    const __m256 va = _mm256_set1_ps(alpha);
    for (std::size_t p = 0; p < n_k; ++p) {
        const __m256 b0 = _mm256_loadu_ps(b + p * ldb);
        for (int r = 0; r < R; ++r) {
            const __m256 av = _mm256_mul_ps(va, _mm256_set1_ps(a[r * lda + p]));
            acc[r] = _mm256_fmadd_ps(av, b0, acc[r]);
        }
    }
    for (int r = 0; r < R; ++r) _mm256_storeu_ps(c + r * ldc, acc[r]);
}

template <int R>
inline void gemm_rows(std::size_t n, std::size_t k, float alpha, const float* a,
                      std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
                      std::size_t ldc) {
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) gemm_tile_16<R>(k, alpha, a, lda, b + j, ldb, beta, c + j, ldc);
    if (j + 8 <= n) {
        gemm_tile_8<R>(k, alpha, a, lda, b + j, ldb, beta, c + j, ldc);
        j += 8;
    }
    for (; j < n; ++j) {
        for (int r = 0; r < R; ++r) {
            float accv = beta == 0.0f ? 0.0f : beta * c[r * ldc + j];
            for (std::size_t p = 0; p < k; ++p) accv += alpha * a[r * lda + p] * b[p * ldb + j];
            c[r * ldc + j] = accv;
        }
    }
}

void gemm_block(std::size_t m, std::size_t n, std::size_t k, float alpha, const float* a,
                std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
                std::size_t ldc) {
    std::size_t i = 0;
    for (; i + 6 <= m; i += 6)
        gemm_rows<6>(n, k, alpha, a + i * lda, lda, b, ldb, beta, c + i * ldc, ldc);
    switch (m - i) {
        case 5: gemm_rows<5>(n, k, alpha, a + i * lda, lda, b, ldb, beta, c + i * ldc, ldc); break;
        case 4: gemm_rows<4>(n, k, alpha, a + i * lda, lda, b, ldb, beta, c + i * ldc, ldc); break;
        case 3: gemm_rows<3>(n, k, alpha, a + i * lda, lda, b, ldb, beta, c + i * ldc, ldc); break;
        case 2: gemm_rows<2>(n, k, alpha, a + i * lda, lda, b, ldb, beta, c + i * ldc, ldc); break;
        case 1: gemm_rows<1>(n, k, alpha, a + i * lda, lda, b, ldb, beta, c + i * ldc, ldc); break;
        default: break;
    }
}

void relu_fwd(const float* x, float* y, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_acc(const float* x, const float* dy, float* dx, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        const __m256 masked = _mm256_and_ps(_mm256_loadu_ps(dy + i), mask);
        _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), masked));
    }
    for (; i < n; ++i) {
        if (x[i] > 0.0f) dx[i] += dy[i];
    }
}

void add(const float* a, const float* b, float* c, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(c + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) c[i] = a[i] + b[i];
}

void mul(const float* a, const float* b, float* c, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(c + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) c[i] = a[i] * b[i];
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 va = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(float alpha, float* x, std::size_t n) {
    const __m256 va = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}

void adam_update(float* p, const float* g, float* m, float* v, std::size_t n, float lr,
                 float b1, float b2, float eps, float c1, float c2) {
    const __m256 vb1 = _mm256_set1_ps(b1);
    const __m256 vb2 = _mm256_set1_ps(b2);
    const __m256 vnb1 = _mm256_set1_ps(1.0f - b1);
    const __m256 vnb2 = _mm256_set1_ps(1.0f - b2);
    const __m256 vlr = _mm256_set1_ps(lr);
    const __m256 veps = _mm256_set1_ps(eps);
    const __m256 vc1 = _mm256_set1_ps(c1);
    const __m256 vc2 = _mm256_set1_ps(c2);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 gv = _mm256_loadu_ps(g + i);
        __m256 mv = _mm256_loadu_ps(m + i);
        __m256 vv = _mm256_loadu_ps(v + i);
        mv = _mm256_add_ps(_mm256_mul_ps(vb1, mv), _mm256_mul_ps(vnb1, gv));
        vv = _mm256_add_ps(_mm256_mul_ps(vb2, vv), _mm256_mul_ps(vnb2, _mm256_mul_ps(gv, gv)));
        _mm256_storeu_ps(m + i, mv);
        _mm256_storeu_ps(v + i, vv);
        const __m256 mhat = _mm256_div_ps(mv, vc1);
        const __m256 vhat = _mm256_div_ps(vv, vc2);
        const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
        const __m256 upd = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), denom);
        _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), upd));
    }
    for (; i < n; ++i) {
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

}  // namespace rmap::kern::avx2
