#include "rmap/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "kernels_impl.hpp"
#include "rmap/threadpool.hpp"

namespace rmap::kern {
namespace {

bool cpu_has_avx2() {
#if defined(RMAP_BUILD_AVX2) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

struct Dispatch {
    const VariantTable* table;
    SimdLevel level;

    Dispatch() {
        level = cpu_has_avx2() ? SimdLevel::Avx2 : SimdLevel::Scalar;
        if (const char* env = std::getenv("RMAP_SIMD")) {
            if (std::strcmp(env, "scalar") == 0) level = SimdLevel::Scalar;
            else if (std::strcmp(env, "avx2") == 0) {
                if (!cpu_has_avx2()) throw std::runtime_error("RMAP_SIMD=avx2 requested but AVX2+FMA is unavailable");
                level = SimdLevel::Avx2;
            }
            // anything else (e.g. "auto") keeps the probed default
        }
        set(level);
    }

    void set(SimdLevel lv) {
#ifdef RMAP_BUILD_AVX2
        if (lv == SimdLevel::Avx2) {
            if (!cpu_has_avx2()) throw std::runtime_error("AVX2+FMA is unavailable on this CPU");
            table = &avx2::table;
            level = lv;
            return;
        }
#else
        if (lv == SimdLevel::Avx2) throw std::runtime_error("built without AVX2 support");
#endif
        table = &scalar::table;
        level = SimdLevel::Scalar;
    }
};

Dispatch& dispatch() {
    static Dispatch d;
    return d;
}

}  // namespace

SimdLevel active_level() { return dispatch().level; }

const char* active_level_name() {
    return dispatch().level == SimdLevel::Avx2 ? "avx2" : "scalar";
}

void force_level(SimdLevel level) { dispatch().set(level); }

void sgemm(std::size_t m, std::size_t n, std::size_t k, float alpha, const float* a,
           std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
           std::size_t ldc) {
    if (m == 0 || n == 0) return;
    const VariantTable* t = dispatch().table;
    // Parallelize over column stripes; each output element is produced by
    // exactly one thread with a fixed accumulation order.
    const std::size_t min_stripe = 256;
    const std::size_t flops = m * n * k;
    if (worker_count() <= 1 || n < 2 * min_stripe || flops < (1u << 18)) {
        t->gemm_block(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
        return;
    }
    const std::size_t stripes = std::min(worker_count() * 4, n / min_stripe);
    parallel_for(stripes, [&](std::size_t s0, std::size_t s1) {
        for (std::size_t s = s0; s < s1; ++s) {
            const std::size_t j0 = n * s / stripes;
            const std::size_t j1 = n * (s + 1) / stripes;
            if (j1 > j0) t->gemm_block(m, j1 - j0, k, alpha, a, lda, b + j0, ldb, beta, c + j0, ldc);
        }
    });
}

void relu_fwd(const float* x, float* y, std::size_t n) { dispatch().table->relu_fwd(x, y, n); }
void relu_bwd_acc(const float* x, const float* dy, float* dx, std::size_t n) {
    dispatch().table->relu_bwd_acc(x, dy, dx, n);
}
void add(const float* a, const float* b, float* c, std::size_t n) { dispatch().table->add(a, b, c, n); }
void mul(const float* a, const float* b, float* c, std::size_t n) { dispatch().table->mul(a, b, c, n); }
void axpy(float alpha, const float* x, float* y, std::size_t n) { dispatch().table->axpy(alpha, x, y, n); }
void scale(float alpha, float* x, std::size_t n) { dispatch().table->scale(alpha, x, n); }

void adam_update(float* p, const float* g, float* m, float* v, std::size_t n, float lr,
                 float b1, float b2, float eps, float c1, float c2) {
    dispatch().table->adam_update(p, g, m, v, n, lr, b1, b2, eps, c1, c2);
}

// Reductions are shared between variants: double accumulation in index order,
// so the result does not depend on the active SIMD level.
double sum(const float* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double sumsq(const float* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * x[i];
    return acc;
}

double sqdiff_sum(const float* a, const float* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace rmap::kern
