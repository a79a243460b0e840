#include "craftrl/kernels.hpp"

#include <cstdlib>
#include <cstring>

#if defined(__x86_64__) || defined(_M_X64)
#define CRAFTRL_X86 1
#include <immintrin.h>
#else
#define CRAFTRL_X86 0
#endif

namespace craftrl::kernels {

// ---------------------------------------------------------------------------
// Scalar reference kernels
// ---------------------------------------------------------------------------

namespace scalar_impl {

void axpy(double* y, const double* x, double a, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale(double* y, const double* x, double s, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = x[i] * s;
}

void hadamard(double* out, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void add(double* out, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(double* out, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

double dot(const double* a, const double* b, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum(const double* x, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

double sqdist(const double* a, const double* b, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void gemm_nn(double* C, const double* A, const double* B, size_t M, size_t K, size_t N,
             bool accumulate) {
    if (!accumulate) std::memset(C, 0, M * N * sizeof(double));
    for (size_t i = 0; i < M; ++i) {
        double* c_row = C + i * N;
        for (size_t k = 0; k < K; ++k) {
            double a = A[i * K + k];
            if (a == 0.0) continue;
            const double* b_row = B + k * N;
            for (size_t j = 0; j < N; ++j) c_row[j] += a * b_row[j];
        }
    }
}

void gemm_nt(double* C, const double* A, const double* B, size_t M, size_t K, size_t N,
             bool accumulate) {
    for (size_t i = 0; i < M; ++i) {
        const double* a_row = A + i * K;
        for (size_t j = 0; j < N; ++j) {
            double s = dot(a_row, B + j * K, K);
            if (accumulate)
                C[i * N + j] += s;
            else
                C[i * N + j] = s;
        }
    }
}

void gemm_tn(double* C, const double* A, const double* B, size_t M, size_t K, size_t N,
             bool accumulate) {
    if (!accumulate) std::memset(C, 0, M * N * sizeof(double));
    for (size_t k = 0; k < K; ++k) {
        const double* a_row = A + k * M;
        const double* b_row = B + k * N;
        for (size_t i = 0; i < M; ++i) {
            double a = a_row[i];
            if (a == 0.0) continue;
            double* c_row = C + i * N;
            for (size_t j = 0; j < N; ++j) c_row[j] += a * b_row[j];
        }
    }
}

}  // namespace scalar_impl

// ---------------------------------------------------------------------------
// AVX2 kernels
// ---------------------------------------------------------------------------

#if CRAFTRL_X86

namespace avx2_impl {

__attribute__((target("avx2,fma"))) void axpy(double* y, const double* x, double a, size_t n) {
    __m256d av = _mm256_set1_pd(a);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        __m256d xv = _mm256_loadu_pd(x + i);
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, xv, yv));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

__attribute__((target("avx2,fma"))) void scale(double* y, const double* x, double s, size_t n) {
    __m256d sv = _mm256_set1_pd(s);
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), sv));
    for (; i < n; ++i) y[i] = x[i] * s;
}

__attribute__((target("avx2,fma"))) void hadamard(double* out, const double* a, const double* b,
                                                  size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

__attribute__((target("avx2,fma"))) void add(double* out, const double* a, const double* b,
                                             size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

__attribute__((target("avx2,fma"))) void sub(double* out, const double* a, const double* b,
                                             size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

__attribute__((target("avx2,fma"))) double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

__attribute__((target("avx2,fma"))) double dot(const double* a, const double* b, size_t n) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

__attribute__((target("avx2,fma"))) double sum(const double* x, size_t n) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

__attribute__((target("avx2,fma"))) double sqdist(const double* a, const double* b, size_t n) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

__attribute__((target("avx2,fma"))) void gemm_nn(double* C, const double* A, const double* B,
                                                 size_t M, size_t K, size_t N, bool accumulate) {
    if (!accumulate) std::memset(C, 0, M * N * sizeof(double));
    for (size_t i = 0; i < M; ++i) {
        double* c_row = C + i * N;
        for (size_t k = 0; k < K; ++k) {
            double a = A[i * K + k];
            if (a == 0.0) continue;
            const double* b_row = B + k * N;
            __m256d av = _mm256_set1_pd(a);
            size_t j = 0;
            for (; j + 4 <= N; j += 4) {
                __m256d cv = _mm256_loadu_pd(c_row + j);
                _mm256_storeu_pd(c_row + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(b_row + j), cv));
            }
            for (; j < N; ++j) c_row[j] += a * b_row[j];
        }
    }
}

__attribute__((target("avx2,fma"))) void gemm_nt(double* C, const double* A, const double* B,
                                                 size_t M, size_t K, size_t N, bool accumulate) {
    for (size_t i = 0; i < M; ++i) {
        const double* a_row = A + i * K;
        for (size_t j = 0; j < N; ++j) {
            double s = dot(a_row, B + j * K, K);
            if (accumulate)
                C[i * N + j] += s;
            else
                C[i * N + j] = s;
        }
    }
}

__attribute__((target("avx2,fma"))) void gemm_tn(double* C, const double* A, const double* B,
                                                 size_t M, size_t K, size_t N, bool accumulate) {
    if (!accumulate) std::memset(C, 0, M * N * sizeof(double));
    for (size_t k = 0; k < K; ++k) {
        const double* a_row = A + k * M;
        const double* b_row = B + k * N;
        for (size_t i = 0; i < M; ++i) {
            double a = a_row[i];
            if (a == 0.0) continue;
            double* c_row = C + i * N;
            __m256d av = _mm256_set1_pd(a);
            size_t j = 0;
            for (; j + 4 <= N; j += 4) {
                __m256d cv = _mm256_loadu_pd(c_row + j);
                _mm256_storeu_pd(c_row + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(b_row + j), cv));
            }
            for (; j < N; ++j) c_row[j] += a * b_row[j];
        }
    }
}

}  // namespace avx2_impl

#endif  // CRAFTRL_X86

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

static const Kernels kScalar = {
    scalar_impl::axpy, scalar_impl::scale, scalar_impl::hadamard, scalar_impl::add,
    scalar_impl::sub,  scalar_impl::dot,   scalar_impl::sum,      scalar_impl::sqdist,
    scalar_impl::gemm_nn, scalar_impl::gemm_nt, scalar_impl::gemm_tn, "scalar"};

#if CRAFTRL_X86
static const Kernels kAvx2 = {
    avx2_impl::axpy, avx2_impl::scale, avx2_impl::hadamard, avx2_impl::add,
    avx2_impl::sub,  avx2_impl::dot,   avx2_impl::sum,      avx2_impl::sqdist,
    avx2_impl::gemm_nn, avx2_impl::gemm_nt, avx2_impl::gemm_tn, "avx2"};
#endif

bool avx2_available() {
#if CRAFTRL_X86
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

static const Kernels& select() {
    const char* force = std::getenv("CRAFTRL_KERNELS");
    if (force != nullptr) {
        if (std::strcmp(force, "scalar") == 0) return kScalar;
#if CRAFTRL_X86
        if (std::strcmp(force, "avx2") == 0 && avx2_available()) return kAvx2;
#endif
        return kScalar;
    }
#if CRAFTRL_X86
    if (avx2_available()) return kAvx2;
#endif
    return kScalar;
}

const Kernels& scalar() { return kScalar; }

const Kernels& active() {
    static const Kernels& k = select();
    return k;
}

const char* active_name() { return active().name; }

}  // namespace craftrl::kernels
