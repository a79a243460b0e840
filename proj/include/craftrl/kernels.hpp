#pragma once

// Double-precision compute kernels behind the NN, k-means, and feature code.
// Every kernel has a scalar reference implementation and (on x86-64) an AVX2
// variant; the active set is chosen once at runtime from cpuid and can be
// forced with CRAFTRL_KERNELS=scalar|avx2. SIMD variants are equivalence-
// tested against the scalar references in tests/test_kernels.cpp.

#include <cstddef>

namespace craftrl::kernels {

struct Kernels {
    // y[i] += a * x[i]
    void (*axpy)(double* y, const double* x, double a, size_t n);
    // y[i] = x[i] * s
    void (*scale)(double* y, const double* x, double s, size_t n);
    // out[i] = a[i] * b[i]
    void (*hadamard)(double* out, const double* a, const double* b, size_t n);
    // out[i] = a[i] + b[i]
    void (*add)(double* out, const double* a, const double* b, size_t n);
    // out[i] = a[i] - b[i]
    void (*sub)(double* out, const double* a, const double* b, size_t n);
    double (*dot)(const double* a, const double* b, size_t n);
    double (*sum)(const double* x, size_t n);
    // sum (a[i]-b[i])^2
    double (*sqdist)(const double* a, const double* b, size_t n);
    // C[MxN] (+)= A[MxK] * B[KxN], row-major; accumulate=false zeroes C first
    void (*gemm_nn)(double* C, const double* A, const double* B, size_t M, size_t K, size_t N,
                    bool accumulate);
    // C[MxN] (+)= A[MxK] * B[NxK]^T
    void (*gemm_nt)(double* C, const double* A, const double* B, size_t M, size_t K, size_t N,
                    bool accumulate);
    // C[MxN] (+)= A[KxM]^T * B[KxN]
    void (*gemm_tn)(double* C, const double* A, const double* B, size_t M, size_t K, size_t N,
                    bool accumulate);
    const char* name;
};

// Scalar reference set (always available).
const Kernels& scalar();

// Active set after runtime dispatch.
const Kernels& active();

// Name of the active set ("scalar" or "avx2").
const char* active_name();

bool avx2_available();

}  // namespace craftrl::kernels
