#pragma once

#include <cstddef>

// Data-parallel inner loops used by the nn engine and the embedding math.
// A Backend is a table of kernel entry points; the scalar table is the
// reference semantics, the AVX2 table must agree with it up to summation
// order. Selection happens once at startup (see active()).

namespace wsco::kernels {

struct Backend {
    const char* name;

    double (*dot)(const double* a, const double* b, std::size_t n);
    double (*sum)(const double* x, std::size_t n);
    double (*sumsq)(const double* x, std::size_t n);

    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // x *= alpha
    void (*scale)(double alpha, double* x, std::size_t n);
    // y = rate * y + (1 - rate) * x
    void (*ema_blend)(double rate, const double* x, double* y, std::size_t n);
    // y = max(x, 0)
    void (*relu)(const double* x, double* y, std::size_t n);
    // din += dout where pre > 0
    void (*relu_grad)(const double* pre, const double* dout, double* din, std::size_t n);

    // Row-major GEMM variants. `accumulate` keeps existing C, else C is overwritten.
    // C[m x n] = A[m x k] * B[k x n]
    void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c, bool accumulate);
    // C[m x n] = A^T * B with A[k x m], B[k x n]
    void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c, bool accumulate);
    // C[m x n] = A * B^T with A[m x k], B[n x k]
    void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c, bool accumulate);
};

const Backend& scalar_backend();

// nullptr when the build or the CPU lacks AVX2.
const Backend* avx2_backend();

// Backend chosen at first use: AVX2 when available unless WSCO_KERNELS=scalar.
const Backend& active();

}  // namespace wsco::kernels
