#pragma once

#include <cstddef>

namespace swinseg3d {

// Row-major C = alpha * op(A) * op(B) + beta * C, backed by CBLAS.
// op(A) is M x K, op(B) is K x N.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, const T* b, T beta, T* c);

/// Threads available to internal kernels: hardware concurrency capped by the
/// SWINSEG3D_THREADS environment variable.
int thread_budget();

/// Applies thread_budget() to the BLAS backend. Called once by the CLI and the
/// test mains; kernels are deterministic for any thread count.
void configure_threads();

}  // namespace swinseg3d
