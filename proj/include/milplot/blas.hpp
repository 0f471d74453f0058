#pragma once

#include <cstddef>

namespace milplot::nn::blas {

// Row-major C = alpha * op(A) * op(B) + beta * C.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

// y = alpha * A * x + beta * y with A row-major m x n.
template <typename T>
void gemv(std::size_t m, std::size_t n, T alpha, const T* a, std::size_t lda, const T* x, T beta, T* y);

void set_threads(int threads);

}  // namespace milplot::nn::blas
