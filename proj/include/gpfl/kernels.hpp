#pragma once

#include <cstddef>

// Dense value kernels behind the tensor ops. The OpenMP versions parallelize
// over output rows/columns only: every output element is a fixed-order sum
// owned by exactly one thread, so results are bit-identical to the serial
// reference at any thread count.

namespace gpfl::kernels {

// Below this many multiply-adds the parallel kernels stay single-threaded;
// team startup costs more than the loop at desk-scale sizes.
inline constexpr std::size_t kParallelCutoff = std::size_t(1) << 15;

// out[m,n] = a[m,k] · b[k,n]
void matmul(const double* a, const double* b, double* out, std::size_t m,
            std::size_t k, std::size_t n);

// da[m,k] += g[m,n] · b[k,n]ᵀ
void matmul_nt_acc(const double* g, const double* b, double* da, std::size_t m,
                   std::size_t k, std::size_t n);

// db[k,n] += a[m,k]ᵀ · g[m,n]
void matmul_tn_acc(const double* a, const double* g, double* db, std::size_t m,
                   std::size_t k, std::size_t n);

// y[m] = w[m,k] · x[k]
void matvec(const double* w, const double* x, double* y, std::size_t m,
            std::size_t k);

// dx[k] += w[m,k]ᵀ · g[m]
void matvec_t_acc(const double* w, const double* g, double* dx, std::size_t m,
                  std::size_t k);

// dw[m,k] += g[m] · x[k]ᵀ
void outer_acc(const double* g, const double* x, double* dw, std::size_t m,
               std::size_t k);

// Serial reference implementations, kept for the equivalence tests and the
// kernel benchmark.
namespace ref {

void matmul(const double* a, const double* b, double* out, std::size_t m,
            std::size_t k, std::size_t n);
void matmul_nt_acc(const double* g, const double* b, double* da, std::size_t m,
                   std::size_t k, std::size_t n);
void matmul_tn_acc(const double* a, const double* g, double* db, std::size_t m,
                   std::size_t k, std::size_t n);
void matvec(const double* w, const double* x, double* y, std::size_t m,
            std::size_t k);
void matvec_t_acc(const double* w, const double* g, double* dx, std::size_t m,
                  std::size_t k);
void outer_acc(const double* g, const double* x, double* dw, std::size_t m,
               std::size_t k);

}  // namespace ref

}  // namespace gpfl::kernels
