#include "gpfl/kernels.hpp"

namespace gpfl::kernels {

namespace ref {

void matmul(const double* a, const double* b, double* out, std::size_t m,
            std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
      out[i * n + j] = acc;
    }
  }
}

void matmul_nt_acc(const double* g, const double* b, double* da, std::size_t m,
                   std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = 0; t < k; ++t) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b[t * n + j];
      da[i * k + t] += acc;
    }
  }
}

void matmul_tn_acc(const double* a, const double* g, double* db, std::size_t m,
                   std::size_t k, std::size_t n) {
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += a[i * k + t] * g[i * n + j];
      db[t * n + j] += acc;
    }
  }
}

void matvec(const double* w, const double* x, double* y, std::size_t m,
            std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t t = 0; t < k; ++t) acc += w[i * k + t] * x[t];
    y[i] = acc;
  }
}

void matvec_t_acc(const double* w, const double* g, double* dx, std::size_t m,
                  std::size_t k) {
  for (std::size_t t = 0; t < k; ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += w[i * k + t] * g[i];
    dx[t] += acc;
  }
}

void outer_acc(const double* g, const double* x, double* dw, std::size_t m,
               std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = 0; t < k; ++t) dw[i * k + t] += g[i] * x[t];
  }
}

}  // namespace ref

void matmul(const double* a, const double* b, double* out, std::size_t m,
            std::size_t k, std::size_t n) {
  // entering the OpenMP runtime costs microseconds even with a false
  // if-clause, so small problems take the serial path outright
  if (m * k * n < kParallelCutoff) {
    ref::matmul(a, b, out, m, k, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
      out[i * n + j] = acc;
    }
  }
}

void matmul_nt_acc(const double* g, const double* b, double* da, std::size_t m,
                   std::size_t k, std::size_t n) {
  // entering the OpenMP runtime costs microseconds even with a false
  // if-clause, so small problems take the serial path outright
  if (m * k * n < kParallelCutoff) {
    ref::matmul_nt_acc(g, b, da, m, k, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = 0; t < k; ++t) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b[t * n + j];
      da[i * k + t] += acc;
    }
  }
}

void matmul_tn_acc(const double* a, const double* g, double* db, std::size_t m,
                   std::size_t k, std::size_t n) {
  // entering the OpenMP runtime costs microseconds even with a false
  // if-clause, so small problems take the serial path outright
  if (m * k * n < kParallelCutoff) {
    ref::matmul_tn_acc(a, g, db, m, k, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += a[i * k + t] * g[i * n + j];
      db[t * n + j] += acc;
    }
  }
}

void matvec(const double* w, const double* x, double* y, std::size_t m,
            std::size_t k) {
  // entering the OpenMP runtime costs microseconds even with a false
  // if-clause, so small problems take the serial path outright
  if (m * k < kParallelCutoff) {
    ref::matvec(w, x, y, m, k);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t t = 0; t < k; ++t) acc += w[i * k + t] * x[t];
    y[i] = acc;
  }
}

void matvec_t_acc(const double* w, const double* g, double* dx, std::size_t m,
                  std::size_t k) {
  // entering the OpenMP runtime costs microseconds even with a false
  // if-clause, so small problems take the serial path outright
  if (m * k < kParallelCutoff) {
    ref::matvec_t_acc(w, g, dx, m, k);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::size_t t = 0; t < k; ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += w[i * k + t] * g[i];
    dx[t] += acc;
  }
}

void outer_acc(const double* g, const double* x, double* dw, std::size_t m,
               std::size_t k) {
  // entering the OpenMP runtime costs microseconds even with a false
  // if-clause, so small problems take the serial path outright
  if (m * k < kParallelCutoff) {
    ref::outer_acc(g, x, dw, m, k);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = 0; t < k; ++t) dw[i * k + t] += g[i] * x[t];
  }
}

}  // namespace gpfl::kernels
