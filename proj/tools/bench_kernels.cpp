// Times the OpenMP kernels against the serial reference and verifies the
// results stay bit-identical while doing so.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include <omp.h>

#include "gpfl/kernels.hpp"
#include "gpfl/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  auto start = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
             .count() /
         reps;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

int main() {
  std::printf("threads: %d\n\n", omp_get_max_threads());
  std::printf("%-28s %12s %12s %9s %6s\n", "kernel", "serial(ms)", "omp(ms)",
              "speedup", "equal");

  gpfl::Rng rng(7);
  for (std::size_t n : {64u, 160u, 320u, 512u}) {
    std::vector<double> a(n * n), b(n * n), out_ref(n * n), out_omp(n * n);
    for (auto& v : a) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    const int reps = n <= 160 ? 20 : 5;

    double t_ref = time_ms(
        [&] {
          gpfl::kernels::ref::matmul(a.data(), b.data(), out_ref.data(), n, n,
                                     n);
        },
        reps);
    double t_omp = time_ms(
        [&] {
          gpfl::kernels::matmul(a.data(), b.data(), out_omp.data(), n, n, n);
        },
        reps);
    char label[64];
    std::snprintf(label, sizeof label, "matmul %zux%zux%zu", n, n, n);
    std::printf("%-28s %12.3f %12.3f %8.2fx %6s\n", label, t_ref, t_omp,
                t_ref / t_omp, bit_equal(out_ref, out_omp) ? "yes" : "NO");
  }

  for (std::size_t m : {4096u, 16384u}) {
    const std::size_t k = 512;
    std::vector<double> w(m * k), x(k), y_ref(m), y_omp(m);
    for (auto& v : w) v = rng.uniform(-1, 1);
    for (auto& v : x) v = rng.uniform(-1, 1);
    double t_ref = time_ms(
        [&] { gpfl::kernels::ref::matvec(w.data(), x.data(), y_ref.data(), m, k); },
        50);
    double t_omp = time_ms(
        [&] { gpfl::kernels::matvec(w.data(), x.data(), y_omp.data(), m, k); },
        50);
    char label[64];
    std::snprintf(label, sizeof label, "matvec %zux%zu", m, k);
    std::printf("%-28s %12.3f %12.3f %8.2fx %6s\n", label, t_ref, t_omp,
                t_ref / t_omp, bit_equal(y_ref, y_omp) ? "yes" : "NO");
  }
  return 0;
}
