// Micro-benchmark for the GEMM kernels at the matrix shapes the model
// actually produces. Used to size the desk presets; not part of the tests.
#include <chrono>
#include <cstdio>
#include <random>

#include "regunet/matrix.hpp"

using namespace rgn;

static double bench(std::size_t M, std::size_t K, std::size_t N) {
  std::mt19937_64 rng(42);
  auto fill = [&](Matrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i)
      m.data()[i] = ((rng() >> 11) * 0x1.0p-53) - 0.5;
  };
  Matrix A(M, K), B(K, N), C(M, N);
  fill(A);
  fill(B);
  const double flops = 2.0 * M * K * N;
  int reps = static_cast<int>(2e9 / flops) + 1;
  gemm_nn(A, B, C, false);  // warm
  auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) gemm_nn(A, B, C, false);
  auto t1 = std::chrono::steady_clock::now();
  double sec = std::chrono::duration<double>(t1 - t0).count();
  double gfs = flops * reps / sec / 1e9;
  std::printf("gemm_nn M=%5zu K=%4zu N=%4zu  reps=%6d  %7.2f GFLOP/s\n", M, K,
              N, reps, gfs);
  return gfs;
}

static double bench_tn(std::size_t M, std::size_t K, std::size_t N) {
  std::mt19937_64 rng(42);
  auto fill = [&](Matrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i)
      m.data()[i] = ((rng() >> 11) * 0x1.0p-53) - 0.5;
  };
  Matrix A(M, K), B(M, N), C(K, N);
  fill(A);
  fill(B);
  const double flops = 2.0 * M * K * N;
  int reps = static_cast<int>(2e9 / flops) + 1;
  gemm_tn(A, B, C, false);
  auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) gemm_tn(A, B, C, false);
  auto t1 = std::chrono::steady_clock::now();
  double sec = std::chrono::duration<double>(t1 - t0).count();
  double gfs = flops * reps / sec / 1e9;
  std::printf("gemm_tn M=%5zu K=%4zu N=%4zu  reps=%6d  %7.2f GFLOP/s\n", M, K,
              N, reps, gfs);
  return gfs;
}

int main() {
  // Fine-graph shapes (2128 edges, 297 nodes) at several widths.
  bench(2128, 16, 16);
  bench(2128, 32, 16);
  bench(2128, 64, 16);
  bench(2128, 32, 32);
  bench(2128, 64, 32);
  bench(2128, 128, 32);
  bench(2128, 128, 128);
  bench(2128, 512, 128);
  bench(297, 3, 32);
  bench(1782, 32, 16);
  bench(42, 512, 128);
  bench_tn(2128, 64, 16);
  bench_tn(2128, 128, 32);
  bench_tn(2128, 512, 128);
  return 0;
}
