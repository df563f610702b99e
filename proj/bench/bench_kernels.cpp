// Serial reference kernels against the OpenMP / blocked versions, plus the
// meshing step that dominates dataset generation.

#include <benchmark/benchmark.h>

#include <random>

#include "meshforge/geometry.hpp"
#include "meshforge/kernels.hpp"
#include "meshforge/mesh.hpp"

namespace k = meshforge::kernels;

namespace {

std::vector<double> randv(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

k::CsrMatrix banded(int n, int half) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  k::CsrMatrix a;
  a.rows = a.cols = n;
  for (int i = 0; i < n; ++i) {
    for (int j = std::max(0, i - half); j <= std::min(n - 1, i + half); ++j) {
      a.col.push_back(j);
      a.val.push_back(i == j ? 4.0 : u(rng));
    }
    a.row_ptr.push_back(static_cast<int>(a.col.size()));
  }
  return a;
}

template <bool Serial>
void BM_dot(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = randv(n, 1), y = randv(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Serial ? k::serial::dot(x, y) : k::dot(x, y));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

template <bool Serial>
void BM_spmv(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const k::CsrMatrix a = banded(n, 6);
  const auto x = randv(static_cast<std::size_t>(n), 3);
  std::vector<double> y(static_cast<std::size_t>(n));
  for (auto _ : state) {
    if constexpr (Serial) k::serial::spmv(a, x, y);
    else k::spmv(a, x, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(a.nnz()));
}

// rows x 128 x 128, the shape of a hidden layer in a training batch
template <bool Serial>
void BM_dense_forward(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0)), kk = 128, cols = 128;
  const auto in = randv(static_cast<std::size_t>(rows * kk), 4), w = randv(kk * cols, 5), b = randv(cols, 6);
  std::vector<double> out(static_cast<std::size_t>(rows * cols));
  for (auto _ : state) {
    if constexpr (Serial) k::serial::dense_forward(in, w, b, rows, kk, cols, out);
    else k::dense_forward(in, w, b, rows, kk, cols, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * rows * kk * cols);
}

template <bool Serial>
void BM_dense_backward(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0)), kk = 128, cols = 128;
  const auto in = randv(static_cast<std::size_t>(rows * kk), 4), w = randv(kk * cols, 5),
             go = randv(static_cast<std::size_t>(rows * cols), 6);
  std::vector<double> gi(static_cast<std::size_t>(rows * kk)), gw(kk * cols), gb(cols);
  for (auto _ : state) {
    if constexpr (Serial) {
      k::serial::dense_backward_input(go, w, rows, kk, cols, gi);
      k::serial::dense_backward_weights(go, in, rows, kk, cols, gw, gb);
    } else {
      k::dense_backward_input(go, w, rows, kk, cols, gi);
      k::dense_backward_weights(go, in, rows, kk, cols, gw, gb);
    }
    benchmark::DoNotOptimize(gw.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * rows * kk * cols);
}

void BM_triangulate_uniform(benchmark::State& state) {
  const meshforge::Polygon poly = meshforge::generate_random_polygon(42, 8);
  const double max_area = meshforge::polygon_area(poly) / static_cast<double>(state.range(0));
  std::size_t elements = 0;
  for (auto _ : state) elements = meshforge::triangulate_uniform(poly, max_area).element_count();
  state.counters["elements"] = static_cast<double>(elements);
}

}  // namespace

BENCHMARK(BM_dot<true>)->Arg(1 << 20);
BENCHMARK(BM_dot<false>)->Arg(1 << 20);
BENCHMARK(BM_spmv<true>)->Arg(100000);
BENCHMARK(BM_spmv<false>)->Arg(100000);
BENCHMARK(BM_dense_forward<true>)->Arg(128);
BENCHMARK(BM_dense_forward<false>)->Arg(128);
BENCHMARK(BM_dense_backward<true>)->Arg(128);
BENCHMARK(BM_dense_backward<false>)->Arg(128);
BENCHMARK(BM_triangulate_uniform)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
