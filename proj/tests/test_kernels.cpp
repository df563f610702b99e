#include <doctest.h>

#include <random>
#include <tuple>

#include "meshforge/kernels.hpp"

using namespace meshforge;
namespace k = meshforge::kernels;

namespace {

std::vector<double> randv(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// banded random matrix, like a small stiffness matrix
k::CsrMatrix banded(int n, int half, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
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

}  // namespace

TEST_CASE("vector kernels match the serial reference for any thread count") {
  const std::size_t n = 100003;
  const auto x = randv(n, 1), y0 = randv(n, 2);
  const k::CsrMatrix a = banded(20000, 5, 3);
  const auto xs = randv(20000, 4);

  k::set_threads(1);
  const double d1 = k::dot(x, y0);
  std::vector<double> m1(20000);
  k::spmv(a, xs, m1);
  for (int t : {2, 3, 4}) {
    CAPTURE(t);
    k::set_threads(t);
    CHECK(k::dot(x, y0) == d1);  // bit-identical across thread counts
    std::vector<double> m(20000);
    k::spmv(a, xs, m);
    CHECK(m == m1);
  }
  k::set_threads(1);

  CHECK(d1 == doctest::Approx(k::serial::dot(x, y0)).epsilon(1e-12));
  std::vector<double> ms(20000);
  k::serial::spmv(a, xs, ms);
  CHECK(ms == m1);  // one thread per row, same order

  std::vector<double> y1 = y0, y2 = y0;
  k::axpy(0.37, x, y1);
  k::serial::axpy(0.37, x, y2);
  CHECK(y1 == y2);
  y1 = y0;
  y2 = y0;
  k::xpby(x, -1.5, y1);
  k::serial::xpby(x, -1.5, y2);
  CHECK(y1 == y2);
}

TEST_CASE("dense layer kernels match the naive loops") {
  for (auto [rows, kk, cols] : std::vector<std::tuple<int, int, int>>{{1, 1, 1}, {7, 5, 3}, {128, 27, 32}, {33, 128, 128}}) {
    CAPTURE(rows);
    CAPTURE(kk);
    const std::size_t R = static_cast<std::size_t>(rows), K = static_cast<std::size_t>(kk), C = static_cast<std::size_t>(cols);
    const auto in = randv(R * K, 10), w = randv(K * C, 11), b = randv(C, 12), go = randv(R * C, 13);

    std::vector<double> o1(R * C), o2(R * C);
    k::dense_forward(in, w, b, rows, kk, cols, o1);
    k::serial::dense_forward(in, w, b, rows, kk, cols, o2);
    for (std::size_t i = 0; i < o1.size(); ++i) CHECK(o1[i] == doctest::Approx(o2[i]).epsilon(1e-13).scale(1.0));

    std::vector<double> gi1(R * K), gi2(R * K);
    k::dense_backward_input(go, w, rows, kk, cols, gi1);
    k::serial::dense_backward_input(go, w, rows, kk, cols, gi2);
    for (std::size_t i = 0; i < gi1.size(); ++i) CHECK(gi1[i] == doctest::Approx(gi2[i]).epsilon(1e-13).scale(1.0));

    // accumulation semantics: start from a nonzero gradient
    std::vector<double> gw1(K * C, 0.5), gw2(K * C, 0.5), gb1(C, -1), gb2(C, -1);
    k::dense_backward_weights(go, in, rows, kk, cols, gw1, gb1);
    k::serial::dense_backward_weights(go, in, rows, kk, cols, gw2, gb2);
    for (std::size_t i = 0; i < gw1.size(); ++i) CHECK(gw1[i] == doctest::Approx(gw2[i]).epsilon(1e-13).scale(1.0));
    for (std::size_t i = 0; i < gb1.size(); ++i) CHECK(gb1[i] == doctest::Approx(gb2[i]).epsilon(1e-13).scale(1.0));
  }
}

TEST_CASE("serial dense forward by hand") {
  // in = [1 2], w = [[1 2 3], [4 5 6]], b = [0.5 0 -1]
  const std::vector<double> in{1, 2}, w{1, 2, 3, 4, 5, 6}, b{0.5, 0, -1};
  std::vector<double> out(3);
  k::serial::dense_forward(in, w, b, 1, 2, 3, out);
  CHECK(out == std::vector<double>{9.5, 12, 14});
  k::dense_forward(in, w, b, 1, 2, 3, out);
  CHECK(out == std::vector<double>{9.5, 12, 14});
}
