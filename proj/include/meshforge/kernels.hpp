#pragma once

// Data-parallel inner loops shared by the FEM solver and the network.
//
// The vector kernels are OpenMP-parallel and produce results that do not
// depend on the thread count: work is split over output entries (each
// computed by one thread in a fixed order) and reductions run over fixed-size
// blocks whose partial sums are combined sequentially. The dense layer kernels
// are blocked, vectorized matrix products (Eigen, threading disabled), so they
// are deterministic as well but round differently from the naive loops.
// `meshforge::kernels::serial` holds the straightforward single-threaded
// reference versions the tests and benchmarks compare against.

#include <span>
#include <vector>

namespace meshforge::kernels {

/// Compressed sparse row matrix.
struct CsrMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> row_ptr{0};
  std::vector<int> col;
  std::vector<double> val;

  std::size_t nnz() const { return val.size(); }
};

void set_threads(int threads);
int max_threads();

void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> x, std::span<const double> y);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
/// y = x + beta * y
void xpby(std::span<const double> x, double beta, std::span<double> y);

// Dense layer kernels. Weights are stored fan_in x fan_out, row-major.

/// out[r, c] = bias[c] + sum_k in[r, k] * w[k, c]
void dense_forward(std::span<const double> in, std::span<const double> w, std::span<const double> bias, int rows,
                   int k, int cols, std::span<double> out);
/// grad_in[r, k] = sum_c grad_out[r, c] * w[k, c]
void dense_backward_input(std::span<const double> grad_out, std::span<const double> w, int rows, int k, int cols,
                          std::span<double> grad_in);
/// grad_w[k, c] += sum_r in[r, k] * grad_out[r, c]; grad_b[c] += sum_r grad_out[r, c]
void dense_backward_weights(std::span<const double> grad_out, std::span<const double> in, int rows, int k, int cols,
                            std::span<double> grad_w, std::span<double> grad_b);

namespace serial {

void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> x, std::span<const double> y);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void xpby(std::span<const double> x, double beta, std::span<double> y);
void dense_forward(std::span<const double> in, std::span<const double> w, std::span<const double> bias, int rows,
                   int k, int cols, std::span<double> out);
void dense_backward_input(std::span<const double> grad_out, std::span<const double> w, int rows, int k, int cols,
                          std::span<double> grad_in);
void dense_backward_weights(std::span<const double> grad_out, std::span<const double> in, int rows, int k, int cols,
                            std::span<double> grad_w, std::span<double> grad_b);

}  // namespace serial

}  // namespace meshforge::kernels
