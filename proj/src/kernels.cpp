#include "meshforge/kernels.hpp"

#include <algorithm>

#include <Eigen/Core>
#include <omp.h>

namespace meshforge::kernels {

namespace {

// Fixed reduction block: partial sums never depend on the thread count.
constexpr std::size_t kBlock = 2048;

}  // namespace

void set_threads(int threads) { omp_set_num_threads(std::max(1, threads)); }

int max_threads() { return omp_get_max_threads(); }

void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y) {
  const int* rp = a.row_ptr.data();
  const int* ci = a.col.data();
  const double* v = a.val.data();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < a.rows; ++r) {
    double s = 0.0;
    for (int k = rp[r]; k < rp[r + 1]; ++k) s += v[k] * x[static_cast<std::size_t>(ci[k])];
    y[static_cast<std::size_t>(r)] = s;
  }
}

double dot(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  const std::size_t nblocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(nblocks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < nblocks; ++b) {
    const std::size_t end = std::min(n, (b + 1) * kBlock);
    double s = 0.0;
    for (std::size_t i = b * kBlock; i < end; ++i) s += x[i] * y[i];
    partial[b] = s;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void xpby(std::span<const double> x, double beta, std::span<double> y) {
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + beta * y[i];
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

void dense_forward(std::span<const double> in, std::span<const double> w, std::span<const double> bias, int rows,
                   int k, int cols, std::span<double> out) {
  MMap o(out.data(), rows, cols);
  o.noalias() = CMap(in.data(), rows, k) * CMap(w.data(), k, cols);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data(), cols);
}

void dense_backward_input(std::span<const double> grad_out, std::span<const double> w, int rows, int k, int cols,
                          std::span<double> grad_in) {
  MMap(grad_in.data(), rows, k).noalias() = CMap(grad_out.data(), rows, cols) * CMap(w.data(), k, cols).transpose();
}

void dense_backward_weights(std::span<const double> grad_out, std::span<const double> in, int rows, int k, int cols,
                            std::span<double> grad_w, std::span<double> grad_b) {
  const CMap go(grad_out.data(), rows, cols);
  MMap(grad_w.data(), k, cols).noalias() += CMap(in.data(), rows, k).transpose() * go;
  Eigen::Map<Eigen::RowVectorXd>(grad_b.data(), cols) += go.colwise().sum();
}

namespace serial {

void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y) {
  for (int r = 0; r < a.rows; ++r) {
    double s = 0.0;
    for (int k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) s += a.val[k] * x[a.col[k]];
    y[r] = s;
  }
}

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void xpby(std::span<const double> x, double beta, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + beta * y[i];
}

void dense_forward(std::span<const double> in, std::span<const double> w, std::span<const double> bias, int rows,
                   int k, int cols, std::span<double> out) {
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double s = bias[c];
      for (int j = 0; j < k; ++j) s += in[r * k + j] * w[j * cols + c];
      out[r * cols + c] = s;
    }
  }
}

void dense_backward_input(std::span<const double> grad_out, std::span<const double> w, int rows, int k, int cols,
                          std::span<double> grad_in) {
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < k; ++j) {
      double s = 0.0;
      for (int c = 0; c < cols; ++c) s += grad_out[r * cols + c] * w[j * cols + c];
      grad_in[r * k + j] = s;
    }
  }
}

void dense_backward_weights(std::span<const double> grad_out, std::span<const double> in, int rows, int k, int cols,
                            std::span<double> grad_w, std::span<double> grad_b) {
  for (int j = 0; j < k; ++j)
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) grad_w[j * cols + c] += in[r * k + j] * grad_out[r * cols + c];
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) grad_b[c] += grad_out[r * cols + c];
}

}  // namespace serial

}  // namespace meshforge::kernels
