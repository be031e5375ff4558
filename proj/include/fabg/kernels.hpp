#pragma once

#include <cstddef>
#include <span>

// Data-parallel inner loops. Every kernel exists twice: `serial` is the plain
// reference kept for testing, `parallel` splits the outer loop across OpenMP
// threads. Per output element both accumulate in the same order, so results
// are bit-identical.

namespace fabg::kernels {

enum class Activation { kNone, kTanh, kRelu };

struct PlaneShape {
  int height = 0;
  int width = 0;
  std::size_t size() const { return static_cast<std::size_t>(height) * width; }
};

/// True when `v` equals the invalid marker or is not finite.
bool is_invalid_depth(double v, double marker);

/// First row/column of `cell` when `extent` pixels are split into `cells`.
inline int cell_begin(int cell, int cells, int extent) {
  return static_cast<int>(static_cast<long long>(cell) * extent / cells);
}

/// Classic DTW with L1 frame cost and steps (i-1,j), (i,j-1), (i-1,j-1).
/// a: na x dims, b: nb x dims row-major; both non-empty.
double dtw_l1(std::span<const double> a, std::size_t na, std::span<const double> b, std::size_t nb,
              std::size_t dims);

struct DtwJob {
  std::span<const double> a;
  std::size_t na = 0;
  std::span<const double> b;
  std::size_t nb = 0;
  std::size_t dims = 1;
};

namespace serial {

/// Gaussian smoothing with edge replication. Invalid input pixels are left
/// out of the weighted sum and the remaining weights renormalized; an output
/// pixel with no valid neighbour is set to `marker`. Returns the number of
/// such pixels. `weights` is (2r+1)^2 row-major.
std::size_t gaussian_filter(std::span<const double> in, PlaneShape shape,
                            std::span<const double> weights, int radius, double marker,
                            std::span<double> out);

/// in: c_in x h x w, weights: c_out x c_in x ksize x ksize, out: c_out x h x w.
void conv2d_replicate(std::span<const double> in, int c_in, PlaneShape shape,
                      std::span<const double> weights, std::span<const double> bias, int c_out,
                      int ksize, Activation act, std::span<double> out);

/// in: c x h x w, out: c x out_shape. Cell (i,j) averages rows
/// [cell_begin(i), cell_begin(i+1)) and the matching columns.
void adaptive_avg_pool(std::span<const double> in, int channels, PlaneShape shape,
                       PlaneShape out_shape, std::span<double> out);

/// x: n x f row-major; out: f x f = x^T x.
void gram(std::span<const double> x, std::size_t n, std::size_t f, std::span<double> out);

/// y: n x d, x: n x f; out: d x f = y^T x.
void cross(std::span<const double> y, std::size_t d, std::span<const double> x, std::size_t n,
           std::size_t f, std::span<double> out);

/// a: m x p, b: p x q; out: m x q.
void matmul(std::span<const double> a, std::size_t m, std::size_t p, std::span<const double> b,
            std::size_t q, std::span<double> out);


/// out[i] = dtw_l1 of jobs[i].
void dtw_batch(std::span<const DtwJob> jobs, std::span<double> out);

}  // namespace serial

namespace parallel {

/// Gaussian smoothing with edge replication. Invalid input pixels are left
/// out of the weighted sum and the remaining weights renormalized; an output
/// pixel with no valid neighbour is set to `marker`. Returns the number of
/// such pixels. `weights` is (2r+1)^2 row-major.
std::size_t gaussian_filter(std::span<const double> in, PlaneShape shape,
                            std::span<const double> weights, int radius, double marker,
                            std::span<double> out);

/// in: c_in x h x w, weights: c_out x c_in x ksize x ksize, out: c_out x h x w.
void conv2d_replicate(std::span<const double> in, int c_in, PlaneShape shape,
                      std::span<const double> weights, std::span<const double> bias, int c_out,
                      int ksize, Activation act, std::span<double> out);

/// in: c x h x w, out: c x out_shape. Cell (i,j) averages rows
/// [cell_begin(i), cell_begin(i+1)) and the matching columns.
void adaptive_avg_pool(std::span<const double> in, int channels, PlaneShape shape,
                       PlaneShape out_shape, std::span<double> out);

/// x: n x f row-major; out: f x f = x^T x.
void gram(std::span<const double> x, std::size_t n, std::size_t f, std::span<double> out);

/// y: n x d, x: n x f; out: d x f = y^T x.
void cross(std::span<const double> y, std::size_t d, std::span<const double> x, std::size_t n,
           std::size_t f, std::span<double> out);

/// a: m x p, b: p x q; out: m x q.
void matmul(std::span<const double> a, std::size_t m, std::size_t p, std::span<const double> b,
            std::size_t q, std::span<double> out);


/// out[i] = dtw_l1 of jobs[i].
void dtw_batch(std::span<const DtwJob> jobs, std::span<double> out);

}  // namespace parallel

}  // namespace fabg::kernels
