#include "fabg/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace fabg::kernels {

bool is_invalid_depth(double v, double marker) { return !std::isfinite(v) || v == marker; }

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

inline double activate(double v, Activation act) {
  switch (act) {
    case Activation::kTanh:
      return std::tanh(v);
    case Activation::kRelu:
      return v > 0.0 ? v : 0.0;
    case Activation::kNone:
      break;
  }
  return v;
}

void check_filter_args(std::span<const double> in, PlaneShape shape,
                       std::span<const double> weights, int radius, std::span<double> out) {
  const std::size_t side = 2 * static_cast<std::size_t>(radius) + 1;
  if (radius < 1 || weights.size() != side * side) {
    throw std::invalid_argument("kernel weights do not match radius");
  }
  if (in.size() != shape.size() || out.size() != shape.size()) {
    throw std::invalid_argument("plane size mismatch");
  }
}

void check_conv_args(std::span<const double> in, int c_in, PlaneShape shape,
                     std::span<const double> weights, std::span<const double> bias, int c_out,
                     int ksize, std::span<double> out) {
  if (ksize < 1 || ksize % 2 == 0) throw std::invalid_argument("conv kernel size must be odd");
  const std::size_t plane = shape.size();
  if (in.size() != plane * c_in || out.size() != plane * c_out ||
      weights.size() != static_cast<std::size_t>(c_out) * c_in * ksize * ksize ||
      bias.size() != static_cast<std::size_t>(c_out)) {
    throw std::invalid_argument("conv2d buffer size mismatch");
  }
}

void check_pool_args(std::span<const double> in, int channels, PlaneShape shape,
                     PlaneShape out_shape, std::span<double> out) {
  if (out_shape.height > shape.height || out_shape.width > shape.width || out_shape.height < 1 ||
      out_shape.width < 1) {
    throw std::invalid_argument("pool output must be non-empty and no larger than the input");
  }
  if (in.size() != shape.size() * channels || out.size() != out_shape.size() * channels) {
    throw std::invalid_argument("pool buffer size mismatch");
  }
}

}  // namespace

double dtw_l1(std::span<const double> a, std::size_t na, std::span<const double> b, std::size_t nb,
              std::size_t dims) {
  if (na == 0 || nb == 0) throw std::invalid_argument("dtw needs non-empty sequences");
  if (dims == 0 || a.size() != na * dims || b.size() != nb * dims) {
    throw std::invalid_argument("dtw buffer size mismatch");
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Two rows of the (na+1) x (nb+1) cumulative cost table.
  std::vector<double> prev(nb + 1, kInf), cur(nb + 1, kInf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= na; ++i) {
    cur[0] = kInf;
    const double* ai = &a[(i - 1) * dims];
    for (std::size_t j = 1; j <= nb; ++j) {
      const double* bj = &b[(j - 1) * dims];
      double cost = 0.0;
      for (std::size_t d = 0; d < dims; ++d) cost += std::abs(ai[d] - bj[d]);
      cur[j] = cost + std::min({prev[j], cur[j - 1], prev[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[nb];
}

// ---------------------------------------------------------------------------
// serial reference

namespace serial {

std::size_t gaussian_filter(std::span<const double> in, PlaneShape shape,
                            std::span<const double> weights, int radius, double marker,
                            std::span<double> out) {
  check_filter_args(in, shape, weights, radius, out);
  const int h = shape.height, w = shape.width, side = 2 * radius + 1;
  std::size_t unresolved = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sum = 0.0, wsum = 0.0;
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = clampi(y + dy, 0, h - 1);
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = clampi(x + dx, 0, w - 1);
          const double v = in[static_cast<std::size_t>(yy) * w + xx];
          if (is_invalid_depth(v, marker)) continue;
          const double wt = weights[static_cast<std::size_t>(dy + radius) * side + (dx + radius)];
          sum += wt * v;
          wsum += wt;
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
      double& o = out[static_cast<std::size_t>(y) * w + x];
      if (wsum > 0.0) {
        o = std::clamp(sum / wsum, lo, hi);
      } else {
        o = marker;
        ++unresolved;
      }
    }
  }
  return unresolved;
}

void conv2d_replicate(std::span<const double> in, int c_in, PlaneShape shape,
                      std::span<const double> weights, std::span<const double> bias, int c_out,
                      int ksize, Activation act, std::span<double> out) {
  check_conv_args(in, c_in, shape, weights, bias, c_out, ksize, out);
  const int h = shape.height, w = shape.width, r = ksize / 2;
  const std::size_t plane = shape.size();
  for (int co = 0; co < c_out; ++co) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = bias[co];
        for (int ci = 0; ci < c_in; ++ci) {
          for (int ky = 0; ky < ksize; ++ky) {
            const int yy = clampi(y + ky - r, 0, h - 1);
            for (int kx = 0; kx < ksize; ++kx) {
              const int xx = clampi(x + kx - r, 0, w - 1);
              const std::size_t wi =
                  ((static_cast<std::size_t>(co) * c_in + ci) * ksize + ky) * ksize + kx;
              acc += weights[wi] * in[ci * plane + static_cast<std::size_t>(yy) * w + xx];
            }
          }
        }
        out[co * plane + static_cast<std::size_t>(y) * w + x] = activate(acc, act);
      }
    }
  }
}

void adaptive_avg_pool(std::span<const double> in, int channels, PlaneShape shape,
                       PlaneShape out_shape, std::span<double> out) {
  check_pool_args(in, channels, shape, out_shape, out);
  const std::size_t plane = shape.size();
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < out_shape.height; ++i) {
      const int y0 = cell_begin(i, out_shape.height, shape.height);
      const int y1 = cell_begin(i + 1, out_shape.height, shape.height);
      for (int j = 0; j < out_shape.width; ++j) {
        const int x0 = cell_begin(j, out_shape.width, shape.width);
        const int x1 = cell_begin(j + 1, out_shape.width, shape.width);
        double sum = 0.0;
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) sum += in[c * plane + static_cast<std::size_t>(y) * shape.width + x];
        }
        out[c * out_shape.size() + static_cast<std::size_t>(i) * out_shape.width + j] =
            sum / static_cast<double>((y1 - y0) * (x1 - x0));
      }
    }
  }
}

void gram(std::span<const double> x, std::size_t n, std::size_t f, std::span<double> out) {
  if (x.size() != n * f || out.size() != f * f) throw std::invalid_argument("gram size mismatch");
  for (std::size_t i = 0; i < f; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      double acc = 0.0;
      for (std::size_t s = 0; s < n; ++s) acc += x[s * f + i] * x[s * f + j];
      out[i * f + j] = acc;
    }
  }
}

void cross(std::span<const double> y, std::size_t d, std::span<const double> x, std::size_t n,
           std::size_t f, std::span<double> out) {
  if (y.size() != n * d || x.size() != n * f || out.size() != d * f) {
    throw std::invalid_argument("cross size mismatch");
  }
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t j = 0; j < f; ++j) {
      double acc = 0.0;
      for (std::size_t s = 0; s < n; ++s) acc += y[s * d + r] * x[s * f + j];
      out[r * f + j] = acc;
    }
  }
}

void matmul(std::span<const double> a, std::size_t m, std::size_t p, std::span<const double> b,
            std::size_t q, std::span<double> out) {
  if (a.size() != m * p || b.size() != p * q || out.size() != m * q) {
    throw std::invalid_argument("matmul size mismatch");
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < q; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < p; ++k) acc += a[i * p + k] * b[k * q + j];
      out[i * q + j] = acc;
    }
  }
}

void dtw_batch(std::span<const DtwJob> jobs, std::span<double> out) {
  if (out.size() != jobs.size()) throw std::invalid_argument("dtw_batch output size mismatch");
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& j = jobs[i];
    out[i] = dtw_l1(j.a, j.na, j.b, j.nb, j.dims);
  }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP

namespace parallel {

std::size_t gaussian_filter(std::span<const double> in, PlaneShape shape,
                            std::span<const double> weights, int radius, double marker,
                            std::span<double> out) {
  check_filter_args(in, shape, weights, radius, out);
  const int h = shape.height, w = shape.width, side = 2 * radius + 1;

  // Clamped column offsets, shared by every row.
  std::vector<int> cols(static_cast<std::size_t>(w) * side);
  for (int x = 0; x < w; ++x) {
    for (int dx = -radius; dx <= radius; ++dx) cols[x * side + dx + radius] = clampi(x + dx, 0, w - 1);
  }

  std::size_t unresolved = 0;
#pragma omp parallel for schedule(static) reduction(+ : unresolved)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sum = 0.0, wsum = 0.0;
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      const int* cx = &cols[static_cast<std::size_t>(x) * side];
      for (int dy = -radius; dy <= radius; ++dy) {
        const double* row = &in[static_cast<std::size_t>(clampi(y + dy, 0, h - 1)) * w];
        const double* wrow = &weights[static_cast<std::size_t>(dy + radius) * side];
        for (int t = 0; t < side; ++t) {
          const double v = row[cx[t]];
          if (is_invalid_depth(v, marker)) continue;
          sum += wrow[t] * v;
          wsum += wrow[t];
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
      double& o = out[static_cast<std::size_t>(y) * w + x];
      if (wsum > 0.0) {
        o = std::clamp(sum / wsum, lo, hi);
      } else {
        o = marker;
        ++unresolved;
      }
    }
  }
  return unresolved;
}

void conv2d_replicate(std::span<const double> in, int c_in, PlaneShape shape,
                      std::span<const double> weights, std::span<const double> bias, int c_out,
                      int ksize, Activation act, std::span<double> out) {
  check_conv_args(in, c_in, shape, weights, bias, c_out, ksize, out);
  const int h = shape.height, w = shape.width, r = ksize / 2;
  const std::size_t plane = shape.size();

  std::vector<int> cols(static_cast<std::size_t>(w) * ksize);
  for (int x = 0; x < w; ++x) {
    for (int kx = 0; kx < ksize; ++kx) cols[x * ksize + kx] = clampi(x + kx - r, 0, w - 1);
  }

  // Whole output rows accumulate together: each element still sums bias,
  // then ci, ky, kx in the reference order, but neighbouring pixels no
  // longer wait on one another.
#pragma omp parallel for collapse(2) schedule(static)
  for (int co = 0; co < c_out; ++co) {
    for (int y = 0; y < h; ++y) {
      std::vector<double> acc(static_cast<std::size_t>(w), bias[co]);
      double* a = acc.data();
      const int lo = std::min(r, w), hi = std::max(lo, w - r);  // [lo, hi) needs no clamping
      for (int ci = 0; ci < c_in; ++ci) {
        const double* wk = &weights[(static_cast<std::size_t>(co) * c_in + ci) * ksize * ksize];
        const double* src = &in[ci * plane];
        for (int ky = 0; ky < ksize; ++ky) {
          const double* srow = src + static_cast<std::size_t>(clampi(y + ky - r, 0, h - 1)) * w;
          for (int kx = 0; kx < ksize; ++kx) {
            const double wv = wk[ky * ksize + kx];
            for (int x = 0; x < lo; ++x) a[x] += wv * srow[cols[static_cast<std::size_t>(x) * ksize + kx]];
            const double* shifted = srow + (kx - r);
            for (int x = lo; x < hi; ++x) a[x] += wv * shifted[x];
            for (int x = hi; x < w; ++x) a[x] += wv * srow[cols[static_cast<std::size_t>(x) * ksize + kx]];
          }
        }
      }
      double* orow = &out[co * plane + static_cast<std::size_t>(y) * w];
      for (int x = 0; x < w; ++x) orow[x] = activate(a[x], act);
    }
  }
}

void adaptive_avg_pool(std::span<const double> in, int channels, PlaneShape shape,
                       PlaneShape out_shape, std::span<double> out) {
  check_pool_args(in, channels, shape, out_shape, out);
  const std::size_t plane = shape.size();
#pragma omp parallel for collapse(2) schedule(static)
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < out_shape.height; ++i) {
      const int y0 = cell_begin(i, out_shape.height, shape.height);
      const int y1 = cell_begin(i + 1, out_shape.height, shape.height);
      for (int j = 0; j < out_shape.width; ++j) {
        const int x0 = cell_begin(j, out_shape.width, shape.width);
        const int x1 = cell_begin(j + 1, out_shape.width, shape.width);
        double sum = 0.0;
        for (int y = y0; y < y1; ++y) {
          const double* row = &in[c * plane + static_cast<std::size_t>(y) * shape.width];
          for (int x = x0; x < x1; ++x) sum += row[x];
        }
        out[c * out_shape.size() + static_cast<std::size_t>(i) * out_shape.width + j] =
            sum / static_cast<double>((y1 - y0) * (x1 - x0));
      }
    }
  }
}

void gram(std::span<const double> x, std::size_t n, std::size_t f, std::span<double> out) {
  if (x.size() != n * f || out.size() != f * f) throw std::invalid_argument("gram size mismatch");
  const long long rows = static_cast<long long>(f);
#pragma omp parallel for schedule(dynamic, 8)
  for (long long i = 0; i < rows; ++i) {
    double* orow = &out[static_cast<std::size_t>(i) * f];
    std::fill(orow, orow + f, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const double* xs = &x[s * f];
      const double xi = xs[i];
      for (std::size_t j = 0; j < f; ++j) orow[j] += xi * xs[j];
    }
  }
}

void cross(std::span<const double> y, std::size_t d, std::span<const double> x, std::size_t n,
           std::size_t f, std::span<double> out) {
  if (y.size() != n * d || x.size() != n * f || out.size() != d * f) {
    throw std::invalid_argument("cross size mismatch");
  }
  const long long rows = static_cast<long long>(d);
#pragma omp parallel for schedule(static)
  for (long long r = 0; r < rows; ++r) {
    double* orow = &out[static_cast<std::size_t>(r) * f];
    std::fill(orow, orow + f, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const double yr = y[s * d + static_cast<std::size_t>(r)];
      const double* xs = &x[s * f];
      for (std::size_t j = 0; j < f; ++j) orow[j] += yr * xs[j];
    }
  }
}

void matmul(std::span<const double> a, std::size_t m, std::size_t p, std::span<const double> b,
            std::size_t q, std::span<double> out) {
  if (a.size() != m * p || b.size() != p * q || out.size() != m * q) {
    throw std::invalid_argument("matmul size mismatch");
  }
  const long long rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < rows; ++i) {
    double* orow = &out[static_cast<std::size_t>(i) * q];
    std::fill(orow, orow + q, 0.0);
    for (std::size_t k = 0; k < p; ++k) {
      const double aik = a[static_cast<std::size_t>(i) * p + k];
      const double* brow = &b[k * q];
      for (std::size_t j = 0; j < q; ++j) orow[j] += aik * brow[j];
    }
  }
}

void dtw_batch(std::span<const DtwJob> jobs, std::span<double> out) {
  if (out.size() != jobs.size()) throw std::invalid_argument("dtw_batch output size mismatch");
  const long long n = static_cast<long long>(jobs.size());
  std::vector<std::string> errors(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < n; ++i) {
    const auto& j = jobs[static_cast<std::size_t>(i)];
    try {
      out[static_cast<std::size_t>(i)] = dtw_l1(j.a, j.na, j.b, j.nb, j.dims);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::invalid_argument(e);
  }
}

}  // namespace parallel

}  // namespace fabg::kernels
