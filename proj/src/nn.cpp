#include "discnn/nn.hpp"

#include <cblas.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

namespace discnn {
namespace {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta, float* c,
          int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

// Views a rank-3 [H,W,C] tensor as batch 1; rank-4 passes through.
struct BatchDims {
  int64_t n, h, w, c;
  bool batched;
};

BatchDims spatial_dims(const std::vector<int64_t>& shape, const char* what) {
  if (shape.size() == 3) return {1, shape[0], shape[1], shape[2], false};
  if (shape.size() == 4) return {shape[0], shape[1], shape[2], shape[3], true};
  throw shape_error(std::string(what) + ": expected rank 3 [H,W,C] or rank 4 " +
                    "[N,H,W,C], got " + shape_str(shape));
}

std::vector<int64_t> with_channels(const BatchDims& d, int64_t c) {
  if (d.batched) return {d.n, d.h, d.w, c};
  return {d.h, d.w, c};
}

// im2col for a 3x3 same-padded window, k order (ky,kx,c) to match the
// [3,3,C,O] weight layout. cols is [H*W, 9C].
template <typename T>
void im2col3x3(const T* in, int64_t h, int64_t w, int64_t c, T* cols) {
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      T* dst = cols + (y * w + x) * 9 * c;
      for (int ky = 0; ky < 3; ++ky) {
        int64_t sy = y + ky - 1;
        if (sy < 0 || sy >= h) {
          std::memset(dst, 0, sizeof(T) * 3 * c);
          dst += 3 * c;
          continue;
        }
        int64_t sx = x - 1;
        // three horizontal taps; clip the ones outside the row
        for (int kx = 0; kx < 3; ++kx, ++sx) {
          if (sx < 0 || sx >= w)
            std::memset(dst, 0, sizeof(T) * c);
          else
            std::memcpy(dst, in + (sy * w + sx) * c, sizeof(T) * c);
          dst += c;
        }
      }
    }
  }
}

// Scatter-add of column gradients back to the input image.
template <typename T>
void col2im3x3(const T* cols, int64_t h, int64_t w, int64_t c, T* in_grad) {
  std::memset(in_grad, 0, sizeof(T) * h * w * c);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const T* src = cols + (y * w + x) * 9 * c;
      for (int ky = 0; ky < 3; ++ky) {
        int64_t sy = y + ky - 1;
        if (sy < 0 || sy >= h) {
          src += 3 * c;
          continue;
        }
        int64_t sx = x - 1;
        for (int kx = 0; kx < 3; ++kx, ++sx) {
          if (sx >= 0 && sx < w) {
            T* dst = in_grad + (sy * w + sx) * c;
            for (int64_t i = 0; i < c; ++i) dst[i] += src[i];
          }
          src += c;
        }
      }
    }
  }
}

}  // namespace

template <typename T>
TensorT<T> conv3x3_forward(const TensorT<T>& input, const TensorT<T>& weights,
                           const TensorT<T>& bias) {
  BatchDims d = spatial_dims(input.shape, "conv3x3");
  if (weights.rank() != 4 || weights.dim(0) != 3 || weights.dim(1) != 3)
    throw shape_error("conv3x3: weights must be [3,3,C,O], got " +
                      shape_str(weights.shape));
  int64_t c = weights.dim(2), o = weights.dim(3);
  if (c != d.c)
    throw shape_error("conv3x3: input channel dim " + std::to_string(d.c) +
                      " != weight channel dim " + std::to_string(c));
  if (bias.shape != std::vector<int64_t>{o})
    throw shape_error("conv3x3: bias dim must be [" + std::to_string(o) + "], got " +
                      shape_str(bias.shape));
  TensorT<T> out(with_channels(d, o));
  const int64_t hw = d.h * d.w, k = 9 * c;
#pragma omp parallel if (d.n > 1)
  {
    std::vector<T> cols(static_cast<size_t>(hw * k));
#pragma omp for schedule(static)
    for (int64_t n = 0; n < d.n; ++n) {
      const T* in = input.data() + n * hw * c;
      T* dst = out.data() + n * hw * o;
      im2col3x3(in, d.h, d.w, c, cols.data());
      gemm(false, false, static_cast<int>(hw), static_cast<int>(o),
           static_cast<int>(k), T(1), cols.data(), static_cast<int>(k),
           weights.data(), static_cast<int>(o), T(0), dst, static_cast<int>(o));
      for (int64_t i = 0; i < hw; ++i)
        for (int64_t j = 0; j < o; ++j) dst[i * o + j] += bias.values[j];
    }
  }
  return out;
}

template <typename T>
ConvGradsT<T> conv3x3_backward(const TensorT<T>& input, const TensorT<T>& weights,
                               const TensorT<T>& d_out, bool need_d_input) {
  BatchDims d = spatial_dims(input.shape, "conv3x3 backward");
  int64_t c = weights.dim(2), o = weights.dim(3);
  require_shape(d_out.shape, with_channels(d, o), "conv3x3 backward d_out");
  const int64_t hw = d.h * d.w, k = 9 * c;

  ConvGradsT<T> g;
  g.d_weights = TensorT<T>(weights.shape);
  g.d_bias = TensorT<T>({o});
  if (need_d_input) g.d_input = TensorT<T>(input.shape);

  // Parameter gradients accumulate sample by sample in index order so the
  // result does not depend on the worker count.
  {
    std::vector<T> cols(static_cast<size_t>(hw * k));
    for (int64_t n = 0; n < d.n; ++n) {
      const T* in = input.data() + n * hw * c;
      const T* dy = d_out.data() + n * hw * o;
      im2col3x3(in, d.h, d.w, c, cols.data());
      gemm(true, false, static_cast<int>(k), static_cast<int>(o),
           static_cast<int>(hw), T(1), cols.data(), static_cast<int>(k), dy,
           static_cast<int>(o), T(1), g.d_weights.data(), static_cast<int>(o));
      for (int64_t i = 0; i < hw; ++i)
        for (int64_t j = 0; j < o; ++j) g.d_bias.values[j] += dy[i * o + j];
    }
  }

  if (need_d_input) {
#pragma omp parallel if (d.n > 1)
    {
      std::vector<T> dcols(static_cast<size_t>(hw * k));
#pragma omp for schedule(static)
      for (int64_t n = 0; n < d.n; ++n) {
        const T* dy = d_out.data() + n * hw * o;
        gemm(false, true, static_cast<int>(hw), static_cast<int>(k),
             static_cast<int>(o), T(1), dy, static_cast<int>(o), weights.data(),
             static_cast<int>(o), T(0), dcols.data(), static_cast<int>(k));
        col2im3x3(dcols.data(), d.h, d.w, c, g.d_input.data() + n * hw * c);
      }
    }
  }
  return g;
}

template <typename T>
TensorT<T> batchnorm_forward(const TensorT<T>& batch, const TensorT<T>& gamma,
                             const TensorT<T>& beta, T eps, BNMode mode,
                             BNStatsT<T>& running, T momentum,
                             BNCacheT<T>* cache) {
  BatchDims d = spatial_dims(batch.shape, "batchnorm");
  if (gamma.shape != std::vector<int64_t>{d.c})
    throw shape_error("batchnorm: gamma dim must be [" + std::to_string(d.c) +
                      "], got " + shape_str(gamma.shape));
  if (beta.shape != std::vector<int64_t>{d.c})
    throw shape_error("batchnorm: beta dim must be [" + std::to_string(d.c) +
                      "], got " + shape_str(beta.shape));
  if (mode == BNMode::infer && !running.initialized)
    throw std::runtime_error("batchnorm: infer mode with uninitialized running stats");

  const int64_t m = d.n * d.h * d.w, c = d.c;
  TensorT<T> out(batch.shape);

  if (mode == BNMode::infer) {
    std::vector<T> scale(c), shift(c);
    for (int64_t j = 0; j < c; ++j) {
      T inv = T(1) / std::sqrt(running.var[j] + eps);
      scale[j] = gamma.values[j] * inv;
      shift[j] = beta.values[j] - running.mean[j] * scale[j];
    }
    const T* in = batch.data();
    T* dst = out.data();
#pragma omp parallel for schedule(static) if (m * c > 1 << 16)
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < c; ++j)
        dst[i * c + j] = in[i * c + j] * scale[j] + shift[j];
    return out;
  }

  if (running.mean.empty()) {
    running.mean.assign(c, T(0));
    running.var.assign(c, T(1));
  }
  if (cache) {
    cache->x_hat = TensorT<T>(batch.shape);
    cache->inv_std.resize(c);
    cache->per_channel = m;
  }
  const T* in = batch.data();
  T* dst = out.data();
  T* xh = cache ? cache->x_hat.data() : nullptr;
#pragma omp parallel for schedule(static) if (c > 4)
  for (int64_t j = 0; j < c; ++j) {
    T mean = 0;
    for (int64_t i = 0; i < m; ++i) mean += in[i * c + j];
    mean /= static_cast<T>(m);
    T var = 0;
    for (int64_t i = 0; i < m; ++i) {
      T v = in[i * c + j] - mean;
      var += v * v;
    }
    var /= static_cast<T>(m);
    T inv = T(1) / std::sqrt(var + eps);
    for (int64_t i = 0; i < m; ++i) {
      T h = (in[i * c + j] - mean) * inv;
      if (xh) xh[i * c + j] = h;
      dst[i * c + j] = gamma.values[j] * h + beta.values[j];
    }
    running.mean[j] = (T(1) - momentum) * running.mean[j] + momentum * mean;
    running.var[j] = (T(1) - momentum) * running.var[j] + momentum * var;
    if (cache) cache->inv_std[j] = inv;
  }
  running.initialized = true;
  return out;
}

template <typename T>
BNGradsT<T> batchnorm_backward(const BNCacheT<T>& cache, const TensorT<T>& gamma,
                               const TensorT<T>& d_out) {
  BatchDims d = spatial_dims(d_out.shape, "batchnorm backward");
  const int64_t m = cache.per_channel, c = d.c;
  BNGradsT<T> g;
  g.d_gamma = TensorT<T>({c});
  g.d_beta = TensorT<T>({c});
  g.d_input = TensorT<T>(d_out.shape);
  const T* dy = d_out.data();
  const T* xh = cache.x_hat.data();
  T* dx = g.d_input.data();
#pragma omp parallel for schedule(static) if (c > 4)
  for (int64_t j = 0; j < c; ++j) {
    T sum_dy = 0, sum_dy_xh = 0;
    for (int64_t i = 0; i < m; ++i) {
      sum_dy += dy[i * c + j];
      sum_dy_xh += dy[i * c + j] * xh[i * c + j];
    }
    g.d_beta.values[j] = sum_dy;
    g.d_gamma.values[j] = sum_dy_xh;
    const T k = gamma.values[j] * cache.inv_std[j] / static_cast<T>(m);
    for (int64_t i = 0; i < m; ++i)
      dx[i * c + j] = k * (static_cast<T>(m) * dy[i * c + j] - sum_dy -
                           xh[i * c + j] * sum_dy_xh);
  }
  return g;
}

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& input) {
  TensorT<T> out(input.shape);
  const T* in = input.data();
  T* dst = out.data();
  const int64_t n = input.size();
#pragma omp parallel for schedule(static) if (n > 1 << 16)
  for (int64_t i = 0; i < n; ++i) dst[i] = in[i] > T(0) ? in[i] : T(0);
  return out;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& d_out) {
  require_shape(d_out.shape, input.shape, "relu backward");
  TensorT<T> g(input.shape);
  const int64_t n = input.size();
#pragma omp parallel for schedule(static) if (n > 1 << 16)
  for (int64_t i = 0; i < n; ++i)
    g.values[i] = input.values[i] > T(0) ? d_out.values[i] : T(0);
  return g;
}

template <typename T>
PoolResultT<T> maxpool2_forward(const TensorT<T>& input) {
  BatchDims d = spatial_dims(input.shape, "maxpool2");
  if (d.h % 2 != 0)
    throw shape_error("maxpool2: height " + std::to_string(d.h) + " is odd");
  if (d.w % 2 != 0)
    throw shape_error("maxpool2: width " + std::to_string(d.w) + " is odd");
  const int64_t ho = d.h / 2, wo = d.w / 2, c = d.c;
  PoolResultT<T> r;
  BatchDims od = d;
  od.h = ho;
  od.w = wo;
  r.out = TensorT<T>(with_channels(od, c));
  r.argmax.resize(static_cast<size_t>(r.out.size()));
  const T* in = input.data();
#pragma omp parallel for schedule(static) if (d.n > 1)
  for (int64_t n = 0; n < d.n; ++n) {
    const int64_t in_base = n * d.h * d.w * c;
    const int64_t out_base = n * ho * wo * c;
    for (int64_t y = 0; y < ho; ++y)
      for (int64_t x = 0; x < wo; ++x)
        for (int64_t j = 0; j < c; ++j) {
          int64_t best = in_base + ((2 * y) * d.w + 2 * x) * c + j;
          T bv = in[best];
          const int64_t cand[3] = {
              in_base + ((2 * y) * d.w + 2 * x + 1) * c + j,
              in_base + ((2 * y + 1) * d.w + 2 * x) * c + j,
              in_base + ((2 * y + 1) * d.w + 2 * x + 1) * c + j};
          for (int64_t idx : cand)
            if (in[idx] > bv) {
              bv = in[idx];
              best = idx;
            }
          int64_t oi = out_base + (y * wo + x) * c + j;
          r.out.values[oi] = bv;
          r.argmax[oi] = best;
        }
  }
  return r;
}

template <typename T>
TensorT<T> maxpool2_backward(const std::vector<int64_t>& argmax,
                             const std::vector<int64_t>& input_shape,
                             const TensorT<T>& d_out) {
  if (argmax.size() != static_cast<size_t>(d_out.size()))
    throw shape_error("maxpool2 backward: argmax count " +
                      std::to_string(argmax.size()) + " != d_out count " +
                      std::to_string(d_out.size()));
  TensorT<T> g(input_shape);
  for (size_t i = 0; i < argmax.size(); ++i)
    g.values[static_cast<size_t>(argmax[i])] += d_out.values[i];
  return g;
}

template <typename T>
TensorT<T> linear_forward(const TensorT<T>& input, const TensorT<T>& weights,
                          const TensorT<T>& bias) {
  if (input.rank() != 2)
    throw shape_error("linear: input must be [N,D_in], got " + shape_str(input.shape));
  if (weights.rank() != 2)
    throw shape_error("linear: weights must be [D_in,D_out], got " +
                      shape_str(weights.shape));
  const int64_t n = input.dim(0), din = input.dim(1);
  const int64_t dout = weights.dim(1);
  if (weights.dim(0) != din)
    throw shape_error("linear: input width " + std::to_string(din) +
                      " != weight input dim " + std::to_string(weights.dim(0)));
  if (bias.shape != std::vector<int64_t>{dout})
    throw shape_error("linear: bias dim must be [" + std::to_string(dout) +
                      "], got " + shape_str(bias.shape));
  TensorT<T> out({n, dout});
  gemm(false, false, static_cast<int>(n), static_cast<int>(dout),
       static_cast<int>(din), T(1), input.data(), static_cast<int>(din),
       weights.data(), static_cast<int>(dout), T(0), out.data(),
       static_cast<int>(dout));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < dout; ++j) out.values[i * dout + j] += bias.values[j];
  return out;
}

template <typename T>
LinearGradsT<T> linear_backward(const TensorT<T>& input, const TensorT<T>& weights,
                                const TensorT<T>& d_out) {
  const int64_t n = input.dim(0), din = input.dim(1), dout = weights.dim(1);
  require_shape(d_out.shape, {n, dout}, "linear backward d_out");
  LinearGradsT<T> g;
  g.d_weights = TensorT<T>({din, dout});
  g.d_bias = TensorT<T>({dout});
  g.d_input = TensorT<T>({n, din});
  gemm(true, false, static_cast<int>(din), static_cast<int>(dout),
       static_cast<int>(n), T(1), input.data(), static_cast<int>(din),
       d_out.data(), static_cast<int>(dout), T(0), g.d_weights.data(),
       static_cast<int>(dout));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < dout; ++j) g.d_bias.values[j] += d_out.values[i * dout + j];
  gemm(false, true, static_cast<int>(n), static_cast<int>(din),
       static_cast<int>(dout), T(1), d_out.data(), static_cast<int>(dout),
       weights.data(), static_cast<int>(dout), T(0), g.d_input.data(),
       static_cast<int>(din));
  return g;
}

template <typename T>
void sgd_step(TensorT<T>& params, const TensorT<T>& grads, TensorT<T>& velocity,
              T lr, T momentum) {
  require_shape(grads.shape, params.shape, "sgd_step grads");
  if (velocity.values.empty()) velocity = TensorT<T>(params.shape);
  require_shape(velocity.shape, params.shape, "sgd_step velocity");
  const int64_t n = params.size();
  for (int64_t i = 0; i < n; ++i) {
    velocity.values[i] = momentum * velocity.values[i] + grads.values[i];
    params.values[i] -= lr * velocity.values[i];
  }
}

double grad_check(const std::function<double()>& scalar_fn, std::span<double> coords,
                  std::span<const double> analytic, int probes, uint32_t seed,
                  double h, double floor) {
  if (coords.size() != analytic.size())
    throw shape_error("grad_check: coordinate count != analytic gradient count");
  std::mt19937 rng(seed);
  double worst = 0;
  const size_t n = coords.size();
  for (int p = 0; p < probes; ++p) {
    size_t i = (n <= 1) ? 0 : rng() % n;
    const double saved = coords[i];
    coords[i] = saved + h;
    double fp = scalar_fn();
    coords[i] = saved - h;
    double fm = scalar_fn();
    coords[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("grad_check: non-finite function value");
    double fd = (fp - fm) / (2 * h);
    double a = analytic[i];
    double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
    worst = std::max(worst, rel);
  }
  return worst;
}

#define DISCNN_INSTANTIATE(T)                                                      \
  template TensorT<T> conv3x3_forward<T>(const TensorT<T>&, const TensorT<T>&,    \
                                         const TensorT<T>&);                      \
  template ConvGradsT<T> conv3x3_backward<T>(const TensorT<T>&, const TensorT<T>&,\
                                             const TensorT<T>&, bool);            \
  template TensorT<T> batchnorm_forward<T>(const TensorT<T>&, const TensorT<T>&,  \
                                           const TensorT<T>&, T, BNMode,          \
                                           BNStatsT<T>&, T, BNCacheT<T>*);        \
  template BNGradsT<T> batchnorm_backward<T>(const BNCacheT<T>&, const TensorT<T>&,\
                                             const TensorT<T>&);                  \
  template TensorT<T> relu_forward<T>(const TensorT<T>&);                         \
  template TensorT<T> relu_backward<T>(const TensorT<T>&, const TensorT<T>&);     \
  template PoolResultT<T> maxpool2_forward<T>(const TensorT<T>&);                 \
  template TensorT<T> maxpool2_backward<T>(const std::vector<int64_t>&,           \
                                           const std::vector<int64_t>&,           \
                                           const TensorT<T>&);                    \
  template TensorT<T> linear_forward<T>(const TensorT<T>&, const TensorT<T>&,     \
                                        const TensorT<T>&);                       \
  template LinearGradsT<T> linear_backward<T>(const TensorT<T>&, const TensorT<T>&,\
                                              const TensorT<T>&);                 \
  template void sgd_step<T>(TensorT<T>&, const TensorT<T>&, TensorT<T>&, T, T);

DISCNN_INSTANTIATE(float)
DISCNN_INSTANTIATE(double)

}  // namespace discnn
