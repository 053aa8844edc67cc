#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "discnn/tensor.hpp"

namespace discnn {

// Layer operations for the fixed five-layer vocabulary, forward and backward,
// in channels-last layout:
//   activations  [H,W,C] per sample or [N,H,W,C] batched
//   conv weights [3,3,C,O]   (ky, kx, in-channel, out-channel)
//   linear weights [D_in,D_out]
// Same-padding 3x3 convolution; spatial size is preserved.
//
// Backward passes are hand-written and verified against central finite
// differences (grad_check below). All ops accept float or double; double is
// instantiated for the gradient-check tests only.

enum class BNMode { train, infer };

template <typename T>
struct BNStatsT {
  std::vector<T> mean, var;
  bool initialized = false;
};
using BNStats = BNStatsT<float>;

template <typename T>
struct BNCacheT {
  TensorT<T> x_hat;
  std::vector<T> inv_std;   // per channel, 1/sqrt(batch_var + eps)
  int64_t per_channel = 0;  // N*H*W
};

template <typename T>
struct ConvGradsT {
  TensorT<T> d_weights, d_bias, d_input;
};

template <typename T>
struct BNGradsT {
  TensorT<T> d_gamma, d_beta, d_input;
};

template <typename T>
struct PoolResultT {
  TensorT<T> out;
  std::vector<int64_t> argmax;  // flat input index chosen per output element
};

template <typename T>
TensorT<T> conv3x3_forward(const TensorT<T>& input, const TensorT<T>& weights,
                           const TensorT<T>& bias);

template <typename T>
ConvGradsT<T> conv3x3_backward(const TensorT<T>& input, const TensorT<T>& weights,
                               const TensorT<T>& d_out, bool need_d_input = true);

template <typename T>
TensorT<T> batchnorm_forward(const TensorT<T>& batch, const TensorT<T>& gamma,
                             const TensorT<T>& beta, T eps, BNMode mode,
                             BNStatsT<T>& running, T momentum = T(0.1),
                             BNCacheT<T>* cache = nullptr);

template <typename T>
BNGradsT<T> batchnorm_backward(const BNCacheT<T>& cache, const TensorT<T>& gamma,
                               const TensorT<T>& d_out);

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& input);

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& d_out);

template <typename T>
PoolResultT<T> maxpool2_forward(const TensorT<T>& input);

template <typename T>
TensorT<T> maxpool2_backward(const std::vector<int64_t>& argmax,
                             const std::vector<int64_t>& input_shape,
                             const TensorT<T>& d_out);

template <typename T>
TensorT<T> linear_forward(const TensorT<T>& input, const TensorT<T>& weights,
                          const TensorT<T>& bias);

template <typename T>
struct LinearGradsT {
  TensorT<T> d_weights, d_bias, d_input;
};

template <typename T>
LinearGradsT<T> linear_backward(const TensorT<T>& input, const TensorT<T>& weights,
                                const TensorT<T>& d_out);

// v <- momentum*v + grad ; p <- p - lr*v
template <typename T>
void sgd_step(TensorT<T>& params, const TensorT<T>& grads, TensorT<T>& velocity,
              T lr, T momentum);

// Central finite differences against an analytic gradient. `scalar_fn` is
// re-evaluated with probed coordinates of `coords` perturbed by +-h; returns
// max over probes of |analytic - fd| / max(|analytic|, |fd|, floor).
double grad_check(const std::function<double()>& scalar_fn, std::span<double> coords,
                  std::span<const double> analytic, int probes, uint32_t seed,
                  double h = 1e-5, double floor = 1e-8);

}  // namespace discnn
