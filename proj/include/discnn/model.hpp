#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "discnn/nn.hpp"
#include "discnn/tensor.hpp"

namespace discnn {

// The fixed network: four conv->batchnorm->relu->maxpool blocks with 64, 32,
// 16, 8 output channels on 96x96 RGB input, then three fully-connected layers
// 288 -> 128 -> 16. Spatial trace 96 -> 48 -> 24 -> 12 -> 6; flatten width
// 8*6*6 = 288. There is no softmax and no activation between the FC layers.
inline constexpr int kInputSize = 96;
inline constexpr int kInputChannels = 3;
inline constexpr int kOutputDim = 16;
inline constexpr std::array<int, 4> kConvChannels{64, 32, 16, 8};
inline constexpr std::array<int, 3> kFcWidths{288, 128, 16};
inline constexpr int kFlattenDim = 8 * 6 * 6;
inline constexpr float kBNEps = 1e-5f;
inline constexpr float kBNMomentum = 0.1f;

template <typename T>
struct ConvBlockT {
  TensorT<T> w;      // [3,3,C,O]
  TensorT<T> b;      // [O]
  TensorT<T> gamma;  // [O]
  TensorT<T> beta;   // [O]
  BNStatsT<T> running;
};

template <typename T>
struct DisCNNModelT {
  std::array<ConvBlockT<T>, 4> blocks;
  std::array<TensorT<T>, 3> fc_w;  // [D_in, D_out]
  std::array<TensorT<T>, 3> fc_b;  // [D_out]

  // Visits trainable parameters in the fixed serialization order.
  template <typename F>
  void for_each_param(F&& f) {
    for (auto& blk : blocks) {
      f(blk.w);
      f(blk.b);
      f(blk.gamma);
      f(blk.beta);
    }
    for (size_t i = 0; i < 3; ++i) {
      f(fc_w[i]);
      f(fc_b[i]);
    }
  }
  template <typename F>
  void for_each_param(F&& f) const {
    for (const auto& blk : blocks) {
      f(blk.w);
      f(blk.b);
      f(blk.gamma);
      f(blk.beta);
    }
    for (size_t i = 0; i < 3; ++i) {
      f(fc_w[i]);
      f(fc_b[i]);
    }
  }

  template <typename U>
  DisCNNModelT<U> cast() const {
    DisCNNModelT<U> out;
    for (size_t i = 0; i < 4; ++i) {
      out.blocks[i].w = blocks[i].w.template cast<U>();
      out.blocks[i].b = blocks[i].b.template cast<U>();
      out.blocks[i].gamma = blocks[i].gamma.template cast<U>();
      out.blocks[i].beta = blocks[i].beta.template cast<U>();
      out.blocks[i].running.initialized = blocks[i].running.initialized;
      out.blocks[i].running.mean.assign(blocks[i].running.mean.begin(),
                                        blocks[i].running.mean.end());
      out.blocks[i].running.var.assign(blocks[i].running.var.begin(),
                                       blocks[i].running.var.end());
    }
    for (size_t i = 0; i < 3; ++i) {
      out.fc_w[i] = fc_w[i].template cast<U>();
      out.fc_b[i] = fc_b[i].template cast<U>();
    }
    return out;
  }
};

using DisCNNModel = DisCNNModelT<float>;

// Deterministic He fan-in initialization; same seed gives bit-identical
// parameters.
DisCNNModel build_discnn(uint32_t seed);

template <typename T>
int64_t parameter_count(const DisCNNModelT<T>& m) {
  int64_t n = 0;
  m.for_each_param([&](const TensorT<T>& t) { n += t.size(); });
  return n;
}

// Intermediates kept by the training forward pass for backprop.
template <typename T>
struct ForwardCacheT {
  // Per block: layer input (previous pooled activation or the batch itself),
  // batch-norm cache, post-relu activation (pool input) and pool routing.
  std::array<TensorT<T>, 4> conv_in;
  std::array<BNCacheT<T>, 4> bn;
  std::array<TensorT<T>, 4> relu_out;
  std::array<std::vector<int64_t>, 4> pool_argmax;
  std::array<std::vector<int64_t>, 4> pre_pool_shape;
  TensorT<T> flat;     // [N,288]
  TensorT<T> fc1_out;  // [N,288]
  TensorT<T> fc2_out;  // [N,128]
};

template <typename T>
struct ModelGradsT {
  std::array<TensorT<T>, 4> w, b, gamma, beta;
  std::array<TensorT<T>, 3> fc_w, fc_b;
};

// Train-mode forward (updates running stats, fills cache). Input is
// [N,96,96,3] normalized to [0,1]; returns the [N,16] output.
template <typename T>
TensorT<T> discnn_train_forward(DisCNNModelT<T>& model, const TensorT<T>& batch,
                                ForwardCacheT<T>* cache = nullptr);

// Infer-mode forward; deterministic and per-sample independent. The float
// instantiation takes the fused kernel path.
template <typename T>
TensorT<T> discnn_infer(const DisCNNModelT<T>& model, const TensorT<T>& batch);

// Backprop from d_z = dL/d(output) through the whole stack.
template <typename T>
ModelGradsT<T> discnn_backward(const DisCNNModelT<T>& model,
                               const ForwardCacheT<T>& cache, const TensorT<T>& d_z);

// Euclidean norm of the 16-dim output vector: the detection score.
double output_module(const float* v, int64_t n);
double output_module(const Tensor& v);

// Checkpoint format (little-endian):
//   magic "DCNN1", u8 version = 1
//   u32 input_size, u32 input_channels, u32 n_blocks, u32 channels[n_blocks],
//   u32 n_fc, u32 fc_widths[n_fc]
//   then for each block: w [3,3,C,O], b, gamma, beta, running_mean,
//   running_var; then for each fc: w [D_in,D_out], b — all float32.
void save_model(const DisCNNModel& model, const std::string& path);
DisCNNModel load_model(const std::string& path);

}  // namespace discnn
