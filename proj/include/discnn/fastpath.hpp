#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace discnn {

template <typename T>
struct DisCNNModelT;

// Packed weights for the scoring hot path. Conv bias and the batch-norm
// affine collapse into one per-channel scale/shift applied together with the
// ReLU right after each direct convolution; 2x2 max pooling streams into the
// next stage's zero-padded input buffer, so activations are written once.
struct InferStage {
  int size = 0;    // input spatial extent (square)
  int in_ch = 0;
  int out_ch = 0;
  std::vector<float> w;      // [3,3,C,O], same layout as the model
  std::vector<float> scale;  // gamma / sqrt(running_var + eps)
  std::vector<float> shift;  // beta + (bias - running_mean) * scale
};

struct InferencePlan {
  std::array<InferStage, 4> stages;
  std::vector<float> fc_w[3];  // [D_in, D_out]
  std::vector<float> fc_b[3];
  bool use_avx512 = false;
};

// Scratch buffers sized for the fixed 96->48->24->12->6 stack. Padded buffers
// keep a one-pixel zero border; only interiors are overwritten between runs.
struct InferScratch {
  std::vector<float> in0;   // 98*98*3
  std::vector<float> row;   // 2*96*64 row pair before pooling (max size)
  std::vector<float> a1;    // 50*50*64
  std::vector<float> a2;    // 26*26*32
  std::vector<float> a3;    // 14*14*16
  std::vector<float> a4;    // 6*6*8
  std::vector<float> fc1;   // 288
  std::vector<float> fc2;   // 128
  InferScratch();
  // Interior view of the padded input buffer: row stride in floats.
  float* input_interior() { return in0.data() + (98 + 1) * 3; }
  static constexpr int input_row_stride = 98 * 3;
};

InferencePlan make_inference_plan(const DisCNNModelT<float>& model);

// img points at a normalized [96,96,3] HWC sample that has already been
// written into scratch.input_interior(); out receives the 16-vector.
void infer_run(const InferencePlan& plan, InferScratch& scratch, float out[16]);

bool fastpath_has_avx512();

namespace detail {
void infer_convs_generic(const InferencePlan& plan, InferScratch& s);
void infer_convs_avx512(const InferencePlan& plan, InferScratch& s);
}  // namespace detail

}  // namespace discnn
