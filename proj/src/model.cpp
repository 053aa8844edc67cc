#include "discnn/model.hpp"

#include <omp.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "discnn/fastpath.hpp"
#include "discnn/rng.hpp"

namespace discnn {

DisCNNModel build_discnn(uint32_t seed) {
  Rng rng(seed);
  DisCNNModel m;
  int in_ch = kInputChannels;
  for (int i = 0; i < 4; ++i) {
    const int out_ch = kConvChannels[i];
    auto& blk = m.blocks[i];
    blk.w = Tensor({3, 3, in_ch, out_ch});
    const double std = std::sqrt(2.0 / (9.0 * in_ch));
    for (auto& v : blk.w.values) v = static_cast<float>(rng.normal() * std);
    blk.b = Tensor({out_ch});
    blk.gamma = Tensor({out_ch});
    for (auto& v : blk.gamma.values) v = 1.f;
    blk.beta = Tensor({out_ch});
    blk.running.mean.assign(out_ch, 0.f);
    blk.running.var.assign(out_ch, 1.f);
    blk.running.initialized = true;
    in_ch = out_ch;
  }
  int in_dim = kFlattenDim;
  for (int i = 0; i < 3; ++i) {
    const int out_dim = kFcWidths[i];
    m.fc_w[i] = Tensor({in_dim, out_dim});
    const double std = std::sqrt(2.0 / in_dim);
    for (auto& v : m.fc_w[i].values) v = static_cast<float>(rng.normal() * std);
    m.fc_b[i] = Tensor({out_dim});
    in_dim = out_dim;
  }
  return m;
}

namespace {

template <typename T>
void check_input_shape(const TensorT<T>& batch) {
  const auto& s = batch.shape;
  bool ok = (s.size() == 4 && s[1] == kInputSize && s[2] == kInputSize &&
             s[3] == kInputChannels) ||
            (s.size() == 3 && s[0] == kInputSize && s[1] == kInputSize &&
             s[2] == kInputChannels);
  if (!ok)
    throw shape_error("discnn: input must be [N,96,96,3] (or [96,96,3]), got " +
                      shape_str(s));
}

}  // namespace

template <typename T>
TensorT<T> discnn_train_forward(DisCNNModelT<T>& model, const TensorT<T>& batch,
                                ForwardCacheT<T>* cache) {
  check_input_shape(batch);
  TensorT<T> x = batch;
  if (x.rank() == 3) x.shape = {1, kInputSize, kInputSize, kInputChannels};
  const int64_t n = x.dim(0);
  for (int i = 0; i < 4; ++i) {
    auto& blk = model.blocks[i];
    if (cache) cache->conv_in[i] = x;
    TensorT<T> conv = conv3x3_forward(x, blk.w, blk.b);
    BNCacheT<T>* bc = cache ? &cache->bn[i] : nullptr;
    TensorT<T> bn = batchnorm_forward(conv, blk.gamma, blk.beta, T(kBNEps),
                                      BNMode::train, blk.running, T(kBNMomentum), bc);
    TensorT<T> act = relu_forward(bn);
    if (cache) cache->relu_out[i] = act;
    PoolResultT<T> pooled = maxpool2_forward(act);
    if (cache) {
      cache->pool_argmax[i] = std::move(pooled.argmax);
      cache->pre_pool_shape[i] = act.shape;
    }
    x = std::move(pooled.out);
  }
  x.shape = {n, kFlattenDim};
  if (cache) cache->flat = x;
  TensorT<T> h1 = linear_forward(x, model.fc_w[0], model.fc_b[0]);
  if (cache) cache->fc1_out = h1;
  TensorT<T> h2 = linear_forward(h1, model.fc_w[1], model.fc_b[1]);
  if (cache) cache->fc2_out = h2;
  return linear_forward(h2, model.fc_w[2], model.fc_b[2]);
}

template <typename T>
ModelGradsT<T> discnn_backward(const DisCNNModelT<T>& model,
                               const ForwardCacheT<T>& cache,
                               const TensorT<T>& d_z) {
  ModelGradsT<T> g;
  LinearGradsT<T> l3 = linear_backward(cache.fc2_out, model.fc_w[2], d_z);
  g.fc_w[2] = std::move(l3.d_weights);
  g.fc_b[2] = std::move(l3.d_bias);
  LinearGradsT<T> l2 = linear_backward(cache.fc1_out, model.fc_w[1], l3.d_input);
  g.fc_w[1] = std::move(l2.d_weights);
  g.fc_b[1] = std::move(l2.d_bias);
  LinearGradsT<T> l1 = linear_backward(cache.flat, model.fc_w[0], l2.d_input);
  g.fc_w[0] = std::move(l1.d_weights);
  g.fc_b[0] = std::move(l1.d_bias);

  TensorT<T> dx = std::move(l1.d_input);
  dx.shape = {dx.dim(0), 6, 6, 8};
  for (int i = 3; i >= 0; --i) {
    dx = maxpool2_backward(cache.pool_argmax[i], cache.pre_pool_shape[i], dx);
    dx = relu_backward(cache.relu_out[i], dx);
    BNGradsT<T> bg = batchnorm_backward(cache.bn[i], model.blocks[i].gamma, dx);
    g.gamma[i] = std::move(bg.d_gamma);
    g.beta[i] = std::move(bg.d_beta);
    ConvGradsT<T> cg = conv3x3_backward(cache.conv_in[i], model.blocks[i].w,
                                        bg.d_input, /*need_d_input=*/i > 0);
    g.w[i] = std::move(cg.d_weights);
    g.b[i] = std::move(cg.d_bias);
    if (i > 0) dx = std::move(cg.d_input);
  }
  return g;
}

template <typename T>
TensorT<T> discnn_infer(const DisCNNModelT<T>& model, const TensorT<T>& batch) {
  check_input_shape(batch);
  TensorT<T> x = batch;
  if (x.rank() == 3) x.shape = {1, kInputSize, kInputSize, kInputChannels};
  const int64_t n = x.dim(0);
  for (int i = 0; i < 4; ++i) {
    const auto& blk = model.blocks[i];
    TensorT<T> conv = conv3x3_forward(x, blk.w, blk.b);
    auto running = blk.running;  // infer mode leaves stats untouched
    TensorT<T> bn = batchnorm_forward(conv, blk.gamma, blk.beta, T(kBNEps),
                                      BNMode::infer, running, T(kBNMomentum));
    TensorT<T> act = relu_forward(bn);
    x = maxpool2_forward(act).out;
  }
  x.shape = {n, kFlattenDim};
  TensorT<T> h1 = linear_forward(x, model.fc_w[0], model.fc_b[0]);
  TensorT<T> h2 = linear_forward(h1, model.fc_w[1], model.fc_b[1]);
  return linear_forward(h2, model.fc_w[2], model.fc_b[2]);
}

// Float infer takes the fused kernels; per-sample, so results do not depend
// on batch composition.
template <>
TensorT<float> discnn_infer<float>(const DisCNNModelT<float>& model,
                                   const TensorT<float>& batch) {
  check_input_shape(batch);
  const bool batched = batch.rank() == 4;
  const int64_t n = batched ? batch.dim(0) : 1;
  const int64_t sample = kInputSize * kInputSize * kInputChannels;
  InferencePlan plan = make_inference_plan(model);
  TensorT<float> out(batched ? std::vector<int64_t>{n, kOutputDim}
                             : std::vector<int64_t>{1, kOutputDim});
#pragma omp parallel if (n > 1)
  {
    InferScratch scratch;
#pragma omp for schedule(dynamic, 8)
    for (int64_t i = 0; i < n; ++i) {
      const float* src = batch.data() + i * sample;
      float* interior = scratch.input_interior();
      for (int y = 0; y < kInputSize; ++y)
        std::memcpy(interior + y * InferScratch::input_row_stride,
                    src + y * kInputSize * kInputChannels,
                    sizeof(float) * kInputSize * kInputChannels);
      infer_run(plan, scratch, out.data() + i * kOutputDim);
    }
  }
  return out;
}

double output_module(const float* v, int64_t n) {
  double s = 0;
  for (int64_t i = 0; i < n; ++i) s += static_cast<double>(v[i]) * v[i];
  return std::sqrt(s);
}

double output_module(const Tensor& v) {
  if (v.size() != kOutputDim)
    throw shape_error("output_module: expected a 16-vector, got " +
                      shape_str(v.shape));
  return output_module(v.data(), v.size());
}

namespace {

constexpr char kMagic[5] = {'D', 'C', 'N', 'N', '1'};
constexpr uint8_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw io_error("checkpoint truncated while reading header");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_floats(std::ostream& os, const float* v, size_t n) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint writer assumes a little-endian host");
  os.write(reinterpret_cast<const char*>(v), static_cast<std::streamsize>(n * 4));
}

void get_floats(std::istream& is, float* v, size_t n, const char* what) {
  if (!is.read(reinterpret_cast<char*>(v), static_cast<std::streamsize>(n * 4)))
    throw io_error(std::string("checkpoint truncated while reading ") + what);
}

void expect_u32(std::istream& is, uint32_t want, const char* what) {
  uint32_t got = get_u32(is);
  if (got != want)
    throw io_error(std::string("checkpoint ") + what + " mismatch: expected " +
                   std::to_string(want) + ", got " + std::to_string(got));
}

}  // namespace

void save_model(const DisCNNModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path);
  os.write(kMagic, 5);
  os.put(static_cast<char>(kVersion));
  put_u32(os, kInputSize);
  put_u32(os, kInputChannels);
  put_u32(os, 4);
  for (int c : kConvChannels) put_u32(os, static_cast<uint32_t>(c));
  put_u32(os, 3);
  for (int w : kFcWidths) put_u32(os, static_cast<uint32_t>(w));
  for (const auto& blk : model.blocks) {
    put_floats(os, blk.w.data(), blk.w.values.size());
    put_floats(os, blk.b.data(), blk.b.values.size());
    put_floats(os, blk.gamma.data(), blk.gamma.values.size());
    put_floats(os, blk.beta.data(), blk.beta.values.size());
    put_floats(os, blk.running.mean.data(), blk.running.mean.size());
    put_floats(os, blk.running.var.data(), blk.running.var.size());
  }
  for (int i = 0; i < 3; ++i) {
    put_floats(os, model.fc_w[i].data(), model.fc_w[i].values.size());
    put_floats(os, model.fc_b[i].data(), model.fc_b[i].values.size());
  }
  if (!os) throw io_error("write failed: " + path);
}

DisCNNModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open checkpoint: " + path);
  char magic[5];
  if (!is.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0)
    throw io_error("not a checkpoint (bad magic): " + path);
  int version = is.get();
  if (version != kVersion)
    throw io_error("unsupported checkpoint version " + std::to_string(version));
  expect_u32(is, kInputSize, "input size");
  expect_u32(is, kInputChannels, "input channels");
  expect_u32(is, 4, "block count");
  for (int c : kConvChannels) expect_u32(is, static_cast<uint32_t>(c), "channel width");
  expect_u32(is, 3, "fc count");
  for (int w : kFcWidths) expect_u32(is, static_cast<uint32_t>(w), "fc width");

  DisCNNModel m;
  int in_ch = kInputChannels;
  for (int i = 0; i < 4; ++i) {
    const int out_ch = kConvChannels[i];
    auto& blk = m.blocks[i];
    blk.w = Tensor({3, 3, in_ch, out_ch});
    blk.b = Tensor({out_ch});
    blk.gamma = Tensor({out_ch});
    blk.beta = Tensor({out_ch});
    blk.running.mean.resize(out_ch);
    blk.running.var.resize(out_ch);
    blk.running.initialized = true;
    get_floats(is, blk.w.data(), blk.w.values.size(), "conv weights");
    get_floats(is, blk.b.data(), blk.b.values.size(), "conv bias");
    get_floats(is, blk.gamma.data(), blk.gamma.values.size(), "bn gamma");
    get_floats(is, blk.beta.data(), blk.beta.values.size(), "bn beta");
    get_floats(is, blk.running.mean.data(), blk.running.mean.size(), "bn mean");
    get_floats(is, blk.running.var.data(), blk.running.var.size(), "bn var");
    in_ch = out_ch;
  }
  int in_dim = kFlattenDim;
  for (int i = 0; i < 3; ++i) {
    const int out_dim = kFcWidths[i];
    m.fc_w[i] = Tensor({in_dim, out_dim});
    m.fc_b[i] = Tensor({out_dim});
    get_floats(is, m.fc_w[i].data(), m.fc_w[i].values.size(), "fc weights");
    get_floats(is, m.fc_b[i].data(), m.fc_b[i].values.size(), "fc bias");
    in_dim = out_dim;
  }
  is.peek();
  if (!is.eof()) throw io_error("trailing bytes after checkpoint payload: " + path);
  return m;
}

#define DISCNN_MODEL_INSTANTIATE(T)                                            \
  template TensorT<T> discnn_train_forward<T>(DisCNNModelT<T>&,                \
                                              const TensorT<T>&,               \
                                              ForwardCacheT<T>*);              \
  template ModelGradsT<T> discnn_backward<T>(const DisCNNModelT<T>&,           \
                                             const ForwardCacheT<T>&,          \
                                             const TensorT<T>&);

DISCNN_MODEL_INSTANTIATE(float)
DISCNN_MODEL_INSTANTIATE(double)
template TensorT<double> discnn_infer<double>(const DisCNNModelT<double>&,
                                              const TensorT<double>&);

}  // namespace discnn
