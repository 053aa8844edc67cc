#include "discnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "discnn/rng.hpp"

namespace discnn {

LossVariant loss_variant_from_name(const std::string& name) {
  if (name == "n2o-bce") return LossVariant::n2o_bce;
  throw config_error("unknown loss variant: " + name);
}

std::string loss_variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::n2o_bce: return "n2o-bce";
  }
  return "?";
}

void N2OConfig::validate() const {
  if (lambda < 0) throw config_error("n2o: lambda must be >= 0");
  if (batch_size < 2)
    throw config_error("n2o: batch_size must be >= 2 (batch norm needs batch statistics)");
  if (epochs < 0) throw config_error("n2o: epochs must be >= 0");
  if (lr < 0) throw config_error("n2o: lr must be >= 0");
}

namespace {
constexpr double kPFloor = 1e-12;
}

template <typename T>
N2OLossResult<T> n2o_loss(const TensorT<T>& z, int label, double lambda,
                          LossVariant variant) {
  (void)variant;  // single variant so far
  if (lambda < 0) throw config_error("n2o_loss: lambda must be >= 0");
  N2OLossResult<T> r;
  r.grad = TensorT<T>(z.shape);
  double s2 = 0;
  for (T v : z.values) s2 += static_cast<double>(v) * v;
  if (label == 1) {
    const double p = -std::expm1(-s2);  // 1 - exp(-s2)
    if (p > kPFloor) {
      r.loss = -std::log(p);
      const double k = -2.0 * std::exp(-s2) / p;
      for (int64_t i = 0; i < z.size(); ++i)
        r.grad.values[i] = static_cast<T>(k * z.values[i]);
    } else {
      // positive stuck at the origin: clamped loss, no gradient through p
      r.loss = -std::log(kPFloor);
    }
  } else {
    r.loss = (1.0 + lambda) * s2;
    const double k = 2.0 * (1.0 + lambda);
    for (int64_t i = 0; i < z.size(); ++i)
      r.grad.values[i] = static_cast<T>(k * z.values[i]);
  }
  return r;
}

template N2OLossResult<float> n2o_loss<float>(const TensorT<float>&, int, double,
                                              LossVariant);
template N2OLossResult<double> n2o_loss<double>(const TensorT<double>&, int,
                                                double, LossVariant);

Tensor samples_to_batch(const std::vector<Sample>& samples,
                        const std::vector<int64_t>& indices) {
  const int64_t n = static_cast<int64_t>(indices.size());
  Tensor batch({n, 96, 96, 3});
  constexpr float kInv255 = 1.f / 255.f;
  for (int64_t i = 0; i < n; ++i) {
    const Sample& s = samples[static_cast<size_t>(indices[i])];
    if (s.image.width != 96 || s.image.height != 96)
      throw shape_error("samples_to_batch: sample image must be 96x96");
    float* dst = batch.data() + i * 96 * 96 * 3;
    for (size_t j = 0; j < s.image.pixels.size(); ++j)
      dst[j] = s.image.pixels[j] * kInv255;
  }
  return batch;
}

namespace {

void apply_sgd(DisCNNModel& model, ModelGradsT<float>& grads, SGDState& state,
               float lr, float momentum) {
  std::vector<Tensor*> params, gs;
  model.for_each_param([&](Tensor& t) { params.push_back(&t); });
  for (int i = 0; i < 4; ++i) {
    gs.push_back(&grads.w[i]);
    gs.push_back(&grads.b[i]);
    gs.push_back(&grads.gamma[i]);
    gs.push_back(&grads.beta[i]);
  }
  for (int i = 0; i < 3; ++i) {
    gs.push_back(&grads.fc_w[i]);
    gs.push_back(&grads.fc_b[i]);
  }
  if (state.velocity.empty()) state.velocity.resize(params.size());
  for (size_t i = 0; i < params.size(); ++i)
    sgd_step(*params[i], *gs[i], state.velocity[i], lr, momentum);
}

struct ModuleStats {
  EpochMetrics m;
};

// Infer-mode modules for every sample, aggregated per label.
EpochMetrics module_stats(const DisCNNModel& model,
                          const std::vector<Sample>& samples) {
  EpochMetrics m;
  double pos_sum = 0, neg_sum = 0;
  int64_t n_pos = 0, n_neg = 0;
  const int64_t chunk = 256;
  std::vector<int64_t> idx;
  for (int64_t start = 0; start < static_cast<int64_t>(samples.size());
       start += chunk) {
    const int64_t end =
        std::min<int64_t>(start + chunk, static_cast<int64_t>(samples.size()));
    idx.clear();
    for (int64_t i = start; i < end; ++i) idx.push_back(i);
    Tensor batch = samples_to_batch(samples, idx);
    Tensor z = discnn_infer(model, batch);
    for (int64_t i = 0; i < end - start; ++i) {
      const double mod = output_module(z.data() + i * kOutputDim, kOutputDim);
      if (samples[static_cast<size_t>(start + i)].label == 1) {
        pos_sum += mod;
        m.max_pos_module = std::max(m.max_pos_module, mod);
        ++n_pos;
      } else {
        neg_sum += mod;
        m.max_neg_module = std::max(m.max_neg_module, mod);
        ++n_neg;
      }
    }
  }
  m.mean_pos_module = n_pos ? pos_sum / n_pos : 0;
  m.mean_neg_module = n_neg ? neg_sum / n_neg : 0;
  if (n_pos && n_neg && m.mean_pos_module > 0)
    m.separation_ratio = m.mean_neg_module / m.mean_pos_module;
  else if (n_pos && n_neg && m.mean_neg_module > 0)
    m.separation_ratio = std::numeric_limits<double>::infinity();
  // else: undefined, stays NaN
  return m;
}

}  // namespace

EpochMetrics separation_report(const DisCNNModel& model,
                               const std::vector<Sample>& samples) {
  return module_stats(model, samples);
}

EpochMetrics train_epoch(DisCNNModel& model, SGDState& state,
                         const std::vector<Sample>& dataset,
                         const N2OConfig& config, int epoch_index) {
  config.validate();
  if (dataset.empty()) throw config_error("train_epoch: empty dataset");
  bool has_pos = false, has_neg = false;
  for (const Sample& s : dataset) (s.label == 1 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg)
    throw config_error(
        "train_epoch: dataset must contain both labels (single-label data "
        "degenerates the loss)");

  std::vector<int64_t> order(dataset.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
  Rng shuffle_rng(config.seed + 1000003u * static_cast<uint32_t>(epoch_index + 1));
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1],
              order[static_cast<size_t>(shuffle_rng.uniform_int(0, i - 1))]);

  double loss_sum = 0;
  int64_t seen = 0;
  for (size_t start = 0; start < order.size();
       start += static_cast<size_t>(config.batch_size)) {
    const size_t end =
        std::min(order.size(), start + static_cast<size_t>(config.batch_size));
    if (end - start < 2) break;  // batch norm needs at least two samples
    std::vector<int64_t> idx(order.begin() + start, order.begin() + end);
    Tensor batch = samples_to_batch(dataset, idx);
    ForwardCacheT<float> cache;
    Tensor z = discnn_train_forward(model, batch, &cache);
    const int64_t b = static_cast<int64_t>(idx.size());
    Tensor dz({b, kOutputDim});
    for (int64_t i = 0; i < b; ++i) {
      Tensor zi({kOutputDim});
      std::copy_n(z.data() + i * kOutputDim, kOutputDim, zi.data());
      auto lr = n2o_loss(zi, dataset[static_cast<size_t>(idx[i])].label,
                         config.lambda, config.loss);
      loss_sum += lr.loss;
      for (int64_t j = 0; j < kOutputDim; ++j)
        dz.values[i * kOutputDim + j] = lr.grad.values[j] / static_cast<float>(b);
    }
    seen += b;
    ModelGradsT<float> grads = discnn_backward(model, cache, dz);
    apply_sgd(model, grads, state, static_cast<float>(config.lr),
              static_cast<float>(config.momentum));
  }

  EpochMetrics m = module_stats(model, dataset);
  m.mean_loss = seen ? loss_sum / static_cast<double>(seen) : 0;
  return m;
}

TrainResult train(DisCNNModel& model, const std::vector<Sample>& dataset,
                  const N2OConfig& config,
                  const std::function<void(int, const EpochMetrics&)>& on_epoch,
                  double stop_ratio) {
  config.validate();
  SGDState state;
  TrainResult result;
  for (int e = 0; e < config.epochs; ++e) {
    result.final_metrics = train_epoch(model, state, dataset, config, e);
    result.epochs_run = e + 1;
    if (on_epoch) on_epoch(e, result.final_metrics);
    if (stop_ratio > 0 && !std::isnan(result.final_metrics.separation_ratio) &&
        result.final_metrics.separation_ratio < stop_ratio)
      break;
  }
  if (config.epochs == 0) result.final_metrics = module_stats(model, dataset);
  return result;
}

std::string format_epoch_line(int epoch, const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "epoch=%d loss=%.6f pos_mean=%.6f pos_max=%.6f neg_mean=%.6f "
                "neg_max=%.6f ratio=%.6f",
                epoch, m.mean_loss, m.mean_pos_module, m.max_pos_module,
                m.mean_neg_module, m.max_neg_module, m.separation_ratio);
  return buf;
}

}  // namespace discnn
