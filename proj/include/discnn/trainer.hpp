#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "discnn/dataset.hpp"
#include "discnn/model.hpp"

namespace discnn {

// The published loss couples a cross-entropy pull on positives with an
// origin constraint on negatives; the exact published formula lives in a
// companion work, so variants are switchable by name. The default reads the
// squared output module s2 through p = 1 - exp(-s2):
//   y=1:  -log(max(p, 1e-12))
//   y=0:  (1 + lambda) * s2        (note -log(1-p) == s2 exactly, so this is
//                                   the cross-entropy term plus the weighted
//                                   origin pull)
enum class LossVariant { n2o_bce };

LossVariant loss_variant_from_name(const std::string& name);
std::string loss_variant_name(LossVariant v);

struct N2OConfig {
  double lambda = 1.0;  // extra origin-pull weight on negatives
  double lr = 0.01;
  double momentum = 0.9;
  int epochs = 30;
  int batch_size = 32;
  uint32_t seed = 0;
  LossVariant loss = LossVariant::n2o_bce;

  void validate() const;
};

struct EpochMetrics {
  double mean_loss = 0;
  double mean_pos_module = 0;
  double max_pos_module = 0;
  double mean_neg_module = 0;
  double max_neg_module = 0;
  // mean_neg / mean_pos; NaN when undefined (no samples of a label, or an
  // all-zero model scoring 0/0)
  double separation_ratio = std::nan("");
};

template <typename T>
struct N2OLossResult {
  double loss = 0;
  TensorT<T> grad;  // dL/dz, shape [16]
};

template <typename T>
N2OLossResult<T> n2o_loss(const TensorT<T>& z, int label, double lambda,
                          LossVariant variant = LossVariant::n2o_bce);

// Momentum state, one tensor per parameter, aligned with the model's
// for_each_param order.
struct SGDState {
  std::vector<Tensor> velocity;
};

// One seed-deterministic shuffled pass; parameters updated in place, metrics
// computed on the full dataset in infer mode afterwards. `epoch_index` keys
// the shuffle so repeated epochs differ but reruns are bit-identical.
EpochMetrics train_epoch(DisCNNModel& model, SGDState& state,
                         const std::vector<Sample>& dataset,
                         const N2OConfig& config, int epoch_index);

EpochMetrics separation_report(const DisCNNModel& model,
                               const std::vector<Sample>& samples);

struct TrainResult {
  EpochMetrics final_metrics;
  int epochs_run = 0;
};

// Runs up to config.epochs epochs; stops early once the separation ratio
// drops below stop_ratio (ignored when <= 0). Calls on_epoch after each pass.
TrainResult train(
    DisCNNModel& model, const std::vector<Sample>& dataset, const N2OConfig& config,
    const std::function<void(int, const EpochMetrics&)>& on_epoch = {},
    double stop_ratio = 0);

// Training-log line: "epoch=<k> loss=... pos_mean=... pos_max=... neg_mean=...
// neg_max=... ratio=..."
std::string format_epoch_line(int epoch, const EpochMetrics& m);

// [N,96,96,3] float batch normalized to [0,1] from the given sample indices.
Tensor samples_to_batch(const std::vector<Sample>& samples,
                        const std::vector<int64_t>& indices);

}  // namespace discnn
